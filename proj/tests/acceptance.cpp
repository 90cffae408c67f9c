// Acceptance suite: one pass/fail line per criterion, nonzero exit on
// any failure. Tolerances are pinned here, not configurable.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "dopa/channel.hpp"
#include "dopa/errors.hpp"
#include "dopa/io.hpp"
#include "dopa/mdp_decomposed.hpp"
#include "dopa/mdp_full.hpp"
#include "dopa/oracles.hpp"
#include "dopa/simulate.hpp"
#include "dopa/steady.hpp"
#include "dopa/waterfill.hpp"

using namespace dopa;

namespace {

int g_failures = 0;

void report(int id, const std::string& title, bool pass, const std::string& detail) {
  std::printf("%s  C%-2d %-38s %s\n", pass ? "PASS" : "FAIL", id, title.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

ChainParams two_streams(double beta1, double beta2, double gamma, int buffer = 4) {
  ChainParams c;
  c.tau = 1.0;
  c.gamma = gamma;
  c.buffer = buffer;
  c.streams = {{beta1, 0.02, 200.0}, {beta2, 0.02, 200.0}};
  return c;
}

const PhyConfig kPhy;  // reference 2x2 link, 1% SER
const double kAlpha = kPhy.alpha();

// Criterion 1: decomposed theta* vs relative value iteration on the
// identical 1-D chain and frozen cache, |dtheta|/theta <= 1e-6 over a
// grid spanning lambda*tau, N, beta, gamma.
void criterion1(const PhiEvaluator& eval1) {
  double worst = 0.0;
  int count = 0;
  bool pass = true;
  for (double lambda : {0.01, 0.02, 0.05})
    for (int n : {2, 4, 8})
      for (double beta : {0.5, 1.0, 10.0})
        for (double gamma : {1e-3, 1e-2, 1e-1}) {
          ChainParams params;
          params.tau = 1.0;
          params.gamma = gamma;
          params.buffer = n;
          params.streams = {{beta, lambda, 200.0}};
          RviOptions ropts;
          ropts.tol = 1e-10;
          ropts.max_iter = 600000;
          const FullSolution rvi = solve_rvi(params, kAlpha, eval1, ropts);
          const StreamSolution dec =
              solve_theta(params.streams[0], 0, 0, gamma, kAlpha, eval1, n);
          const double rel = std::abs(rvi.theta - dec.theta) / std::abs(dec.theta);
          worst = std::max(worst, rel);
          pass = pass && rvi.converged && rel <= 1e-6;
          ++count;
        }
  report(1, "oracle equivalence (decomposition)", pass,
         "worst |dtheta|/theta = " + fmt(worst) + " over " + std::to_string(count) + " configs");
}

// Criterion 2: componentwise non-decreasing V and non-negative marginal
// values on every converged full solution of the regression grid.
void criterion2(const PhiEvaluator& eval) {
  RviOptions ropts;
  ropts.tol = 1e-9;
  ropts.max_iter = 400000;
  long violations = 0;
  int solves = 0;
  const std::vector<ChainParams> grid = {
      two_streams(1.0, 10.0, 1e-3), two_streams(1.0, 10.0, 1e-2), two_streams(1.0, 10.0, 1e-1),
      two_streams(1.0, 1.0, 1e-2),  two_streams(0.5, 10.0, 1e-2), two_streams(1.0, 10.0, 1e-2, 2)};
  for (const ChainParams& params : grid) {
    const FullSolution sol = solve_rvi(params, kAlpha, eval, ropts);
    if (!sol.converged) {
      ++violations;
      continue;
    }
    ++solves;
    const StateSpace space = sol.space();
    for (std::size_t s = 0; s < space.count(); ++s)
      for (int i = 0; i < sol.n_streams; ++i) {
        if (space.up(s, i) != s && sol.v[space.up(s, i)] < sol.v[s] - 10.0 * ropts.tol)
          ++violations;
        if (sol.delta_v[s * 2 + static_cast<std::size_t>(i)] < -10.0 * ropts.tol) ++violations;
      }
  }
  report(2, "monotone value function battery", violations == 0,
         std::to_string(violations) + " violations across " + std::to_string(solves) +
             " converged solves");
}

// Criterion 3: the same-order assignment maximizes the per-realization
// optimized objective over all L! permutations, 200 draws for L = 2, 3.
void criterion3(const EigenSampleCache& cache2) {
  PhyConfig phy3 = kPhy;
  phy3.n_tx = phy3.n_rx = phy3.n_streams = 3;
  const EigenSampleCache cache3 = EigenSampleCache::generate(phy3, 2000, 301);
  Rng rng(302);
  long strict_violations = 0;
  for (int l = 2; l <= 3; ++l) {
    const EigenSampleCache& cache = l == 2 ? cache2 : cache3;
    for (int rep = 0; rep < 200; ++rep) {
      WaterfillParams wf;
      wf.marginal.resize(l);
      for (int i = 0; i < l; ++i) wf.marginal(i) = std::exp(rng.gauss() + 1.0);
      wf.nbar = Eigen::VectorXd::Constant(l, 200.0);
      wf.gamma = 0.01;
      wf.alpha = kAlpha;
      Eigen::VectorXd eig(l);
      for (int i = 0; i < l; ++i)
        eig(i) = cache.samples()(static_cast<Eigen::Index>(rep % cache.rows()), i);
      const auto value_for = [&](const std::vector<int>& ranks) {
        const Eigen::VectorXd p = waterfill_power(wf, eig, ranks);
        double v = 0.0;
        for (int i = 0; i < l; ++i)
          if (p(i) > 0.0)
            v += wf.marginal(i) / wf.nbar(i) *
                     std::log2(1.0 + wf.alpha * p(i) * eig(ranks[static_cast<std::size_t>(i)])) -
                 wf.gamma * p(i);
        return v;
      };
      const double sorted_value = value_for(sort_assignment(wf.marginal));
      std::vector<int> perm(static_cast<std::size_t>(l));
      for (int i = 0; i < l; ++i) perm[static_cast<std::size_t>(i)] = i;
      do {
        if (value_for(perm) > sorted_value + 1e-12) ++strict_violations;
      } while (std::next_permutation(perm.begin(), perm.end()));
    }
  }
  report(3, "same-order sorting optimality", strict_violations == 0,
         std::to_string(strict_violations) + " strict violations over 400 draws (L=2,3)");
}

// Criterion 4: closed-form water-filling matches grid+refine numeric
// maximization within 1e-6 in objective value on 500 draws.
void criterion4(const EigenSampleCache& cache) {
  Rng rng(401);
  double worst = 0.0;
  bool pass = true;
  for (int k = 0; k < 500; ++k) {
    const double y = std::exp(rng.gauss() * 1.5 + 1.5);
    const double nbar = 50.0 + 300.0 * rng.uniform();
    const double gamma = std::exp(rng.gauss() - 5.0);
    const double alpha = 0.1 + 0.4 * rng.uniform();
    const double xi =
        cache.samples()(static_cast<Eigen::Index>(k % cache.rows()), k % cache.cols());
    WaterfillParams wf;
    wf.marginal = Eigen::VectorXd::Constant(1, y);
    wf.nbar = Eigen::VectorXd::Constant(1, nbar);
    wf.gamma = gamma;
    wf.alpha = alpha;
    const double p = waterfill_power(wf, Eigen::VectorXd::Constant(1, xi), {0})(0);
    const auto objective = [&](double x) {
      return y / nbar * std::log2(1.0 + alpha * x * xi) - gamma * x;
    };
    const double hi = std::max(1.0, 1.5 * y * std::numbers::log2e / (nbar * gamma));
    const double brute = oracles::grid_refine_max(objective, 0.0, hi);
    const double gap = std::abs(objective(p) - brute);
    worst = std::max(worst, gap);
    pass = pass && gap <= 1e-6 && objective(p) >= brute - 1e-9;
  }
  report(4, "water-filling KKT vs grid+refine", pass,
         "worst objective gap " + fmt(worst) + " over 500 draws");
}

// Criterion 5: reference-scenario analytic vs empirical agreement at 1e6
// slots: per-stream means within 5%, per-stream empirical distributions
// within total variation 0.01.
void criterion5(const PhiEvaluator& eval) {
  const ChainParams chain = two_streams(1.0, 10.0, 1e-3);
  const long slots = 1000000;
  bool pass = true;
  std::ostringstream detail;

  // Decomposed policy against the product-form chain.
  const auto dec = solve_decomposed(chain, kAlpha, eval);
  const SteadyState ss_dec = steady_state_per_stream(dec, chain, kAlpha, eval);
  const SimReport rep_dec = run_sim(make_decomposed_policy(dec, chain), chain, kPhy, slots, 1);

  // Full policy against the global-balance chain.
  RviOptions ropts;
  ropts.tol = 1e-9;
  ropts.max_iter = 400000;
  auto full = std::make_shared<FullSolution>(solve_rvi(chain, kAlpha, eval, ropts));
  const SteadyState ss_full = steady_state_full(*full, chain, kAlpha, eval);
  const SimReport rep_full = run_sim(make_full_policy(full), chain, kPhy, slots, 1);

  const auto check_policy = [&](const char* name, const SimReport& rep, const SteadyState& ss) {
    double worst_rel = 0.0, worst_tv = 0.0;
    for (int i = 0; i < 2; ++i) {
      worst_rel = std::max(worst_rel, std::abs(rep.avg_queue(i) - ss.avg_queue(i)) /
                                          std::max(0.05, ss.avg_queue(i)));
      double tv = 0.0;
      for (int q = 0; q <= chain.buffer; ++q)
        tv += std::abs(static_cast<double>(rep.hist_stream[static_cast<std::size_t>(i)]
                                                          [static_cast<std::size_t>(q)]) /
                           static_cast<double>(slots) -
                       ss.omega_streams[static_cast<std::size_t>(i)][static_cast<std::size_t>(q)]);
      worst_tv = std::max(worst_tv, 0.5 * tv);
    }
    pass = pass && worst_rel <= 0.05 && worst_tv <= 0.01;
    detail << name << ": rel " << fmt(worst_rel) << ", TV " << fmt(worst_tv) << "; ";
  };
  check_policy("decomposed", rep_dec, ss_dec);
  check_policy("full", rep_full, ss_full);
  report(5, "analytic-empirical agreement (1e6 slots)", pass, detail.str());
}

// Criterion 6: policy-class inclusion J_full <= J_dec (exact) and
// near-optimality J_dec <= 1.10 J_full at five matched gammas.
void criterion6(const PhiEvaluator& eval) {
  bool pass = true;
  double worst_ratio = 0.0;
  RviOptions ropts;
  ropts.tol = 1e-9;
  ropts.max_iter = 400000;
  for (double gamma : {1e-3, 3e-3, 1e-2, 3e-2, 1e-1}) {
    const ChainParams chain = two_streams(1.0, 10.0, gamma);
    const FullSolution full = solve_rvi(chain, kAlpha, eval, ropts);
    const double j_dec = decomposed_total_theta(solve_decomposed(chain, kAlpha, eval));
    pass = pass && full.converged && full.theta <= j_dec;
    const double ratio = j_dec / full.theta;
    worst_ratio = std::max(worst_ratio, ratio);
    pass = pass && ratio <= 1.10;
  }
  report(6, "decomposition near-optimality", pass,
         "J_dec/J_full <= " + fmt(worst_ratio) + " at five matched gammas (bound 1.10)");
}

// Criterion 7: baseline comparison at matched average power (+-2%),
// beta = (1,1), sigma_e2 in {0, 0.1, 0.3, 0.5}: the decomposed policy
// beats both baselines per seed (majority of 5), and is less sensitive
// to CSIT quality than the queue-blind baseline.
void criterion7() {
  const double p0 = 150.0;
  const long slots = 1000000;
  const std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  bool ordering_pass = true;
  bool power_pass = true;
  double dec_first = 0.0, dec_last = 0.0, cs_first = 0.0, cs_last = 0.0;
  std::ostringstream lines;

  for (double se2 : {0.0, 0.1, 0.3, 0.5}) {
    PhyConfig phy = kPhy;
    phy.sigma_e2 = se2;
    ChainParams chain = two_streams(1.0, 1.0, 1.0);
    const EigenSampleCache cache = EigenSampleCache::generate(phy, 100000, 7);
    const PhiEvaluator eval(cache);

    CalibOptions copts;
    copts.gamma_lo = 1e-5;
    copts.gamma_hi = 10.0;
    copts.sweep_points = 15;
    const CalibrationResult cal = calibrate_gamma(p0, SolverMode::Decomposed, chain, phy.alpha(),
                                                  eval, CalibMode::RootFind, copts);
    chain.gamma = cal.gamma;
    const auto dec_sols = solve_decomposed(chain, phy.alpha(), eval);
    const SteadyState ss_dec = steady_state_per_stream(dec_sols, chain, phy.alpha(), eval);
    const PolicyHandle dec = make_decomposed_policy(dec_sols, chain);
    const PolicyHandle rr = round_robin_matched(chain, phy, cache, p0);
    const PolicyHandle cs = csit_only_matched(chain, phy, cache, p0);
    const BaselinePrediction pred_cs = predict_baseline(cs, chain, phy, cache);

    // Common random numbers: identical seed list per policy.
    const auto reps_dec = run_many(dec, chain, phy, slots, seeds);
    const auto reps_rr = run_many(rr, chain, phy, slots, seeds);
    const auto reps_cs = run_many(cs, chain, phy, slots, seeds);

    int wins_rr = 0, wins_cs = 0;
    double mp_dec = 0.0, mp_rr = 0.0, mp_cs = 0.0, md = 0.0, mr = 0.0, mc = 0.0;
    for (std::size_t k = 0; k < seeds.size(); ++k) {
      if (reps_dec[k].avg_queue.sum() < reps_rr[k].avg_queue.sum()) ++wins_rr;
      if (reps_dec[k].avg_queue.sum() < reps_cs[k].avg_queue.sum()) ++wins_cs;
      mp_dec += reps_dec[k].avg_power;
      mp_rr += reps_rr[k].avg_power;
      mp_cs += reps_cs[k].avg_power;
      md += reps_dec[k].avg_queue.sum();
      mr += reps_rr[k].avg_queue.sum();
      mc += reps_cs[k].avg_queue.sum();
    }
    const double n = static_cast<double>(seeds.size());
    mp_dec /= n;
    mp_rr /= n;
    mp_cs /= n;
    md /= n;
    mr /= n;
    mc /= n;
    power_pass = power_pass && std::abs(mp_dec - p0) <= 0.02 * p0 &&
                 std::abs(mp_rr - p0) <= 0.02 * p0 && std::abs(mp_cs - p0) <= 0.02 * p0;
    ordering_pass = ordering_pass && wins_rr >= 3 && wins_cs >= 3;

    // Analytic sensitivity endpoints (noise-free).
    if (se2 == 0.0) {
      dec_first = ss_dec.avg_queue.sum();
      cs_first = pred_cs.avg_queue.sum();
    }
    if (se2 == 0.5) {
      dec_last = ss_dec.avg_queue.sum();
      cs_last = pred_cs.avg_queue.sum();
    }
    char line[256];
    std::snprintf(line, sizeof(line),
                  "    se2=%.1f: sum delay dec=%.3f rr=%.3f csit=%.3f | power %.1f/%.1f/%.1f | "
                  "wins %d/%d\n",
                  se2, md, mr, mc, mp_dec, mp_rr, mp_cs, wins_rr, wins_cs);
    lines << line;
  }

  // Sensitivity to CSIT quality: |relative change| across the sweep,
  // computed on the noise-free analytic delays. Under this PHY model the
  // effective spectrum improves with sigma_e2 (see README), so both
  // changes are negative; the queue-blind baseline moves more.
  const double dec_change = std::abs(dec_last / dec_first - 1.0);
  const double cs_change = std::abs(cs_last / cs_first - 1.0);
  const bool sensitivity_pass = dec_change < cs_change;

  report(7, "baseline ordering at matched power", ordering_pass && power_pass && sensitivity_pass,
         "ordering majority " + std::string(ordering_pass ? "ok" : "VIOLATED") + ", power match " +
             (power_pass ? "ok" : "VIOLATED") + ", |rel change| dec " + fmt(dec_change) +
             " < csit " + fmt(cs_change) + (sensitivity_pass ? "" : " VIOLATED") +
             " (signed growth dec " + fmt(dec_last / dec_first - 1.0) + ", csit " +
             fmt(cs_last / cs_first - 1.0) + ": delays fall with sigma_e2 under this model)");
  std::fputs(lines.str().c_str(), stdout);
}

// Criterion 8: decomposed offline complexity is linear in N (R^2 > 0.9
// for N in {4..64} at L in {2,4}); the full solver reports its state
// count and refuses above the cap.
void criterion8(const PhiEvaluator& eval2) {
  bool pass = true;
  std::ostringstream detail;
  for (int l : {2, 4}) {
    PhyConfig phy = kPhy;
    phy.n_tx = phy.n_rx = phy.n_streams = l;
    const PhiEvaluator* eval = &eval2;
    EigenSampleCache cache4;
    PhiEvaluator eval4_storage{EigenSampleCache::from_samples(Eigen::MatrixXd::Ones(1, 1), 0, 0)};
    if (l == 4) {
      cache4 = EigenSampleCache::generate(phy, 100000, 801);
      eval4_storage = PhiEvaluator(cache4);
      eval = &eval4_storage;
    }
    std::vector<double> xs, ys;
    for (int n : {4, 8, 16, 32, 64}) {
      ChainParams params;
      params.tau = 1.0;
      params.gamma = 0.01;
      params.buffer = n;
      for (int i = 0; i < l; ++i) params.streams.push_back({1.0 + i, 0.02, 200.0});
      // Repeat the solve until the sample is comfortably above timer noise.
      double best = 1e300;
      for (int trial = 0; trial < 5; ++trial) {
        const auto t0 = std::chrono::steady_clock::now();
        int reps = 0;
        double elapsed = 0.0;
        do {
          (void)solve_decomposed(params, kAlpha, *eval);
          ++reps;
          elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        } while (elapsed < 0.03);
        best = std::min(best, elapsed / reps);
      }
      xs.push_back(static_cast<double>(n));
      ys.push_back(best);
    }
    // Least-squares linear fit and its R^2.
    const double npts = static_cast<double>(xs.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
      sx += xs[k];
      sy += ys[k];
      sxx += xs[k] * xs[k];
      sxy += xs[k] * ys[k];
    }
    const double slope = (npts * sxy - sx * sy) / (npts * sxx - sx * sx);
    const double intercept = (sy - slope * sx) / npts;
    double ss_res = 0, ss_tot = 0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
      ss_res += std::pow(ys[k] - (intercept + slope * xs[k]), 2);
      ss_tot += std::pow(ys[k] - sy / npts, 2);
    }
    const double r2 = 1.0 - ss_res / ss_tot;
    pass = pass && r2 > 0.9 && slope > 0.0;
    detail << "L=" << l << " R2=" << fmt(r2) << "; ";
  }

  // State-count report and cap refusal.
  const ChainParams chain = two_streams(1.0, 10.0, 0.01);
  std::size_t count = 1;
  for (int i = 0; i < 2; ++i) count *= static_cast<std::size_t>(chain.buffer) + 1;
  detail << "(N+1)^L=" << count << "; ";
  bool refused = false;
  try {
    RviOptions ropts;
    ropts.state_cap = 10;
    solve_rvi(chain, kAlpha, eval2, ropts);
  } catch (const config_error&) {
    refused = true;
  }
  pass = pass && count == 25 && refused;
  detail << (refused ? "cap refusal ok" : "cap refusal MISSING");
  report(8, "O(NL) offline complexity scaling", pass, detail.str());
}

// Criterion 9: the gamma sweep's power curve is non-increasing at every
// grid point and root-finding round-trips sweep points within 5%.
void criterion9(const PhiEvaluator& eval) {
  const ChainParams chain = two_streams(1.0, 10.0, 1.0);
  CalibOptions copts;
  copts.sweep_points = 20;
  copts.gamma_lo = 1e-4;
  copts.gamma_hi = 1.0;
  const CalibrationResult sweep =
      calibrate_gamma(100.0, SolverMode::Decomposed, chain, kAlpha, eval, CalibMode::Sweep, copts);
  bool monotone = true;
  for (std::size_t k = 1; k < sweep.table.size(); ++k)
    if (sweep.table[k].power > sweep.table[k - 1].power * (1.0 + 1e-9)) monotone = false;

  bool round_trip = true;
  double worst = 0.0;
  for (std::size_t idx : {5UL, 10UL, 15UL}) {
    const CalibrationPoint& pivot = sweep.table[idx];
    const CalibrationResult rf = calibrate_gamma(pivot.power, SolverMode::Decomposed, chain,
                                                 kAlpha, eval, CalibMode::RootFind, copts);
    const double rel = std::abs(rf.gamma - pivot.gamma) / pivot.gamma;
    worst = std::max(worst, rel);
    round_trip = round_trip && rel <= 0.05;
  }
  report(9, "calibration consistency", monotone && round_trip,
         std::string("sweep ") + (monotone ? "non-increasing" : "NOT MONOTONE") +
             ", round-trip gamma error <= " + fmt(worst));
}

// Criterion 10: identical configs and seeds give bit-identical solution
// files and simulation reports.
void criterion10() {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "dopa_acceptance_det";
  fs::create_directories(dir);
  bool pass = true;

  const EigenSampleCache c1 = EigenSampleCache::generate(kPhy, 20000, 77, Exec::Parallel);
  const EigenSampleCache c2 = EigenSampleCache::generate(kPhy, 20000, 77, Exec::Serial);
  pass = pass && c1.samples() == c2.samples();

  const PhiEvaluator eval(c1);
  const ChainParams chain = two_streams(1.0, 10.0, 0.01);
  RviOptions ropts;
  ropts.tol = 1e-9;

  for (int round = 0; round < 2; ++round) {
    const FullSolution full = solve_rvi(chain, kAlpha, eval, ropts);
    const auto dec = solve_decomposed(chain, kAlpha, eval);
    save_full_solution(full, "acc", dir / ("full" + std::to_string(round) + ".json"));
    save_stream_solutions(dec, chain, "acc", dir / ("dec" + std::to_string(round) + ".json"));
    const SimReport rep = run_sim(make_decomposed_policy(dec, chain), chain, kPhy, 200000, 5);
    save_sim_report_json(rep, "acc", dir / ("rep" + std::to_string(round) + ".json"));
  }
  const auto slurp = [](const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  pass = pass && slurp(dir / "full0.json") == slurp(dir / "full1.json");
  pass = pass && slurp(dir / "dec0.json") == slurp(dir / "dec1.json");
  pass = pass && slurp(dir / "rep0.json") == slurp(dir / "rep1.json");
  fs::remove_all(dir);
  report(10, "bit-exact determinism", pass,
         "cache regeneration, solution files and sim reports byte-identical");
}

}  // namespace

int main() {
  std::printf("acceptance suite (reference scenario: 2x2, L=2, lambda*tau=0.02, 200-bit packets, "
              "N=4, 1%% SER)\n");
  const EigenSampleCache cache = EigenSampleCache::generate(kPhy, 100000, 7);
  const PhiEvaluator eval(cache);
  const PhiEvaluator eval1(cache.column_cache(0));

  criterion1(eval1);
  criterion2(eval);
  criterion3(cache);
  criterion4(cache);
  criterion5(eval);
  criterion6(eval);
  criterion7();
  criterion8(eval);
  criterion9(eval);
  criterion10();

  std::printf("%s (%d failing)\n", g_failures == 0 ? "ALL CRITERIA PASSED" : "CRITERIA FAILED",
              g_failures);
  return g_failures == 0 ? 0 : 1;
}
