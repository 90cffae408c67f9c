// Command-line front end: offline solves, power calibration, Monte Carlo
// simulation, comparison sweeps, and the verification gate.

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "dopa/channel.hpp"
#include "dopa/errors.hpp"
#include "dopa/io.hpp"
#include "dopa/mdp_decomposed.hpp"
#include "dopa/mdp_full.hpp"
#include "dopa/simulate.hpp"
#include "dopa/steady.hpp"
#include "dopa/verify.hpp"
#include "dopa/waterfill.hpp"

namespace {

using namespace dopa;
namespace fs = std::filesystem;

struct CommonOpts {
  std::string config_path;
  double gamma = -1.0;
  double p0 = -1.0;
  std::string mode;
  long slots = -1;
  std::vector<std::uint64_t> seeds;
  double sigma_e2 = -1.0;
  std::string out;
  long cache_rows = -1;
  int buffer = -1;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_path, "JSON config file (defaults reproduce the reference scenario)");
  cmd->add_option("--gamma", o.gamma, "power price (mutually exclusive with --p0)");
  cmd->add_option("--p0", o.p0, "average power budget");
  cmd->add_option("--mode", o.mode, "solver mode: full | decomposed | both");
  cmd->add_option("--slots", o.slots, "simulation slots per seed");
  cmd->add_option("--seeds", o.seeds, "simulation seeds")->delimiter(',');
  cmd->add_option("--sigma-e2", o.sigma_e2, "CSIT error variance");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--cache-rows", o.cache_rows, "eigenvalue cache rows");
  cmd->add_option("--buffer", o.buffer, "buffer size N");
}

RunConfig resolve_config(const CommonOpts& o) {
  RunConfig cfg = o.config_path.empty() ? RunConfig{} : load_config(o.config_path);
  if (o.gamma > 0.0) {
    cfg.gamma = o.gamma;
    cfg.p0.reset();
  }
  if (o.p0 > 0.0) {
    cfg.p0 = o.p0;
    cfg.gamma.reset();
  }
  if (!cfg.gamma && !cfg.p0) cfg.gamma = 0.01;
  if (!o.mode.empty()) cfg.mode = o.mode;
  if (o.slots > 0) cfg.slots = o.slots;
  if (!o.seeds.empty()) cfg.seeds = o.seeds;
  if (o.sigma_e2 >= 0.0) cfg.phy.sigma_e2 = o.sigma_e2;
  if (!o.out.empty()) cfg.out_dir = o.out;
  if (o.cache_rows > 0) cfg.cache_rows = static_cast<std::size_t>(o.cache_rows);
  if (o.buffer > 0) cfg.buffer = o.buffer;
  cfg.validate();
  return cfg;
}

struct Scenario {
  RunConfig cfg;
  std::string hash;
  EigenSampleCache cache;
  PhiEvaluator eval;
  double alpha;

  explicit Scenario(RunConfig c)
      : cfg(std::move(c)),
        hash(config_hash(cfg)),
        cache(load_or_generate_cache(cfg)),
        eval(cache),
        alpha(cfg.phy.alpha()) {}
};

CalibOptions calib_options(const RunConfig& cfg) {
  CalibOptions opts;
  opts.sweep_points = cfg.calib_points;
  opts.gamma_lo = cfg.gamma_lo;
  opts.gamma_hi = cfg.gamma_hi;
  opts.rvi.state_cap = cfg.state_cap;
  return opts;
}

/// Resolve the power price: as given, or calibrated to the p0 target for
/// the requested solver mode.
double resolve_gamma(const Scenario& sc, SolverMode mode) {
  if (sc.cfg.gamma) return *sc.cfg.gamma;
  const CalibrationResult cal =
      calibrate_gamma(*sc.cfg.p0, mode, sc.cfg.chain(1.0), sc.alpha, sc.eval,
                      sc.cfg.calib == "sweep" ? CalibMode::Sweep : CalibMode::RootFind,
                      calib_options(sc.cfg));
  std::printf("calibrated gamma=%.8g achieved_power=%.6g target=%.6g\n", cal.gamma,
              cal.achieved_power, cal.target_power);
  return cal.gamma;
}

int cmd_solve(const CommonOpts& o) {
  const Scenario sc(resolve_config(o));
  const RunConfig& cfg = sc.cfg;
  fs::create_directories(cfg.out_dir);

  const bool want_full = cfg.mode == "full" || cfg.mode == "both";
  const bool want_dec = cfg.mode == "decomposed" || cfg.mode == "both";

  if (want_full) {
    std::size_t count = 1;
    for (int i = 0; i < cfg.phy.n_streams; ++i) count *= static_cast<std::size_t>(cfg.buffer) + 1;
    std::printf("full solver state count: %zu (cap %zu)\n", count, cfg.state_cap);
    const double gamma = resolve_gamma(sc, SolverMode::Full);
    const ChainParams chain = cfg.chain(gamma);
    RviOptions ropts;
    ropts.state_cap = cfg.state_cap;
    const auto t0 = std::chrono::steady_clock::now();
    const FullSolution sol = solve_rvi(chain, sc.alpha, sc.eval, ropts);
    const auto dt = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0);
    const fs::path path = fs::path(cfg.out_dir) / "solution_full.json";
    save_full_solution(sol, sc.hash, path);
    std::printf("full:       theta=%.8f gamma=%.6g iters=%d span=%.3e converged=%d  [%.2f ms] -> %s\n",
                sol.theta, gamma, sol.iterations, sol.span_residual, sol.converged, dt.count(),
                path.string().c_str());
  }
  if (want_dec) {
    const double gamma = resolve_gamma(sc, SolverMode::Decomposed);
    const ChainParams chain = cfg.chain(gamma);
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<StreamSolution> sols = solve_decomposed(chain, sc.alpha, sc.eval);
    const auto dt = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0);
    const fs::path path = fs::path(cfg.out_dir) / "solution_decomposed.json";
    save_stream_solutions(sols, chain, sc.hash, path);
    std::printf("decomposed: theta=%.8f gamma=%.6g  [%.3f ms] -> %s\n",
                decomposed_total_theta(sols), gamma, dt.count(), path.string().c_str());
    for (const auto& s : sols) {
      std::printf("  stream %d: theta=%.8f rank=%d ladder:", s.stream + 1, s.theta, s.eig_rank);
      for (std::size_t q = 1; q < s.delta_v.size(); ++q) std::printf(" %.6g", s.delta_v[q]);
      std::printf("\n");
    }
  }
  return 0;
}

int cmd_calibrate(const CommonOpts& o, const std::string& calib_mode) {
  RunConfig cfg0 = resolve_config(o);
  if (!calib_mode.empty()) cfg0.calib = calib_mode;
  if (!cfg0.p0) throw config_error("calibrate needs --p0 (or p0 in the config)");
  const Scenario sc(cfg0);
  const RunConfig& cfg = sc.cfg;
  fs::create_directories(cfg.out_dir);
  const SolverMode mode = cfg.mode == "full" ? SolverMode::Full : SolverMode::Decomposed;
  const CalibrationResult cal =
      calibrate_gamma(*cfg.p0, mode, cfg.chain(1.0), sc.alpha, sc.eval,
                      cfg.calib == "sweep" ? CalibMode::Sweep : CalibMode::RootFind,
                      calib_options(cfg));
  const fs::path path = fs::path(cfg.out_dir) / "calibration.csv";
  save_calibration_csv(cal, sc.hash, path);
  for (const auto& w : cal.warnings) std::printf("warning: %s\n", w.c_str());
  std::printf("%s: gamma=%.8g achieved=%.6g target=%.6g  (%zu sweep points) -> %s\n",
              cal.mode == CalibMode::RootFind ? "root-find" : "sweep", cal.gamma,
              cal.achieved_power, cal.target_power, cal.table.size(), path.string().c_str());
  return 0;
}

PolicyHandle build_policy(const std::string& name, const Scenario& sc, const ChainParams& chain) {
  if (name == "full") {
    RviOptions ropts;
    ropts.state_cap = sc.cfg.state_cap;
    auto sol = std::make_shared<FullSolution>(solve_rvi(chain, sc.alpha, sc.eval, ropts));
    return make_full_policy(sol);
  }
  if (name == "decomposed")
    return make_decomposed_policy(solve_decomposed(chain, sc.alpha, sc.eval), chain);
  const double target = sc.cfg.p0 ? *sc.cfg.p0 : 100.0;
  if (name == "rr") return round_robin_matched(chain, sc.cfg.phy, sc.cache, target);
  if (name == "csit") return csit_only_matched(chain, sc.cfg.phy, sc.cache, target);
  throw config_error("unknown policy: " + name);
}

int cmd_simulate(const CommonOpts& o, const std::string& policy_name_arg) {
  const Scenario sc(resolve_config(o));
  const RunConfig& cfg = sc.cfg;
  fs::create_directories(cfg.out_dir);
  const std::string pname = policy_name_arg.empty()
                                ? (cfg.mode == "both" ? "decomposed" : cfg.mode)
                                : policy_name_arg;
  const SolverMode smode = pname == "full" ? SolverMode::Full : SolverMode::Decomposed;
  const double gamma =
      (pname == "full" || pname == "decomposed") ? resolve_gamma(sc, smode) : 1.0;
  const ChainParams chain = cfg.chain(gamma);
  const PolicyHandle policy = build_policy(pname, sc, chain);

  // Analytic stationary distribution for the histogram comparison file.
  SteadyState analytic;
  bool have_analytic = false;
  if (pname == "decomposed") {
    analytic = steady_state_per_stream(solve_decomposed(chain, sc.alpha, sc.eval), chain,
                                       sc.alpha, sc.eval);
    have_analytic = true;
  } else if (pname == "full") {
    RviOptions ropts;
    ropts.state_cap = cfg.state_cap;
    analytic = steady_state_full(solve_rvi(chain, sc.alpha, sc.eval, ropts), chain, sc.alpha,
                                 sc.eval);
    have_analytic = true;
  }

  const std::vector<SimReport> reports = run_many(policy, chain, cfg.phy, cfg.slots, cfg.seeds);
  Eigen::VectorXd mean_q = Eigen::VectorXd::Zero(chain.n_streams());
  double mean_p = 0.0;
  for (const SimReport& r : reports) {
    mean_q += r.avg_queue;
    mean_p += r.avg_power;
    const std::string stem = "sim_" + pname + "_seed" + std::to_string(r.seed);
    save_sim_report_csv(r, sc.hash, fs::path(cfg.out_dir) / (stem + ".csv"));
    save_sim_report_json(r, sc.hash, fs::path(cfg.out_dir) / (stem + ".json"));
    save_histogram_csv(r, have_analytic ? &analytic : nullptr, sc.hash,
                       fs::path(cfg.out_dir) / (stem + "_hist.csv"));
    std::printf("seed %llu: weighted_delay=%.6f avg_power=%.4f clamps=%lld\n",
                static_cast<unsigned long long>(r.seed), r.weighted_delay, r.avg_power,
                r.clamp_events);
  }
  mean_q /= static_cast<double>(reports.size());
  mean_p /= static_cast<double>(reports.size());
  std::printf("%s over %zu seeds x %ld slots: avg_queue=(", pname.c_str(), reports.size(),
              cfg.slots);
  for (int i = 0; i < chain.n_streams(); ++i) std::printf("%s%.6f", i ? ", " : "", mean_q(i));
  std::printf(") avg_power=%.4f -> %s\n", mean_p, cfg.out_dir.c_str());
  return 0;
}

int cmd_sweep(const CommonOpts& o, const std::string& axis, std::vector<double> grid,
              std::vector<std::string> policies) {
  RunConfig base = resolve_config(o);
  fs::create_directories(base.out_dir);
  if (policies.empty()) policies = {"full", "decomposed"};
  if (grid.empty()) {
    if (axis == "p0")
      grid = {30.0, 60.0, 100.0, 150.0, 250.0};
    else if (axis == "sigma_e2")
      grid = {0.0, 0.1, 0.3, 0.5};
    else if (axis == "antennas")
      grid = {2.0, 3.0, 4.0};
    else
      throw config_error("sweep axis must be p0, sigma_e2 or antennas");
  }

  const std::string hash = config_hash(base);
  CsvWriter csv(fs::path(base.out_dir) / ("sweep_" + axis + ".csv"), hash,
                {"axis", "value", "policy", "stream", "gamma", "analytic_queue", "empirical_queue",
                 "analytic_power", "empirical_power", "theta", "drop_rate", "p0_db", "failed"});

  for (const double value : grid) {
    RunConfig cfg = base;
    if (axis == "p0") {
      cfg.p0 = value;
      cfg.gamma.reset();
    } else if (axis == "sigma_e2") {
      cfg.phy.sigma_e2 = value;
      if (!cfg.p0) {
        cfg.p0 = 100.0;
        cfg.gamma.reset();
      }
    } else {
      cfg.phy.n_tx = cfg.phy.n_rx = static_cast<int>(value);
      if (!cfg.p0) {
        cfg.p0 = 100.0;
        cfg.gamma.reset();
      }
    }
    const double target = cfg.p0 ? *cfg.p0 : 0.0;
    Scenario sc(cfg);
    for (const std::string& pname : policies) {
      try {
        double gamma = 1.0;
        double theta = 0.0;
        Eigen::VectorXd an_queue, an_drop;
        double an_power = 0.0;
        if (pname == "full" || pname == "decomposed") {
          const SolverMode smode = pname == "full" ? SolverMode::Full : SolverMode::Decomposed;
          gamma = resolve_gamma(sc, smode);
          const ChainParams chain = cfg.chain(gamma);
          if (smode == SolverMode::Full) {
            RviOptions ropts;
            ropts.state_cap = cfg.state_cap;
            const FullSolution sol = solve_rvi(chain, sc.alpha, sc.eval, ropts);
            const SteadyState ss = steady_state_full(sol, chain, sc.alpha, sc.eval);
            theta = sol.theta;
            an_queue = ss.avg_queue;
            an_power = ss.avg_power;
            an_drop = ss.drop_rate;
          } else {
            const auto sols = solve_decomposed(chain, sc.alpha, sc.eval);
            const SteadyState ss = steady_state_per_stream(sols, chain, sc.alpha, sc.eval);
            theta = decomposed_total_theta(sols);
            an_queue = ss.avg_queue;
            an_power = ss.avg_power;
            an_drop = ss.drop_rate;
          }
        }
        const ChainParams chain = cfg.chain(gamma);
        const PolicyHandle policy = build_policy(pname, sc, chain);
        if (pname == "rr" || pname == "csit") {
          const BaselinePrediction pred = predict_baseline(policy, chain, cfg.phy, sc.cache);
          an_queue = pred.avg_queue;
          an_power = pred.realized_power;
          an_drop = Eigen::VectorXd::Constant(chain.n_streams(), std::nan(""));
        }
        const std::vector<SimReport> reports =
            run_many(policy, chain, cfg.phy, cfg.slots, cfg.seeds);
        Eigen::VectorXd emp_queue = Eigen::VectorXd::Zero(chain.n_streams());
        double emp_power = 0.0;
        for (const auto& r : reports) {
          emp_queue += r.avg_queue;
          emp_power += r.avg_power;
        }
        emp_queue /= static_cast<double>(reports.size());
        emp_power /= static_cast<double>(reports.size());
        for (int i = 0; i < chain.n_streams(); ++i) {
          csv.row({axis, CsvWriter::num(value), pname, std::to_string(i + 1),
                   CsvWriter::num(gamma), CsvWriter::num(an_queue(i)),
                   CsvWriter::num(emp_queue(i)), CsvWriter::num(an_power),
                   CsvWriter::num(emp_power), CsvWriter::num(theta), CsvWriter::num(an_drop(i)),
                   CsvWriter::num(target > 0 ? 10.0 * std::log10(target) : std::nan("")), "0"});
        }
        std::printf("%s=%g policy=%s: analytic sum delay %.4f, empirical %.4f, power %.2f\n",
                    axis.c_str(), value, pname.c_str(), an_queue.sum(), emp_queue.sum(),
                    emp_power);
      } catch (const std::exception& e) {
        csv.row({axis, CsvWriter::num(value), pname, "0", "", "", "", "", "", "", "", "", "1"});
        std::printf("%s=%g policy=%s FAILED: %s\n", axis.c_str(), value, pname.c_str(), e.what());
      }
    }
  }
  // Plot-ready companion script for the CSV.
  {
    std::ofstream gp(fs::path(base.out_dir) / ("sweep_" + axis + ".gp"));
    gp << "# gnuplot companion for sweep_" << axis << ".csv\n"
       << "set datafile separator ','\n"
       << "set xlabel '" << axis << (axis == "p0" ? " (linear, unit noise power)" : "") << "'\n"
       << "set ylabel 'average queue (packets)'\n"
       << "set key outside\n"
       << "plot for [p in \"";
    for (std::size_t k = 0; k < policies.size(); ++k) gp << (k ? " " : "") << policies[k];
    gp << "\"] for [s in \"1 2\"] 'sweep_" << axis
       << ".csv' using 2:((strcol(3) eq p && strcol(4) eq s) ? $7 : 1/0) \\\n"
       << "  with linespoints title p.' stream '.s\n";
  }
  std::printf("sweep written to %s/sweep_%s.csv (+ .gp plot script)\n", base.out_dir.c_str(),
              axis.c_str());
  return 0;
}

int cmd_verify(long cache_rows, long slots, std::uint64_t seed, bool inject_fault) {
  VerifyOptions opts;
  if (cache_rows > 0) opts.cache_rows = static_cast<std::size_t>(cache_rows);
  if (slots > 0) opts.slots = slots;
  opts.seed = seed;
  opts.inject_fault = inject_fault;
  const std::vector<CheckResult> results = run_verification(opts);
  bool all_pass = true;
  for (const auto& r : results) {
    std::printf("%s  %-24s %s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str());
    all_pass = all_pass && r.pass;
  }
  std::printf("%zu checks, %s\n", results.size(), all_pass ? "all passed" : "FAILURES PRESENT");
  return all_pass ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dopa: delay-optimal MIMO precoding and power-allocation toolkit"};
  app.require_subcommand(1);

  CommonOpts o_solve, o_cal, o_sim, o_sweep;
  std::string calib_mode, sim_policy, sweep_axis;
  std::vector<double> sweep_grid;
  std::vector<std::string> sweep_policies;
  long v_rows = -1, v_slots = -1;
  std::uint64_t v_seed = 1;
  bool v_fault = false;

  CLI::App* solve = app.add_subcommand("solve", "offline Bellman solve (full and/or decomposed)");
  add_common(solve, o_solve);

  CLI::App* calibrate = app.add_subcommand("calibrate", "match gamma to an average power budget");
  add_common(calibrate, o_cal);
  calibrate->add_option("--calib", calib_mode, "sweep | rootfind");

  CLI::App* simulate = app.add_subcommand("simulate", "Monte Carlo run of a policy");
  add_common(simulate, o_sim);
  simulate->add_option("--policy", sim_policy, "full | decomposed | rr | csit");

  CLI::App* sweep = app.add_subcommand("sweep", "comparison curves over a parameter axis");
  add_common(sweep, o_sweep);
  sweep->add_option("--axis", sweep_axis, "p0 | sigma_e2 | antennas")->required();
  sweep->add_option("--grid", sweep_grid, "axis grid values")->delimiter(',');
  sweep->add_option("--policy", sweep_policies, "policies to run")->delimiter(',');

  CLI::App* verify = app.add_subcommand("verify", "cross-module oracle suite");
  verify->add_option("--cache-rows", v_rows, "cache rows for the checks");
  verify->add_option("--slots", v_slots, "simulation slots for the stochastic checks");
  verify->add_option("--seed", v_seed, "base seed");
  verify->add_flag("--inject-fault", v_fault, "perturb a solved table (negative control)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (solve->parsed()) return cmd_solve(o_solve);
    if (calibrate->parsed()) return cmd_calibrate(o_cal, calib_mode);
    if (simulate->parsed()) return cmd_simulate(o_sim, sim_policy);
    if (sweep->parsed()) return cmd_sweep(o_sweep, sweep_axis, sweep_grid, sweep_policies);
    if (verify->parsed()) return cmd_verify(v_rows, v_slots, v_seed, v_fault);
  } catch (const config_error& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 1;
  } catch (const numeric_error& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
