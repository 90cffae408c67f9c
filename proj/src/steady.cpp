#include "dopa/steady.hpp"

#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <limits>

#include "dopa/errors.hpp"

namespace dopa {

std::vector<double> stationary_distribution(const Eigen::MatrixXd& p) {
  const Eigen::Index n = p.rows();
  Eigen::MatrixXd a = p.transpose() - Eigen::MatrixXd::Identity(n, n);
  a.row(0).setOnes();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  b(0) = 1.0;
  Eigen::VectorXd w = a.partialPivLu().solve(b);
  return {w.data(), w.data() + n};
}

std::vector<double> birth_death_stationary(double arrival, const std::vector<double>& depart,
                                           std::vector<std::string>* warnings) {
  const int n = static_cast<int>(depart.size()) - 1;  // depart[1..N]
  if (n < 0) throw config_error("birth_death_stationary: empty ladder");
  if (!(arrival >= 0.0 && arrival < 1.0))
    throw config_error("birth_death_stationary: arrival probability outside [0,1)");

  bool degenerate = false;
  if (arrival > 0.0)
    for (int q = 1; q <= n; ++q)
      if (!(depart[static_cast<std::size_t>(q)] > 0.0)) degenerate = true;

  std::vector<double> omega(static_cast<std::size_t>(n) + 1, 0.0);
  if (!degenerate) {
    double w = 1.0;
    omega[0] = 1.0;
    double total = 1.0;
    for (int q = 1; q <= n; ++q) {
      w *= arrival / depart[static_cast<std::size_t>(q)];
      omega[static_cast<std::size_t>(q)] = w;
      total += w;
    }
    for (auto& x : omega) x /= total;
    return omega;
  }

  if (warnings)
    warnings->push_back("unstable stream: zero service probability at a reachable level, "
                        "mass accumulates at the buffer limit");
  // Fall back to a direct solve of the slot chain.
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n + 1, n + 1);
  for (int q = 0; q <= n; ++q) {
    const double a = q < n ? arrival : 0.0;
    const double d = q > 0 ? depart[static_cast<std::size_t>(q)] : 0.0;
    if (q < n) p(q, q + 1) = a;
    if (q > 0) p(q, q - 1) = d;
    p(q, q) = 1.0 - a - d;  // full-buffer arrivals fold into the self-loop
  }
  return stationary_distribution(p);
}

SteadyState steady_state_full(const FullSolution& sol, const ChainParams& params, double alpha,
                              const PhiEvaluator& eval) {
  const StateSpace space = sol.space();
  const std::size_t count = space.count();
  const int l = sol.n_streams;
  const PolicyStats stats = full_policy_stats(sol, params, alpha, eval);

  // Assemble A = P^T - I with the first row replaced by the
  // normalization constraint.
  using Triplet = Eigen::Triplet<double>;
  std::vector<Triplet> trips;
  trips.reserve(count * (2 * static_cast<std::size_t>(l) + 2));
  for (std::size_t s = 0; s < count; ++s) {
    double stay = 1.0;
    for (int i = 0; i < l; ++i) {
      const double a = params.arrival_prob(i);
      const double d = stats.service_prob(static_cast<Eigen::Index>(s), i);
      const std::size_t up = space.up(s, i);
      const std::size_t down = space.down(s, i);
      if (up != s) {
        trips.emplace_back(static_cast<int>(up), static_cast<int>(s), a);
        stay -= a;
      }
      if (down != s && d > 0.0) {
        trips.emplace_back(static_cast<int>(down), static_cast<int>(s), d);
        stay -= d;
      }
    }
    if (stay < -1e-10)
      throw numeric_error("steady_state_full: invalid self-loop probability (regime violation)");
    trips.emplace_back(static_cast<int>(s), static_cast<int>(s), stay - 1.0);
  }
  Eigen::SparseMatrix<double> a(static_cast<int>(count), static_cast<int>(count));
  a.setFromTriplets(trips.begin(), trips.end());
  // Replace row 0 by ones.
  for (int col = 0; col < static_cast<int>(count); ++col) a.coeffRef(0, col) = 1.0;
  a.makeCompressed();

  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(a);
  if (lu.info() != Eigen::Success)
    throw numeric_error("steady_state_full: singular global-balance system");
  Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(count));
  b(0) = 1.0;
  const Eigen::VectorXd w = lu.solve(b);
  if (lu.info() != Eigen::Success)
    throw numeric_error("steady_state_full: global-balance solve failed");

  SteadyState ss;
  ss.omega_joint.assign(w.data(), w.data() + count);
  ss.avg_queue = Eigen::VectorXd::Zero(l);
  ss.drop_rate = Eigen::VectorXd::Zero(l);
  ss.omega_streams.assign(static_cast<std::size_t>(l),
                          std::vector<double>(static_cast<std::size_t>(sol.buffer) + 1, 0.0));
  double power = 0.0;
  for (std::size_t s = 0; s < count; ++s) {
    const double ws = ss.omega_joint[s];
    power += ws * stats.mean_power(static_cast<Eigen::Index>(s));
    for (int i = 0; i < l; ++i) {
      const int qi = space.coord(s, i);
      ss.avg_queue(i) += ws * static_cast<double>(qi);
      ss.omega_streams[static_cast<std::size_t>(i)][static_cast<std::size_t>(qi)] += ws;
      if (qi == sol.buffer) ss.drop_rate(i) += ws;
    }
  }
  ss.avg_power = power;

  // Residual of the stationarity equations (max norm of w^T P - w^T).
  Eigen::VectorXd residual = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(count));
  for (std::size_t s = 0; s < count; ++s) {
    double stay = 1.0;
    for (int i = 0; i < l; ++i) {
      const double arr = params.arrival_prob(i);
      const double d = stats.service_prob(static_cast<Eigen::Index>(s), i);
      const std::size_t up = space.up(s, i);
      const std::size_t down = space.down(s, i);
      if (up != s) {
        residual(static_cast<Eigen::Index>(up)) += w(static_cast<Eigen::Index>(s)) * arr;
        stay -= arr;
      }
      if (down != s && d > 0.0) {
        residual(static_cast<Eigen::Index>(down)) += w(static_cast<Eigen::Index>(s)) * d;
        stay -= d;
      }
    }
    residual(static_cast<Eigen::Index>(s)) += w(static_cast<Eigen::Index>(s)) * stay;
  }
  residual -= w;
  ss.balance_residual = residual.cwiseAbs().maxCoeff();
  return ss;
}

SteadyState steady_state_per_stream(const std::vector<StreamSolution>& sols,
                                    const ChainParams& params, double alpha,
                                    const PhiEvaluator& eval) {
  const int l = params.n_streams();
  const int n = params.buffer;
  SteadyState ss;
  ss.avg_queue = Eigen::VectorXd::Zero(l);
  ss.drop_rate = Eigen::VectorXd::Zero(l);
  ss.omega_streams.resize(static_cast<std::size_t>(l));
  double power = 0.0;

  for (int i = 0; i < l; ++i) {
    const StreamSolution& s = sols[static_cast<std::size_t>(i)];
    const StreamProfile& pf = params.streams[static_cast<std::size_t>(i)];
    std::vector<double> depart(static_cast<std::size_t>(n) + 1, 0.0);
    std::vector<double> mean_power(static_cast<std::size_t>(n) + 1, 0.0);
    for (int q = 1; q <= n; ++q) {
      const auto term = eval.eval_column(s.eig_rank, s.delta_v[static_cast<std::size_t>(q)],
                                         pf.nbar, params.gamma, alpha);
      depart[static_cast<std::size_t>(q)] = params.tau * term.rate / pf.nbar;
      mean_power[static_cast<std::size_t>(q)] = term.power;
    }
    std::vector<double> omega = birth_death_stationary(params.arrival_prob(i), depart, &ss.warnings);
    for (int q = 0; q <= n; ++q) {
      ss.avg_queue(i) += omega[static_cast<std::size_t>(q)] * static_cast<double>(q);
      power += omega[static_cast<std::size_t>(q)] * mean_power[static_cast<std::size_t>(q)];
    }
    ss.drop_rate(i) = omega[static_cast<std::size_t>(n)];
    ss.omega_streams[static_cast<std::size_t>(i)] = std::move(omega);
  }
  ss.avg_power = power;
  ss.balance_residual = 0.0;  // detailed balance holds by construction
  return ss;
}

CalibrationPoint calibrate_point(double gamma, SolverMode mode, const ChainParams& base,
                                 double alpha, const PhiEvaluator& eval,
                                 const CalibOptions& opts) {
  ChainParams params = base;
  params.gamma = gamma;
  CalibrationPoint pt;
  pt.gamma = gamma;
  if (mode == SolverMode::Full) {
    const FullSolution sol = solve_rvi(params, alpha, eval, opts.rvi);
    if (!sol.converged) throw numeric_error("calibrate: relative value iteration did not converge");
    const SteadyState ss = steady_state_full(sol, params, alpha, eval);
    pt.power = ss.avg_power;
    pt.theta = sol.theta;
    pt.avg_queue = ss.avg_queue;
    pt.drop_rate = ss.drop_rate;
  } else {
    const std::vector<StreamSolution> sols = solve_decomposed(params, alpha, eval, opts.bisect);
    const SteadyState ss = steady_state_per_stream(sols, params, alpha, eval);
    pt.power = ss.avg_power;
    pt.theta = decomposed_total_theta(sols);
    pt.avg_queue = ss.avg_queue;
    pt.drop_rate = ss.drop_rate;
  }
  return pt;
}

CalibrationResult calibrate_gamma(double target_p0, SolverMode mode, const ChainParams& base,
                                  double alpha, const PhiEvaluator& eval, CalibMode calib,
                                  const CalibOptions& opts) {
  if (!(target_p0 > 0.0)) throw config_error("calibrate_gamma: target power must be positive");
  CalibrationResult res;
  res.target_power = target_p0;
  res.mode = calib;

  const int n_pts = std::max(2, opts.sweep_points);
  const double lg_lo = std::log(opts.gamma_lo);
  const double lg_hi = std::log(opts.gamma_hi);
  res.table.reserve(static_cast<std::size_t>(n_pts));
  for (int k = 0; k < n_pts; ++k) {
    const double g = std::exp(lg_lo + (lg_hi - lg_lo) * static_cast<double>(k) /
                                          static_cast<double>(n_pts - 1));
    try {
      res.table.push_back(calibrate_point(g, mode, base, alpha, eval, opts));
    } catch (const std::exception& e) {
      CalibrationPoint failed;
      failed.gamma = g;
      failed.failed = true;
      res.table.push_back(failed);
      res.warnings.push_back("gamma=" + std::to_string(g) + ": " + e.what());
    }
  }

  bool monotone = true;
  for (std::size_t k = 1; k < res.table.size(); ++k) {
    if (res.table[k].failed || res.table[k - 1].failed) continue;
    if (res.table[k].power > res.table[k - 1].power * (1.0 + 1e-9)) monotone = false;
  }

  if (calib == CalibMode::RootFind && !monotone) {
    res.warnings.push_back("power curve not monotone across the sweep; falling back to sweep mode");
    calib = CalibMode::Sweep;
    res.mode = CalibMode::Sweep;
  }

  if (calib == CalibMode::Sweep) {
    // Report the sweep point closest to the target.
    double best = std::numeric_limits<double>::infinity();
    for (const auto& pt : res.table) {
      if (pt.failed) continue;
      const double d = std::abs(pt.power - target_p0);
      if (d < best) {
        best = d;
        res.gamma = pt.gamma;
        res.achieved_power = pt.power;
      }
    }
    return res;
  }

  // Root-find: bracket the target on the (descending-in-gamma) curve.
  int k_hi = -1;  // smallest gamma with power >= target
  int k_lo = -1;  // largest gamma with power <= target
  for (std::size_t k = 0; k < res.table.size(); ++k) {
    if (res.table[k].failed) continue;
    if (res.table[k].power >= target_p0) k_hi = static_cast<int>(k);
    if (k_lo < 0 && res.table[k].power <= target_p0) k_lo = static_cast<int>(k);
  }
  if (k_hi < 0 || k_lo < 0)
    throw calib_range_error("calibrate_gamma: target power outside the achievable sweep range",
                            res.table);

  double g_hi = res.table[static_cast<std::size_t>(k_lo)].gamma;  // power <= target
  double g_lo = res.table[static_cast<std::size_t>(k_hi)].gamma;  // power >= target
  CalibrationPoint best = res.table[static_cast<std::size_t>(k_hi)];
  for (int it = 0; it < opts.max_iter; ++it) {
    const double g = std::sqrt(g_lo * g_hi);
    const CalibrationPoint pt = calibrate_point(g, mode, base, alpha, eval, opts);
    if (std::abs(pt.power - target_p0) < std::abs(best.power - target_p0)) best = pt;
    if (std::abs(pt.power - target_p0) <= opts.rel_tol * target_p0) break;
    if (pt.power > target_p0)
      g_lo = g;
    else
      g_hi = g;
  }
  res.gamma = best.gamma;
  res.achieved_power = best.power;
  return res;
}

}  // namespace dopa
