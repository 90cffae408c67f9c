#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "dopa/mdp_decomposed.hpp"
#include "dopa/mdp_full.hpp"
#include "dopa/types.hpp"
#include "dopa/waterfill.hpp"

namespace dopa {

/// Stationary queue statistics of a controlled chain. Full-policy
/// analyses fill omega_joint (state-lexicographic) plus the per-stream
/// marginals; decomposed analyses fill omega_streams only.
struct SteadyState {
  std::vector<double> omega_joint;
  std::vector<std::vector<double>> omega_streams;
  Eigen::VectorXd avg_queue;  ///< mean queue length per stream (packets)
  double avg_power = 0.0;
  Eigen::VectorXd drop_rate;  ///< fraction of arrivals lost at the full buffer
  double balance_residual = 0.0;
  std::vector<std::string> warnings;
};

/// Stationary vector of a finite birth-death chain with per-slot birth
/// probability `arrival` and level-dependent death probabilities
/// depart[q], q = 1..N (index 0 unused). Uses the detailed-balance
/// product form; falls back to a direct linear solve when some death
/// probability vanishes (unstable regime).
std::vector<double> birth_death_stationary(double arrival, const std::vector<double>& depart,
                                           std::vector<std::string>* warnings = nullptr);

/// Stationary vector of a small row-stochastic matrix (one balance
/// equation replaced by normalization).
std::vector<double> stationary_distribution(const Eigen::MatrixXd& row_stochastic);

/// Global-balance stationary analysis of the full policy's joint chain.
SteadyState steady_state_full(const FullSolution& sol, const ChainParams& params, double alpha,
                              const PhiEvaluator& eval);

/// Product-form stationary analysis of the decomposed policy (one
/// birth-death chain per stream).
SteadyState steady_state_per_stream(const std::vector<StreamSolution>& sols,
                                    const ChainParams& params, double alpha,
                                    const PhiEvaluator& eval);

enum class SolverMode { Full, Decomposed };
enum class CalibMode { Sweep, RootFind };

struct CalibrationPoint {
  double gamma = 0.0;
  double power = 0.0;
  double theta = 0.0;
  Eigen::VectorXd avg_queue;
  Eigen::VectorXd drop_rate;
  bool failed = false;
};

struct CalibrationResult {
  double gamma = 0.0;
  double achieved_power = 0.0;
  double target_power = 0.0;
  CalibMode mode = CalibMode::Sweep;
  std::vector<CalibrationPoint> table;  ///< ascending gamma
  std::vector<std::string> warnings;
};

/// Thrown when the power target falls outside the achievable range; the
/// bracketing sweep is attached.
class calib_range_error : public config_error {
 public:
  calib_range_error(const std::string& what, std::vector<CalibrationPoint> table)
      : config_error(what), table(std::move(table)) {}
  std::vector<CalibrationPoint> table;
};

struct CalibOptions {
  int sweep_points = 20;
  double gamma_lo = 1e-4;
  double gamma_hi = 1.0;
  double rel_tol = 1e-3;  ///< |achieved - target| / target in root-find mode
  int max_iter = 80;
  RviOptions rvi;
  BisectOptions bisect;
};

/// Evaluate one gamma point: offline solve, stationary analysis,
/// expected power.
CalibrationPoint calibrate_point(double gamma, SolverMode mode, const ChainParams& base,
                                 double alpha, const PhiEvaluator& eval, const CalibOptions& opts);

/// Match the Lagrange multiplier to an average power budget, either by
/// emitting the sweep curve or by bisection on gamma after a
/// monotonicity pre-check.
CalibrationResult calibrate_gamma(double target_p0, SolverMode mode, const ChainParams& base,
                                  double alpha, const PhiEvaluator& eval, CalibMode calib,
                                  const CalibOptions& opts = {});

}  // namespace dopa
