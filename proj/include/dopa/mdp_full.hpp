#pragma once

#include <vector>

#include "dopa/channel.hpp"
#include "dopa/types.hpp"
#include "dopa/waterfill.hpp"

namespace dopa {

/// Converged solution of the joint Bellman equation over {0..N}^L.
/// v is pinned to v(0,...,0) = 0; delta_v stores tau * (v(Q) - v(Q - e_i))
/// in state-lexicographic order, one row of L entries per state.
struct FullSolution {
  double theta = 0.0;
  std::vector<double> v;
  std::vector<double> delta_v;  ///< size count * L
  double gamma = 0.0;
  double tau = 0.0;
  int buffer = 0;
  int n_streams = 0;
  bool converged = false;
  int iterations = 0;
  double span_residual = 0.0;

  StateSpace space() const { return {buffer, n_streams}; }
};

struct BackupResult {
  std::vector<double> v;  ///< one-step backup, re-pinned to the reference state
  double delta_min = 0.0;
  double delta_max = 0.0;
};

struct RviOptions {
  double tol = 1e-8;  ///< span-seminorm stopping threshold
  int max_iter = 100000;
  std::size_t state_cap = 1000000;
  Exec exec = Exec::Parallel;
};

/// One Jacobi sweep of the Bellman operator. The inner optimization is
/// the closed-form water-filling with sorted-marginal assignment; transitions are
/// single-event (arrival, departure, or self-loop). Throws config_error
/// if some state's transition probabilities leave [0,1].
BackupResult bellman_backup(const std::vector<double>& v, const ChainParams& params, double alpha,
                            const PhiEvaluator& eval, Exec exec = Exec::Parallel);

/// Relative value iteration until the span of successive differences
/// drops below tol. Returns the best iterate with converged=false on
/// iteration exhaustion.
FullSolution solve_rvi(const ChainParams& params, double alpha, const PhiEvaluator& eval,
                       const RviOptions& opts = {});

/// Per-state marginal values (tau-scaled value differences), zero at
/// empty coordinates.
Eigen::VectorXd state_marginals(const FullSolution& sol, std::size_t state_idx);

/// Online action for a (queue state, channel) pair under the converged
/// solution: sorted-marginal permutation, water-filling powers, precoder.
ControlAction extract_action(const FullSolution& sol, const std::vector<int>& q,
                             const ChannelSample& ch, const ChainParams& params, double alpha);

/// Per-state statistics of the converged policy, averaged over the
/// frozen cache: service probabilities per slot and expected transmit
/// power. Used by the stationary analysis.
struct PolicyStats {
  Eigen::MatrixXd service_prob;  ///< count x L
  Eigen::VectorXd mean_power;    ///< count
};
PolicyStats full_policy_stats(const FullSolution& sol, const ChainParams& params, double alpha,
                              const PhiEvaluator& eval);

}  // namespace dopa
