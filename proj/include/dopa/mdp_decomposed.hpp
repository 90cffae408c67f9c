#pragma once

#include <vector>

#include "dopa/channel.hpp"
#include "dopa/types.hpp"
#include "dopa/waterfill.hpp"

namespace dopa {

/// Solution of one stream's 1-D Bellman equation: average cost theta and
/// the marginal-value ladder delta_v indexed by queue length (entry 0 is
/// the fixed boundary value 0).
struct StreamSolution {
  double theta = 0.0;
  std::vector<double> delta_v;  ///< size N+1, delta_v[0] == 0
  int stream = 0;
  double gamma = 0.0;
  int eig_rank = 0;       ///< statically assigned eigenvalue rank
  double residual = 0.0;  ///< |f(theta*) - N| at acceptance
};

struct BisectOptions {
  double f_tol = 1e-9;  ///< tolerance on f(theta) - N
  int max_iter = 60;
};

/// Ladder recursion lambda * delta_v(q+1) = theta + phi_tilde(delta_v(q)) - beta q
/// for q = 0..N-1, with phi_tilde evaluated at max(0, .) so the recursion
/// is defined for trial theta below the root (entries may be negative
/// there). Returns the full ladder including the zero entry.
std::vector<double> forward_recursion(double theta, const StreamProfile& stream, double gamma,
                                      double alpha, const PhiEvaluator& eval, int col, int buffer);

/// f(theta) = (phi_tilde(max(0, delta_v(N, theta))) + theta) / beta; the
/// Bellman root satisfies f(theta*) = N.
double decomposed_f(double theta, const StreamProfile& stream, double gamma, double alpha,
                    const PhiEvaluator& eval, int col, int buffer);

/// Bisection for theta* with bracket [0, beta*N] (grown geometrically if
/// numerics require). Throws config_error on bracket failure.
StreamSolution solve_theta(const StreamProfile& stream, int stream_idx, int col, double gamma,
                           double alpha, const PhiEvaluator& eval, int buffer,
                           const BisectOptions& opts = {});

/// Solve all L subproblems under the static beta-ordered eigenvalue
/// assignment.
std::vector<StreamSolution> solve_decomposed(const ChainParams& params, double alpha,
                                             const PhiEvaluator& eval,
                                             const BisectOptions& opts = {});

double decomposed_total_theta(const std::vector<StreamSolution>& sols);

/// Online action of the decomposed policy: static permutation, ladder
/// water level per own queue length.
ControlAction decomposed_action(const std::vector<StreamSolution>& sols, const std::vector<int>& q,
                                const ChannelSample& ch, const ChainParams& params, double alpha);

}  // namespace dopa
