#include "dopa/mdp_decomposed.hpp"

#include <cmath>

#include "dopa/errors.hpp"

namespace dopa {

namespace {

double phi_tilde(const StreamProfile& stream, double gamma, double alpha,
                 const PhiEvaluator& eval, int col, double y) {
  if (y <= 0.0) return 0.0;
  return eval.eval_column(col, y, stream.nbar, gamma, alpha).value;
}

}  // namespace

std::vector<double> forward_recursion(double theta, const StreamProfile& stream, double gamma,
                                      double alpha, const PhiEvaluator& eval, int col,
                                      int buffer) {
  if (!(stream.lambda > 0.0)) throw config_error("forward_recursion: lambda must be positive");
  std::vector<double> dv(static_cast<std::size_t>(buffer) + 1, 0.0);
  for (int q = 0; q < buffer; ++q) {
    const double phi = phi_tilde(stream, gamma, alpha, eval, col, dv[static_cast<std::size_t>(q)]);
    dv[static_cast<std::size_t>(q) + 1] =
        (theta + phi - stream.beta * static_cast<double>(q)) / stream.lambda;
  }
  return dv;
}

double decomposed_f(double theta, const StreamProfile& stream, double gamma, double alpha,
                    const PhiEvaluator& eval, int col, int buffer) {
  const std::vector<double> dv = forward_recursion(theta, stream, gamma, alpha, eval, col, buffer);
  return (phi_tilde(stream, gamma, alpha, eval, col, dv[static_cast<std::size_t>(buffer)]) + theta) /
         stream.beta;
}

StreamSolution solve_theta(const StreamProfile& stream, int stream_idx, int col, double gamma,
                           double alpha, const PhiEvaluator& eval, int buffer,
                           const BisectOptions& opts) {
  const double n = static_cast<double>(buffer);
  const auto f = [&](double theta) {
    return decomposed_f(theta, stream, gamma, alpha, eval, col, buffer);
  };

  double lo = 0.0;
  double hi = stream.beta * n;
  int grow = 0;
  while (f(hi) < n) {
    hi *= 2.0;
    if (++grow > 60)
      throw config_error("solve_theta: bisection bracket failure (invalid lambda*tau regime?)");
  }

  double mid = hi;
  double fmid = f(mid);
  for (int it = 0; it < opts.max_iter && std::abs(fmid - n) > opts.f_tol; ++it) {
    mid = 0.5 * (lo + hi);
    fmid = f(mid);
    if (fmid < n)
      lo = mid;
    else
      hi = mid;
  }

  StreamSolution sol;
  sol.theta = mid;
  sol.delta_v = forward_recursion(mid, stream, gamma, alpha, eval, col, buffer);
  sol.stream = stream_idx;
  sol.gamma = gamma;
  sol.eig_rank = col;
  sol.residual = std::abs(fmid - n);
  return sol;
}

std::vector<StreamSolution> solve_decomposed(const ChainParams& params, double alpha,
                                             const PhiEvaluator& eval,
                                             const BisectOptions& opts) {
  params.validate();
  const std::vector<int> ranks = rank_by_beta(params.streams);
  std::vector<StreamSolution> sols;
  sols.reserve(params.streams.size());
  for (int i = 0; i < params.n_streams(); ++i) {
    sols.push_back(solve_theta(params.streams[static_cast<std::size_t>(i)], i,
                               ranks[static_cast<std::size_t>(i)], params.gamma, alpha, eval,
                               params.buffer, opts));
  }
  return sols;
}

double decomposed_total_theta(const std::vector<StreamSolution>& sols) {
  double t = 0.0;
  for (const auto& s : sols) t += s.theta;
  return t;
}

ControlAction decomposed_action(const std::vector<StreamSolution>& sols, const std::vector<int>& q,
                                const ChannelSample& ch, const ChainParams& params, double alpha) {
  const int l = params.n_streams();
  WaterfillParams wf;
  wf.marginal.resize(l);
  wf.nbar.resize(l);
  wf.gamma = params.gamma;
  wf.alpha = alpha;
  std::vector<int> ranks(static_cast<std::size_t>(l));
  for (int i = 0; i < l; ++i) {
    const int qi = q[static_cast<std::size_t>(i)];
    wf.marginal(i) = qi > 0 ? sols[static_cast<std::size_t>(i)].delta_v[static_cast<std::size_t>(qi)] : 0.0;
    wf.nbar(i) = params.streams[static_cast<std::size_t>(i)].nbar;
    ranks[static_cast<std::size_t>(i)] = sols[static_cast<std::size_t>(i)].eig_rank;
  }

  ControlAction act;
  act.rank_of_stream = ranks;
  act.power = waterfill_power(wf, ch.eigvals, ranks);
  act.precoder.resize(ch.eigvecs.rows(), l);
  for (int i = 0; i < l; ++i)
    act.precoder.col(i) =
        ch.eigvecs.col(ranks[static_cast<std::size_t>(i)]) * std::sqrt(act.power(i));
  return act;
}

}  // namespace dopa
