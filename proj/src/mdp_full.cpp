#include "dopa/mdp_full.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "dopa/errors.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dopa {

namespace {

std::size_t checked_state_count(const ChainParams& params, std::size_t cap) {
  std::size_t count = 1;
  for (int i = 0; i < params.n_streams(); ++i) {
    const std::size_t base = static_cast<std::size_t>(params.buffer) + 1;
    if (count > cap / base + 1) throw config_error("state space exceeds the configured cap");
    count *= base;
  }
  if (count > cap)
    throw config_error("state space of " + std::to_string(count) +
                       " states exceeds the configured cap of " + std::to_string(cap));
  return count;
}

std::string state_name(const StateSpace& space, std::size_t idx) {
  std::vector<int> q;
  space.decode(idx, q);
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < q.size(); ++i) os << (i ? "," : "") << q[i];
  os << ")";
  return os.str();
}

struct SweepContext {
  const ChainParams* params;
  double alpha;
  const PhiEvaluator* eval;
  const StateSpace* space;
  Eigen::VectorXd nbar;
  Eigen::VectorXd arrival;  // lambda_i * tau
  Eigen::VectorXd beta;
};

SweepContext make_context(const ChainParams& params, double alpha, const PhiEvaluator& eval,
                          const StateSpace& space) {
  SweepContext ctx{&params, alpha, &eval, &space, {}, {}, {}};
  const int l = params.n_streams();
  ctx.nbar.resize(l);
  ctx.arrival.resize(l);
  ctx.beta.resize(l);
  for (int i = 0; i < l; ++i) {
    ctx.nbar(i) = params.streams[static_cast<std::size_t>(i)].nbar;
    ctx.arrival(i) = params.arrival_prob(i);
    ctx.beta(i) = params.streams[static_cast<std::size_t>(i)].beta;
  }
  return ctx;
}

/// One-state application of the Bellman operator against the previous
/// value table.
double backup_state(const SweepContext& ctx, const std::vector<double>& v, std::size_t s) {
  const StateSpace& space = *ctx.space;
  const int l = space.n_streams();
  const double tau = ctx.params->tau;

  WaterfillParams wf;
  wf.marginal.resize(l);
  wf.nbar = ctx.nbar;
  wf.gamma = ctx.params->gamma;
  wf.alpha = ctx.alpha;
  for (int i = 0; i < l; ++i) {
    const int qi = space.coord(s, i);
    wf.marginal(i) = qi > 0 ? tau * (v[s] - v[space.down(s, i)]) : 0.0;
    if (wf.marginal(i) < 0.0) wf.marginal(i) = 0.0;  // transient iterates may dip below zero
  }
  const PhiResult inner = ctx.eval->phi(wf);

  double cost = ctx.params->gamma * inner.mean_power;
  double stay = 1.0;
  double tv = 0.0;
  for (int i = 0; i < l; ++i) {
    const int qi = space.coord(s, i);
    cost += ctx.beta(i) * static_cast<double>(qi);
    const double a = ctx.arrival(i);
    const double dep = qi > 0 ? tau * inner.mean_rate(i) / ctx.nbar(i) : 0.0;
    if (dep < -1e-15 || dep > 1.0)
      throw config_error("bellman_backup: departure probability outside [0,1] at state " +
                         state_name(space, s));
    tv += a * v[space.up(s, i)] + dep * v[space.down(s, i)];
    stay -= a + dep;
  }
  if (stay < -1e-12)
    throw config_error("bellman_backup: self-loop probability negative at state " +
                       state_name(space, s) + " (slot duration too large for this regime)");
  tv += stay * v[s];
  return cost + tv;
}

}  // namespace

BackupResult bellman_backup(const std::vector<double>& v, const ChainParams& params, double alpha,
                            const PhiEvaluator& eval, Exec exec) {
  const StateSpace space(params.buffer, params.n_streams());
  const std::size_t count = space.count();
  if (v.size() != count) throw config_error("bellman_backup: value table size mismatch");
  const SweepContext ctx = make_context(params, alpha, eval, space);

  BackupResult out;
  out.v.resize(count);

#ifdef _OPENMP
  if (exec == Exec::Parallel && count >= 256) {
    std::string error;
#pragma omp parallel for schedule(static)
    for (std::int64_t s = 0; s < static_cast<std::int64_t>(count); ++s) {
      try {
        out.v[static_cast<std::size_t>(s)] = backup_state(ctx, v, static_cast<std::size_t>(s));
      } catch (const std::exception& e) {
#pragma omp critical
        if (error.empty()) error = e.what();
      }
    }
    if (!error.empty()) throw config_error(error);
  } else
#else
  (void)exec;
#endif
  {
    for (std::size_t s = 0; s < count; ++s) out.v[s] = backup_state(ctx, v, s);
  }

  double dmin = std::numeric_limits<double>::infinity();
  double dmax = -std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < count; ++s) {
    const double d = out.v[s] - v[s];
    dmin = std::min(dmin, d);
    dmax = std::max(dmax, d);
  }
  out.delta_min = dmin;
  out.delta_max = dmax;

  const double ref = out.v[0];
  for (std::size_t s = 0; s < count; ++s) out.v[s] -= ref;
  return out;
}

FullSolution solve_rvi(const ChainParams& params, double alpha, const PhiEvaluator& eval,
                       const RviOptions& opts) {
  params.validate();
  const std::size_t count = checked_state_count(params, opts.state_cap);
  const StateSpace space(params.buffer, params.n_streams());
  const int l = params.n_streams();

  FullSolution sol;
  sol.gamma = params.gamma;
  sol.tau = params.tau;
  sol.buffer = params.buffer;
  sol.n_streams = l;
  sol.v.assign(count, 0.0);

  double span = std::numeric_limits<double>::infinity();
  double theta = 0.0;
  int iter = 0;
  while (iter < opts.max_iter) {
    BackupResult r = bellman_backup(sol.v, params, alpha, eval, opts.exec);
    span = r.delta_max - r.delta_min;
    theta = 0.5 * (r.delta_max + r.delta_min);
    sol.v = std::move(r.v);
    ++iter;
    if (span < opts.tol) break;
  }
  sol.theta = theta;
  sol.iterations = iter;
  sol.span_residual = span;
  sol.converged = span < opts.tol;

  sol.delta_v.assign(count * static_cast<std::size_t>(l), 0.0);
  for (std::size_t s = 0; s < count; ++s)
    for (int i = 0; i < l; ++i)
      if (space.coord(s, i) > 0)
        sol.delta_v[s * static_cast<std::size_t>(l) + static_cast<std::size_t>(i)] =
            params.tau * (sol.v[s] - sol.v[space.down(s, i)]);
  return sol;
}

Eigen::VectorXd state_marginals(const FullSolution& sol, std::size_t state_idx) {
  Eigen::VectorXd m(sol.n_streams);
  for (int i = 0; i < sol.n_streams; ++i)
    m(i) = sol.delta_v[state_idx * static_cast<std::size_t>(sol.n_streams) +
                       static_cast<std::size_t>(i)];
  return m;
}

ControlAction extract_action(const FullSolution& sol, const std::vector<int>& q,
                             const ChannelSample& ch, const ChainParams& params, double alpha) {
  const StateSpace space = sol.space();
  const std::size_t idx = space.index(q);
  WaterfillParams wf;
  wf.marginal = state_marginals(sol, idx);
  wf.nbar.resize(sol.n_streams);
  for (int i = 0; i < sol.n_streams; ++i) wf.nbar(i) = params.streams[static_cast<std::size_t>(i)].nbar;
  wf.gamma = sol.gamma;
  wf.alpha = alpha;

  ControlAction act;
  act.rank_of_stream = sort_assignment(wf.marginal);
  act.power = waterfill_power(wf, ch.eigvals, act.rank_of_stream);
  act.precoder.resize(ch.eigvecs.rows(), sol.n_streams);
  for (int i = 0; i < sol.n_streams; ++i)
    act.precoder.col(i) =
        ch.eigvecs.col(act.rank_of_stream[static_cast<std::size_t>(i)]) * std::sqrt(act.power(i));
  return act;
}

PolicyStats full_policy_stats(const FullSolution& sol, const ChainParams& params, double alpha,
                              const PhiEvaluator& eval) {
  const StateSpace space = sol.space();
  const std::size_t count = space.count();
  const int l = sol.n_streams;
  PolicyStats stats;
  stats.service_prob.resize(static_cast<Eigen::Index>(count), l);
  stats.mean_power.resize(static_cast<Eigen::Index>(count));

  WaterfillParams wf;
  wf.nbar.resize(l);
  for (int i = 0; i < l; ++i) wf.nbar(i) = params.streams[static_cast<std::size_t>(i)].nbar;
  wf.gamma = sol.gamma;
  wf.alpha = alpha;

  for (std::size_t s = 0; s < count; ++s) {
    wf.marginal = state_marginals(sol, s);
    const PhiResult pr = eval.phi(wf);
    stats.mean_power(static_cast<Eigen::Index>(s)) = pr.mean_power;
    for (int i = 0; i < l; ++i) {
      const double dep =
          space.coord(s, i) > 0 ? params.tau * pr.mean_rate(i) / wf.nbar(i) : 0.0;
      stats.service_prob(static_cast<Eigen::Index>(s), i) = dep;
    }
  }
  return stats;
}

}  // namespace dopa
