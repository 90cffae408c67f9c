#include "dopa/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>

#include "dopa/errors.hpp"
#include "dopa/steady.hpp"
#include "dopa/waterfill.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dopa {

namespace {

constexpr int kMaxStreams = 16;
constexpr double kLog2e = std::numbers::log2e;
constexpr std::size_t kJointHistCap = 65536;

void check_dims(const PolicyHandle&, const ChainParams& params, const PhyConfig& phy) {
  params.validate();
  phy.validate();
  if (phy.n_streams != params.n_streams())
    throw config_error("run_sim: stream count mismatch between PhyConfig and ChainParams");
  if (params.n_streams() > kMaxStreams) throw config_error("run_sim: too many streams");
}

}  // namespace

std::string policy_name(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::FullOptimal: return "full";
    case PolicyKind::Decomposed: return "decomposed";
    case PolicyKind::RoundRobin: return "rr";
    case PolicyKind::CsitOnly: return "csit";
  }
  return "?";
}

PolicyHandle make_full_policy(std::shared_ptr<const FullSolution> sol) {
  PolicyHandle h;
  h.kind = PolicyKind::FullOptimal;
  h.full = std::move(sol);
  const StateSpace space = h.full->space();
  const int l = h.full->n_streams;
  h.full_ranks.resize(space.count() * static_cast<std::size_t>(l));
  for (std::size_t s = 0; s < space.count(); ++s) {
    const std::vector<int> ranks = sort_assignment(state_marginals(*h.full, s));
    for (int i = 0; i < l; ++i)
      h.full_ranks[s * static_cast<std::size_t>(l) + static_cast<std::size_t>(i)] =
          ranks[static_cast<std::size_t>(i)];
  }
  return h;
}

PolicyHandle make_decomposed_policy(std::vector<StreamSolution> sols, const ChainParams& params) {
  PolicyHandle h;
  h.kind = PolicyKind::Decomposed;
  h.decomposed = std::move(sols);
  h.static_ranks.resize(h.decomposed.size());
  for (std::size_t i = 0; i < h.decomposed.size(); ++i)
    h.static_ranks[i] = h.decomposed[i].eig_rank;
  (void)params;
  return h;
}

PolicyHandle round_robin_policy(const ChainParams& params, const PhyConfig& phy, double budget,
                                bool waterfill_mode) {
  if (!(budget > 0.0)) throw config_error("round_robin_policy: budget must be positive");
  (void)params;
  (void)phy;
  PolicyHandle h;
  h.kind = PolicyKind::RoundRobin;
  h.rr_power = budget;
  h.rr_waterfill = waterfill_mode;
  return h;
}

Eigen::VectorXd capacity_waterfill(double budget, const Eigen::VectorXd& eig_desc, double alpha) {
  const int l = static_cast<int>(eig_desc.size());
  Eigen::VectorXd p = Eigen::VectorXd::Zero(l);
  if (!(budget > 0.0)) return p;
  // Noise-to-gain floors in ascending order (eigenvalues descending).
  int usable = 0;
  while (usable < l && eig_desc(usable) > 0.0) ++usable;
  if (usable == 0) return p;
  // Largest active set m with water level above the m-th floor.
  double floor_sum = 0.0;
  int m = 0;
  double level = 0.0;
  for (int k = 0; k < usable; ++k) {
    const double fk = 1.0 / (alpha * eig_desc(k));
    const double trial_level = (budget + floor_sum + fk) / static_cast<double>(k + 1);
    if (trial_level <= fk) break;
    floor_sum += fk;
    m = k + 1;
    level = (budget + floor_sum) / static_cast<double>(m);
  }
  for (int k = 0; k < m; ++k) p(k) = level - 1.0 / (alpha * eig_desc(k));
  return p;
}

namespace {

/// Mean CSIT-only power per row of the cache at a fixed water level
/// (queue-unaware: every mode transmits).
double csit_mean_power(const EigenSampleCache& cache, double level, double alpha) {
  const std::size_t rows = cache.rows();
  const int l = cache.cols();
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r)
    for (int k = 0; k < l; ++k) {
      const double xi = cache.samples()(static_cast<Eigen::Index>(r), k);
      if (xi <= 0.0) continue;
      total += std::max(0.0, level - 1.0 / (alpha * xi));
    }
  return total / static_cast<double>(rows);
}

}  // namespace

PolicyHandle csit_only_policy(const ChainParams& params, const PhyConfig& phy,
                              const EigenSampleCache& cache, double budget) {
  if (!(budget > 0.0) || !std::isfinite(budget))
    throw config_error("csit_only_policy: power budget unreachable");
  const double alpha = phy.alpha();
  double lo = 0.0;
  double hi = budget + 1.0;
  int grow = 0;
  while (csit_mean_power(cache, hi, alpha) < budget) {
    hi *= 2.0;
    if (++grow > 200) throw config_error("csit_only_policy: power budget unreachable");
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (csit_mean_power(cache, mid, alpha) < budget)
      lo = mid;
    else
      hi = mid;
    if (hi - lo <= 1e-12 * std::max(1.0, hi)) break;
  }
  PolicyHandle h;
  h.kind = PolicyKind::CsitOnly;
  h.csit_level = 0.5 * (lo + hi);
  h.static_ranks = rank_by_beta(params.streams);
  return h;
}

namespace {

/// Core per-slot decision, writing into caller buffers (rank must hold L
/// entries, power/rate likewise). Returns nothing; rate[] is filled only
/// where the policy computes an aggregate rate itself.
void slot_action_raw(const PolicyHandle& policy, const int* q, const double* eig, long slot,
                     int l, const double* nbar, double gamma, double alpha, double* p, int* rank,
                     double* rate) {
  for (int i = 0; i < l; ++i) {
    p[i] = 0.0;
    rank[i] = 0;
    rate[i] = 0.0;
  }
  switch (policy.kind) {
    case PolicyKind::FullOptimal: {
      const int n = policy.full->buffer;
      std::size_t idx = 0;
      for (int i = 0; i < l; ++i)
        idx = idx * static_cast<std::size_t>(n + 1) + static_cast<std::size_t>(q[i]);
      const double* dv = policy.full->delta_v.data() + idx * static_cast<std::size_t>(l);
      const int* rk = policy.full_ranks.data() + idx * static_cast<std::size_t>(l);
      for (int i = 0; i < l; ++i) {
        rank[i] = rk[i];
        if (q[i] == 0 || dv[i] <= 0.0) continue;
        const double xi = eig[rank[i]];
        if (xi <= 0.0) continue;
        p[i] = std::max(0.0, dv[i] * kLog2e / (nbar[i] * gamma) - 1.0 / (alpha * xi));
      }
      break;
    }
    case PolicyKind::Decomposed: {
      for (int i = 0; i < l; ++i) {
        rank[i] = policy.static_ranks[static_cast<std::size_t>(i)];
        if (q[i] == 0) continue;
        const double dv =
            policy.decomposed[static_cast<std::size_t>(i)].delta_v[static_cast<std::size_t>(q[i])];
        const double xi = eig[rank[i]];
        if (dv <= 0.0 || xi <= 0.0) continue;
        p[i] = std::max(0.0, dv * kLog2e / (nbar[i] * gamma) - 1.0 / (alpha * xi));
      }
      break;
    }
    case PolicyKind::RoundRobin: {
      const int serve = static_cast<int>(slot % l);
      rank[serve] = 0;
      if (q[serve] > 0) {
        if (policy.rr_waterfill) {
          Eigen::Map<const Eigen::VectorXd> ev(eig, l);
          const Eigen::VectorXd pw = capacity_waterfill(policy.rr_power, ev, alpha);
          double r = 0.0;
          for (int k = 0; k < l; ++k)
            if (pw(k) > 0.0) r += std::log2(1.0 + alpha * pw(k) * eig[k]);
          rate[serve] = r;
          p[serve] = pw.sum();
        } else {
          p[serve] = policy.rr_power;
        }
      }
      break;
    }
    case PolicyKind::CsitOnly: {
      for (int i = 0; i < l; ++i) {
        rank[i] = policy.static_ranks[static_cast<std::size_t>(i)];
        if (q[i] == 0) continue;
        const double xi = eig[rank[i]];
        if (xi <= 0.0) continue;
        p[i] = std::max(0.0, policy.csit_level - 1.0 / (alpha * xi));
      }
      break;
    }
  }
}

}  // namespace

SlotAction policy_slot_action(const PolicyHandle& policy, const std::vector<int>& q,
                              const Eigen::VectorXd& eig, long slot, const ChainParams& params,
                              double alpha) {
  const int l = params.n_streams();
  if (l > kMaxStreams) throw config_error("policy_slot_action: too many streams");
  double nbar[kMaxStreams];
  for (int i = 0; i < l; ++i) nbar[i] = params.streams[static_cast<std::size_t>(i)].nbar;
  SlotAction act;
  act.power.resize(l);
  act.rank.resize(static_cast<std::size_t>(l));
  double p[kMaxStreams];
  int rank[kMaxStreams];
  double rate[kMaxStreams];
  slot_action_raw(policy, q.data(), eig.data(), slot, l, nbar, params.gamma, alpha, p, rank,
                  rate);
  for (int i = 0; i < l; ++i) {
    act.power(i) = p[i];
    act.rank[static_cast<std::size_t>(i)] = rank[i];
    if (policy.kind == PolicyKind::RoundRobin && policy.rr_waterfill) act.rr_rate += rate[i];
  }
  return act;
}

SimReport run_sim(const PolicyHandle& policy, const ChainParams& params, const PhyConfig& phy,
                  long slots, std::uint64_t seed) {
  check_dims(policy, params, phy);
  const int l = params.n_streams();
  const int n = params.buffer;
  const double alpha = phy.alpha();
  const double tau = params.tau;
  const double gamma = params.gamma;

  double arrival[kMaxStreams];
  double beta[kMaxStreams];
  double nbar[kMaxStreams];
  for (int i = 0; i < l; ++i) {
    arrival[i] = params.arrival_prob(i);
    beta[i] = params.streams[static_cast<std::size_t>(i)].beta;
    nbar[i] = params.streams[static_cast<std::size_t>(i)].nbar;
  }

  const StateSpace space(n, l);
  const bool joint_hist = space.count() <= kJointHistCap;

  SimReport rep;
  rep.slots = slots;
  rep.seed = seed;
  rep.drops.assign(static_cast<std::size_t>(l), 0);
  rep.arrivals.assign(static_cast<std::size_t>(l), 0);
  rep.hist_stream.assign(static_cast<std::size_t>(l),
                         std::vector<long long>(static_cast<std::size_t>(n) + 1, 0));
  if (joint_hist) rep.hist_joint.assign(space.count(), 0);

  Rng rng(seed);
  EigvalSampler sampler(phy);
  Eigen::VectorXd eig(l);

  int q[kMaxStreams] = {0};
  double sum_q[kMaxStreams] = {0.0};
  double sum_power = 0.0;

  for (long slot = 0; slot < slots; ++slot) {
    // Observe the state, then draw this slot's channel.
    std::size_t idx = 0;
    if (policy.kind == PolicyKind::FullOptimal || joint_hist) {
      std::size_t acc = 0;
      for (int i = 0; i < l; ++i) acc = acc * static_cast<std::size_t>(n + 1) + static_cast<std::size_t>(q[i]);
      idx = acc;
    }
    for (int i = 0; i < l; ++i) {
      sum_q[i] += q[i];
      ++rep.hist_stream[static_cast<std::size_t>(i)][static_cast<std::size_t>(q[i])];
    }
    if (joint_hist) ++rep.hist_joint[idx];

    sampler.sample(rng, eig);

    // Policy action: per-stream power and eigenvalue rank.
    double p[kMaxStreams];
    int rank[kMaxStreams];
    double rate[kMaxStreams];
    slot_action_raw(policy, q, eig.data(), slot, l, nbar, gamma, alpha, p, rank, rate);

    // Service probabilities for this slot's channel.
    double s[kMaxStreams];
    double total_power = 0.0;
    double total_event = 0.0;
    for (int i = 0; i < l; ++i) {
      total_power += p[i];
      double r = rate[i];
      if (r == 0.0 && p[i] > 0.0) r = std::log2(1.0 + alpha * p[i] * eig(rank[i]));
      double si = q[i] > 0 ? tau * r / nbar[i] : 0.0;
      if (si > 1.0) {
        si = 1.0;
        ++rep.clamp_events;
      }
      s[i] = si;
      total_event += arrival[i] + si;
    }
    if (total_event > 1.0) {
      // Regime violation: shrink the departure probabilities to fit.
      double arr = 0.0;
      for (int i = 0; i < l; ++i) arr += arrival[i];
      const double scale = (1.0 - arr) / (total_event - arr);
      for (int i = 0; i < l; ++i) s[i] *= scale;
      ++rep.clamp_events;
    }
    sum_power += total_power;

    // Single queue event per slot (arrival, departure, or none).
    const double u = rng.uniform();
    double cum = 0.0;
    int done = 0;
    for (int i = 0; i < l && !done; ++i) {
      cum += arrival[i];
      if (u < cum) {
        ++rep.arrivals[static_cast<std::size_t>(i)];
        if (q[i] < n)
          ++q[i];
        else
          ++rep.drops[static_cast<std::size_t>(i)];
        done = 1;
      }
    }
    for (int i = 0; i < l && !done; ++i) {
      cum += s[i];
      if (u < cum) {
        --q[i];
        done = 1;
      }
    }
  }

  rep.avg_queue.resize(l);
  rep.weighted_delay = 0.0;
  for (int i = 0; i < l; ++i) {
    rep.avg_queue(i) = sum_q[i] / static_cast<double>(slots);
    rep.weighted_delay += beta[i] * rep.avg_queue(i);
  }
  rep.avg_power = sum_power / static_cast<double>(slots);
  return rep;
}

std::vector<SimReport> run_many(const PolicyHandle& policy, const ChainParams& params,
                                const PhyConfig& phy, long slots,
                                const std::vector<std::uint64_t>& seeds, Exec exec) {
  std::vector<SimReport> reports(seeds.size());
#ifdef _OPENMP
  if (exec == Exec::Parallel) {
    std::string error;
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t k = 0; k < static_cast<std::int64_t>(seeds.size()); ++k) {
      try {
        reports[static_cast<std::size_t>(k)] =
            run_sim(policy, params, phy, slots, seeds[static_cast<std::size_t>(k)]);
      } catch (const std::exception& e) {
#pragma omp critical
        if (error.empty()) error = e.what();
      }
    }
    if (!error.empty()) throw numeric_error(error);
    return reports;
  }
#else
  (void)exec;
#endif
  for (std::size_t k = 0; k < seeds.size(); ++k)
    reports[k] = run_sim(policy, params, phy, slots, seeds[k]);
  return reports;
}

namespace {

/// Per-stream mean service probability of a baseline with a fixed
/// per-slot power rule, averaged over the cache (with the same clamp the
/// simulator applies).
double mean_service_prob(const EigenSampleCache& cache, int col, const ChainParams& params, int i,
                         double alpha, double fixed_power, double csit_level, bool csit) {
  const double tau_over_nbar = params.tau / params.streams[static_cast<std::size_t>(i)].nbar;
  double total = 0.0;
  for (std::size_t r = 0; r < cache.rows(); ++r) {
    const double xi = cache.samples()(static_cast<Eigen::Index>(r), col);
    if (xi <= 0.0) continue;
    const double p = csit ? std::max(0.0, csit_level - 1.0 / (alpha * xi)) : fixed_power;
    if (p <= 0.0) continue;
    total += std::min(1.0, tau_over_nbar * std::log2(1.0 + alpha * p * xi));
  }
  return total / static_cast<double>(cache.rows());
}

double rr_waterfill_service_prob(const EigenSampleCache& cache, const ChainParams& params, int i,
                                 double alpha, double budget) {
  const double tau_over_nbar = params.tau / params.streams[static_cast<std::size_t>(i)].nbar;
  const int l = cache.cols();
  double total = 0.0;
  Eigen::VectorXd eig(l);
  for (std::size_t r = 0; r < cache.rows(); ++r) {
    for (int k = 0; k < l; ++k) eig(k) = cache.samples()(static_cast<Eigen::Index>(r), k);
    const Eigen::VectorXd p = capacity_waterfill(budget, eig, alpha);
    double rate = 0.0;
    for (int k = 0; k < l; ++k)
      if (p(k) > 0.0) rate += std::log2(1.0 + alpha * p(k) * eig(k));
    total += std::min(1.0, tau_over_nbar * rate);
  }
  return total / static_cast<double>(cache.rows());
}

}  // namespace

BaselinePrediction predict_baseline(const PolicyHandle& policy, const ChainParams& params,
                                    const PhyConfig& phy, const EigenSampleCache& cache) {
  const int l = params.n_streams();
  const int n = params.buffer;
  const double alpha = phy.alpha();
  BaselinePrediction out;
  out.avg_queue = Eigen::VectorXd::Zero(l);

  if (policy.kind == PolicyKind::CsitOnly) {
    for (int i = 0; i < l; ++i) {
      const int col = policy.static_ranks[static_cast<std::size_t>(i)];
      const double srv =
          mean_service_prob(cache, col, params, i, alpha, 0.0, policy.csit_level, true);
      std::vector<double> depart(static_cast<std::size_t>(n) + 1, srv);
      depart[0] = 0.0;
      const std::vector<double> omega = birth_death_stationary(params.arrival_prob(i), depart);
      double mean_power_col = 0.0;
      for (std::size_t r = 0; r < cache.rows(); ++r) {
        const double xi = cache.samples()(static_cast<Eigen::Index>(r), col);
        if (xi > 0.0) mean_power_col += std::max(0.0, policy.csit_level - 1.0 / (alpha * xi));
      }
      mean_power_col /= static_cast<double>(cache.rows());
      for (int qv = 0; qv <= n; ++qv)
        out.avg_queue(i) += omega[static_cast<std::size_t>(qv)] * static_cast<double>(qv);
      out.realized_power += mean_power_col * (1.0 - omega[0]);
    }
    return out;
  }

  if (policy.kind == PolicyKind::RoundRobin) {
    for (int i = 0; i < l; ++i) {
      const double srv = policy.rr_waterfill
                             ? rr_waterfill_service_prob(cache, params, i, alpha, policy.rr_power)
                             : mean_service_prob(cache, 0, params, i, alpha, policy.rr_power, 0.0,
                                                 false);
      const double a = params.arrival_prob(i);
      // Slot matrices of the phase-periodic per-stream chain.
      Eigen::MatrixXd idle = Eigen::MatrixXd::Zero(n + 1, n + 1);
      Eigen::MatrixXd serve = Eigen::MatrixXd::Zero(n + 1, n + 1);
      for (int qv = 0; qv <= n; ++qv) {
        const double up = qv < n ? a : 0.0;
        if (qv < n) {
          idle(qv, qv + 1) = up;
          serve(qv, qv + 1) = up;
        }
        idle(qv, qv) = 1.0 - up;
        const double dn = qv > 0 ? srv : 0.0;
        if (qv > 0) serve(qv, qv - 1) = dn;
        serve(qv, qv) = 1.0 - up - dn;
      }
      // Cycle matrix starting at phase 0; stream i is served at phase i.
      Eigen::MatrixXd cycle = Eigen::MatrixXd::Identity(n + 1, n + 1);
      for (int p = 0; p < l; ++p) cycle = cycle * (p == i ? serve : idle);
      const std::vector<double> pi0 = stationary_distribution(cycle);
      Eigen::Map<const Eigen::VectorXd> pi0v(pi0.data(), n + 1);
      Eigen::RowVectorXd phase_dist = pi0v.transpose();
      double occupancy = 0.0;
      double p_nonempty_at_serve = 0.0;
      for (int p = 0; p < l; ++p) {
        for (int qv = 0; qv <= n; ++qv) occupancy += phase_dist(qv) * static_cast<double>(qv);
        if (p == i) p_nonempty_at_serve = 1.0 - phase_dist(0);
        phase_dist = phase_dist * (p == i ? serve : idle);
      }
      out.avg_queue(i) = occupancy / static_cast<double>(l);
      out.realized_power += policy.rr_power * p_nonempty_at_serve / static_cast<double>(l);
    }
    return out;
  }

  throw config_error("predict_baseline: only baseline policies are supported");
}

namespace {

PolicyHandle match_budget(const ChainParams& params, const PhyConfig& phy,
                          const EigenSampleCache& cache, double target,
                          const std::function<PolicyHandle(double)>& make) {
  if (!(target > 0.0)) throw config_error("baseline matching: target power must be positive");
  double lo = 0.0;
  double hi = target;
  int grow = 0;
  while (predict_baseline(make(hi), params, phy, cache).realized_power < target) {
    hi *= 2.0;
    if (++grow > 100) throw config_error("baseline matching: target power unreachable");
  }
  for (int it = 0; it < 80; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= 0.0) break;
    const double realized = predict_baseline(make(mid), params, phy, cache).realized_power;
    if (std::abs(realized - target) <= 1e-6 * target) return make(mid);
    if (realized < target)
      lo = mid;
    else
      hi = mid;
  }
  return make(0.5 * (lo + hi));
}

}  // namespace

PolicyHandle round_robin_matched(const ChainParams& params, const PhyConfig& phy,
                                 const EigenSampleCache& cache, double target,
                                 bool waterfill_mode) {
  return match_budget(params, phy, cache, target, [&](double budget) {
    return round_robin_policy(params, phy, budget, waterfill_mode);
  });
}

PolicyHandle csit_only_matched(const ChainParams& params, const PhyConfig& phy,
                               const EigenSampleCache& cache, double target) {
  return match_budget(params, phy, cache, target, [&](double level) {
    PolicyHandle h;
    h.kind = PolicyKind::CsitOnly;
    h.csit_level = level;
    h.static_ranks = rank_by_beta(params.streams);
    return h;
  });
}

}  // namespace dopa
