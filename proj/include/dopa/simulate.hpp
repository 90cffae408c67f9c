#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "dopa/channel.hpp"
#include "dopa/mdp_decomposed.hpp"
#include "dopa/mdp_full.hpp"
#include "dopa/types.hpp"

namespace dopa {

enum class PolicyKind { FullOptimal, Decomposed, RoundRobin, CsitOnly };

std::string policy_name(PolicyKind kind);

/// A simulation-ready policy: kind plus whatever offline tables it
/// needs. Construct through the factory functions below.
struct PolicyHandle {
  PolicyKind kind = PolicyKind::CsitOnly;

  std::shared_ptr<const FullSolution> full;
  std::vector<int> full_ranks;  ///< per-state sorted-marginal assignment, flattened count x L

  std::vector<StreamSolution> decomposed;

  double rr_power = 0.0;  ///< per-active-slot budget of the TDMA baseline
  bool rr_waterfill = false;

  double csit_level = 0.0;  ///< fixed water level of the CSIT-only baseline

  std::vector<int> static_ranks;  ///< beta-ordered stream-to-rank map
};

PolicyHandle make_full_policy(std::shared_ptr<const FullSolution> sol);
PolicyHandle make_decomposed_policy(std::vector<StreamSolution> sols, const ChainParams& params);

/// TDMA baseline: slot m serves stream m mod L only. Default rule
/// transmits on the strongest eigenmode with constant power `budget`
/// when the served queue is nonempty; the water-filling variant spreads
/// the same budget across all L modes for the single served stream.
PolicyHandle round_robin_policy(const ChainParams& params, const PhyConfig& phy, double budget,
                                bool waterfill_mode = false);

/// Queue-blind baseline: per-slot water-filling across the L eigenmodes
/// with a fixed water level calibrated over the cache so the
/// queue-unaware mean total power equals `budget`. Streams map to modes
/// by the static beta order; empty queues transmit nothing.
PolicyHandle csit_only_policy(const ChainParams& params, const PhyConfig& phy,
                              const EigenSampleCache& cache, double budget);

/// Classic capacity water-filling of a fixed budget across eigenmodes.
Eigen::VectorXd capacity_waterfill(double budget, const Eigen::VectorXd& eig_desc, double alpha);

/// Per-slot decision of a policy for a given queue state and channel
/// eigenvalues. rate is left zero except where a policy computes an
/// aggregate rate itself (Round-Robin water-filling mode).
struct SlotAction {
  Eigen::VectorXd power;
  std::vector<int> rank;
  double rr_rate = 0.0;
};
SlotAction policy_slot_action(const PolicyHandle& policy, const std::vector<int>& q,
                              const Eigen::VectorXd& eig, long slot, const ChainParams& params,
                              double alpha);

struct SimReport {
  long slots = 0;
  Eigen::VectorXd avg_queue;
  double avg_power = 0.0;
  double weighted_delay = 0.0;  ///< sum_i beta_i * avg_queue_i
  std::vector<long long> drops;
  std::vector<long long> arrivals;  ///< offered arrival events per stream
  std::vector<std::vector<long long>> hist_stream;
  std::vector<long long> hist_joint;  ///< empty when the state space is large
  std::uint64_t seed = 0;
  long long clamp_events = 0;  ///< per-stream service probability clamped at 1
};

/// Slotted Monte Carlo run of the embedded chain: per slot one fresh
/// i.i.d. channel draw, the policy's power allocation, then a single
/// queue event (arrival, departure, or none) drawn from the exclusive
/// partition, matching the analytic transition structure.
SimReport run_sim(const PolicyHandle& policy, const ChainParams& params, const PhyConfig& phy,
                  long slots, std::uint64_t seed);

/// Independent replications (parallel over seeds, reported in seed order).
std::vector<SimReport> run_many(const PolicyHandle& policy, const ChainParams& params,
                                const PhyConfig& phy, long slots,
                                const std::vector<std::uint64_t>& seeds,
                                Exec exec = Exec::Parallel);

/// Analytic steady-state prediction for a baseline policy (per-stream
/// chains; Round-Robin uses the exact phase-periodic chain). Used to
/// match baseline budgets to a realized average power.
struct BaselinePrediction {
  double realized_power = 0.0;
  Eigen::VectorXd avg_queue;
};
BaselinePrediction predict_baseline(const PolicyHandle& policy, const ChainParams& params,
                                    const PhyConfig& phy, const EigenSampleCache& cache);

/// Calibrate a baseline's budget so its predicted realized average power
/// (power actually spent, accounting for empty queues) meets `target`.
PolicyHandle round_robin_matched(const ChainParams& params, const PhyConfig& phy,
                                 const EigenSampleCache& cache, double target,
                                 bool waterfill_mode = false);
PolicyHandle csit_only_matched(const ChainParams& params, const PhyConfig& phy,
                               const EigenSampleCache& cache, double target);

}  // namespace dopa
