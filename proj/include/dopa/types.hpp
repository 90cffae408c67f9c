#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dopa/errors.hpp"

namespace dopa {

/// Execution policy for the data-parallel kernels. Serial variants are
/// the reference implementations used by tests and benchmarks.
enum class Exec { Serial, Parallel };

/// Traffic description of one data stream: delay weight, arrival rate
/// (packets per channel use) and mean packet size (bits).
struct StreamProfile {
  double beta = 1.0;
  double lambda = 0.02;
  double nbar = 200.0;
};

/// Physical-layer configuration of the MIMO link.
struct PhyConfig {
  int n_tx = 2;
  int n_rx = 2;
  int n_streams = 2;
  double target_ser = 0.01;  ///< target symbol error probability
  double kappa1 = 4.0;       ///< QAM SEP union-bound constant
  double sigma_e2 = 0.0;     ///< CSIT error variance, in [0,1)
  std::uint64_t rng_seed = 1;
  /// If true, use the literal "G + N_r I" effective matrix for outdated
  /// CSIT; default scales the regularizer by sigma_e2 so the perfect-CSIT
  /// case is recovered continuously.
  bool unscaled_regularizer = false;

  /// SINR-to-rate coefficient obtained by inverting the SEP bound
  /// (kappa1/2) exp(-3 SINR / (2 (2^R - 1))) = epsilon at equality.
  double alpha() const { return 3.0 / (2.0 * std::log(kappa1 / (2.0 * target_ser))); }

  void validate() const {
    if (n_tx < 1 || n_rx < 1) throw config_error("PhyConfig: antenna counts must be positive");
    if (n_streams < 1 || n_streams > std::min(n_tx, n_rx))
      throw config_error("PhyConfig: need 1 <= n_streams <= min(n_tx, n_rx)");
    if (!(target_ser > 0.0 && target_ser < 1.0))
      throw config_error("PhyConfig: target_ser must lie in (0,1)");
    if (!(kappa1 > 0.0)) throw config_error("PhyConfig: kappa1 must be positive");
    if (!(sigma_e2 >= 0.0 && sigma_e2 < 1.0))
      throw config_error("PhyConfig: sigma_e2 must lie in [0,1)");
    if (!(alpha() > 0.0)) throw config_error("PhyConfig: derived alpha must be positive (kappa1 > 2*target_ser)");
  }
};

/// Queueing-chain parameters shared by the solvers and the simulator.
struct ChainParams {
  double tau = 1.0;    ///< channel uses per scheduling slot
  double gamma = 0.0;  ///< power price (Lagrange multiplier)
  int buffer = 4;      ///< buffer size N per stream
  std::vector<StreamProfile> streams;

  int n_streams() const { return static_cast<int>(streams.size()); }

  double arrival_prob(int i) const { return streams[static_cast<std::size_t>(i)].lambda * tau; }

  /// Regime checks for the embedded chain (arrival probabilities valid;
  /// service-side validity is state-dependent and enforced per backup).
  void validate() const {
    if (streams.empty()) throw config_error("ChainParams: need at least one stream");
    if (!(tau > 0.0)) throw config_error("ChainParams: tau must be positive");
    if (!(gamma > 0.0)) throw config_error("ChainParams: gamma must be positive");
    if (buffer < 1) throw config_error("ChainParams: buffer size must be >= 1");
    double total_arrival = 0.0;
    for (std::size_t i = 0; i < streams.size(); ++i) {
      const auto& s = streams[i];
      if (!(s.beta > 0.0)) throw config_error("ChainParams: beta must be positive (stream " + std::to_string(i + 1) + ")");
      if (!(s.nbar > 0.0)) throw config_error("ChainParams: nbar must be positive (stream " + std::to_string(i + 1) + ")");
      const double a = s.lambda * tau;
      if (!(a > 0.0 && a < 1.0))
        throw config_error("ChainParams: lambda*tau must lie in (0,1) (stream " + std::to_string(i + 1) + ")");
      total_arrival += a;
    }
    if (total_arrival >= 1.0) throw config_error("ChainParams: sum of arrival probabilities must stay below 1");
  }
};

/// Flat indexing of the joint queue-state lattice {0..N}^L in
/// lexicographic order (q_1 most significant).
class StateSpace {
 public:
  StateSpace(int buffer, int n_streams) : n_(buffer), l_(n_streams) {
    strides_.resize(static_cast<std::size_t>(l_));
    std::size_t s = 1;
    for (int i = l_ - 1; i >= 0; --i) {
      strides_[static_cast<std::size_t>(i)] = s;
      s *= static_cast<std::size_t>(n_ + 1);
    }
    count_ = s;
  }

  int buffer() const { return n_; }
  int n_streams() const { return l_; }
  std::size_t count() const { return count_; }

  std::size_t index(const std::vector<int>& q) const {
    std::size_t idx = 0;
    for (int i = 0; i < l_; ++i) idx += static_cast<std::size_t>(q[static_cast<std::size_t>(i)]) * strides_[static_cast<std::size_t>(i)];
    return idx;
  }

  void decode(std::size_t idx, std::vector<int>& q) const {
    q.resize(static_cast<std::size_t>(l_));
    for (int i = 0; i < l_; ++i) {
      q[static_cast<std::size_t>(i)] = static_cast<int>(idx / strides_[static_cast<std::size_t>(i)]) % (n_ + 1);
    }
  }

  int coord(std::size_t idx, int i) const {
    return static_cast<int>(idx / strides_[static_cast<std::size_t>(i)]) % (n_ + 1);
  }

  /// Neighbor with q_i + 1, or the state itself at the buffer boundary.
  std::size_t up(std::size_t idx, int i) const {
    return coord(idx, i) < n_ ? idx + strides_[static_cast<std::size_t>(i)] : idx;
  }

  /// Neighbor with q_i - 1, or the state itself at zero.
  std::size_t down(std::size_t idx, int i) const {
    return coord(idx, i) > 0 ? idx - strides_[static_cast<std::size_t>(i)] : idx;
  }

 private:
  int n_;
  int l_;
  std::size_t count_ = 0;
  std::vector<std::size_t> strides_;
};

/// Per-slot control decision: stream-to-eigenchannel assignment, power
/// vector and the resulting precoder U * diag(sqrt(p)).
struct ControlAction {
  std::vector<int> rank_of_stream;  ///< stream i transmits on eigenvalue rank_of_stream[i] (0 = largest)
  Eigen::VectorXd power;
  Eigen::MatrixXcd precoder;  ///< n_tx x L
};

}  // namespace dopa
