#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>

#include "dopa/rng.hpp"
#include "dopa/types.hpp"

namespace dopa {

/// One CSIT realization. With perfect CSIT h_hat == h_true; with CSIT
/// error the estimate and the error are independent complex Gaussians
/// (variances 1 - sigma_e2 and sigma_e2) and h_true = h_hat - dH, so
/// that h_hat = h_true + dH with E[dH^H h_hat] = 0.
struct ChannelSample {
  Eigen::MatrixXcd h_hat;
  Eigen::MatrixXcd h_true;
  Eigen::VectorXd eigvals;   ///< top-L eigenvalues of the effective matrix, descending
  Eigen::MatrixXcd eigvecs;  ///< n_tx x L, orthonormal columns aligned with eigvals
};

/// Effective transmit-side Gram matrix whose eigenvectors define the
/// precoder: h^H h for perfect CSIT, regularized for outdated CSIT.
Eigen::MatrixXcd effective_gram(const Eigen::MatrixXcd& h_hat, const PhyConfig& cfg);

/// Hermitian eigendecomposition restricted to the top `l` eigenpairs,
/// eigenvalues descending, eigenvector phases normalized so the first
/// component above threshold has positive real part.
void hermitian_top_eig(const Eigen::MatrixXcd& m, int l, Eigen::VectorXd& vals,
                       Eigen::MatrixXcd& vecs);

ChannelSample sample_channel(const PhyConfig& cfg, Rng& rng);

/// Instantaneous MSE matrix (I + P^H h^H h P)^{-1}.
Eigen::MatrixXcd mse_matrix(const Eigen::MatrixXcd& precoder, const Eigen::MatrixXcd& h);

/// Per-stream rate (bits per symbol) from the MSE diagonal:
/// R_i = log2(1 + alpha * (1/d_i - 1)). Each d_i must lie in (0,1].
Eigen::VectorXd rate_per_stream(const Eigen::VectorXd& mse_diag, const PhyConfig& cfg);

/// Packet service rate (packets per channel use) for a given rate in
/// bits per symbol and mean packet size in bits.
inline double service_rate(double rate_bits, double nbar) { return rate_bits / nbar; }

/// Allocation-free repeated sampling of effective-matrix eigenvalues for
/// the simulator hot path. Consumes the same Gaussian draws per slot as
/// sample_channel, so channel streams agree across code paths.
class EigvalSampler {
 public:
  explicit EigvalSampler(const PhyConfig& cfg);
  /// Fills `out` (size L) with descending eigenvalues of the effective
  /// matrix for a fresh channel draw.
  void sample(Rng& rng, Eigen::VectorXd& out);

 private:
  PhyConfig cfg_;
  Eigen::MatrixXcd h_hat_;
  Eigen::MatrixXcd gram_;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es_;
};

/// Frozen matrix of descending-sorted eigenvalue samples used to
/// evaluate all channel expectations deterministically. Row r is drawn
/// from an RNG seeded by mix_seed(seed, r), so regeneration is
/// bit-exact regardless of thread count.
class EigenSampleCache {
 public:
  EigenSampleCache() = default;

  static EigenSampleCache generate(const PhyConfig& cfg, std::size_t rows, std::uint64_t seed,
                                   Exec exec = Exec::Parallel);

  std::size_t rows() const { return static_cast<std::size_t>(samples_.rows()); }
  int cols() const { return static_cast<int>(samples_.cols()); }
  std::uint64_t seed() const { return seed_; }
  double sigma_e2() const { return sigma_e2_; }
  const Eigen::MatrixXd& samples() const { return samples_; }

  /// Single-column cache (used to hand a decomposed stream's eigenvalue
  /// law to the 1-D reference solver).
  EigenSampleCache column_cache(int col) const;

  void save_csv(const std::filesystem::path& path) const;
  static EigenSampleCache load_csv(const std::filesystem::path& path);

  static EigenSampleCache from_samples(Eigen::MatrixXd samples, std::uint64_t seed, double sigma_e2);

 private:
  Eigen::MatrixXd samples_;  ///< rows x L, each row sorted descending
  std::uint64_t seed_ = 0;
  double sigma_e2_ = 0.0;
};

}  // namespace dopa
