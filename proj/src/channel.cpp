#include "dopa/channel.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "dopa/errors.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dopa {

Eigen::MatrixXcd effective_gram(const Eigen::MatrixXcd& h_hat, const PhyConfig& cfg) {
  Eigen::MatrixXcd g = h_hat.adjoint() * h_hat;
  if (cfg.sigma_e2 > 0.0) {
    const double reg = cfg.unscaled_regularizer ? static_cast<double>(cfg.n_rx)
                                                  : cfg.sigma_e2 * static_cast<double>(cfg.n_rx);
    g += reg * Eigen::MatrixXcd::Identity(g.rows(), g.cols());
  }
  return g;
}

void hermitian_top_eig(const Eigen::MatrixXcd& m, int l, Eigen::VectorXd& vals,
                       Eigen::MatrixXcd& vecs) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(m);
  if (es.info() != Eigen::Success) throw numeric_error("hermitian_top_eig: eigensolver failed");
  const int n = static_cast<int>(m.rows());
  vals.resize(l);
  vecs.resize(n, l);
  // Eigen returns ascending order; take the top l in descending order.
  for (int k = 0; k < l; ++k) {
    const int src = n - 1 - k;
    vals(k) = es.eigenvalues()(src);
    Eigen::VectorXcd v = es.eigenvectors().col(src);
    // Phase normalization: first component with non-negligible modulus
    // is rotated onto the positive real axis.
    for (int j = 0; j < n; ++j) {
      const double a = std::abs(v(j));
      if (a > 1e-12) {
        v *= std::conj(v(j)) / a;
        break;
      }
    }
    vecs.col(k) = v;
  }
}

ChannelSample sample_channel(const PhyConfig& cfg, Rng& rng) {
  ChannelSample s;
  s.h_hat.resize(cfg.n_rx, cfg.n_tx);
  if (cfg.sigma_e2 > 0.0) {
    s.h_true.resize(cfg.n_rx, cfg.n_tx);
    const double est_var = 1.0 - cfg.sigma_e2;
    for (int r = 0; r < cfg.n_rx; ++r)
      for (int c = 0; c < cfg.n_tx; ++c) {
        const std::complex<double> hat = rng.cgauss(est_var);
        const std::complex<double> err = rng.cgauss(cfg.sigma_e2);
        s.h_hat(r, c) = hat;
        s.h_true(r, c) = hat - err;
      }
  } else {
    for (int r = 0; r < cfg.n_rx; ++r)
      for (int c = 0; c < cfg.n_tx; ++c) s.h_hat(r, c) = rng.cgauss(1.0);
    s.h_true = s.h_hat;
  }
  hermitian_top_eig(effective_gram(s.h_hat, cfg), cfg.n_streams, s.eigvals, s.eigvecs);
  return s;
}

Eigen::MatrixXcd mse_matrix(const Eigen::MatrixXcd& precoder, const Eigen::MatrixXcd& h) {
  const int l = static_cast<int>(precoder.cols());
  Eigen::MatrixXcd g = Eigen::MatrixXcd::Identity(l, l) + precoder.adjoint() * h.adjoint() * h * precoder;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(g);
  if (es.info() != Eigen::Success) throw numeric_error("mse_matrix: eigensolver failed");
  const double lmin = es.eigenvalues().minCoeff();
  const double lmax = es.eigenvalues().maxCoeff();
  if (!(lmin > 0.0) || lmax / lmin > 1e12)
    throw numeric_error("mse_matrix: Gram matrix condition number above 1e12");
  return g.inverse();
}

Eigen::VectorXd rate_per_stream(const Eigen::VectorXd& mse_diag, const PhyConfig& cfg) {
  const double alpha = cfg.alpha();
  Eigen::VectorXd r(mse_diag.size());
  for (Eigen::Index i = 0; i < mse_diag.size(); ++i) {
    const double d = mse_diag(i);
    if (!(d > 0.0) || d > 1.0 + 1e-12)
      throw config_error("rate_per_stream: MSE diagonal entry outside (0,1]");
    r(i) = std::log2(1.0 + alpha * (1.0 / d - 1.0));
  }
  return r;
}

EigvalSampler::EigvalSampler(const PhyConfig& cfg) : cfg_(cfg) {
  h_hat_.resize(cfg.n_rx, cfg.n_tx);
  gram_.resize(cfg.n_tx, cfg.n_tx);
}

void EigvalSampler::sample(Rng& rng, Eigen::VectorXd& out) {
  const double est_var = cfg_.sigma_e2 > 0.0 ? 1.0 - cfg_.sigma_e2 : 1.0;
  for (int r = 0; r < cfg_.n_rx; ++r)
    for (int c = 0; c < cfg_.n_tx; ++c) {
      h_hat_(r, c) = rng.cgauss(est_var);
      if (cfg_.sigma_e2 > 0.0) (void)rng.cgauss(cfg_.sigma_e2);  // keep draw order aligned
    }
  gram_.noalias() = h_hat_.adjoint() * h_hat_;
  if (cfg_.sigma_e2 > 0.0) {
    const double reg = cfg_.unscaled_regularizer ? static_cast<double>(cfg_.n_rx)
                                                   : cfg_.sigma_e2 * static_cast<double>(cfg_.n_rx);
    gram_.diagonal().array() += reg;
  }
  es_.compute(gram_, Eigen::EigenvaluesOnly);
  if (es_.info() != Eigen::Success) throw numeric_error("EigvalSampler: eigensolver failed");
  const int n = cfg_.n_tx;
  for (int k = 0; k < cfg_.n_streams; ++k) out(k) = es_.eigenvalues()(n - 1 - k);
}

EigenSampleCache EigenSampleCache::generate(const PhyConfig& cfg, std::size_t rows,
                                            std::uint64_t seed, Exec exec) {
  cfg.validate();
  EigenSampleCache cache;
  cache.seed_ = seed;
  cache.sigma_e2_ = cfg.sigma_e2;
  cache.samples_.resize(static_cast<Eigen::Index>(rows), cfg.n_streams);

  const auto fill_row = [&](std::size_t r) {
    Rng rng(mix_seed(seed, r));
    const ChannelSample s = sample_channel(cfg, rng);
    for (int c = 0; c < cfg.n_streams; ++c)
      cache.samples_(static_cast<Eigen::Index>(r), c) = s.eigvals(c);
  };

#ifdef _OPENMP
  if (exec == Exec::Parallel) {
#pragma omp parallel for schedule(static)
    for (std::int64_t r = 0; r < static_cast<std::int64_t>(rows); ++r)
      fill_row(static_cast<std::size_t>(r));
    return cache;
  }
#else
  (void)exec;
#endif
  for (std::size_t r = 0; r < rows; ++r) fill_row(r);
  return cache;
}

EigenSampleCache EigenSampleCache::column_cache(int col) const {
  EigenSampleCache c;
  c.samples_ = samples_.col(col);
  c.seed_ = seed_;
  c.sigma_e2_ = sigma_e2_;
  return c;
}

EigenSampleCache EigenSampleCache::from_samples(Eigen::MatrixXd samples, std::uint64_t seed,
                                                double sigma_e2) {
  EigenSampleCache c;
  c.samples_ = std::move(samples);
  c.seed_ = seed;
  c.sigma_e2_ = sigma_e2;
  return c;
}

void EigenSampleCache::save_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw config_error("EigenSampleCache: cannot open " + path.string() + " for writing");
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", sigma_e2_);
  out << "# dopa-eigcache-v1\n";
  out << "# seed=" << seed_ << " sigma_e2=" << buf << " rows=" << rows() << " cols=" << cols()
      << "\n";
  for (Eigen::Index r = 0; r < samples_.rows(); ++r) {
    for (Eigen::Index c = 0; c < samples_.cols(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", samples_(r, c));
      out << buf << (c + 1 < samples_.cols() ? "," : "\n");
    }
  }
}

EigenSampleCache EigenSampleCache::load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw config_error("EigenSampleCache: cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("# dopa-eigcache-v1", 0) != 0)
    throw config_error("EigenSampleCache: bad header in " + path.string());
  if (!std::getline(in, line)) throw config_error("EigenSampleCache: truncated header");
  std::uint64_t seed = 0;
  double sigma_e2 = 0.0;
  std::size_t rows = 0;
  int cols = 0;
  if (std::sscanf(line.c_str(), "# seed=%" SCNu64 " sigma_e2=%lg rows=%zu cols=%d", &seed,
                  &sigma_e2, &rows, &cols) != 4)
    throw config_error("EigenSampleCache: malformed header line: " + line);

  EigenSampleCache cache;
  cache.seed_ = seed;
  cache.sigma_e2_ = sigma_e2;
  cache.samples_.resize(static_cast<Eigen::Index>(rows), cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (!std::getline(in, line)) throw config_error("EigenSampleCache: truncated data");
    std::stringstream ss(line);
    std::string cell;
    for (int c = 0; c < cols; ++c) {
      if (!std::getline(ss, cell, ',')) throw config_error("EigenSampleCache: short row");
      cache.samples_(static_cast<Eigen::Index>(r), c) = std::strtod(cell.c_str(), nullptr);
    }
    for (int c = 1; c < cols; ++c)
      if (cache.samples_(static_cast<Eigen::Index>(r), c) >
          cache.samples_(static_cast<Eigen::Index>(r), c - 1))
        throw config_error("EigenSampleCache: row not sorted descending");
  }
  return cache;
}

}  // namespace dopa
