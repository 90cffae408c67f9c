#include <doctest.h>

#include <filesystem>

#include "dopa/channel.hpp"
#include "dopa/errors.hpp"
#include "dopa/oracles.hpp"
#include "test_util.hpp"

using namespace dopa;

TEST_CASE("perfect CSIT: estimate equals the true channel exactly") {
  Rng rng(3);
  const ChannelSample s = sample_channel(test::ref_phy(), rng);
  CHECK((s.h_hat - s.h_true).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("eigenvalue sum matches the Gram trace identity") {
  Rng rng(4);
  const PhyConfig phy = test::ref_phy();
  const std::size_t n = 30000;
  double sum = 0.0;
  for (std::size_t k = 0; k < n; ++k) sum += sample_channel(phy, rng).eigvals.sum();
  const double got = sum / static_cast<double>(n);
  // 2% at 1e5 draws, widened by sqrt(1e5/3e4).
  CHECK(std::abs(got - 4.0) < 4.0 * 0.02 * std::sqrt(1e5 / 3e4));
}

TEST_CASE("CSIT error split: variances and orthogonality") {
  PhyConfig phy = test::ref_phy();
  phy.sigma_e2 = 0.3;
  Rng rng(5);
  double var_hat = 0.0, var_true = 0.0, cov = 0.0;
  const std::size_t n = 30000;
  for (std::size_t k = 0; k < n; ++k) {
    const ChannelSample s = sample_channel(phy, rng);
    for (int r = 0; r < phy.n_rx; ++r)
      for (int c = 0; c < phy.n_tx; ++c) {
        const auto err = s.h_hat(r, c) - s.h_true(r, c);
        var_hat += std::norm(s.h_hat(r, c));
        var_true += std::norm(s.h_true(r, c));
        cov += (std::conj(err) * s.h_hat(r, c)).real();
      }
  }
  const double denom = static_cast<double>(n * 4);
  const double tol = 0.02 * std::sqrt(1e5 / 3e4);
  CHECK(std::abs(var_hat / denom - 0.7) < tol);
  CHECK(std::abs(var_true / denom - 1.0) < tol);
  CHECK(std::abs(cov / denom) < tol);
}

TEST_CASE("eigendecomposition invariants") {
  for (double se2 : {0.0, 0.3}) {
    PhyConfig phy = test::ref_phy();
    phy.sigma_e2 = se2;
    Rng rng(6);
    for (int rep = 0; rep < 10; ++rep) {
      const ChannelSample s = sample_channel(phy, rng);
      const Eigen::MatrixXcd gram = effective_gram(s.h_hat, phy);
      CHECK((s.eigvecs.adjoint() * s.eigvecs - Eigen::MatrixXcd::Identity(2, 2))
                .cwiseAbs()
                .maxCoeff() < 1e-10);
      CHECK((gram * s.eigvecs - s.eigvecs * s.eigvals.asDiagonal()).cwiseAbs().maxCoeff() < 1e-8);
      CHECK(s.eigvals(0) >= s.eigvals(1));
      CHECK(s.eigvals(1) >= 0.0);
    }
  }
}

TEST_CASE("effective matrix converges to the plain Gram as the error vanishes") {
  PhyConfig phy = test::ref_phy();
  phy.sigma_e2 = 1e-6;
  Rng rng(7);
  const ChannelSample s = sample_channel(phy, rng);
  const Eigen::MatrixXcd g0 = s.h_hat.adjoint() * s.h_hat;
  CHECK((effective_gram(s.h_hat, phy) - g0).cwiseAbs().maxCoeff() < 1e-4);

  // The unscaled regularizer variant keeps an O(1) shift instead.
  PhyConfig unscaled = phy;
  unscaled.unscaled_regularizer = true;
  CHECK((effective_gram(s.h_hat, unscaled) - g0).cwiseAbs().maxCoeff() ==
        doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("mse matrix: fixed cases and Wiener-filter duality") {
  const Eigen::MatrixXcd h2 = Eigen::MatrixXcd::Identity(2, 2);
  CHECK((mse_matrix(Eigen::MatrixXcd::Zero(2, 2), h2) - Eigen::MatrixXcd::Identity(2, 2))
            .cwiseAbs()
            .maxCoeff() < 1e-14);
  Eigen::MatrixXcd p2 = Eigen::MatrixXcd::Zero(2, 2);
  p2(0, 0) = std::sqrt(3.0);
  p2(1, 1) = std::sqrt(3.0);
  const Eigen::MatrixXcd e = mse_matrix(p2, h2);
  CHECK(e(0, 0).real() == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(e(1, 1).real() == doctest::Approx(0.25).epsilon(1e-14));

  Rng rng(8);
  for (int rep = 0; rep < 50; ++rep) {
    const int n = 2 + rep % 3;
    const int l = std::min(n, 2 + rep % 3);
    Eigen::MatrixXcd h(n, n), p(n, l);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) h(r, c) = rng.cgauss();
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < l; ++c) p(r, c) = rng.cgauss(2.0);
    const Eigen::MatrixXcd em = mse_matrix(p, h);
    for (int i = 0; i < l; ++i) {
      const double sinr_mse = 1.0 / em(i, i).real() - 1.0;
      const double sinr_wiener = oracles::wiener_sinr(h, p, i);
      CHECK(std::abs(sinr_mse - sinr_wiener) <= 1e-8 * std::max(1.0, std::abs(sinr_wiener)));
      CHECK(em(i, i).real() > 0.0);
      CHECK(em(i, i).real() <= 1.0 + 1e-12);
    }
  }
}

TEST_CASE("rate map: closed-form alpha matches the SEP-bound inversion") {
  const PhyConfig phy = test::ref_phy();
  CHECK(phy.alpha() == doctest::Approx(0.2831087487266323).epsilon(1e-12));
  CHECK(std::abs(phy.alpha() - oracles::sep_alpha_inversion(phy.kappa1, phy.target_ser)) < 1e-9);

  Eigen::VectorXd d(2);
  d << 1.0, 0.25;
  const Eigen::VectorXd r = rate_per_stream(d, phy);
  CHECK(r(0) == 0.0);
  CHECK(r(1) == doctest::Approx(0.8869997581259894).epsilon(1e-12));

  Rng rng(9);
  for (int k = 0; k < 1000; ++k) {
    const double d1 = 1e-6 + 0.999 * rng.uniform();
    const double d2 = d1 * (0.01 + 0.98 * rng.uniform());
    Eigen::VectorXd dd(2);
    dd << d1, d2;
    const Eigen::VectorXd rr = rate_per_stream(dd, phy);
    CHECK(rr(1) > rr(0));
  }

  Eigen::VectorXd bad(1);
  bad << 1.5;
  CHECK_THROWS_AS(rate_per_stream(bad, phy), config_error);
  bad << 0.0;
  CHECK_THROWS_AS(rate_per_stream(bad, phy), config_error);
}

TEST_CASE("service rate") {
  CHECK(service_rate(0.0, 200.0) == 0.0);
  CHECK(service_rate(2.0, 200.0) == doctest::Approx(0.01).epsilon(1e-15));
  CHECK(service_rate(2.0, 400.0) == doctest::Approx(0.005).epsilon(1e-15));
}

TEST_CASE("channel sampling is deterministic per seed") {
  Rng a(77), b(77);
  for (int k = 0; k < 5; ++k) {
    const ChannelSample s1 = sample_channel(test::ref_phy(), a);
    const ChannelSample s2 = sample_channel(test::ref_phy(), b);
    CHECK(s1.h_hat == s2.h_hat);
    CHECK(s1.eigvals == s2.eigvals);
    CHECK(s1.eigvecs == s2.eigvecs);
  }
}

TEST_CASE("eigval sampler matches the full sampling path") {
  for (double se2 : {0.0, 0.3}) {
    PhyConfig phy = test::ref_phy();
    phy.sigma_e2 = se2;
    Rng a(11), b(11);
    EigvalSampler sampler(phy);
    Eigen::VectorXd eig(phy.n_streams);
    for (int k = 0; k < 5; ++k) {
      const ChannelSample s = sample_channel(phy, a);
      sampler.sample(b, eig);
      CHECK((s.eigvals - eig).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
}

TEST_CASE("cache: regeneration and file round trip are bit-exact") {
  const PhyConfig phy = test::ref_phy();
  const EigenSampleCache a = EigenSampleCache::generate(phy, 500, 13, Exec::Parallel);
  const EigenSampleCache b = EigenSampleCache::generate(phy, 500, 13, Exec::Serial);
  CHECK(a.samples() == b.samples());

  const std::filesystem::path path = std::filesystem::temp_directory_path() / "dopa_cache_test.csv";
  a.save_csv(path);
  const EigenSampleCache c = EigenSampleCache::load_csv(path);
  CHECK(a.samples() == c.samples());
  CHECK(c.seed() == 13);
  std::filesystem::remove(path);

  const EigenSampleCache col = a.column_cache(1);
  CHECK(col.cols() == 1);
  CHECK(col.samples()(7, 0) == a.samples()(7, 1));
}

TEST_CASE("config validation") {
  PhyConfig phy = test::ref_phy();
  phy.n_streams = 3;
  CHECK_THROWS_AS(phy.validate(), config_error);
  phy = test::ref_phy();
  phy.sigma_e2 = 1.0;
  CHECK_THROWS_AS(phy.validate(), config_error);

  ChainParams chain = test::ref_chain();
  chain.streams[0].lambda = 0.7;
  chain.streams[1].lambda = 0.6;
  CHECK_THROWS_AS(chain.validate(), config_error);
  chain = test::ref_chain();
  chain.gamma = 0.0;
  CHECK_THROWS_AS(chain.validate(), config_error);
}
