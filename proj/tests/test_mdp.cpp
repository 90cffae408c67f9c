#include <doctest.h>

#include "dopa/errors.hpp"
#include "dopa/mdp_decomposed.hpp"
#include "dopa/mdp_full.hpp"
#include "dopa/oracles.hpp"
#include "test_util.hpp"

using namespace dopa;

namespace {

ChainParams one_stream(double beta, double lambda, int buffer, double gamma) {
  ChainParams c;
  c.tau = 1.0;
  c.gamma = gamma;
  c.buffer = buffer;
  c.streams = {{beta, lambda, 200.0}};
  return c;
}

const PhiEvaluator& eval_col0() {
  static const PhiEvaluator eval(test::shared_cache().column_cache(0));
  return eval;
}

}  // namespace

TEST_CASE("forward recursion identities") {
  const StreamProfile s{1.0, 0.02, 200.0};
  const double alpha = test::ref_phy().alpha();

  const auto at_zero = forward_recursion(0.0, s, 0.01, alpha, eval_col0(), 0, 3);
  CHECK(at_zero[0] == 0.0);
  CHECK(at_zero[1] == 0.0);
  CHECK(at_zero[2] < 0.0);

  const auto ladder = forward_recursion(0.04, s, 0.01, alpha, eval_col0(), 0, 3);
  CHECK(ladder[1] == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("bisection root: boundary identity and f monotone") {
  const StreamProfile s{1.0, 0.02, 200.0};
  const double alpha = test::ref_phy().alpha();
  const int n = 4;
  const StreamSolution sol = solve_theta(s, 0, 0, 0.01, alpha, eval_col0(), n);

  CHECK(sol.residual <= 1e-9);
  const double lhs = s.beta * n;
  const double rhs =
      eval_col0().phi_1d(std::max(0.0, sol.delta_v.back()), s, 0.01, alpha, 0).value + sol.theta;
  CHECK(std::abs(lhs - rhs) <= 1e-7);
  for (double dv : sol.delta_v) CHECK(dv >= -1e-9);

  double prev = -1e300;
  for (int k = 0; k <= 50; ++k) {
    const double theta = s.beta * n * k / 50.0;
    const double f = decomposed_f(theta, s, 0.01, alpha, eval_col0(), 0, n);
    CHECK(f > prev);
    prev = f;
  }
}

TEST_CASE("bisection root is unique across iteration budgets") {
  const StreamProfile s{1.0, 0.02, 200.0};
  const double alpha = test::ref_phy().alpha();
  const StreamSolution a = solve_theta(s, 0, 0, 0.01, alpha, eval_col0(), 4);
  BisectOptions wide;
  wide.max_iter = 90;
  const StreamSolution b = solve_theta(s, 0, 0, 0.01, alpha, eval_col0(), 4, wide);
  CHECK(std::abs(a.theta - b.theta) <= 1e-9 * std::max(1.0, a.theta));
}

TEST_CASE("N=1: both solvers match the scalar-equation root") {
  const StreamProfile s{1.0, 0.02, 200.0};
  const double alpha = test::ref_phy().alpha();
  const auto g = [&](double theta) {
    return eval_col0().phi_1d(theta / s.lambda, s, 0.01, alpha, 0).value + theta - s.beta;
  };
  const double root = oracles::bisect_root(g, 0.0, s.beta);

  const StreamSolution dec = solve_theta(s, 0, 0, 0.01, alpha, eval_col0(), 1);
  CHECK(std::abs(dec.theta - root) <= 1e-6 * root);

  RviOptions ropts;
  ropts.tol = 1e-10;
  ropts.max_iter = 400000;
  const FullSolution rvi = solve_rvi(one_stream(1.0, 0.02, 1, 0.01), alpha, eval_col0(), ropts);
  CHECK(rvi.converged);
  CHECK(std::abs(rvi.theta - root) <= 1e-6 * root);
}

TEST_CASE("1-D oracle equivalence on a parameter grid") {
  const double alpha = test::ref_phy().alpha();
  RviOptions ropts;
  ropts.tol = 1e-10;
  ropts.max_iter = 500000;
  for (double lambda : {0.02, 0.05})
    for (int n : {2, 8})
      for (double beta : {0.5, 10.0}) {
        const ChainParams params = one_stream(beta, lambda, n, 0.01);
        const FullSolution rvi = solve_rvi(params, alpha, eval_col0(), ropts);
        const StreamSolution dec = solve_theta(params.streams[0], 0, 0, 0.01, alpha, eval_col0(), n);
        REQUIRE(rvi.converged);
        CHECK(std::abs(rvi.theta - dec.theta) <= 1e-6 * std::abs(dec.theta));
      }
}

TEST_CASE("no arrivals and no cost: the value table stays at zero") {
  ChainParams params = one_stream(0.0, 0.0, 2, 0.01);
  std::vector<double> v(3, 0.0);
  for (int it = 0; it < 50; ++it) {
    const BackupResult r = bellman_backup(v, params, test::ref_phy().alpha(), eval_col0(),
                                          Exec::Serial);
    CHECK(r.delta_max == 0.0);
    v = r.v;
  }
  for (double x : v) CHECK(x == 0.0);
}

TEST_CASE("full solve on the reference scenario") {
  const ChainParams chain = test::ref_chain(0.01);
  const double alpha = test::ref_phy().alpha();
  RviOptions ropts;
  ropts.tol = 1e-9;
  ropts.max_iter = 300000;
  const FullSolution sol = solve_rvi(chain, alpha, test::shared_eval(), ropts);
  REQUIRE(sol.converged);
  CHECK(sol.v[0] == 0.0);

  const StateSpace space = sol.space();
  // Marginal values non-negative at all 25 states.
  for (std::size_t s = 0; s < space.count(); ++s)
    for (int i = 0; i < 2; ++i)
      CHECK(sol.delta_v[s * 2 + static_cast<std::size_t>(i)] >= -10.0 * ropts.tol);

  // Value function monotone in each coordinate.
  for (std::size_t s = 0; s < space.count(); ++s)
    for (int i = 0; i < 2; ++i)
      if (space.up(s, i) != s) CHECK(sol.v[space.up(s, i)] >= sol.v[s] - 10.0 * ropts.tol);

  // Bellman residual at convergence.
  const BackupResult r = bellman_backup(sol.v, chain, alpha, test::shared_eval(), Exec::Serial);
  CHECK(std::abs(r.delta_max - sol.theta) <= 10.0 * ropts.tol);
  CHECK(std::abs(r.delta_min - sol.theta) <= 10.0 * ropts.tol);

  // Parallel and serial sweeps agree bitwise.
  const BackupResult rp = bellman_backup(sol.v, chain, alpha, test::shared_eval(), Exec::Parallel);
  CHECK(r.v == rp.v);

  // Restricted policy class costs at least the optimum.
  const auto dec = solve_decomposed(chain, alpha, test::shared_eval());
  CHECK(sol.theta <= decomposed_total_theta(dec));
}

TEST_CASE("symmetric streams give a swap-symmetric value function") {
  ChainParams chain = test::ref_chain(0.01);
  chain.streams[1] = chain.streams[0];
  RviOptions ropts;
  ropts.tol = 1e-9;
  ropts.max_iter = 300000;
  const FullSolution sol = solve_rvi(chain, test::ref_phy().alpha(), test::shared_eval(), ropts);
  const StateSpace space = sol.space();
  std::vector<int> q;
  for (std::size_t s = 0; s < space.count(); ++s) {
    space.decode(s, q);
    std::swap(q[0], q[1]);
    CHECK(std::abs(sol.v[s] - sol.v[space.index(q)]) <= 1e-7);
  }
}

TEST_CASE("expensive power drives allocation to zero and queues to the cap") {
  ChainParams chain = test::ref_chain(1e3);
  const double alpha = test::ref_phy().alpha();
  RviOptions ropts;
  ropts.tol = 1e-9;
  ropts.max_iter = 300000;
  const FullSolution sol = solve_rvi(chain, alpha, test::shared_eval(), ropts);
  REQUIRE(sol.converged);
  // theta -> sum beta_i * N: queues saturate, no power is bought.
  CHECK(sol.theta == doctest::Approx(44.0).epsilon(1e-6));
  const PolicyStats stats = full_policy_stats(sol, chain, alpha, test::shared_eval());
  CHECK(stats.mean_power.maxCoeff() <= 1e-9);
}

TEST_CASE("extract_action: empty state and footnote-style assignment") {
  const ChainParams chain = test::ref_chain(0.01);
  const double alpha = test::ref_phy().alpha();
  RviOptions ropts;
  ropts.tol = 1e-9;
  const FullSolution sol = solve_rvi(chain, alpha, test::shared_eval(), ropts);

  Rng rng(31);
  const ChannelSample ch = sample_channel(test::ref_phy(), rng);
  const ControlAction idle = extract_action(sol, {0, 0}, ch, chain, alpha);
  CHECK(idle.power.cwiseAbs().maxCoeff() == 0.0);
  CHECK(idle.rank_of_stream == std::vector<int>{0, 1});

  // Power trace accounting: tr(P P^H) = sum p_i.
  const ControlAction act = extract_action(sol, {3, 2}, ch, chain, alpha);
  CHECK((act.precoder.adjoint() * act.precoder).trace().real() ==
        doctest::Approx(act.power.sum()).epsilon(1e-12));
}

TEST_CASE("extract_action rates agree with the full-matrix MSE route") {
  const ChainParams chain = test::ref_chain(0.01);
  const double alpha = test::ref_phy().alpha();
  RviOptions ropts;
  ropts.tol = 1e-9;
  const FullSolution sol = solve_rvi(chain, alpha, test::shared_eval(), ropts);
  Rng rng(32);
  for (int rep = 0; rep < 25; ++rep) {
    const ChannelSample ch = sample_channel(test::ref_phy(), rng);
    const std::vector<int> q = {1 + rep % 4, rep % 5};
    const ControlAction act = extract_action(sol, q, ch, chain, alpha);
    if (act.power.maxCoeff() <= 0.0) continue;
    const Eigen::MatrixXcd e = mse_matrix(act.precoder, ch.h_true);
    for (int i = 0; i < 2; ++i) {
      if (act.power(i) <= 0.0) continue;
      const double direct =
          std::log2(1.0 + alpha * act.power(i) *
                              ch.eigvals(act.rank_of_stream[static_cast<std::size_t>(i)]));
      const double via_mse = std::log2(1.0 + alpha * (1.0 / e(i, i).real() - 1.0));
      CHECK(std::abs(direct - via_mse) <= 1e-9);
    }
  }
}

TEST_CASE("state-space cap is enforced") {
  const ChainParams chain = test::ref_chain(0.01);
  RviOptions ropts;
  ropts.state_cap = 10;  // 25 states needed
  CHECK_THROWS_AS(solve_rvi(chain, test::ref_phy().alpha(), test::shared_eval(), ropts),
                  config_error);
}

TEST_CASE("invalid arrival regime is rejected") {
  ChainParams chain = test::ref_chain(0.01);
  chain.streams[0].lambda = 1.2;
  CHECK_THROWS_AS(solve_decomposed(chain, test::ref_phy().alpha(), test::shared_eval()),
                  config_error);
}
