#include "dopa/waterfill.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <numeric>

#include "dopa/errors.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dopa {

namespace {

constexpr double kLog2e = std::numbers::log2e;

int active_stream_count(const WaterfillParams& p) { return static_cast<int>(p.marginal.size()); }

void check_params(const WaterfillParams& p) {
  if (!(p.gamma > 0.0)) throw config_error("waterfill: gamma must be positive");
  if (!(p.alpha > 0.0)) throw config_error("waterfill: alpha must be positive");
  if (p.nbar.size() != p.marginal.size()) throw config_error("waterfill: nbar/marginal size mismatch");
  for (Eigen::Index i = 0; i < p.marginal.size(); ++i) {
    if (p.marginal(i) < 0.0) throw config_error("waterfill: marginal values must be >= 0");
    if (!(p.nbar(i) > 0.0)) throw config_error("waterfill: nbar must be positive");
  }
}

std::vector<int> order_desc_ties_low(const double* v, int n) {
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return v[a] > v[b]; });
  std::vector<int> rank(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) rank[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = k;
  return rank;
}

}  // namespace

std::vector<int> sort_assignment(const Eigen::VectorXd& marginal) {
  return order_desc_ties_low(marginal.data(), static_cast<int>(marginal.size()));
}

std::vector<int> rank_by_beta(const std::vector<StreamProfile>& streams) {
  std::vector<double> beta(streams.size());
  for (std::size_t i = 0; i < streams.size(); ++i) beta[i] = streams[i].beta;
  return order_desc_ties_low(beta.data(), static_cast<int>(beta.size()));
}

Eigen::VectorXd waterfill_power(const WaterfillParams& params, const Eigen::VectorXd& eig_desc,
                                const std::vector<int>& rank_of_stream) {
  check_params(params);
  const int l = active_stream_count(params);
  Eigen::VectorXd p = Eigen::VectorXd::Zero(l);
  for (int i = 0; i < l; ++i) {
    const double y = params.marginal(i);
    if (y <= 0.0) continue;
    const double xi = eig_desc(rank_of_stream[static_cast<std::size_t>(i)]);
    if (xi <= 0.0) continue;
    const double level = y * kLog2e / (params.nbar(i) * params.gamma);
    p(i) = std::max(0.0, level - 1.0 / (params.alpha * xi));
  }
  return p;
}

PhiEvaluator::PhiEvaluator(const EigenSampleCache& cache) {
  rows_ = cache.rows();
  if (rows_ == 0) throw config_error("PhiEvaluator: empty cache");
  const int l = cache.cols();
  sorted_.resize(static_cast<std::size_t>(l));
  for (int c = 0; c < l; ++c) {
    Column& col = sorted_[static_cast<std::size_t>(c)];
    col.xi.resize(rows_);
    for (std::size_t r = 0; r < rows_; ++r)
      col.xi[r] = cache.samples()(static_cast<Eigen::Index>(r), c);
    std::sort(col.xi.begin(), col.xi.end(), std::greater<>());
    col.pre_log.resize(rows_ + 1);
    col.pre_inv.resize(rows_ + 1);
    col.pre_log[0] = 0.0;
    col.pre_inv[0] = 0.0;
    for (std::size_t r = 0; r < rows_; ++r) {
      const double xi = col.xi[r];
      // Non-positive tail entries are never part of an active prefix.
      col.pre_log[r + 1] = col.pre_log[r] + (xi > 0.0 ? std::log2(xi) : 0.0);
      col.pre_inv[r + 1] = col.pre_inv[r] + (xi > 0.0 ? 1.0 / xi : 0.0);
    }
  }
}

PhiEvaluator::Term PhiEvaluator::eval_column(int col, double marginal, double nbar, double gamma,
                                             double alpha) const {
  Term t;
  if (marginal <= 0.0) return t;
  const Column& c = sorted_[static_cast<std::size_t>(col)];
  const double level = marginal * kLog2e / (nbar * gamma);
  const double thr = 1.0 / (alpha * level);
  // Number of samples with xi > thr (strict); descending order.
  const auto it = std::lower_bound(c.xi.begin(), c.xi.end(), thr, std::greater<>());
  const std::size_t m = static_cast<std::size_t>(it - c.xi.begin());
  if (m == 0) return t;
  const double inv_rows = 1.0 / static_cast<double>(rows_);
  const double log_level = std::log2(alpha * level);
  t.rate = (c.pre_log[m] + static_cast<double>(m) * log_level) * inv_rows;
  t.power = (static_cast<double>(m) * level - c.pre_inv[m] / alpha) * inv_rows;
  t.value = marginal / nbar * t.rate - gamma * t.power;
  return t;
}

PhiResult PhiEvaluator::phi(const WaterfillParams& params) const {
  return phi_assigned(params, sort_assignment(params.marginal));
}

PhiResult PhiEvaluator::phi_assigned(const WaterfillParams& params,
                                     const std::vector<int>& rank_of_stream) const {
  check_params(params);
  const int l = active_stream_count(params);
  if (l > cols()) throw config_error("PhiEvaluator: more streams than cache columns");
  PhiResult res;
  res.mean_rate = Eigen::VectorXd::Zero(l);
  for (int i = 0; i < l; ++i) {
    const Term t = eval_column(rank_of_stream[static_cast<std::size_t>(i)], params.marginal(i),
                               params.nbar(i), params.gamma, params.alpha);
    res.value += t.value;
    res.mean_power += t.power;
    res.mean_rate(i) = t.rate;
  }
  return res;
}

PhiResult PhiEvaluator::phi_1d(double marginal, const StreamProfile& stream, double gamma,
                               double alpha, int col) const {
  if (marginal < 0.0) throw config_error("phi_1d: marginal must be >= 0");
  const Term t = eval_column(col, marginal, stream.nbar, gamma, alpha);
  PhiResult res;
  res.value = t.value;
  res.mean_power = t.power;
  res.mean_rate = Eigen::VectorXd::Constant(1, t.rate);
  return res;
}

namespace {

struct Partial {
  double value = 0.0;
  double power = 0.0;
  Eigen::VectorXd rate;
};

Partial accumulate_rows(const WaterfillParams& params, const EigenSampleCache& cache,
                        const std::vector<int>& rank_of_stream, std::size_t begin,
                        std::size_t end) {
  const int l = active_stream_count(params);
  Partial acc;
  acc.rate = Eigen::VectorXd::Zero(l);
  for (std::size_t r = begin; r < end; ++r) {
    for (int i = 0; i < l; ++i) {
      const double y = params.marginal(i);
      if (y <= 0.0) continue;
      const double xi =
          cache.samples()(static_cast<Eigen::Index>(r), rank_of_stream[static_cast<std::size_t>(i)]);
      if (xi <= 0.0) continue;
      const double level = y * kLog2e / (params.nbar(i) * params.gamma);
      const double p = level - 1.0 / (params.alpha * xi);
      if (p <= 0.0) continue;
      const double rate = std::log2(1.0 + params.alpha * p * xi);
      acc.rate(i) += rate;
      acc.power += p;
      acc.value += y / params.nbar(i) * rate - params.gamma * p;
    }
  }
  return acc;
}

}  // namespace

PhiResult phi_direct(const WaterfillParams& params, const EigenSampleCache& cache,
                     const std::vector<int>& rank_of_stream, Exec exec) {
  check_params(params);
  const int l = active_stream_count(params);
  const std::size_t rows = cache.rows();
  Partial total;
  total.rate = Eigen::VectorXd::Zero(l);

#ifdef _OPENMP
  if (exec == Exec::Parallel) {
    // Fixed block decomposition; block partials are combined in block
    // order so the sum is independent of the thread count.
    constexpr std::size_t kBlock = 8192;
    const std::size_t n_blocks = (rows + kBlock - 1) / kBlock;
    std::vector<Partial> partials(n_blocks);
#pragma omp parallel for schedule(static)
    for (std::int64_t b = 0; b < static_cast<std::int64_t>(n_blocks); ++b) {
      const std::size_t begin = static_cast<std::size_t>(b) * kBlock;
      const std::size_t end = std::min(rows, begin + kBlock);
      partials[static_cast<std::size_t>(b)] = accumulate_rows(params, cache, rank_of_stream, begin, end);
    }
    for (const Partial& p : partials) {
      total.value += p.value;
      total.power += p.power;
      total.rate += p.rate;
    }
  } else
#else
  (void)exec;
#endif
  {
    total = accumulate_rows(params, cache, rank_of_stream, 0, rows);
  }

  PhiResult res;
  const double inv_rows = 1.0 / static_cast<double>(rows);
  res.value = total.value * inv_rows;
  res.mean_power = total.power * inv_rows;
  res.mean_rate = total.rate * inv_rows;
  return res;
}

}  // namespace dopa
