#pragma once

#include <Eigen/Dense>
#include <vector>

#include "dopa/channel.hpp"
#include "dopa/types.hpp"

namespace dopa {

/// Inputs of the per-realization power optimization
///   max_{p >= 0}  sum_i  marginal_i / nbar_i * log2(1 + alpha p_i xi_[i]) - gamma p_i.
struct WaterfillParams {
  Eigen::VectorXd marginal;  ///< delta-V marginal values, >= 0 (cost per served packet)
  Eigen::VectorXd nbar;      ///< mean packet size per stream (bits)
  double gamma = 0.0;        ///< power price
  double alpha = 0.0;        ///< SINR-to-rate coefficient
};

/// Value and optimizer statistics of the expectation functional phi.
struct PhiResult {
  double value = 0.0;        ///< E[ sum_i marginal_i/nbar_i * R_i - gamma p_i ] at the optimum
  double mean_power = 0.0;   ///< E[ sum_i p_i ]
  Eigen::VectorXd mean_rate; ///< per-stream E[R_i] (bits per symbol)
};

/// Stream-to-eigenvalue-rank assignment: the stream with the k-th
/// largest marginal gets rank k (0 = largest eigenvalue). Ties go to the
/// lower stream index. Returned as rank_of_stream.
std::vector<int> sort_assignment(const Eigen::VectorXd& marginal);

/// Static assignment by stream weights (rank by descending beta, ties by
/// lower index), used by the decomposed policy.
std::vector<int> rank_by_beta(const std::vector<StreamProfile>& streams);

/// Closed-form water-filling for one channel realization:
///   p_i = max(0, marginal_i * log2(e) / (nbar_i gamma) - 1 / (alpha xi_[rank(i)])).
/// The log2(e) factor makes p_i the exact maximizer of the bits-rate
/// objective above. A zero eigenvalue yields p_i = 0.
Eigen::VectorXd waterfill_power(const WaterfillParams& params, const Eigen::VectorXd& eig_desc,
                                const std::vector<int>& rank_of_stream);

/// Exact evaluation of the expectation functionals phi / phi-tilde over a
/// frozen eigenvalue cache in O(log M) per query.
///
/// Each cache column is pre-sorted descending with prefix sums of
/// log2(xi) and 1/xi. For a marginal y the active set {xi : p*(y,xi) > 0}
/// is exactly the column prefix with xi > 1/(alpha w), w = y log2(e) /
/// (nbar gamma), and on that prefix the optimized rate collapses to
/// log2(xi) + log2(alpha w), so the sample average reduces to two prefix
/// sums and a count. Results are bit-stable across calls and match the
/// direct row-wise kernels to rounding error.
class PhiEvaluator {
 public:
  explicit PhiEvaluator(const EigenSampleCache& cache);

  struct Term {
    double value = 0.0;
    double power = 0.0;
    double rate = 0.0;
  };

  /// phi-tilde for one stream against one eigenvalue-rank column.
  Term eval_column(int col, double marginal, double nbar, double gamma, double alpha) const;

  /// phi with the same-order (sorted-marginal) assignment.
  PhiResult phi(const WaterfillParams& params) const;

  /// phi with a caller-fixed assignment.
  PhiResult phi_assigned(const WaterfillParams& params, const std::vector<int>& rank_of_stream) const;

  /// 1-D specialization used by the decomposed recursion.
  PhiResult phi_1d(double marginal, const StreamProfile& stream, double gamma, double alpha,
                   int col) const;

  std::size_t rows() const { return rows_; }
  int cols() const { return static_cast<int>(sorted_.size()); }

 private:
  struct Column {
    std::vector<double> xi;       ///< descending
    std::vector<double> pre_log;  ///< pre_log[m] = sum of log2(xi) over the top m
    std::vector<double> pre_inv;  ///< pre_inv[m] = sum of 1/xi over the top m
  };
  std::size_t rows_ = 0;
  std::vector<Column> sorted_;
};

/// Direct row-wise reference kernel for phi (serial, or OpenMP with a
/// fixed block reduction so results do not depend on thread count).
PhiResult phi_direct(const WaterfillParams& params, const EigenSampleCache& cache,
                     const std::vector<int>& rank_of_stream, Exec exec = Exec::Serial);

}  // namespace dopa
