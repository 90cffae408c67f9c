#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>

namespace dopa::oracles {

/// Brute-force maximizer of a scalar function on [lo, hi]: coarse grid
/// scan followed by golden-section refinement around the best cell.
/// Deliberately independent of any closed-form optimizer it checks.
inline double grid_refine_max(const std::function<double(double)>& f, double lo, double hi,
                              int grid = 2000, int refine_iters = 120) {
  double best_x = lo;
  double best_v = f(lo);
  for (int k = 1; k <= grid; ++k) {
    const double x = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(grid);
    const double v = f(x);
    if (v > best_v) {
      best_v = v;
      best_x = x;
    }
  }
  const double cell = (hi - lo) / static_cast<double>(grid);
  double a = std::max(lo, best_x - cell);
  double b = std::min(hi, best_x + cell);
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - invphi * (b - a);
  double d = a + invphi * (b - a);
  double fc = f(c);
  double fd = f(d);
  for (int it = 0; it < refine_iters; ++it) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - invphi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + invphi * (b - a);
      fd = f(d);
    }
  }
  const double xm = 0.5 * (a + b);
  return std::max(f(xm), std::max(fc, fd));
}

/// Wiener-equalizer SINR of stream i: p_i^H H^H A_i^{-1} H p_i with
/// A_i = sum_{j != i} H p_j p_j^H H^H + I. Independent route used to
/// check the MSE-matrix identity SINR_i = 1/E_ii - 1.
inline double wiener_sinr(const Eigen::MatrixXcd& h, const Eigen::MatrixXcd& p, int i) {
  const int nr = static_cast<int>(h.rows());
  Eigen::MatrixXcd a = Eigen::MatrixXcd::Identity(nr, nr);
  for (int j = 0; j < p.cols(); ++j) {
    if (j == i) continue;
    const Eigen::VectorXcd hp = h * p.col(j);
    a += hp * hp.adjoint();
  }
  const Eigen::VectorXcd hp = h * p.col(i);
  return (hp.adjoint() * a.llt().solve(hp))(0).real();
}

/// Bisection root of g on [lo, hi] assuming g(lo) <= 0 <= g(hi) up to
/// sign; returns the midpoint of the final bracket.
inline double bisect_root(const std::function<double(double)>& g, double lo, double hi,
                          int iters = 200) {
  double glo = g(lo);
  for (int it = 0; it < iters; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double gm = g(mid);
    if ((gm <= 0.0) == (glo <= 0.0)) {
      lo = mid;
      glo = gm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

/// Numeric inversion of the SEP bound (kappa/2) exp(-3/(2 a)) = eps for
/// a, cross-checking the closed-form alpha(eps).
inline double sep_alpha_inversion(double kappa1, double eps) {
  return bisect_root([&](double a) { return 0.5 * kappa1 * std::exp(-1.5 / a) - eps; }, 1e-6, 1e3);
}

}  // namespace dopa::oracles
