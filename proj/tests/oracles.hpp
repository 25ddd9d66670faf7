// Test-only reference implementations, independent of the library's
// computation paths.
#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "gmf/tensor.hpp"

namespace oracles {

inline double kahan_sum(const double* p, std::size_t n) {
  double s = 0.0, c = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double y = p[i] - c;
    double t = s + y;
    c = (t - s) - y;
    s = t;
  }
  return s;
}

// Central finite differences of a scalar-valued evaluation with respect to
// every entry of `param`. `eval` must observe the current contents of
// `param` on each call.
inline gmf::Tensor finite_diff_grad(const std::function<double()>& eval, gmf::Tensor& param,
                                    double step = 1e-5) {
  gmf::Tensor grad(param.shape());
  for (std::size_t i = 0; i < param.numel(); ++i) {
    const double saved = param[i];
    param[i] = saved + step;
    const double fp = eval();
    param[i] = saved - step;
    const double fm = eval();
    param[i] = saved;
    grad[i] = (fp - fm) / (2.0 * step);
  }
  return grad;
}

inline double rel_err(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double max_rel_err(const gmf::Tensor& a, const gmf::Tensor& b, double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) worst = std::max(worst, rel_err(a[i], b[i], floor));
  return worst;
}

inline double max_abs_diff(const gmf::Tensor& a, const gmf::Tensor& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

// Eigenvalues of a symmetric 3x3 matrix by the trigonometric solution of the
// characteristic cubic, sorted descending.
inline std::array<double, 3> sym3x3_eigen_cubic(const double m[3][3]) {
  const double p1 = m[0][1] * m[0][1] + m[0][2] * m[0][2] + m[1][2] * m[1][2];
  std::array<double, 3> eig;
  if (p1 < 1e-300) {
    eig = {m[0][0], m[1][1], m[2][2]};
  } else {
    const double q = (m[0][0] + m[1][1] + m[2][2]) / 3.0;
    const double p2 = (m[0][0] - q) * (m[0][0] - q) + (m[1][1] - q) * (m[1][1] - q) +
                      (m[2][2] - q) * (m[2][2] - q) + 2.0 * p1;
    const double p = std::sqrt(p2 / 6.0);
    double b[3][3];
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) b[i][j] = (m[i][j] - (i == j ? q : 0.0)) / p;
    double detb = b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1]) -
                  b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0]) +
                  b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]);
    double r = detb / 2.0;
    r = std::min(1.0, std::max(-1.0, r));
    const double phi = std::acos(r) / 3.0;
    eig[0] = q + 2.0 * p * std::cos(phi);
    eig[2] = q + 2.0 * p * std::cos(phi + 2.0 * M_PI / 3.0);
    eig[1] = 3.0 * q - eig[0] - eig[2];
  }
  if (eig[0] < eig[1]) std::swap(eig[0], eig[1]);
  if (eig[1] < eig[2]) std::swap(eig[1], eig[2]);
  if (eig[0] < eig[1]) std::swap(eig[0], eig[1]);
  return eig;
}

}  // namespace oracles
