#include "mvpibp/kernels.hpp"

#include <cmath>

namespace mvpibp::kernels::scalar {

void vexp(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = std::exp(x[i]);
}

void vlog(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = std::log(x[i]);
}

double weighted_exp_sum(const double* a, const double* w, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += w[i] * std::exp(a[i]);
  return s;
}

double occupancy_sum(const double* pi, std::size_t n, double m) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (pi[i] >= 1.0) {
      s += 1.0;
    } else {
      s += -std::expm1(m * std::log1p(-pi[i]));
    }
  }
  return s;
}

}  // namespace mvpibp::kernels::scalar
