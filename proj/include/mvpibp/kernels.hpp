#pragma once

#include <cstddef>

// Batch arithmetic kernels for the data-parallel inner loops (bivariate-CDF
// quadrature, richness sums, composite-likelihood grids). The scalar
// implementations define the reference semantics; the AVX2 variants are
// selected at runtime and must agree with the scalar ones within the
// tolerances pinned in tests/test_kernels.cpp.
namespace mvpibp::kernels {

// y[i] = exp(x[i]); saturates to 0 / inf outside [-745.2, 709.8]
void vexp(const double* x, double* y, std::size_t n);

// y[i] = log(x[i]); x = 0 -> -inf, x < 0 -> NaN
void vlog(const double* x, double* y, std::size_t n);

// sum_i w[i] * exp(a[i])
double weighted_exp_sum(const double* a, const double* w, std::size_t n);

// sum_i (1 - (1 - pi[i])^m), pi in [0,1]
double occupancy_sum(const double* pi, std::size_t n, double m);

// "avx2" or "scalar"
const char* active_backend();

// "scalar", "avx2" or "auto"; throws if the backend is unavailable.
// The MVPIBP_SIMD environment variable applies the same override at startup.
void force_backend(const char* name);

namespace scalar {
void vexp(const double* x, double* y, std::size_t n);
void vlog(const double* x, double* y, std::size_t n);
double weighted_exp_sum(const double* a, const double* w, std::size_t n);
double occupancy_sum(const double* pi, std::size_t n, double m);
}  // namespace scalar

#if defined(MVPIBP_HAVE_AVX2)
namespace avx2 {
bool supported();
void vexp(const double* x, double* y, std::size_t n);
void vlog(const double* x, double* y, std::size_t n);
double weighted_exp_sum(const double* a, const double* w, std::size_t n);
double occupancy_sum(const double* pi, std::size_t n, double m);
}  // namespace avx2
#endif

}  // namespace mvpibp::kernels
