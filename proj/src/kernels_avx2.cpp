#include "mvpibp/kernels.hpp"

#if defined(MVPIBP_HAVE_AVX2)

#include <immintrin.h>

#include <cmath>
#include <cstdint>

// AVX2+FMA lanes for the exp/log-dominated loops. exp uses Cody-Waite range
// reduction with a degree-13 Taylor polynomial on [-ln2/2, ln2/2] (truncation
// error ~4e-18, below one ulp); log uses the atanh series in
// s = (m-1)/(m+1) with m in [sqrt(1/2), sqrt(2)).

namespace mvpibp::kernels::avx2 {

namespace {

constexpr double kExpHi = 709.782712893384;   // log(DBL_MAX)
constexpr double kExpLo = -745.133219101941;  // below this exp underflows to 0
constexpr double kLog2e = 1.4426950408889634074;
constexpr double kLn2Hi = 6.93147180369123816490e-1;
constexpr double kLn2Lo = 1.90821492927058770002e-10;

inline __m256d exp4(__m256d x) {
  const __m256d hi = _mm256_set1_pd(kExpHi);
  __m256d xc = _mm256_min_pd(_mm256_max_pd(x, _mm256_set1_pd(-750.0)), hi);

  __m256d k = _mm256_round_pd(_mm256_mul_pd(xc, _mm256_set1_pd(kLog2e)),
                              _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(k, _mm256_set1_pd(kLn2Hi), xc);
  r = _mm256_fnmadd_pd(k, _mm256_set1_pd(kLn2Lo), r);

  // Taylor coefficients 1/13! ... down to 1
  __m256d p = _mm256_set1_pd(1.6059043836821613e-10);
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(2.0876756987868099e-9));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(2.5052108385441720e-8));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(2.7557319223985893e-7));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(2.7557319223985888e-6));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(2.4801587301587302e-5));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.9841269841269841e-4));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.3888888888888889e-3));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(8.3333333333333333e-3));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(4.1666666666666666e-2));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.6666666666666667e-1));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(0.5));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0));

  // scale by 2^k in two halves so k down to -1082 stays representable
  __m128i ki = _mm256_cvtpd_epi32(k);
  __m128i kh32 = _mm_srai_epi32(ki, 1);
  __m128i kl32 = _mm_sub_epi32(ki, kh32);
  __m256i kh = _mm256_cvtepi32_epi64(kh32);
  __m256i kl = _mm256_cvtepi32_epi64(kl32);
  const __m256i bias = _mm256_set1_epi64x(1023);
  __m256d s1 = _mm256_castsi256_pd(_mm256_slli_epi64(_mm256_add_epi64(kh, bias), 52));
  __m256d s2 = _mm256_castsi256_pd(_mm256_slli_epi64(_mm256_add_epi64(kl, bias), 52));
  __m256d res = _mm256_mul_pd(_mm256_mul_pd(p, s1), s2);

  res = _mm256_blendv_pd(res, _mm256_set1_pd(HUGE_VAL), _mm256_cmp_pd(x, hi, _CMP_GT_OQ));
  res = _mm256_blendv_pd(res, _mm256_setzero_pd(),
                         _mm256_cmp_pd(x, _mm256_set1_pd(kExpLo), _CMP_LT_OQ));
  return res;
}

inline __m256d log4(__m256d x) {
  const __m256i mant_mask = _mm256_set1_epi64x(0x000fffffffffffffLL);
  const __m256i one_bits = _mm256_set1_epi64x(0x3ff0000000000000LL);

  // denormal lift: x < 2^-1022 -> multiply by 2^54, subtract 54 from exponent
  __m256d tiny = _mm256_cmp_pd(x, _mm256_set1_pd(2.2250738585072014e-308), _CMP_LT_OQ);
  __m256d xl = _mm256_blendv_pd(x, _mm256_mul_pd(x, _mm256_set1_pd(0x1p54)), tiny);
  __m256d ebias = _mm256_and_pd(tiny, _mm256_set1_pd(54.0));

  __m256i bits = _mm256_castpd_si256(xl);
  __m256i expi = _mm256_and_si256(_mm256_srli_epi64(bits, 52), _mm256_set1_epi64x(0x7ff));
  // int64 -> double for values < 2^52
  const __m256i magic = _mm256_set1_epi64x(0x4330000000000000LL);
  __m256d e = _mm256_sub_pd(_mm256_castsi256_pd(_mm256_or_si256(expi, magic)),
                            _mm256_set1_pd(0x1p52));
  e = _mm256_sub_pd(e, _mm256_set1_pd(1023.0));
  e = _mm256_sub_pd(e, ebias);

  __m256d m = _mm256_castsi256_pd(_mm256_or_si256(_mm256_and_si256(bits, mant_mask), one_bits));
  // fold m into [sqrt(1/2), sqrt(2))
  __m256d gt = _mm256_cmp_pd(m, _mm256_set1_pd(1.4142135623730951), _CMP_GE_OQ);
  m = _mm256_blendv_pd(m, _mm256_mul_pd(m, _mm256_set1_pd(0.5)), gt);
  e = _mm256_add_pd(e, _mm256_and_pd(gt, _mm256_set1_pd(1.0)));

  __m256d s = _mm256_div_pd(_mm256_sub_pd(m, _mm256_set1_pd(1.0)),
                            _mm256_add_pd(m, _mm256_set1_pd(1.0)));
  __m256d s2 = _mm256_mul_pd(s, s);
  // 2*atanh(s) = 2s * sum s^(2k)/(2k+1), k = 0..10
  __m256d p = _mm256_set1_pd(1.0 / 21.0);
  p = _mm256_fmadd_pd(p, s2, _mm256_set1_pd(1.0 / 19.0));
  p = _mm256_fmadd_pd(p, s2, _mm256_set1_pd(1.0 / 17.0));
  p = _mm256_fmadd_pd(p, s2, _mm256_set1_pd(1.0 / 15.0));
  p = _mm256_fmadd_pd(p, s2, _mm256_set1_pd(1.0 / 13.0));
  p = _mm256_fmadd_pd(p, s2, _mm256_set1_pd(1.0 / 11.0));
  p = _mm256_fmadd_pd(p, s2, _mm256_set1_pd(1.0 / 9.0));
  p = _mm256_fmadd_pd(p, s2, _mm256_set1_pd(1.0 / 7.0));
  p = _mm256_fmadd_pd(p, s2, _mm256_set1_pd(1.0 / 5.0));
  p = _mm256_fmadd_pd(p, s2, _mm256_set1_pd(1.0 / 3.0));
  p = _mm256_fmadd_pd(p, s2, _mm256_set1_pd(1.0));
  __m256d lnm = _mm256_mul_pd(_mm256_add_pd(s, s), p);

  __m256d res = _mm256_fmadd_pd(e, _mm256_set1_pd(kLn2Hi), lnm);
  res = _mm256_fmadd_pd(e, _mm256_set1_pd(kLn2Lo), res);

  res = _mm256_blendv_pd(res, _mm256_set1_pd(-HUGE_VAL),
                         _mm256_cmp_pd(x, _mm256_setzero_pd(), _CMP_EQ_OQ));
  res = _mm256_blendv_pd(res, _mm256_set1_pd(NAN),
                         _mm256_cmp_pd(x, _mm256_setzero_pd(), _CMP_LT_OQ));
  res = _mm256_blendv_pd(res, _mm256_set1_pd(HUGE_VAL),
                         _mm256_cmp_pd(x, _mm256_set1_pd(HUGE_VAL), _CMP_EQ_OQ));
  return res;
}

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(lo) + _mm_cvtsd_f64(_mm_unpackhi_pd(lo, lo));
}

}  // namespace

bool supported() {
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}

void vexp(const double* x, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, exp4(_mm256_loadu_pd(x + i)));
  for (; i < n; ++i) y[i] = std::exp(x[i]);
}

void vlog(const double* x, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, log4(_mm256_loadu_pd(x + i)));
  for (; i < n; ++i) y[i] = std::log(x[i]);
}

double weighted_exp_sum(const double* a, const double* w, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(w + i), exp4(_mm256_loadu_pd(a + i)), acc);
  double s = hsum(acc);
  for (; i < n; ++i) s += w[i] * std::exp(a[i]);
  return s;
}

double occupancy_sum(const double* pi, std::size_t n, double m) {
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d mm = _mm256_set1_pd(m);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d p = _mm256_loadu_pd(pi + i);
    __m256d u = _mm256_sub_pd(one, p);
    __m256d t = _mm256_mul_pd(mm, log4(u));
    acc = _mm256_add_pd(acc, _mm256_sub_pd(one, exp4(t)));
  }
  double s = hsum(acc);
  for (; i < n; ++i)
    s += pi[i] >= 1.0 ? 1.0 : -std::expm1(m * std::log1p(-pi[i]));
  return s;
}

}  // namespace mvpibp::kernels::avx2

#endif  // MVPIBP_HAVE_AVX2
