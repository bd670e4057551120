#include "mvpibp/kernels.hpp"

#include <cstdlib>
#include <cstring>
#include <stdexcept>
#include <string>

namespace mvpibp::kernels {

namespace {

struct Backend {
  const char* name;
  void (*vexp)(const double*, double*, std::size_t);
  void (*vlog)(const double*, double*, std::size_t);
  double (*weighted_exp_sum)(const double*, const double*, std::size_t);
  double (*occupancy_sum)(const double*, std::size_t, double);
};

constexpr Backend kScalar{"scalar", scalar::vexp, scalar::vlog,
                          scalar::weighted_exp_sum, scalar::occupancy_sum};

#if defined(MVPIBP_HAVE_AVX2)
constexpr Backend kAvx2{"avx2", avx2::vexp, avx2::vlog,
                        avx2::weighted_exp_sum, avx2::occupancy_sum};
#endif

Backend pick_auto() {
#if defined(MVPIBP_HAVE_AVX2)
  if (avx2::supported()) return kAvx2;
#endif
  return kScalar;
}

Backend initial_backend() {
  if (const char* env = std::getenv("MVPIBP_SIMD")) {
    if (std::strcmp(env, "scalar") == 0) return kScalar;
#if defined(MVPIBP_HAVE_AVX2)
    if (std::strcmp(env, "avx2") == 0 && avx2::supported()) return kAvx2;
#endif
  }
  return pick_auto();
}

Backend g_backend = initial_backend();

}  // namespace

void vexp(const double* x, double* y, std::size_t n) { g_backend.vexp(x, y, n); }
void vlog(const double* x, double* y, std::size_t n) { g_backend.vlog(x, y, n); }
double weighted_exp_sum(const double* a, const double* w, std::size_t n) {
  return g_backend.weighted_exp_sum(a, w, n);
}
double occupancy_sum(const double* pi, std::size_t n, double m) {
  return g_backend.occupancy_sum(pi, n, m);
}

const char* active_backend() { return g_backend.name; }

void force_backend(const char* name) {
  std::string s(name);
  if (s == "scalar") {
    g_backend = kScalar;
  } else if (s == "auto") {
    g_backend = pick_auto();
  } else if (s == "avx2") {
#if defined(MVPIBP_HAVE_AVX2)
    if (!avx2::supported()) throw std::runtime_error("avx2 backend not supported on this cpu");
    g_backend = kAvx2;
#else
    throw std::runtime_error("avx2 backend not compiled in");
#endif
  } else {
    throw std::invalid_argument("unknown kernel backend: " + s);
  }
}

}  // namespace mvpibp::kernels
