#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "mvpibp/kernels.hpp"
#include "mvpibp/rng.hpp"

using namespace mvpibp;

namespace {

// every SIMD backend the build carries, equivalence-tested against scalar
struct BackendFns {
  const char* name;
  void (*vexp)(const double*, double*, std::size_t);
  void (*vlog)(const double*, double*, std::size_t);
  double (*wexp)(const double*, const double*, std::size_t);
  double (*occ)(const double*, std::size_t, double);
};

std::vector<BackendFns> available_backends() {
  std::vector<BackendFns> v;
#if defined(MVPIBP_HAVE_AVX2)
  if (kernels::avx2::supported())
    v.push_back({"avx2", kernels::avx2::vexp, kernels::avx2::vlog,
                 kernels::avx2::weighted_exp_sum, kernels::avx2::occupancy_sum});
#endif
  return v;
}

}  // namespace

TEST_SUITE_BEGIN("kernels");

TEST_CASE("vexp matches std::exp across the full range") {
  RngStream rng(11);
  std::vector<double> x(4097), y(4097);
  for (auto& v : x) v = rng.uniform(-700.0, 700.0);
  x[0] = 0.0;
  x[1] = -745.5;  // underflow saturation
  x[2] = 710.0;   // overflow saturation
  x[3] = -0.0;
  for (const auto& be : available_backends()) {
    CAPTURE(be.name);
    be.vexp(x.data(), y.data(), x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double ref = std::exp(x[i]);
      if (std::isinf(ref)) {
        CHECK(std::isinf(y[i]));
      } else {
        CHECK(y[i] == doctest::Approx(ref).epsilon(1e-14));
      }
    }
  }
}

TEST_CASE("vlog matches std::log including edge inputs") {
  RngStream rng(12);
  std::vector<double> x(4099), y(4099);
  for (auto& v : x) v = std::exp(rng.uniform(-700.0, 700.0));
  x[0] = 1.0;
  x[1] = 0.0;     // -inf
  x[2] = 5e-324;  // denormal
  x[3] = 0.9999999999999999;
  for (const auto& be : available_backends()) {
    CAPTURE(be.name);
    be.vlog(x.data(), y.data(), x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double ref = std::log(x[i]);
      if (std::isinf(ref)) {
        CHECK(std::isinf(y[i]));
      } else if (std::fabs(ref) > 1e-12) {
        CHECK(y[i] == doctest::Approx(ref).epsilon(2e-15));
      } else {
        CHECK(std::fabs(y[i] - ref) < 1e-16);
      }
    }
  }
}

TEST_CASE("weighted_exp_sum equivalence on quadrature-like data") {
  RngStream rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + static_cast<std::size_t>(rng.uniform_int(200));
    std::vector<double> a(n), w(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = rng.uniform(-600.0, 3.0);
      w[i] = rng.uniform(0.0, 0.2);
    }
    const double ref = kernels::scalar::weighted_exp_sum(a.data(), w.data(), n);
    for (const auto& be : available_backends()) {
      CAPTURE(be.name);
      CHECK(be.wexp(a.data(), w.data(), n) == doctest::Approx(ref).epsilon(1e-13));
    }
  }
}

TEST_CASE("occupancy_sum equivalence and exact anchors") {
  std::vector<double> pis{0.5, 0.5};
  CHECK(kernels::scalar::occupancy_sum(pis.data(), 2, 1.0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(kernels::scalar::occupancy_sum(pis.data(), 2, 2.0) == doctest::Approx(1.5).epsilon(1e-14));
  std::vector<double> zero{0.0, 0.0, 0.0};
  CHECK(kernels::scalar::occupancy_sum(zero.data(), 3, 7.0) == 0.0);
  std::vector<double> one{1.0};
  CHECK(kernels::scalar::occupancy_sum(one.data(), 1, 3.0) == doctest::Approx(1.0));

  RngStream rng(14);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 1 + static_cast<std::size_t>(rng.uniform_int(3000));
    std::vector<double> p(n);
    for (auto& v : p) v = std::pow(rng.uniform(), 4.0);  // sparse-regime skew
    const double m = rng.uniform(1.0, 120.0);
    const double ref = kernels::scalar::occupancy_sum(p.data(), n, m);
    for (const auto& be : available_backends()) {
      CAPTURE(be.name);
      CHECK(std::fabs(be.occ(p.data(), n, m) - ref) <= 1e-9 * std::max(1.0, std::fabs(ref)));
    }
  }
}

TEST_CASE("runtime dispatch honors force_backend") {
  kernels::force_backend("scalar");
  CHECK(std::string(kernels::active_backend()) == "scalar");
  double x = 1.5, y = 0.0;
  kernels::vexp(&x, &y, 1);
  CHECK(y == doctest::Approx(std::exp(1.5)));
  kernels::force_backend("auto");
#if defined(MVPIBP_HAVE_AVX2)
  if (kernels::avx2::supported()) CHECK(std::string(kernels::active_backend()) == "avx2");
#endif
  CHECK_THROWS(kernels::force_backend("nope"));
  kernels::force_backend("auto");
}

TEST_SUITE_END();
