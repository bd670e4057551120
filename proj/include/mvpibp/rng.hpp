#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>

namespace mvpibp {

// xoshiro256++ stream with all variate transforms implemented here so replay
// is bit-exact across platforms and standard-library versions. Streams are
// values: never share one across threads, derive sub-streams instead.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed);

  // Deterministic sub-stream keyed on (seed, keys...). Derivation depends
  // only on the arguments, not on how much the parent stream has consumed.
  static RngStream keyed(std::uint64_t seed, std::initializer_list<std::uint64_t> keys);

  std::uint64_t next_u64();

  // unbiased integer in [0, bound), bound >= 1
  std::uint64_t uniform_int(std::uint64_t bound);

  // uniform on the open interval (0,1)
  double uniform();
  double uniform(double lo, double hi);
  bool bernoulli(double p);

  // inverse-CDF standard normal (one uniform per draw)
  double normal();
  double normal(double mean, double sd);

  double exponential(double rate);
  // shape-rate parameterization; mean = shape/rate
  double gamma(double shape, double rate);
  // density ~ x^{-shape-1} exp(-scale/x); mean = scale/(shape-1)
  double inv_gamma(double shape, double scale);
  double beta(double a, double b);
  double chi_squared(double df);
  double student_t(double df);
  int poisson(double lambda);
  // CDF-inversion walk; O(np+1) expected work
  int binomial(int n, double p);

 private:
  std::array<std::uint64_t, 4> s_;
};

}  // namespace mvpibp
