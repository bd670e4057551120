#include "mvpibp/rng.hpp"

#include <cmath>
#include <stdexcept>

#include "mvpibp/numkit.hpp"

namespace mvpibp {

namespace {

inline std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

RngStream::RngStream(std::uint64_t seed) {
  std::uint64_t x = seed;
  for (auto& w : s_) w = splitmix64(x);
  // xoshiro state must not be all-zero; splitmix output makes that impossible
  // for any seed, but keep the guard cheap and explicit.
  if ((s_[0] | s_[1] | s_[2] | s_[3]) == 0) s_[0] = 0x9e3779b97f4a7c15ULL;
}

RngStream RngStream::keyed(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = seed;
  std::uint64_t acc = splitmix64(h);
  for (std::uint64_t k : keys) {
    std::uint64_t kk = k + 0x632be59bd9b4e019ULL;
    acc ^= splitmix64(kk) + 0x9e3779b97f4a7c15ULL + (acc << 6) + (acc >> 2);
  }
  return RngStream(acc);
}

std::uint64_t RngStream::next_u64() {
  const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

std::uint64_t RngStream::uniform_int(std::uint64_t bound) {
  if (bound == 0) throw std::invalid_argument("uniform_int: bound must be >= 1");
  // bitmask rejection
  std::uint64_t mask = bound - 1;
  mask |= mask >> 1;
  mask |= mask >> 2;
  mask |= mask >> 4;
  mask |= mask >> 8;
  mask |= mask >> 16;
  mask |= mask >> 32;
  for (;;) {
    const std::uint64_t v = next_u64() & mask;
    if (v < bound) return v;
  }
}

double RngStream::uniform() {
  // 53-bit mantissa, shifted to the open interval
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1p-53;
}

double RngStream::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

bool RngStream::bernoulli(double p) { return uniform() < p; }

double RngStream::normal() { return numkit::std_normal_quantile(uniform()); }

double RngStream::normal(double mean, double sd) { return mean + sd * normal(); }

double RngStream::exponential(double rate) { return -std::log(uniform()) / rate; }

double RngStream::gamma(double shape, double rate) {
  if (!(shape > 0.0) || !(rate > 0.0))
    throw std::invalid_argument("gamma: shape and rate must be positive");
  if (shape < 1.0) {
    // boost via G(a+1) * U^{1/a}
    double g = gamma(shape + 1.0, 1.0);
    return g * std::pow(uniform(), 1.0 / shape) / rate;
  }
  // Marsaglia-Tsang squeeze
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v / rate;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v / rate;
  }
}

double RngStream::inv_gamma(double shape, double scale) {
  return scale / gamma(shape, 1.0);
}

double RngStream::beta(double a, double b) {
  const double x = gamma(a, 1.0);
  const double y = gamma(b, 1.0);
  return x / (x + y);
}

double RngStream::chi_squared(double df) { return gamma(0.5 * df, 0.5); }

double RngStream::student_t(double df) {
  return normal() / std::sqrt(chi_squared(df) / df);
}

int RngStream::poisson(double lambda) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("poisson: lambda must be >= 0");
  int total = 0;
  // additivity keeps the product method inside exp() range
  while (lambda > 30.0) {
    total += poisson(30.0);
    lambda -= 30.0;
  }
  const double limit = std::exp(-lambda);
  double prod = 1.0;
  int k = 0;
  for (;;) {
    prod *= uniform();
    if (prod <= limit) break;
    ++k;
  }
  return total + k;
}

int RngStream::binomial(int n, double p) {
  if (n < 0 || p < 0.0 || p > 1.0) throw std::invalid_argument("binomial: bad arguments");
  if (n == 0 || p == 0.0) return 0;
  if (p == 1.0) return n;
  if (p > 0.5) return n - binomial(n, 1.0 - p);
  const double odds = p / (1.0 - p);
  double pdf = std::exp(static_cast<double>(n) * std::log1p(-p));
  double cdf = pdf;
  const double u = uniform();
  int k = 0;
  while (u > cdf && k < n) {
    pdf *= odds * static_cast<double>(n - k) / static_cast<double>(k + 1);
    ++k;
    cdf += pdf;
  }
  return k;
}

}  // namespace mvpibp
