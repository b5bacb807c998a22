#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace epifnp {

// Deterministic random stream. All distributions are derived from the raw
// mt19937_64 output by explicit arithmetic rather than std:: distribution
// objects, so a given seed produces the same draws on every standard library.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  // Derive an independent stream for a named purpose (split, init, noise, ...).
  static Rng derive(std::uint64_t seed, std::uint64_t salt) {
    return Rng(seed ^ (0x9E3779B97F4A7C15ULL * (salt + 1)));
  }

  // Uniform on [0, 1).
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  // Uniform on (0, 1), safe for logs.
  double uniform_open() {
    return (static_cast<double>(gen_() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; the second value of each pair is cached.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = uniform_open();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  std::vector<double> normal_vec(std::size_t n) {
    std::vector<double> out(n);
    for (auto& v : out) v = normal();
    return out;
  }

  // Standard Logistic(0, 1) draw.
  double logistic() {
    const double u = uniform_open();
    return std::log(u) - std::log1p(-u);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Uniform integer in [0, n). Modulo bias is irrelevant at 64-bit range.
  std::uint64_t uniform_int(std::uint64_t n) { return gen_() % n; }

  // Fisher-Yates shuffle of an index vector.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[uniform_int(i)]);
    }
  }

private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace epifnp
