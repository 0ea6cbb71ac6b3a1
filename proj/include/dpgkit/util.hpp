#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace dpgkit {

/// Raised for malformed input data (schema or invariant violations).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a numeric routine encounters a non-finite value.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// FNV-1a, 64 bit. Stable across platforms, unlike std::hash.
std::uint64_t stable_hash(std::string_view s);
std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t value);

/// Seeded 64-bit Mersenne twister plus the handful of draws the library needs.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1).
  double uniform();
  /// Uniform in (0, 1), never exactly zero.
  double uniform_open();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [lo, hi].
  int uniform_int(int lo, int hi);
  double normal(double mean = 0.0, double stddev = 1.0);
  double beta(double a, double b);
  bool bernoulli(double p) { return uniform() < p; }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

/// Worker count: DPGKIT_THREADS if set, else hardware concurrency (>= 1).
unsigned thread_count();

/// Runs body(i) for i in [0, n). Work is split into contiguous chunks so
/// the assignment of indices to chunks does not depend on timing.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace dpgkit
