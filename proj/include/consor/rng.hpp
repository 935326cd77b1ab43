#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "consor/autograd.hpp"

namespace consor {

/// Seeded generator whose output is identical on every platform:
/// std::mt19937_64 is fully specified, and the uniform and normal transforms
/// are implemented here instead of relying on library distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  double normal();
  Mat normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev = 1.0);

  template <typename It>
  void shuffle(It first, It last) {
    auto n = last - first;
    for (auto i = n - 1; i > 0; --i) {
      auto j = static_cast<decltype(i)>(below(static_cast<std::uint64_t>(i) + 1));
      std::swap(first[i], first[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// splitmix64 finalizer; used to derive independent stream seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);
/// 64-bit FNV-1a over the bytes of `s`.
std::uint64_t hash_string(std::string_view s);

}  // namespace consor
