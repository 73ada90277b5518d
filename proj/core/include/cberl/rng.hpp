#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace cberl {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// Seeded RNG with self-contained gaussian and shuffle so that runs are
/// byte-identical regardless of the standard library's distribution
/// implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform in [0, 1).
  double uniform();
  /// Uniform in [lo, hi).
  double uniform(double lo, double hi);
  /// Uniform integer in [0, n), n > 0.
  int uniform_int(int n);
  /// Standard normal via Box-Muller.
  double gaussian();

  Vec gaussian_vec(int n);
  Mat gaussian_mat(int rows, int cols);
  Mat uniform_mat(int rows, int cols, double lo, double hi);

  /// Fisher-Yates.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      int j = uniform_int(i + 1);
      std::swap(v[i], v[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Stable sub-seed derivation (FNV-1a over the tag, mixed with the base seed).
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag);

}  // namespace cberl
