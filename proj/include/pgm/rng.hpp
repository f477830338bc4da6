#pragma once

// Seeded random source with fully pinned transforms so identical seeds give
// identical streams: std::mt19937_64 raw words, uniforms via the top 53 bits,
// Gaussians via Box-Muller, Dirichlet(1,...,1) via normalized exponentials.

#include <cmath>
#include <cstdint>
#include <random>

#include "pgm/densela.hpp"

namespace pgm {

class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  /// Uniform in [0, 1): (word >> 11) * 2^-53.
  double uniform01() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  int uniform_int(int lo, int hi) {  // inclusive bounds
    return lo + static_cast<int>(uniform01() * (hi - lo + 1));
  }

  /// Standard normal, Box-Muller: sqrt(-2 ln(1-u1)) * cos(2 pi u2), with the
  /// sine mate cached for the next call.
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform01();
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log1p(-u1));
    double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  /// Uniform sample on the probability simplex: -log(1-u_i) normalized.
  la::Vec dirichlet(int m) {
    la::Vec e(m);
    double total = 0.0;
    for (int i = 0; i < m; ++i) {
      e[i] = -std::log1p(-uniform01());
      total += e[i];
    }
    for (int i = 0; i < m; ++i) e[i] /= total;
    return e;
  }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace pgm
