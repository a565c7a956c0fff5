#pragma once

// Deterministic generators and small numeric helpers shared by the tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "nshift/geometry.hpp"
#include "nshift/linalg.hpp"

namespace testing_support {

using nshift::Vec;

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int integer(int lo, int hi) { return lo + static_cast<int>(uniform() * (hi - lo + 1)); }
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * uniform());
  }

  Vec point(int n, double lo, double hi) {
    Vec x(n);
    for (auto& c : x) c = uniform(lo, hi);
    return x;
  }

  // Velocity with a random direction and |xdot|_g = speed.
  Vec velocity(const nshift::Matrix& g, double speed) {
    const int n = g.size();
    Vec d(n);
    double norm = 0.0;
    do {
      for (auto& c : d) c = normal();
      norm = std::sqrt(nshift::inner(g, d, d));
    } while (!(norm > 1e-3));
    for (auto& c : d) c *= speed / norm;
    return d;
  }

 private:
  std::mt19937_64 gen_;
};

inline double rel_err(double got, double want) {
  return std::abs(got - want) / std::max(1.0, std::abs(want));
}

inline double max_abs_diff(const Vec& a, const Vec& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

// Random smooth expression text over `vars`, built only from operations that
// stay finite on [-1, 1]^k: sums, products, quotients with positive
// denominators and bounded elementary functions.
class ExprGen {
 public:
  ExprGen(Rng& rng, std::vector<std::string> vars) : rng_(rng), vars_(std::move(vars)) {}

  std::string make(int depth) {
    if (depth <= 0 || rng_.uniform() < 0.2) return leaf();
    switch (rng_.integer(0, 9)) {
      case 0: return "(" + make(depth - 1) + " + " + make(depth - 1) + ")";
      case 1: return "(" + make(depth - 1) + " - " + make(depth - 1) + ")";
      case 2: return "(" + make(depth - 1) + " * " + make(depth - 1) + ")";
      case 3: return "(" + make(depth - 1) + " / (2 + sin(" + make(depth - 1) + ")))";
      case 4: return "exp(0.3*" + make(depth - 1) + ")";
      case 5: return "sin(" + make(depth - 1) + ")";
      case 6: return "cos(" + make(depth - 1) + ")";
      case 7: return "tanh(" + make(depth - 1) + ")";
      case 8: return "sqrt(1.5 + cos(" + make(depth - 1) + "))";
      default: return "log(2 + " + make(depth - 1) + "^2)";
    }
  }

 private:
  std::string leaf() {
    if (rng_.uniform() < 0.3) return fmt(rng_.uniform(-2.0, 2.0));
    return vars_[static_cast<std::size_t>(rng_.integer(0, static_cast<int>(vars_.size()) - 1))];
  }

  Rng& rng_;
  std::vector<std::string> vars_;
};

}  // namespace testing_support
