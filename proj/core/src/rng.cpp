// SPDX-License-Identifier: Apache-2.0
#include "vicmae/rng.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "vicmae/error.hpp"

namespace vicmae {

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) {
    throw ValidationError("Rng::below: empty range");
  }
  // Rejection sampling on the top of the range to avoid modulo bias.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x = engine_();
  while (x >= limit) {
    x = engine_();
  }
  return x % n;
}

std::int64_t Rng::range(std::int64_t lo, std::int64_t hi) {
  if (hi < lo) {
    throw ValidationError("Rng::range: hi < lo");
  }
  const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  return lo + static_cast<std::int64_t>(below(span));
}

double Rng::normal() {
  // Box-Muller; the second variate is discarded so the state stays a pure
  // engine position.
  double u1 = uniform();
  while (u1 <= 0.0) {
    u1 = uniform();
  }
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

double Rng::truncated_normal(double stddev) {
  double x = normal();
  while (std::abs(x) > 2.0) {
    x = normal();
  }
  return x * stddev;
}

double Rng::gamma(double shape) {
  if (shape <= 0.0) {
    throw ValidationError("Rng::gamma: shape must be positive");
  }
  if (shape < 1.0) {
    // Boost to shape + 1 and rescale (Marsaglia & Tsang).
    double u = uniform();
    while (u <= 0.0) {
      u = uniform();
    }
    return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = normal();
    double v = 1.0 + c * x;
    if (v <= 0.0) {
      continue;
    }
    v = v * v * v;
    const double u = uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) {
      return d * v;
    }
    if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) {
      return d * v;
    }
  }
}

double Rng::beta(double a, double b) {
  const double x = gamma(a);
  const double y = gamma(b);
  return x / (x + y);
}

std::vector<int> Rng::permutation(int n) {
  std::vector<int> p(static_cast<std::size_t>(n));
  std::iota(p.begin(), p.end(), 0);
  shuffle(std::span<int>(p));
  return p;
}

std::string Rng::state() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void Rng::set_state(const std::string& s) {
  std::istringstream is(s);
  is >> engine_;
  if (!is) {
    throw ValidationError("Rng::set_state: malformed engine state");
  }
}

}  // namespace vicmae
