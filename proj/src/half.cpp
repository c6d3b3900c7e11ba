// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ctxprobe Authors

#include "ctxprobe/half.hpp"

#include <algorithm>
#include <bit>
#include <cassert>
#include <cmath>
#include <numeric>
#include <vector>

namespace ctxprobe::half {

std::uint16_t from_float(float value) noexcept {
  const auto bits = std::bit_cast<std::uint32_t>(value);
  const auto sign = static_cast<std::uint16_t>((bits >> 16) & 0x8000u);
  const std::uint32_t exponent = (bits >> 23) & 0xffu;
  std::uint32_t mantissa = bits & 0x7fffffu;

  if (exponent == 0xff) {
    return static_cast<std::uint16_t>(sign | 0x7c00u | (mantissa ? 0x200u : 0u));
  }
  const int e = static_cast<int>(exponent) - 127 + 15;
  if (e >= 31) return static_cast<std::uint16_t>(sign | 0x7c00u);

  if (e <= 0) {
    if (e < -10) return sign;
    mantissa |= 0x800000u;
    const int shift = 14 - e;
    std::uint32_t result = mantissa >> shift;
    const std::uint32_t remainder = mantissa & ((1u << shift) - 1u);
    const std::uint32_t halfway = 1u << (shift - 1);
    if (remainder > halfway || (remainder == halfway && (result & 1u))) ++result;
    return static_cast<std::uint16_t>(sign | result);
  }

  std::uint32_t result = (static_cast<std::uint32_t>(e) << 10) | (mantissa >> 13);
  const std::uint32_t remainder = mantissa & 0x1fffu;
  // Carry out of the mantissa bumps the exponent, up to and including inf.
  if (remainder > 0x1000u || (remainder == 0x1000u && (result & 1u))) ++result;
  return static_cast<std::uint16_t>(sign | result);
}

float to_float(std::uint16_t h) noexcept {
  const std::uint32_t sign = static_cast<std::uint32_t>(h & 0x8000u) << 16;
  const std::uint32_t exponent = (h >> 10) & 0x1fu;
  const std::uint32_t mantissa = h & 0x3ffu;

  if (exponent == 0) {
    const float magnitude = std::ldexp(static_cast<float>(mantissa), -24);
    return sign ? -magnitude : magnitude;
  }
  if (exponent == 31) {
    return std::bit_cast<float>(sign | 0x7f800000u | (mantissa << 13));
  }
  return std::bit_cast<float>(sign | ((exponent - 15 + 127) << 23) | (mantissa << 13));
}

std::uint16_t next_up(std::uint16_t h) noexcept {
  if (h == 0x8000u) return 0x0001u;  // -0 -> smallest positive subnormal
  if (h & 0x8000u) return static_cast<std::uint16_t>(h - 1);
  return static_cast<std::uint16_t>(h + 1);
}

std::uint16_t next_down(std::uint16_t h) noexcept {
  if (h == 0x0000u) return 0x8001u;
  if (h & 0x8000u) return static_cast<std::uint16_t>(h + 1);
  return static_cast<std::uint16_t>(h - 1);
}

namespace {

struct Bracket {
  std::uint16_t lo;
  std::uint16_t hi;
  double lo_error;  // exp(lo) - exp(x)
  double hi_error;  // exp(hi) - exp(x)
};

Bracket bracket(float x) {
  const std::uint16_t nearest = from_float(x);
  const float nearest_value = to_float(nearest);
  const bool finite = std::isfinite(nearest_value) && std::isfinite(x);
  if (nearest_value == x || !finite) {
    const double err = finite ? std::exp(double{nearest_value}) - std::exp(double{x}) : 0.0;
    return {nearest, nearest, err, err};
  }
  std::uint16_t lo = nearest;
  std::uint16_t hi = nearest;
  if (nearest_value > x) {
    lo = next_down(nearest);
  } else {
    hi = next_up(nearest);
  }
  if (!std::isfinite(to_float(lo))) lo = hi;
  if (!std::isfinite(to_float(hi))) hi = lo;
  const double px = std::exp(double{x});
  return {lo, hi, std::exp(double{to_float(lo)}) - px, std::exp(double{to_float(hi)}) - px};
}

}  // namespace

namespace {

// Local search applied while the residual stays above this, widening the
// radius each round. Coarse elements (log-probs near -1) have mass steps of ~2.5e-4, so a
// single neighbour choice cannot always land within 1e-4 of unit mass.
constexpr double kSearchThreshold = 2e-5;
constexpr double kNormalizationTolerance = 1e-4;
constexpr std::size_t kSearchElements = 3;
constexpr int kMaxSearchRadius = 16;

struct Move {
  std::uint16_t code;
  double delta;  // mass change relative to the greedy choice
  int distance;
};

std::vector<Move> moves_around(std::uint16_t code, int radius) {
  const double base = std::exp(double{to_float(code)});
  std::vector<Move> moves{{code, 0.0, 0}};
  std::uint16_t up = code;
  std::uint16_t down = code;
  for (int d = 1; d <= radius; ++d) {
    up = next_up(up);
    down = next_down(down);
    const float up_value = to_float(up);
    const float down_value = to_float(down);
    if (std::isfinite(up_value) && up_value <= 0.0f) {
      moves.push_back({up, std::exp(double{up_value}) - base, d});
    }
    if (std::isfinite(down_value)) {
      moves.push_back({down, std::exp(double{down_value}) - base, d});
    }
  }
  return moves;
}

// Returns the residual after applying the best combination found.
double search(std::span<const std::size_t> candidates, std::span<std::uint16_t> out,
              double residual, int radius) {
  std::vector<std::vector<Move>> options;
  for (std::size_t i : candidates) options.push_back(moves_around(out[i], radius));

  std::vector<std::size_t> pick(options.size(), 0);
  std::vector<std::size_t> best = pick;
  double best_residual = std::abs(residual);
  int best_distance = 0;
  while (true) {
    double r = residual;
    int distance = 0;
    for (std::size_t j = 0; j < options.size(); ++j) {
      r += options[j][pick[j]].delta;
      distance += options[j][pick[j]].distance;
    }
    if (std::abs(r) < best_residual ||
        (std::abs(r) == best_residual && distance < best_distance)) {
      best_residual = std::abs(r);
      best_distance = distance;
      best = pick;
    }
    std::size_t j = 0;
    while (j < pick.size() && ++pick[j] == options[j].size()) pick[j++] = 0;
    if (j == pick.size()) break;
  }
  double result = residual;
  for (std::size_t j = 0; j < options.size(); ++j) {
    out[candidates[j]] = options[j][best[j]].code;
    result += options[j][best[j]].delta;
  }
  return result;
}

}  // namespace

void quantize_log_row(std::span<const float> log_probs, std::span<std::uint16_t> out) {
  assert(log_probs.size() == out.size());
  std::vector<Bracket> brackets;
  brackets.reserve(log_probs.size());
  double residual = -1.0;
  bool all_exact = true;
  for (float x : log_probs) {
    brackets.push_back(bracket(x));
    all_exact = all_exact && brackets.back().lo == brackets.back().hi;
    residual += std::exp(double{x});
  }
  if (all_exact && std::abs(residual) <= kNormalizationTolerance) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = brackets[i].lo;
    return;
  }

  std::vector<std::size_t> order(log_probs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return (brackets[a].hi_error - brackets[a].lo_error) >
           (brackets[b].hi_error - brackets[b].lo_error);
  });

  for (std::size_t i : order) {
    const Bracket& b = brackets[i];
    const double with_lo = residual + b.lo_error;
    const double with_hi = residual + b.hi_error;
    if (std::abs(with_hi) < std::abs(with_lo)) {
      out[i] = b.hi;
      residual = with_hi;
    } else {
      out[i] = b.lo;
      residual = with_lo;
    }
  }
  if (std::abs(residual) <= kSearchThreshold) return;

  // Search over the values with the largest mass per ulp, exact ones included.
  std::vector<double> step(out.size(), 0.0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const float up = to_float(next_up(out[i]));
    const float down = to_float(next_down(out[i]));
    if (std::isfinite(to_float(out[i])) && std::isfinite(up) && std::isfinite(down)) {
      step[i] = std::exp(double{std::min(up, 0.0f)}) - std::exp(double{down});
    }
  }
  std::vector<std::size_t> candidates(out.size());
  std::iota(candidates.begin(), candidates.end(), std::size_t{0});
  std::stable_sort(candidates.begin(), candidates.end(),
                   [&](std::size_t a, std::size_t b) { return step[a] > step[b]; });
  candidates.resize(std::min(candidates.size(), kSearchElements));
  for (int radius = 2; radius <= kMaxSearchRadius && std::abs(residual) > kSearchThreshold;
       radius *= 2) {
    residual = search(candidates, out, residual, radius);
  }
}

}  // namespace ctxprobe::half
