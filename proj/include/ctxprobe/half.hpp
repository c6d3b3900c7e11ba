// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ctxprobe Authors

#pragma once

#include <cstdint>
#include <span>

namespace ctxprobe::half {

/// IEEE 754 binary16 <-> binary32, round-to-nearest-even.
std::uint16_t from_float(float value) noexcept;
float to_float(std::uint16_t bits) noexcept;

/// Adjacent representable values (finite inputs only).
std::uint16_t next_up(std::uint16_t bits) noexcept;
std::uint16_t next_down(std::uint16_t bits) noexcept;

/// Quantizes a row of natural-log probabilities to binary16.
///
/// Each value is rounded to one of its two bracketing binary16 neighbours,
/// choosing the direction that keeps the row's exp-sum closest to 1. Values
/// are visited in order of decreasing mass step, so late, fine-grained choices
/// absorb the residual of early coarse ones. If a residual above 2e-5 remains,
/// the coarsest few values are searched up to 16 ulps around their choice.
/// A row that is already representable and normalized within 1e-4 is
/// returned unchanged, so the pass is idempotent on its own output.
void quantize_log_row(std::span<const float> log_probs, std::span<std::uint16_t> out);

}  // namespace ctxprobe::half
