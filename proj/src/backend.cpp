// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ctxprobe Authors

#include "ctxprobe/backend.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ctxprobe/error.hpp"

namespace ctxprobe {

void Backend::validate_segment(std::span<const TokenId> segment) const {
  const auto& desc = descriptor();
  if (segment.empty()) {
    throw Error(ErrorKind::kInvalidArgument, desc.name + ": empty segment");
  }
  if (segment.size() > desc.max_segment_len) {
    throw Error(ErrorKind::kSegmentTooLong, desc.name + ": segment of length " +
                                                std::to_string(segment.size()) +
                                                " exceeds max_segment_len " +
                                                std::to_string(desc.max_segment_len));
  }
  for (std::size_t i = 0; i < segment.size(); ++i) {
    if (segment[i] >= desc.vocab.size()) {
      throw Error(ErrorKind::kUnknownToken, desc.name + ": token id " + std::to_string(segment[i]) +
                                                " at segment offset " + std::to_string(i) +
                                                " outside vocabulary of size " +
                                                std::to_string(desc.vocab.size()));
    }
  }
}

LogProbRows Backend::evaluate_segment(std::span<const TokenId> segment) const {
  validate_segment(segment);
  return evaluate_unchecked(segment);
}

std::vector<LogProbRows> Backend::evaluate_batch(
    std::span<const std::vector<TokenId>> segments) const {
  std::vector<LogProbRows> out;
  out.reserve(segments.size());
  for (const auto& segment : segments) out.push_back(evaluate_segment(segment));
  return out;
}

std::vector<float> direct_reduced_probability(const Backend& backend,
                                              std::span<const TokenId> context) {
  LogProbRows rows = backend.evaluate_segment(context);
  auto last = rows.row(rows.rows() - 1);
  return {last.begin(), last.end()};
}

double log_sum_exp(std::span<const float> log_probs) {
  double peak = -std::numeric_limits<double>::infinity();
  for (float v : log_probs) peak = std::max(peak, double{v});
  if (!std::isfinite(peak)) return peak;
  double sum = 0.0;
  for (float v : log_probs) sum += std::exp(double{v} - peak);
  return peak + std::log(sum);
}

}  // namespace ctxprobe
