// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ctxprobe Authors

#pragma once

#include <span>
#include <vector>

#include "ctxprobe/backend.hpp"

namespace ctxprobe {

struct TriggerParams {
  TokenId trigger = 0;
  TokenId target = 1;
  std::size_t horizon = 50;
  double p_hi = 0.9;
  double p_lo = 0.1;
};

/// Synthetic long-range dependency. p(target) is p_hi when the trigger token
/// occurs among the last `horizon` context tokens and p_lo otherwise; the rest
/// of the mass is spread uniformly over the other |V| - 1 tokens.
class TriggerModel final : public Backend {
 public:
  static constexpr std::size_t kDefaultMaxSegmentLen = std::size_t{1} << 20;

  TriggerModel(Vocab vocab, TriggerParams params,
               std::size_t max_segment_len = kDefaultMaxSegmentLen);

  const BackendDescriptor& descriptor() const override { return descriptor_; }
  const TriggerParams& params() const noexcept { return params_; }

  bool trigger_in_horizon(std::span<const TokenId> context) const;

  /// The two rows this model can emit.
  std::span<const float> boosted_row() const noexcept { return boosted_; }
  std::span<const float> unboosted_row() const noexcept { return unboosted_; }

 protected:
  LogProbRows evaluate_unchecked(std::span<const TokenId> segment) const override;

 private:
  BackendDescriptor descriptor_;
  TriggerParams params_;
  std::vector<float> boosted_;
  std::vector<float> unboosted_;
};

}  // namespace ctxprobe
