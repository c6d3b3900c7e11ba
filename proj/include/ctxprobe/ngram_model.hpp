// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ctxprobe Authors

#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <unordered_map>
#include <vector>

#include "ctxprobe/backend.hpp"

namespace ctxprobe {

/// Additively smoothed order-m n-gram model:
///
///   p(w | h) = (count(h, w) + alpha) / (count(h, .) + alpha * |V|)
///
/// where h is the last min(m - 1, available) context tokens. Counts are kept
/// for every context length 0..m-1 so short segments back off to the context
/// they actually have.
class NGramModel final : public Backend {
 public:
  static constexpr std::size_t kDefaultMaxSegmentLen = std::size_t{1} << 20;

  NGramModel(Vocab vocab, std::size_t order, double alpha,
             std::size_t max_segment_len = kDefaultMaxSegmentLen);

  /// Counts every (context, next) pair inside each document; contexts never
  /// cross document boundaries.
  static NGramModel train(std::span<const std::vector<TokenId>> corpus, Vocab vocab,
                          std::size_t order, double alpha,
                          std::size_t max_segment_len = kDefaultMaxSegmentLen);

  const BackendDescriptor& descriptor() const override { return descriptor_; }
  std::size_t order() const noexcept { return order_; }
  double alpha() const noexcept { return alpha_; }

  /// Context is used as given (no truncation); length must be < order.
  std::uint64_t count(std::span<const TokenId> context, TokenId next) const;
  std::uint64_t context_total(std::span<const TokenId> context) const;

  /// Probability of `next` after `context`, truncated to the last m-1 tokens.
  double probability(std::span<const TokenId> context, TokenId next) const;
  void log_distribution(std::span<const TokenId> context, std::span<float> out) const;

 protected:
  LogProbRows evaluate_unchecked(std::span<const TokenId> segment) const override;

 private:
  struct ContextHash {
    std::size_t operator()(const std::vector<TokenId>& key) const noexcept;
  };
  struct NextCounts {
    std::unordered_map<TokenId, std::uint64_t> next;
    std::uint64_t total = 0;
  };
  using Table = std::unordered_map<std::vector<TokenId>, NextCounts, ContextHash>;

  const NextCounts* find(std::span<const TokenId> context) const;
  std::span<const TokenId> truncate(std::span<const TokenId> context) const;

  BackendDescriptor descriptor_;
  std::size_t order_;
  double alpha_;
  std::vector<Table> tables_;  // tables_[k]: contexts of length k
};

}  // namespace ctxprobe
