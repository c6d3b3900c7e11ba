// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ctxprobe Authors

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ctxprobe/types.hpp"

namespace ctxprobe {

struct BackendDescriptor {
  std::string name;
  Vocab vocab;
  std::size_t max_segment_len = 0;
};

/// L rows of |V| natural-log probabilities, row-major. Row i (0-based) is the
/// next-token distribution after reading segment tokens 0..i.
class LogProbRows {
 public:
  LogProbRows() = default;
  LogProbRows(std::size_t rows, std::size_t vocab_size)
      : rows_(rows), vocab_size_(vocab_size), values_(rows * vocab_size) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t vocab_size() const noexcept { return vocab_size_; }

  std::span<float> row(std::size_t i) { return std::span(values_).subspan(i * vocab_size_, vocab_size_); }
  std::span<const float> row(std::size_t i) const {
    return std::span(values_).subspan(i * vocab_size_, vocab_size_);
  }
  std::span<const float> values() const noexcept { return values_; }
  std::vector<float>& mutable_values() noexcept { return values_; }

 private:
  std::size_t rows_ = 0;
  std::size_t vocab_size_ = 0;
  std::vector<float> values_;
};

/// A causal LM that accepts arbitrary input segments. Implementations are
/// read-only after construction and callable from several threads.
class Backend {
 public:
  virtual ~Backend() = default;

  virtual const BackendDescriptor& descriptor() const = 0;

  const Vocab& vocab() const { return descriptor().vocab; }
  std::size_t vocab_size() const { return descriptor().vocab.size(); }

  /// Validates the segment, then returns one log-distribution per token.
  LogProbRows evaluate_segment(std::span<const TokenId> segment) const;

  /// Evaluates several segments. The default runs them one by one; remote
  /// backends override this to send one request per batch.
  virtual std::vector<LogProbRows> evaluate_batch(
      std::span<const std::vector<TokenId>> segments) const;

 protected:
  void validate_segment(std::span<const TokenId> segment) const;
  virtual LogProbRows evaluate_unchecked(std::span<const TokenId> segment) const = 0;
};

/// p(x_{n+1} | x_{n-c+1}, ..., x_n) obtained by evaluating the context alone;
/// the brute-force reference for a sliding-window run.
std::vector<float> direct_reduced_probability(const Backend& backend,
                                              std::span<const TokenId> context);

/// Natural-log sum of exp over a row, accumulated in double.
double log_sum_exp(std::span<const float> log_probs);

}  // namespace ctxprobe
