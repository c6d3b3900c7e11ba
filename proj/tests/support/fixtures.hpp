// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ctxprobe Authors

#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ctxprobe/error.hpp"
#include "ctxprobe/prediction_store.hpp"
#include "ctxprobe/types.hpp"

namespace ctxprobe::testing {

inline Vocab synthetic_vocab(std::size_t size) {
  std::vector<std::string> tokens;
  for (std::size_t i = 0; i < size; ++i) tokens.push_back("w" + std::to_string(i));
  return Vocab(std::move(tokens));
}

inline std::vector<TokenId> random_tokens(std::mt19937_64& rng, std::size_t n, std::size_t vocab) {
  std::uniform_int_distribution<TokenId> pick(0, static_cast<TokenId>(vocab - 1));
  std::vector<TokenId> out(n);
  for (auto& t : out) t = pick(rng);
  return out;
}

inline TokenizedDocument make_doc(std::string id, std::vector<TokenId> ids) {
  TokenizedDocument doc;
  doc.doc_id = std::move(id);
  doc.token_ids = std::move(ids);
  return doc;
}

/// Random normalized log-probability row (softmax of Gaussian logits).
inline std::vector<float> random_log_row(std::mt19937_64& rng, std::size_t vocab, double scale = 2.0) {
  std::normal_distribution<double> logit(0.0, scale);
  std::vector<double> z(vocab);
  double peak = -1e300;
  for (auto& v : z) {
    v = logit(rng);
    peak = std::max(peak, v);
  }
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - peak);
  const double lse = peak + std::log(sum);
  std::vector<float> row(vocab);
  for (std::size_t i = 0; i < vocab; ++i) row[i] = static_cast<float>(z[i] - lse);
  return row;
}

/// Store filled with independent random rows for every planned cell.
inline PredictionStore random_store(std::mt19937_64& rng, std::size_t doc_length, std::size_t c_max,
                                    std::size_t stride, std::size_t vocab, StoreDtype dtype) {
  StoreShape shape{doc_length, c_max, stride, vocab, dtype};
  auto segments = canonical_segments(doc_length, c_max, stride);
  StoreWriter writer(shape, segments);
  for (std::size_t j = 0; j < segments.size(); ++j) {
    std::vector<float> values;
    for (std::size_t r = 0; r < segments[j].length; ++r) {
      auto row = random_log_row(rng, vocab);
      values.insert(values.end(), row.begin(), row.end());
    }
    writer.write_segment(j, values);
  }
  return std::move(writer).finalize();
}

/// Kind of the ctxprobe::Error thrown by `f`, or nullopt if none is thrown.
template <typename F>
std::optional<ErrorKind> error_kind(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  return std::nullopt;
}

/// Store whose cell (n, c) holds `cell(n, c)` for every planned cell.
template <typename F>
PredictionStore store_from_cells(std::size_t doc_length, std::size_t c_max, std::size_t stride,
                                 std::size_t vocab, StoreDtype dtype, F&& cell) {
  StoreShape shape{doc_length, c_max, stride, vocab, dtype};
  auto segments = canonical_segments(doc_length, c_max, stride);
  StoreWriter writer(shape, segments);
  for (std::size_t j = 0; j < segments.size(); ++j) {
    std::vector<float> values;
    for (std::size_t r = 0; r < segments[j].length; ++r) {
      const std::vector<float> row = cell(segments[j].start + r, r + 1);
      values.insert(values.end(), row.begin(), row.end());
    }
    writer.write_segment(j, values);
  }
  return std::move(writer).finalize();
}

inline std::vector<float> log_row(std::initializer_list<double> probs) {
  std::vector<float> row;
  for (double p : probs) row.push_back(static_cast<float>(std::log(p)));
  return row;
}

inline double exp_sum(const std::vector<float>& row) {
  double s = 0.0;
  for (float v : row) s += std::exp(double{v});
  return s;
}

}  // namespace ctxprobe::testing
