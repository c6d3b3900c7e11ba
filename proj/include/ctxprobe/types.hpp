// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ctxprobe Authors

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ctxprobe {

using TokenId = std::uint32_t;

/// Half-open byte range [begin, end) into a document's text.
struct CharSpan {
  std::size_t begin = 0;
  std::size_t end = 0;

  bool operator==(const CharSpan&) const = default;
};

/// Dense token-id space. Ids are 0..size()-1 in insertion order.
class Vocab {
 public:
  Vocab() = default;
  explicit Vocab(std::vector<std::string> tokens);

  std::size_t size() const noexcept { return tokens_.size(); }
  const std::string& token(TokenId id) const;
  std::optional<TokenId> find(std::string_view token) const;
  TokenId id(std::string_view token) const;  // throws kUnknownToken
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  /// Appends `token` if absent; returns its id either way.
  TokenId add(std::string token);

  bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

/// Reserved tag for tokens that overlap no annotated word.
inline constexpr std::string_view kNoTag = "NONE";

/// One document as a token-id sequence x_1..x_N. Positions in the public
/// API are 1-based; `token_ids[i - 1]` holds x_i.
struct TokenizedDocument {
  std::string doc_id;
  std::vector<TokenId> token_ids;
  std::vector<std::string> pos_tags;      // empty or exactly N entries
  std::vector<CharSpan> source_spans;     // empty or exactly N entries
  std::string text;                       // text the spans refer to, if any

  std::size_t size() const noexcept { return token_ids.size(); }
  TokenId token_at(std::size_t position) const { return token_ids.at(position - 1); }
  bool has_pos_tags() const noexcept { return !pos_tags.empty(); }

  /// Checks N >= 2, ids < vocab_size, and tag/span lengths.
  void validate(std::size_t vocab_size) const;
};

enum class StoreDtype : std::uint32_t {
  kFloat32 = 0,
  kFloat16 = 1,
};

const char* to_string(StoreDtype dtype);
StoreDtype parse_dtype(std::string_view text);

struct ProbeConfig {
  std::size_t c_max = 1023;
  std::size_t stride = 1;
  std::size_t batch_size = 16;
  StoreDtype store_dtype = StoreDtype::kFloat16;
  std::size_t top_k_export = 10;
  std::size_t parallelism = 1;

  void validate() const;
};

}  // namespace ctxprobe
