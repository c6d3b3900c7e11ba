// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ctxprobe Authors

#include "ctxprobe/types.hpp"

#include "ctxprobe/error.hpp"

namespace ctxprobe {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "invalid-argument";
    case ErrorKind::kOutOfRange: return "out-of-range";
    case ErrorKind::kCellNotCovered: return "cell-not-covered";
    case ErrorKind::kSegmentTooLong: return "segment-too-long";
    case ErrorKind::kUnknownToken: return "unknown-token";
    case ErrorKind::kTransport: return "transport";
    case ErrorKind::kProtocol: return "protocol-violation";
    case ErrorKind::kBackend: return "backend";
    case ErrorKind::kDataFormat: return "data-format";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kInternal: return "internal";
  }
  return "unknown";
}

Vocab::Vocab(std::vector<std::string> tokens) {
  tokens_.reserve(tokens.size());
  for (auto& token : tokens) {
    if (index_.contains(token)) {
      throw Error(ErrorKind::kInvalidArgument, "duplicate vocabulary entry '" + token + "'");
    }
    add(std::move(token));
  }
  if (tokens_.size() < 2) {
    throw Error(ErrorKind::kInvalidArgument, "vocabulary needs at least 2 tokens");
  }
}

const std::string& Vocab::token(TokenId id) const {
  if (id >= tokens_.size()) {
    throw Error(ErrorKind::kUnknownToken, "token id " + std::to_string(id) +
                                              " outside vocabulary of size " +
                                              std::to_string(tokens_.size()));
  }
  return tokens_[id];
}

std::optional<TokenId> Vocab::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

TokenId Vocab::id(std::string_view token) const {
  if (auto found = find(token)) return *found;
  throw Error(ErrorKind::kUnknownToken, "token '" + std::string(token) + "' not in vocabulary");
}

TokenId Vocab::add(std::string token) {
  if (auto found = find(token)) return *found;
  auto id = static_cast<TokenId>(tokens_.size());
  index_.emplace(token, id);
  tokens_.push_back(std::move(token));
  return id;
}

void TokenizedDocument::validate(std::size_t vocab_size) const {
  const std::string where = "document '" + doc_id + "': ";
  if (token_ids.size() < 2) {
    throw Error(ErrorKind::kDataFormat, where + "needs at least 2 tokens, got " +
                                            std::to_string(token_ids.size()));
  }
  for (std::size_t i = 0; i < token_ids.size(); ++i) {
    if (token_ids[i] >= vocab_size) {
      throw Error(ErrorKind::kUnknownToken, where + "token id " + std::to_string(token_ids[i]) +
                                                " at position " + std::to_string(i + 1) +
                                                " exceeds vocabulary size " +
                                                std::to_string(vocab_size));
    }
  }
  if (!pos_tags.empty() && pos_tags.size() != token_ids.size()) {
    throw Error(ErrorKind::kDataFormat, where + "pos_tags length mismatch");
  }
  if (!source_spans.empty() && source_spans.size() != token_ids.size()) {
    throw Error(ErrorKind::kDataFormat, where + "source_spans length mismatch");
  }
}

const char* to_string(StoreDtype dtype) {
  return dtype == StoreDtype::kFloat32 ? "f32" : "f16";
}

StoreDtype parse_dtype(std::string_view text) {
  if (text == "f32" || text == "float32" || text == "32") return StoreDtype::kFloat32;
  if (text == "f16" || text == "float16" || text == "16") return StoreDtype::kFloat16;
  throw Error(ErrorKind::kInvalidArgument, "unknown dtype '" + std::string(text) + "'");
}

void ProbeConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorKind::kInvalidArgument, msg); };
  if (c_max < 1) fail("c_max must be >= 1");
  if (stride < 1 || stride > c_max) {
    fail("stride must satisfy 1 <= stride <= c_max (got " + std::to_string(stride) + ")");
  }
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (top_k_export < 1) fail("top_k_export must be >= 1");
  if (parallelism < 1) fail("parallelism must be >= 1");
}

}  // namespace ctxprobe
