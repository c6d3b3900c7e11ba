// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ctxprobe Authors

#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ctxprobe/types.hpp"

namespace ctxprobe {

struct Tokenization {
  std::vector<TokenId> ids;
  std::vector<CharSpan> spans;
};

class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual Tokenization tokenize(std::string_view text) const = 0;
};

struct TextPiece {
  std::string text;
  CharSpan span;
};

/// Runs of word bytes (alphanumerics, '_', and any non-ASCII byte) form one
/// piece; every other non-space byte is a piece of its own.
std::vector<TextPiece> split_words_and_punct(std::string_view text);

/// Whitespace + punctuation tokenizer over a fixed vocabulary. Unknown pieces
/// map to `unknown_token` when given, otherwise tokenizing fails.
class WhitespacePunctTokenizer final : public Tokenizer {
 public:
  explicit WhitespacePunctTokenizer(Vocab vocab, std::optional<std::string> unknown_token = {});
  Tokenization tokenize(std::string_view text) const override;

  /// Vocabulary of every piece in `texts`, in first-seen order.
  static Vocab build_vocab(const std::vector<std::string>& texts,
                           const std::vector<std::string>& reserved = {});

 private:
  Vocab vocab_;
  std::optional<TokenId> unknown_;
};

/// Greedy longest-match over the vocabulary's strings, which may contain
/// spaces (GPT-2 style " word" pieces). Subword pieces can straddle word
/// boundaries.
class GreedyPieceTokenizer final : public Tokenizer {
 public:
  explicit GreedyPieceTokenizer(Vocab vocab);
  Tokenization tokenize(std::string_view text) const override;

 private:
  Vocab vocab_;
  std::size_t longest_ = 0;
};

}  // namespace ctxprobe
