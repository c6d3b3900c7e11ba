// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ctxprobe Authors

#include "ctxprobe/tokenizer.hpp"

#include <algorithm>

#include "ctxprobe/error.hpp"

namespace ctxprobe {

namespace {

bool is_space(unsigned char ch) {
  return ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r' || ch == '\f' || ch == '\v';
}

bool is_word_byte(unsigned char ch) {
  return (ch >= '0' && ch <= '9') || (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') ||
         ch == '_' || ch >= 0x80;
}

}  // namespace

std::vector<TextPiece> split_words_and_punct(std::string_view text) {
  std::vector<TextPiece> pieces;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto ch = static_cast<unsigned char>(text[i]);
    if (is_space(ch)) {
      ++i;
      continue;
    }
    std::size_t end = i + 1;
    if (is_word_byte(ch)) {
      while (end < text.size() && is_word_byte(static_cast<unsigned char>(text[end]))) ++end;
    }
    pieces.push_back({std::string(text.substr(i, end - i)), {i, end}});
    i = end;
  }
  return pieces;
}

WhitespacePunctTokenizer::WhitespacePunctTokenizer(Vocab vocab,
                                                   std::optional<std::string> unknown_token)
    : vocab_(std::move(vocab)) {
  if (unknown_token) unknown_ = vocab_.id(*unknown_token);
}

Tokenization WhitespacePunctTokenizer::tokenize(std::string_view text) const {
  Tokenization out;
  for (auto& piece : split_words_and_punct(text)) {
    auto id = vocab_.find(piece.text);
    if (!id) {
      if (!unknown_) {
        throw Error(ErrorKind::kUnknownToken, "piece '" + piece.text + "' at byte " +
                                                  std::to_string(piece.span.begin) +
                                                  " is not in the vocabulary");
      }
      id = unknown_;
    }
    out.ids.push_back(*id);
    out.spans.push_back(piece.span);
  }
  return out;
}

Vocab WhitespacePunctTokenizer::build_vocab(const std::vector<std::string>& texts,
                                            const std::vector<std::string>& reserved) {
  Vocab vocab;
  for (const auto& r : reserved) vocab.add(r);
  for (const auto& text : texts) {
    for (auto& piece : split_words_and_punct(text)) vocab.add(std::move(piece.text));
  }
  // A vocabulary needs two entries even for a one-word corpus.
  if (vocab.size() < 2) vocab.add("<unk>");
  return vocab;
}

GreedyPieceTokenizer::GreedyPieceTokenizer(Vocab vocab) : vocab_(std::move(vocab)) {
  for (const auto& t : vocab_.tokens()) longest_ = std::max(longest_, t.size());
}

Tokenization GreedyPieceTokenizer::tokenize(std::string_view text) const {
  Tokenization out;
  std::size_t i = 0;
  while (i < text.size()) {
    std::size_t len = std::min(longest_, text.size() - i);
    std::optional<TokenId> id;
    for (; len > 0; --len) {
      if ((id = vocab_.find(text.substr(i, len)))) break;
    }
    if (!id) {
      throw Error(ErrorKind::kUnknownToken,
                  "no vocabulary piece matches at byte " + std::to_string(i));
    }
    out.ids.push_back(*id);
    out.spans.push_back({i, i + len});
    i += len;
  }
  return out;
}

}  // namespace ctxprobe
