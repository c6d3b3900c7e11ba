// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ctxprobe Authors

#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "ctxprobe/tokenizer.hpp"
#include "ctxprobe/types.hpp"

namespace ctxprobe {

struct AnnotatedWord {
  std::string surface;
  std::string upos;
  std::string doc_id;
  CharSpan char_span;       // assigned by join_words()
  bool space_after = true;  // false when MISC has SpaceAfter=No
};

struct WordDocument {
  std::string doc_id;
  std::vector<AnnotatedWord> words;
};

/// Parses CoNLL-U text. Documents start at "# newdoc" comments; words before
/// the first marker (or in a file without markers) belong to a document named
/// `source_name`. Multiword-token range lines ("3-4") and empty nodes ("3.1")
/// are skipped; the syntactic words are kept. Errors carry line numbers.
std::vector<WordDocument> parse_conllu(std::string_view text, std::string_view source_name);

/// Reads each path (directories contribute their *.conllu files in name
/// order); documents are named after the file stem when no newdoc id exists.
std::vector<WordDocument> load_conllu(const std::vector<std::filesystem::path>& paths);

struct JoinOptions {
  bool honor_space_after = true;
  std::string separator = " ";
};

/// Concatenates word surfaces and records each word's span in the result.
std::string join_words(std::vector<AnnotatedWord>& words, const JoinOptions& options = {});

/// Joins the words, tokenizes the text and returns the document with
/// source spans and text set. Token spans must lie inside the text in order.
TokenizedDocument concatenate_and_retokenize(const std::string& doc_id,
                                             std::vector<AnnotatedWord>& words,
                                             const Tokenizer& tokenizer,
                                             const JoinOptions& options = {});

/// Tags each token with the UPOS of the first (leftmost) word whose span
/// overlaps the token's span, or NONE when no word overlaps.
TokenizedDocument map_pos_tags(TokenizedDocument doc, const std::vector<AnnotatedWord>& words);

/// Rebuilds a text of `length` bytes by placing each token string at its span
/// and filling the gaps with `fill`.
std::string detokenize(const std::vector<std::string>& token_strings,
                       const std::vector<CharSpan>& spans, std::size_t length, char fill = ' ');

}  // namespace ctxprobe
