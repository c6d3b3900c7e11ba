// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ctxprobe Authors

#include "ctxprobe/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "ctxprobe/error.hpp"

namespace ctxprobe {

namespace {

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t begin = 0;
  while (true) {
    const auto pos = line.find(sep, begin);
    out.push_back(line.substr(begin, pos - begin));
    if (pos == std::string_view::npos) break;
    begin = pos + 1;
  }
  return out;
}

bool parse_positive(std::string_view text, std::size_t& value) {
  if (text.empty()) return false;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  return ec == std::errc() && ptr == text.data() + text.size() && value > 0;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

std::vector<WordDocument> parse_conllu(std::string_view text, std::string_view source_name) {
  std::vector<WordDocument> docs;
  WordDocument current{std::string(source_name), {}};
  std::size_t unnamed = 0;
  std::size_t line_no = 0;

  auto fail = [&](const std::string& what) {
    throw Error(ErrorKind::kDataFormat,
                std::string(source_name) + ":" + std::to_string(line_no) + ": " + what);
  };
  auto flush = [&] {
    if (!current.words.empty()) docs.push_back(std::move(current));
    current = WordDocument{};
  };

  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto eol = text.find('\n', pos);
    std::string_view line = text.substr(pos, eol == std::string_view::npos ? text.npos : eol - pos);
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

    if (trim(line).empty()) continue;  // sentence boundary
    if (line.front() == '#') {
      const std::string_view body = trim(line.substr(1));
      if (body.starts_with("newdoc")) {
        flush();
        std::string_view rest = trim(body.substr(6));
        std::string id;
        if (rest.starts_with("id")) {
          rest = trim(rest.substr(2));
          if (rest.starts_with("=")) id = std::string(trim(rest.substr(1)));
        }
        if (id.empty()) id = std::string(source_name) + "-" + std::to_string(++unnamed);
        current.doc_id = std::move(id);
      }
      continue;
    }

    const auto fields = split(line, '\t');
    if (fields.size() != 10) {
      fail("expected 10 tab-separated columns, got " + std::to_string(fields.size()));
    }
    const std::string_view id = fields[0];
    if (const auto dash = id.find('-'); dash != std::string_view::npos) {
      std::size_t lo = 0, hi = 0;
      if (!parse_positive(id.substr(0, dash), lo) || !parse_positive(id.substr(dash + 1), hi) ||
          hi < lo) {
        fail("malformed multiword token range '" + std::string(id) + "'");
      }
      continue;
    }
    if (const auto dot = id.find('.'); dot != std::string_view::npos) {
      std::size_t major = 0;
      if (!parse_positive(id.substr(0, dot), major) && id.substr(0, dot) != "0") {
        fail("malformed empty-node id '" + std::string(id) + "'");
      }
      continue;
    }
    std::size_t index = 0;
    if (!parse_positive(id, index)) fail("malformed word id '" + std::string(id) + "'");
    if (fields[1].empty()) fail("empty FORM column");
    if (fields[3].empty()) fail("empty UPOS column");

    AnnotatedWord word;
    word.surface = std::string(fields[1]);
    word.upos = std::string(fields[3]);
    for (std::string_view item : split(fields[9], '|')) {
      if (item == "SpaceAfter=No") word.space_after = false;
    }
    if (current.doc_id.empty()) current.doc_id = std::string(source_name);
    word.doc_id = current.doc_id;
    current.words.push_back(std::move(word));
  }
  flush();
  return docs;
}

std::vector<WordDocument> load_conllu(const std::vector<std::filesystem::path>& paths) {
  std::vector<std::filesystem::path> files;
  for (const auto& path : paths) {
    if (std::filesystem::is_directory(path)) {
      std::vector<std::filesystem::path> found;
      for (const auto& entry : std::filesystem::directory_iterator(path)) {
        if (entry.is_regular_file() && entry.path().extension() == ".conllu") {
          found.push_back(entry.path());
        }
      }
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else {
      files.push_back(path);
    }
  }
  if (files.empty()) throw Error(ErrorKind::kDataFormat, "no CoNLL-U input files");

  std::vector<WordDocument> docs;
  for (const auto& file : files) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw Error(ErrorKind::kIo, "cannot read '" + file.string() + "'");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    auto parsed = parse_conllu(buffer.str(), file.stem().string());
    for (auto& doc : parsed) docs.push_back(std::move(doc));
  }
  if (docs.empty()) throw Error(ErrorKind::kDataFormat, "CoNLL-U input contains no words");
  return docs;
}

std::string join_words(std::vector<AnnotatedWord>& words, const JoinOptions& options) {
  std::string text;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i > 0 && (words[i - 1].space_after || !options.honor_space_after)) {
      text += options.separator;
    }
    words[i].char_span.begin = text.size();
    text += words[i].surface;
    words[i].char_span.end = text.size();
  }
  return text;
}

TokenizedDocument concatenate_and_retokenize(const std::string& doc_id,
                                             std::vector<AnnotatedWord>& words,
                                             const Tokenizer& tokenizer,
                                             const JoinOptions& options) {
  if (words.empty()) {
    throw Error(ErrorKind::kDataFormat, "document '" + doc_id + "' has no words");
  }
  TokenizedDocument doc;
  doc.doc_id = doc_id;
  doc.text = join_words(words, options);
  Tokenization tokens = tokenizer.tokenize(doc.text);
  if (tokens.ids.size() != tokens.spans.size()) {
    throw Error(ErrorKind::kInternal, "tokenizer returned mismatched ids and spans");
  }
  std::size_t previous_end = 0;
  for (std::size_t i = 0; i < tokens.spans.size(); ++i) {
    const CharSpan& s = tokens.spans[i];
    if (s.begin > s.end || s.end > doc.text.size() || s.begin < previous_end) {
      throw Error(ErrorKind::kDataFormat, "document '" + doc_id + "': token " +
                                              std::to_string(i) +
                                              " span is outside the text or out of order");
    }
    previous_end = s.end;
  }
  doc.token_ids = std::move(tokens.ids);
  doc.source_spans = std::move(tokens.spans);
  return doc;
}

TokenizedDocument map_pos_tags(TokenizedDocument doc, const std::vector<AnnotatedWord>& words) {
  if (doc.source_spans.size() != doc.token_ids.size()) {
    throw Error(ErrorKind::kDataFormat, "document '" + doc.doc_id + "' lacks token spans");
  }
  for (std::size_t i = 1; i < words.size(); ++i) {
    if (words[i].char_span.begin < words[i - 1].char_span.end) {
      throw Error(ErrorKind::kDataFormat, "word spans overlap or are out of order");
    }
  }
  doc.pos_tags.assign(doc.token_ids.size(), std::string(kNoTag));
  for (std::size_t t = 0; t < doc.source_spans.size(); ++t) {
    const CharSpan& span = doc.source_spans[t];
    if (span.end > doc.text.size() || span.begin > span.end) {
      throw Error(ErrorKind::kDataFormat, "document '" + doc.doc_id + "': token " +
                                              std::to_string(t) + " lies outside the text");
    }
    if (span.begin == span.end) continue;
    // first word ending after the token starts
    auto it = std::upper_bound(words.begin(), words.end(), span.begin,
                               [](std::size_t pos, const AnnotatedWord& w) {
                                 return pos < w.char_span.end;
                               });
    if (it != words.end() && it->char_span.begin < span.end) doc.pos_tags[t] = it->upos;
  }
  return doc;
}

std::string detokenize(const std::vector<std::string>& token_strings,
                       const std::vector<CharSpan>& spans, std::size_t length, char fill) {
  std::string text(length, fill);
  for (std::size_t i = 0; i < spans.size(); ++i) {
    const CharSpan& s = spans[i];
    if (s.end > length || token_strings[i].size() != s.end - s.begin) {
      throw Error(ErrorKind::kDataFormat, "token " + std::to_string(i) + " does not fit its span");
    }
    std::copy(token_strings[i].begin(), token_strings[i].end(),
              text.begin() + static_cast<std::ptrdiff_t>(s.begin));
  }
  return text;
}

}  // namespace ctxprobe
