// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ctxprobe Authors

#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "ctxprobe/corpus.hpp"
#include "ctxprobe/error.hpp"
#include "ctxprobe/tokenizer.hpp"
#include "support/fixtures.hpp"
#include "support/pos_fixture.hpp"

#include <unistd.h>

using namespace ctxprobe;
using ctxprobe::testing::error_kind;

namespace {

std::string row(int id, const std::string& form, const std::string& upos, const std::string& misc = "_") {
  return std::to_string(id) + "\t" + form + "\t_\t" + upos + "\t_\t_\t0\troot\t_\t" + misc + "\n";
}

std::vector<std::string> surfaces(const WordDocument& doc) {
  std::vector<std::string> out;
  for (const auto& w : doc.words) out.push_back(w.surface);
  return out;
}

}  // namespace

TEST_CASE("CoNLL-U parsing") {
  SUBCASE("two sentences under one newdoc") {
    const std::string text = "# newdoc id = d1\n# sent_id = a\n" + row(1, "Hello", "INTJ") +
                             row(2, "world", "NOUN") + "\n# sent_id = b\n" + row(1, "Bye", "INTJ") + "\n";
    const auto docs = parse_conllu(text, "file");
    REQUIRE(docs.size() == 1);
    CHECK(docs[0].doc_id == "d1");
    CHECK(surfaces(docs[0]) == std::vector<std::string>{"Hello", "world", "Bye"});
    CHECK(docs[0].words[1].upos == "NOUN");
    CHECK(docs[0].words[2].doc_id == "d1");
  }
  SUBCASE("multiword ranges and empty nodes are skipped") {
    const std::string text = row(1, "I", "PRON") + row(2, "can", "AUX") +
                             "3-4\tcannot\t_\t_\t_\t_\t_\t_\t_\t_\n" + row(3, "can", "AUX") +
                             row(4, "not", "PART") + "4.1\tgo\t_\tVERB\t_\t_\t_\t_\t_\t_\n";
    const auto docs = parse_conllu(text, "f");
    REQUIRE(docs.size() == 1);
    CHECK(surfaces(docs[0]) == std::vector<std::string>{"I", "can", "can", "not"});
  }
  SUBCASE("no newdoc markers: one document named after the file") {
    const auto docs = parse_conllu(row(1, "x", "X") + "\n" + row(1, "y", "X"), "lines-dev");
    REQUIRE(docs.size() == 1);
    CHECK(docs[0].doc_id == "lines-dev");
    CHECK(docs[0].words.size() == 2);
  }
  SUBCASE("several documents and unnamed newdoc") {
    const std::string text = "# newdoc id = A\n" + row(1, "a", "X") + "\n# newdoc\n" + row(1, "b", "X") +
                             "\n# newdoc\n" + row(1, "c", "X");
    const auto docs = parse_conllu(text, "src");
    REQUIRE(docs.size() == 3);
    CHECK(docs[0].doc_id == "A");
    CHECK(docs[1].doc_id == "src-1");
    CHECK(docs[2].doc_id == "src-2");
  }
  SUBCASE("SpaceAfter=No and CRLF") {
    const auto docs = parse_conllu("1\tHi\t_\tINTJ\t_\t_\t0\troot\t_\tSpaceAfter=No\r\n2\t!\t_\tPUNCT\t_\t_\t1\tpunct\t_\t_\r\n", "f");
    REQUIRE(docs[0].words.size() == 2);
    CHECK_FALSE(docs[0].words[0].space_after);
    CHECK(docs[0].words[1].space_after);
    CHECK(docs[0].words[1].surface == "!");
  }
  SUBCASE("malformed lines report their line number") {
    const std::string text = "# c\n" + row(1, "ok", "X") + "1\tbad\n";
    try {
      parse_conllu(text, "broken.conllu");
      FAIL("expected a parse error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kDataFormat);
      CHECK(std::string(e.what()).find("broken.conllu:3") != std::string::npos);
    }
    CHECK(error_kind([] { parse_conllu("x\tform\t_\tX\t_\t_\t_\t_\t_\t_\n", "f"); }) == ErrorKind::kDataFormat);
    CHECK(error_kind([] { parse_conllu("3-1\tform\t_\t_\t_\t_\t_\t_\t_\t_\n", "f"); }) == ErrorKind::kDataFormat);
    CHECK(error_kind([] { parse_conllu("1\tform\t_\t\t_\t_\t_\t_\t_\t_\n", "f"); }) == ErrorKind::kDataFormat);
  }
}

TEST_CASE("loading files") {
  const auto dir = std::filesystem::temp_directory_path() / ("ctxprobe_corpus_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  {
    std::ofstream(dir / "b.conllu") << row(1, "two", "NUM");
    std::ofstream(dir / "a.conllu") << row(1, "one", "NUM");
    std::ofstream(dir / "notes.txt") << "ignored";
  }
  const auto docs = load_conllu({dir});
  REQUIRE(docs.size() == 2);
  CHECK(docs[0].doc_id == "a");
  CHECK(docs[1].doc_id == "b");
  CHECK(error_kind([&] { load_conllu({}); }) == ErrorKind::kDataFormat);
  CHECK(error_kind([&] { load_conllu({dir / "missing.conllu"}); }) == ErrorKind::kIo);
  {
    std::ofstream(dir / "empty.conllu") << "# only a comment\n";
  }
  CHECK(error_kind([&] { load_conllu({dir / "empty.conllu"}); }) == ErrorKind::kDataFormat);
  std::filesystem::remove_all(dir);
}

TEST_CASE("joining and retokenizing") {
  std::vector<AnnotatedWord> words = {{"the", "DET", "d", {}, true}, {"birds", "NOUN", "d", {}, true}};
  const WhitespacePunctTokenizer ws(Vocab({"the", "birds", "bird", "s"}));
  const auto doc = concatenate_and_retokenize("d", words, ws);
  CHECK(doc.text == "the birds");
  CHECK(doc.size() == 2);
  CHECK(doc.source_spans == std::vector<CharSpan>{{0, 3}, {4, 9}});
  CHECK(words[1].char_span == CharSpan{4, 9});

  SUBCASE("subword spans lie inside the word") {
    const GreedyPieceTokenizer pieces(Vocab({"the", " ", "bird", "s"}));
    auto w = words;
    const auto sub = concatenate_and_retokenize("d", w, pieces);
    const auto tagged = map_pos_tags(sub, w);
    REQUIRE(sub.size() == 4);
    CHECK(sub.source_spans[2] == CharSpan{4, 8});
    CHECK(sub.source_spans[3] == CharSpan{8, 9});
    CHECK(tagged.pos_tags == std::vector<std::string>{"DET", "NONE", "NOUN", "NOUN"});
  }
  SUBCASE("SpaceAfter and separators") {
    std::vector<AnnotatedWord> hi = {{"Hi", "INTJ", "d", {}, false}, {"!", "PUNCT", "d", {}, true}, {"ok", "X", "d", {}, true}};
    CHECK(join_words(hi) == "Hi! ok");
    CHECK(join_words(hi, JoinOptions{false, " "}) == "Hi ! ok");
    CHECK(join_words(hi, JoinOptions{true, "\n"}) == "Hi!\nok");
  }
  SUBCASE("errors") {
    std::vector<AnnotatedWord> none;
    CHECK(error_kind([&] { concatenate_and_retokenize("e", none, ws); }) == ErrorKind::kDataFormat);
    std::vector<AnnotatedWord> unknown = {{"zebra", "NOUN", "d", {}, true}};
    CHECK(error_kind([&] { concatenate_and_retokenize("e", unknown, ws); }) == ErrorKind::kUnknownToken);
    const WhitespacePunctTokenizer lenient(Vocab({"the", "<unk>"}), "<unk>");
    CHECK(concatenate_and_retokenize("e", unknown, lenient).token_ids == std::vector<TokenId>{1});
  }
}

TEST_CASE("POS tag mapping") {
  SUBCASE("boundary-spanning subword takes the first word's tag") {
    std::vector<AnnotatedWord> words = {{"big", "ADJ", "d", {}, false}, {"dog", "NOUN", "d", {}, true}};
    const GreedyPieceTokenizer pieces(Vocab({"bi", "gd", "og"}));
    const auto doc = map_pos_tags(concatenate_and_retokenize("d", words, pieces), words);
    CHECK(doc.pos_tags == std::vector<std::string>{"ADJ", "ADJ", "NOUN"});
  }
  SUBCASE("separator token between documents is NONE") {
    TokenizedDocument doc;
    doc.doc_id = "joined";
    doc.text = "cats || dogs";
    doc.token_ids = {0, 1, 2};
    doc.source_spans = {{0, 4}, {5, 7}, {8, 12}};
    std::vector<AnnotatedWord> words = {{"cats", "NOUN", "a", {0, 4}, true}, {"dogs", "NOUN", "b", {8, 12}, true}};
    CHECK(map_pos_tags(doc, words).pos_tags == std::vector<std::string>{"NOUN", "NONE", "NOUN"});
    doc.source_spans[2] = {8, 20};
    CHECK(error_kind([&] { map_pos_tags(doc, words); }) == ErrorKind::kDataFormat);
    doc.source_spans.clear();
    CHECK(error_kind([&] { map_pos_tags(doc, words); }) == ErrorKind::kDataFormat);
  }
  SUBCASE("fixture tags match the hand assignment and the brute-force rule") {
    auto docs = load_conllu({ctxprobe::testing::fixture_dir() / "pos30.conllu"});
    REQUIRE(docs.size() == 1);
    REQUIRE(docs[0].words.size() == 30);
    const Vocab vocab = ctxprobe::testing::pos30_pieces();
    const GreedyPieceTokenizer tokenizer(vocab);
    auto& words = docs[0].words;
    const auto doc = map_pos_tags(concatenate_and_retokenize(docs[0].doc_id, words, tokenizer), words);
    const auto& expected = ctxprobe::testing::pos30_expected();
    REQUIRE(doc.size() == expected.size());
    for (std::size_t i = 0; i < doc.size(); ++i) {
      CHECK(vocab.token(doc.token_ids[i]) == expected[i].first);
      CHECK(doc.pos_tags[i] == expected[i].second);
    }
    CHECK(doc.pos_tags == ctxprobe::testing::brute_force_tags(doc.source_spans, words));
    doc.validate(vocab.size());
  }
  SUBCASE("randomized: totality, brute-force agreement and text round trip") {
    std::mt19937_64 rng(67);
    const std::vector<std::string> tagset = {"NOUN", "VERB", "ADJ", "DET", "PUNCT"};
    const Vocab alphabet({"a", "b", "c", "ab", "ba", "c a", " ", "bc", ".", ". "});
    const GreedyPieceTokenizer tokenizer(alphabet);
    std::uniform_int_distribution<int> len(1, 5), letter(0, 2), tag(0, 4), coin(0, 3);
    for (int trial = 0; trial < 300; ++trial) {
      std::vector<AnnotatedWord> words(std::uniform_int_distribution<int>(1, 25)(rng));
      for (auto& w : words) {
        if (coin(rng) == 0) {
          w.surface = ".";
        } else {
          for (int i = len(rng); i > 0; --i) w.surface += static_cast<char>('a' + letter(rng));
        }
        w.upos = tagset[tag(rng)];
        w.space_after = coin(rng) != 0;
      }
      const auto doc = map_pos_tags(concatenate_and_retokenize("r", words, tokenizer), words);
      REQUIRE(doc.pos_tags.size() == doc.size());
      REQUIRE(doc.pos_tags == ctxprobe::testing::brute_force_tags(doc.source_spans, words));
      std::vector<std::string> strings;
      for (TokenId id : doc.token_ids) strings.push_back(alphabet.token(id));
      REQUIRE(detokenize(strings, doc.source_spans, doc.text.size()) == doc.text);
    }
  }
}
