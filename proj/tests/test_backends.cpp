// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ctxprobe Authors

#include <doctest.h>

#include <bit>
#include <cmath>
#include <memory>

#include "ctxprobe/error.hpp"
#include "ctxprobe/http_backend.hpp"
#include "ctxprobe/ngram_model.hpp"
#include "ctxprobe/trigger_model.hpp"
#include "support/fixtures.hpp"
#include "support/reference_server.hpp"

using namespace ctxprobe;
using ctxprobe::testing::error_kind;

namespace {

const Vocab kAB({"a", "b"});
constexpr TokenId A = 0;
constexpr TokenId B = 1;

NGramModel abab_model(std::size_t order) {
  const std::vector<std::vector<TokenId>> corpus = {{A, B, A, B, A}};
  return NGramModel::train(corpus, kAB, order, 1.0);
}

bool bitwise_equal(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::bit_cast<std::uint32_t>(a[i]) != std::bit_cast<std::uint32_t>(b[i])) return false;
  }
  return true;
}

void check_causal_and_normalized(const Backend& backend, std::mt19937_64& rng, std::size_t max_len) {
  for (int trial = 0; trial < 40; ++trial) {
    std::uniform_int_distribution<std::size_t> len(1, max_len);
    const auto seg = ctxprobe::testing::random_tokens(rng, len(rng), backend.vocab_size());
    const auto full = backend.evaluate_segment(seg);
    REQUIRE(full.rows() == seg.size());
    for (std::size_t i = 0; i < seg.size(); ++i) {
      REQUIRE(std::abs(std::exp(log_sum_exp(full.row(i))) - 1.0) <= 1e-6);
      const auto prefix = backend.evaluate_segment(std::span(seg).first(i + 1));
      REQUIRE(bitwise_equal(prefix.row(i), full.row(i)));
      // perturb the tokens after i
      auto changed = seg;
      for (std::size_t j = i + 1; j < changed.size(); ++j) {
        changed[j] = (changed[j] + 1) % static_cast<TokenId>(backend.vocab_size());
      }
      REQUIRE(bitwise_equal(backend.evaluate_segment(changed).row(i), full.row(i)));
    }
  }
}

}  // namespace

TEST_CASE("n-gram training counts") {
  const auto bigram = abab_model(2);
  const std::vector<TokenId> a{A}, b{B};
  CHECK(bigram.count(a, B) == 2);
  CHECK(bigram.count(b, A) == 2);
  CHECK(bigram.count(a, A) == 0);
  CHECK(bigram.context_total(a) == 2);
  CHECK(bigram.probability(a, A) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(bigram.probability(a, B) == doctest::Approx(0.75).epsilon(1e-15));

  const auto unigram = abab_model(1);
  CHECK(unigram.probability({}, A) == doctest::Approx(4.0 / 7.0).epsilon(1e-15));
  CHECK(unigram.probability(std::vector<TokenId>{B, B}, A) == doctest::Approx(4.0 / 7.0).epsilon(1e-15));

  const std::vector<std::vector<TokenId>> single = {{A}};
  const auto tiny = NGramModel::train(single, kAB, 2, 1.0);
  const auto rows = tiny.evaluate_segment(std::vector<TokenId>{A, B});
  for (std::size_t r = 0; r < 2; ++r) {
    CHECK(rows.row(r)[0] == doctest::Approx(std::log(0.5)));
    CHECK(rows.row(r)[1] == doctest::Approx(std::log(0.5)));
  }

  SUBCASE("contexts never cross documents") {
    const std::vector<std::vector<TokenId>> two = {{A, A}, {B, B}};
    const auto m = NGramModel::train(two, kAB, 2, 1.0);
    CHECK(m.count(std::vector<TokenId>{A}, B) == 0);
    CHECK(m.count(std::vector<TokenId>{A}, A) == 1);
    CHECK(m.count(std::vector<TokenId>{B}, B) == 1);
    CHECK(m.context_total({}) == 4);
  }
  SUBCASE("invalid training input") {
    const std::vector<std::vector<TokenId>> none;
    CHECK(error_kind([&] { NGramModel::train(none, kAB, 2, 1.0); }) == ErrorKind::kInvalidArgument);
    const std::vector<std::vector<TokenId>> empty_docs = {{}, {}};
    CHECK(error_kind([&] { NGramModel::train(empty_docs, kAB, 2, 1.0); }) == ErrorKind::kInvalidArgument);
    const std::vector<std::vector<TokenId>> ok = {{A}};
    CHECK(error_kind([&] { NGramModel::train(ok, kAB, 0, 1.0); }) == ErrorKind::kInvalidArgument);
    CHECK(error_kind([&] { NGramModel::train(ok, kAB, 2, 0.0); }) == ErrorKind::kInvalidArgument);
  }
}

TEST_CASE("n-gram segment evaluation") {
  const auto bigram = abab_model(2);
  const auto one = bigram.evaluate_segment(std::vector<TokenId>{A});
  CHECK(one.rows() == 1);
  CHECK(one.row(0)[A] == static_cast<float>(std::log(0.25)));
  CHECK(one.row(0)[B] == static_cast<float>(std::log(0.75)));
  const auto two = bigram.evaluate_segment(std::vector<TokenId>{B, A});
  CHECK(bitwise_equal(two.row(1), one.row(0)));

  const std::vector<TokenId> bba{B, B, A};
  CHECK(bitwise_equal(direct_reduced_probability(bigram, bba), one.row(0)));

  CHECK(error_kind([&] { bigram.evaluate_segment(std::vector<TokenId>{A, 2}); }) ==
        ErrorKind::kUnknownToken);
  CHECK(error_kind([&] { bigram.evaluate_segment(std::vector<TokenId>{}); }) ==
        ErrorKind::kInvalidArgument);
  const std::vector<std::vector<TokenId>> corpus = {{A, B}};
  const auto short_model = NGramModel::train(corpus, kAB, 2, 1.0, 3);
  CHECK(error_kind([&] { short_model.evaluate_segment(std::vector<TokenId>{A, A, A, A}); }) ==
        ErrorKind::kSegmentTooLong);
}

TEST_CASE("n-gram rows depend only on the last m-1 tokens") {
  std::mt19937_64 rng(5);
  const auto vocab = ctxprobe::testing::synthetic_vocab(8);
  std::vector<std::vector<TokenId>> corpus;
  for (int d = 0; d < 4; ++d) corpus.push_back(ctxprobe::testing::random_tokens(rng, 300, 8));
  for (std::size_t order : {1, 2, 3, 4}) {
    const auto model = NGramModel::train(corpus, vocab, order, 0.5);
    for (int trial = 0; trial < 50; ++trial) {
      const auto tail = ctxprobe::testing::random_tokens(rng, order, 8);
      const auto reference = direct_reduced_probability(model, tail);
      for (std::size_t extra : {1, 5, 17}) {
        auto longer = ctxprobe::testing::random_tokens(rng, extra, 8);
        // keep the last m-1 tokens fixed
        longer.insert(longer.end(), tail.end() - static_cast<std::ptrdiff_t>(order - 1), tail.end());
        REQUIRE(bitwise_equal(direct_reduced_probability(model, longer), reference));
      }
    }
  }
}

TEST_CASE("trigger model") {
  const auto vocab = ctxprobe::testing::synthetic_vocab(6);
  const TriggerParams params{0, 1, 10, 0.9, 0.1};
  const TriggerModel model(vocab, params);
  const std::vector<TokenId> seg{3, 0, 4, 5, 2};
  const auto rows = model.evaluate_segment(seg);
  CHECK(std::exp(double{rows.row(0)[1]}) == doctest::Approx(0.1).epsilon(1e-7));
  for (std::size_t r = 1; r < 5; ++r) {
    CHECK(std::exp(double{rows.row(r)[1]}) == doctest::Approx(0.9).epsilon(1e-7));
    CHECK(std::exp(double{rows.row(r)[2]}) == doctest::Approx(0.1 / 5).epsilon(1e-6));
  }

  std::vector<TokenId> outside(11, 3);
  outside[0] = 0;
  CHECK(bitwise_equal(direct_reduced_probability(model, outside), model.unboosted_row()));
  std::vector<TokenId> inside(10, 3);
  inside[0] = 0;
  CHECK(bitwise_equal(direct_reduced_probability(model, inside), model.boosted_row()));

  SUBCASE("p(u) takes exactly two values and matches a window scan") {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 100; ++trial) {
      const auto s = ctxprobe::testing::random_tokens(rng, 40, 6);
      const auto out = model.evaluate_segment(s);
      for (std::size_t i = 0; i < s.size(); ++i) {
        bool seen = false;
        for (std::size_t j = (i + 1 > 10 ? i + 1 - 10 : 0); j <= i; ++j) seen = seen || s[j] == 0;
        REQUIRE(bitwise_equal(out.row(i), seen ? model.boosted_row() : model.unboosted_row()));
      }
    }
  }
  SUBCASE("invalid parameters") {
    CHECK(error_kind([&] { TriggerModel(vocab, TriggerParams{1, 1, 10, 0.9, 0.1}); }) ==
          ErrorKind::kInvalidArgument);
    CHECK(error_kind([&] { TriggerModel(vocab, TriggerParams{0, 1, 10, 0.1, 0.9}); }) ==
          ErrorKind::kInvalidArgument);
    CHECK(error_kind([&] { TriggerModel(vocab, TriggerParams{0, 1, 0, 0.9, 0.1}); }) ==
          ErrorKind::kInvalidArgument);
    CHECK(error_kind([&] { TriggerModel(vocab, TriggerParams{0, 9, 10, 0.9, 0.1}); }) ==
          ErrorKind::kInvalidArgument);
  }
}

TEST_CASE("built-in backends are causal and normalized") {
  std::mt19937_64 rng(21);
  const auto vocab = ctxprobe::testing::synthetic_vocab(8);
  std::vector<std::vector<TokenId>> corpus = {ctxprobe::testing::random_tokens(rng, 500, 8)};
  check_causal_and_normalized(NGramModel::train(corpus, vocab, 3, 0.1), rng, 30);
  check_causal_and_normalized(TriggerModel(vocab, TriggerParams{2, 5, 7, 0.8, 0.05}), rng, 30);
}

TEST_CASE("HTTP backend against a reference server") {
  const auto vocab = ctxprobe::testing::synthetic_vocab(12);
  std::mt19937_64 rng(13);
  std::vector<std::vector<TokenId>> corpus = {ctxprobe::testing::random_tokens(rng, 400, 12)};
  const auto model = NGramModel::train(corpus, vocab, 3, 0.5, 64);
  ctxprobe::testing::ReferenceServer server(model);

  HttpOptions options;
  options.timeout_ms = 5000;
  const auto backend = HttpBackend::connect(server.url(), options);
  CHECK(backend.vocab() == vocab);
  CHECK(backend.descriptor().max_segment_len == 64);

  SUBCASE("shape and values match the served model") {
    const std::vector<std::vector<TokenId>> batch = {{5, 9, 2}, {1}};
    const auto rows = backend.evaluate_batch(batch);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].rows() == 3);
    CHECK(rows[0].vocab_size() == 12);
    CHECK(rows[1].rows() == 1);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(bitwise_equal(rows[i].values(), model.evaluate_segment(batch[i]).values()));
    }
    CHECK(server.evaluate_calls == 1);
    CHECK(backend.warnings().empty());
  }
  SUBCASE("causality holds through the client") {
    check_causal_and_normalized(backend, rng, 10);
  }
  SUBCASE("segment limits are enforced before sending") {
    const std::vector<TokenId> long_segment(65, 1);
    CHECK(error_kind([&] { backend.evaluate_segment(long_segment); }) == ErrorKind::kSegmentTooLong);
    CHECK(server.evaluate_calls == 0);
  }
  SUBCASE("slightly unnormalized rows are renormalized with a warning") {
    const float low = static_cast<float>(std::log(0.999 / 12));
    server.evaluate_override = [&](const std::string&) {
      nlohmann::json row = std::vector<float>(12, low);
      return nlohmann::json{{"logprobs", {{row}}}}.dump();
    };
    const auto rows = backend.evaluate_segment(std::vector<TokenId>{3});
    CHECK(std::abs(std::exp(log_sum_exp(rows.row(0))) - 1.0) <= 1e-6);
    const auto warnings = backend.warnings();
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].find("row 0") != std::string::npos);
  }
  SUBCASE("NaN is a protocol violation naming segment and row") {
    server.evaluate_override = [&](const std::string&) {
      std::string row = "[NaN";
      for (int i = 1; i < 12; ++i) row += ",-2.4849";
      row += "]";
      const std::string ok = nlohmann::json(std::vector<float>(12, -2.4849066f)).dump();
      return "{\"logprobs\": [[" + ok + "], [" + ok + "," + row + "]]}";
    };
    const std::vector<std::vector<TokenId>> batch = {{1}, {2, 3}};
    try {
      backend.evaluate_batch(batch);
      FAIL("expected a protocol error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kProtocol);
      const std::string msg = e.what();
      CHECK(msg.find("segment 1") != std::string::npos);
      CHECK(msg.find("row 1") != std::string::npos);
    }
  }
  SUBCASE("top-k style responses are rejected") {
    server.evaluate_override = [&](const std::string&) {
      return nlohmann::json{{"logprobs", {{std::vector<float>(5, -1.6f)}}}}.dump();
    };
    CHECK(error_kind([&] { backend.evaluate_segment(std::vector<TokenId>{3}); }) ==
          ErrorKind::kProtocol);
  }
  SUBCASE("row count mismatch") {
    server.evaluate_override = [&](const std::string&) {
      return nlohmann::json{{"logprobs", {{std::vector<float>(12, -2.4849066f)}}}}.dump();
    };
    CHECK(error_kind([&] { backend.evaluate_segment(std::vector<TokenId>{3, 4}); }) ==
          ErrorKind::kProtocol);
  }
}

TEST_CASE("evaluate response decoding") {
  const std::vector<std::vector<TokenId>> one = {{0}};
  std::vector<std::string> warnings;
  SUBCASE("-Infinity is a zero probability") {
    const auto rows = decode_evaluate_response("{\"logprobs\": [[[0.0, -Infinity]]]}", one, 2, &warnings);
    CHECK(rows[0].row(0)[0] == 0.0f);
    CHECK(std::isinf(rows[0].row(0)[1]));
    CHECK(warnings.empty());
  }
  SUBCASE("+Infinity is rejected") {
    CHECK(error_kind([&] {
            decode_evaluate_response("{\"logprobs\": [[[Infinity, 0.0]]]}", one, 2, &warnings);
          }) == ErrorKind::kProtocol);
  }
  SUBCASE("deviation below the warning threshold renormalizes silently") {
    const double p = 0.5 * (1 - 2e-4);
    const std::string v = std::to_string(std::log(p));
    const auto rows = decode_evaluate_response("{\"logprobs\": [[[" + v + "," + v + "]]]}", one, 2, &warnings);
    CHECK(std::abs(std::exp(log_sum_exp(rows[0].row(0))) - 1.0) <= 1e-6);
    CHECK(warnings.empty());
  }
  SUBCASE("malformed bodies") {
    CHECK(error_kind([&] { decode_evaluate_response("not json", one, 2, &warnings); }) ==
          ErrorKind::kProtocol);
    CHECK(error_kind([&] { decode_evaluate_response("{}", one, 2, &warnings); }) == ErrorKind::kProtocol);
    CHECK(error_kind([&] { decode_evaluate_response("{\"logprobs\": []}", one, 2, &warnings); }) ==
          ErrorKind::kProtocol);
    CHECK(error_kind([&] {
            decode_evaluate_response("{\"logprobs\": [[[-Infinity, -Infinity]]]}", one, 2, &warnings);
          }) == ErrorKind::kProtocol);
  }
  CHECK(encode_evaluate_request(std::vector<std::vector<TokenId>>{{5, 9, 2}}) ==
        "{\"segments\":[[5,9,2]]}");
}

TEST_CASE("HTTP transport failures") {
  HttpOptions options;
  options.timeout_ms = 500;
  // bind and release a port so nothing listens on it
  int port = 0;
  {
    httplib::Server probe;
    port = probe.bind_to_any_port("127.0.0.1");
  }
  CHECK(error_kind([&] { HttpBackend::connect("http://127.0.0.1:" + std::to_string(port), options); }) ==
        ErrorKind::kTransport);
  CHECK(error_kind([&] { HttpBackend::connect("127.0.0.1", options); }) == ErrorKind::kInvalidArgument);
}
