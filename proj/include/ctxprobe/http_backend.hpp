// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ctxprobe Authors

#pragma once

#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ctxprobe/backend.hpp"
#include "ctxprobe/tokenizer.hpp"

namespace ctxprobe {

/// Client side of the evaluation wire protocol:
///
///   POST /v1/evaluate {"segments": [[id, ...], ...]}
///        -> {"logprobs": [[[float x |V|] x L_i] x batch]}
///   GET  /v1/vocab    -> {"tokens": [string, ...], "max_segment_len"?: int}
///   POST /v1/tokenize {"text": string} -> {"ids": [...], "spans": [[b, e], ...]}
///
/// All floats are natural-log probabilities. Bare NaN / Infinity literals in
/// responses are tolerated by the parser so they can be reported precisely.
struct HttpOptions {
  int timeout_ms = 60000;
  std::size_t max_segment_len = 0;  // 0: use the server's value, else unlimited

  /// Reads CTXPROBE_HTTP_TIMEOUT_MS.
  static HttpOptions from_env();
};

/// Rows whose exp-sum deviates from 1 by more than this are renormalized.
inline constexpr double kRenormalizeTolerance = 1e-6;
/// Renormalizations above this deviation are reported as warnings. Set below
/// 1e-3 so that a row summing to 0.999 (after float rounding) still warns.
inline constexpr double kWarnTolerance = 5e-4;

class HttpBackend final : public Backend {
 public:
  /// Connects and downloads the vocabulary.
  static HttpBackend connect(const std::string& url, const HttpOptions& options = HttpOptions::from_env());

  HttpBackend(const HttpBackend& other);
  HttpBackend(HttpBackend&& other) noexcept;

  const BackendDescriptor& descriptor() const override { return descriptor_; }
  std::vector<LogProbRows> evaluate_batch(std::span<const std::vector<TokenId>> segments) const override;

  Tokenization tokenize(std::string_view text) const;

  /// Warnings recorded so far (renormalized rows).
  std::vector<std::string> warnings() const;

 protected:
  LogProbRows evaluate_unchecked(std::span<const TokenId> segment) const override;

 private:
  HttpBackend(std::string url, HttpOptions options);

  std::string post(const std::string& path, const std::string& body) const;
  std::string get(const std::string& path) const;
  void warn(std::string message) const;

  std::string host_;     // scheme://host[:port]
  std::string prefix_;   // path prefix, no trailing slash
  HttpOptions options_;
  BackendDescriptor descriptor_;
  mutable std::mutex warnings_mutex_;
  mutable std::vector<std::string> warnings_;
};

/// Decodes an /v1/evaluate response body against the request shape,
/// applying the validation and renormalization rules. Exposed for testing.
std::vector<LogProbRows> decode_evaluate_response(std::string_view body,
                                                  std::span<const std::vector<TokenId>> segments,
                                                  std::size_t vocab_size,
                                                  std::vector<std::string>* warnings);

std::string encode_evaluate_request(std::span<const std::vector<TokenId>> segments);

class HttpTokenizer final : public Tokenizer {
 public:
  explicit HttpTokenizer(const HttpBackend& backend) : backend_(backend) {}
  Tokenization tokenize(std::string_view text) const override { return backend_.tokenize(text); }

 private:
  const HttpBackend& backend_;
};

}  // namespace ctxprobe
