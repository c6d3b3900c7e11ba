// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ctxprobe Authors

#include "ctxprobe/http_backend.hpp"

#include <cmath>
#include <cstdlib>
#include <iostream>
#include <limits>

#include <httplib.h>
#include <json.hpp>

#include "ctxprobe/error.hpp"

namespace ctxprobe {

using nlohmann::json;

namespace {

// Quotes bare NaN / Infinity / -Infinity tokens (as emitted by e.g. Python's
// json module) so the strict parser accepts them.
std::string quote_non_finite_literals(std::string_view body) {
  std::string out;
  out.reserve(body.size());
  bool in_string = false;
  for (std::size_t i = 0; i < body.size(); ++i) {
    const char ch = body[i];
    if (in_string) {
      out.push_back(ch);
      if (ch == '\\' && i + 1 < body.size()) {
        out.push_back(body[++i]);
      } else if (ch == '"') {
        in_string = false;
      }
      continue;
    }
    if (ch == '"') {
      in_string = true;
      out.push_back(ch);
      continue;
    }
    bool replaced = false;
    for (std::string_view literal : {"-Infinity", "Infinity", "NaN"}) {
      if (body.substr(i, literal.size()) == literal) {
        out.push_back('"');
        out.append(literal);
        out.push_back('"');
        i += literal.size() - 1;
        replaced = true;
        break;
      }
    }
    if (!replaced) out.push_back(ch);
  }
  return out;
}

double decode_value(const json& value) {
  if (value.is_number()) return value.get<double>();
  if (value.is_string()) {
    const auto& s = value.get_ref<const std::string&>();
    if (s == "NaN") return std::numeric_limits<double>::quiet_NaN();
    if (s == "Infinity") return std::numeric_limits<double>::infinity();
    if (s == "-Infinity") return -std::numeric_limits<double>::infinity();
  }
  return std::numeric_limits<double>::quiet_NaN();
}

[[noreturn]] void protocol_error(const std::string& message) {
  throw Error(ErrorKind::kProtocol, "evaluate response: " + message);
}

json parse_body(std::string_view body, const char* what) {
  try {
    return json::parse(quote_non_finite_literals(body));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kProtocol, std::string(what) + ": malformed JSON: " + e.what());
  }
}

}  // namespace

HttpOptions HttpOptions::from_env() {
  HttpOptions options;
  if (const char* env = std::getenv("CTXPROBE_HTTP_TIMEOUT_MS")) {
    char* end = nullptr;
    const long value = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || value <= 0) {
      throw Error(ErrorKind::kInvalidArgument,
                  std::string("CTXPROBE_HTTP_TIMEOUT_MS must be a positive integer, got '") + env + "'");
    }
    options.timeout_ms = static_cast<int>(value);
  }
  return options;
}

std::string encode_evaluate_request(std::span<const std::vector<TokenId>> segments) {
  json segs = json::array();
  for (const auto& s : segments) segs.push_back(s);
  return json{{"segments", std::move(segs)}}.dump();
}

std::vector<LogProbRows> decode_evaluate_response(std::string_view body,
                                                  std::span<const std::vector<TokenId>> segments,
                                                  std::size_t vocab_size,
                                                  std::vector<std::string>* warnings) {
  const json doc = parse_body(body, "evaluate response");
  if (!doc.is_object() || !doc.contains("logprobs") || !doc["logprobs"].is_array()) {
    protocol_error("missing 'logprobs' array");
  }
  const json& batch = doc["logprobs"];
  if (batch.size() != segments.size()) {
    protocol_error("expected " + std::to_string(segments.size()) + " entries, got " +
                   std::to_string(batch.size()));
  }

  std::vector<LogProbRows> out;
  out.reserve(segments.size());
  for (std::size_t s = 0; s < segments.size(); ++s) {
    const json& entry = batch[s];
    const std::string where = "segment " + std::to_string(s);
    if (!entry.is_array() || entry.size() != segments[s].size()) {
      protocol_error(where + ": row count " + std::to_string(entry.is_array() ? entry.size() : 0) +
                     " != segment length " + std::to_string(segments[s].size()));
    }
    LogProbRows rows(segments[s].size(), vocab_size);
    for (std::size_t r = 0; r < entry.size(); ++r) {
      const json& row = entry[r];
      const std::string at = where + " row " + std::to_string(r);
      if (!row.is_array() || row.size() != vocab_size) {
        protocol_error(at + ": vector length " + std::to_string(row.is_array() ? row.size() : 0) +
                       " != vocabulary size " + std::to_string(vocab_size));
      }
      auto dst = rows.row(r);
      for (std::size_t i = 0; i < vocab_size; ++i) {
        const double v = decode_value(row[i]);
        // -inf is a legitimate zero probability; NaN and +inf are not.
        if (std::isnan(v) || v == std::numeric_limits<double>::infinity()) {
          protocol_error(at + ": non-finite value at index " + std::to_string(i));
        }
        dst[i] = static_cast<float>(v);
      }
      const double lse = log_sum_exp(dst);
      if (!std::isfinite(lse)) protocol_error(at + ": row has no probability mass");
      const double deviation = std::abs(std::exp(lse) - 1.0);
      if (deviation > kRenormalizeTolerance) {
        for (float& x : dst) x = static_cast<float>(double{x} - lse);
        if (deviation > kWarnTolerance && warnings != nullptr) {
          warnings->push_back(at + ": exp-sum " + std::to_string(std::exp(lse)) +
                              " renormalized");
        }
      }
    }
    out.push_back(std::move(rows));
  }
  return out;
}

HttpBackend::HttpBackend(std::string url, HttpOptions options) : options_(options) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) {
    throw Error(ErrorKind::kInvalidArgument, "backend URL '" + url + "' lacks a scheme");
  }
  const auto path = url.find('/', scheme + 3);
  host_ = url.substr(0, path);
  if (path != std::string::npos) {
    prefix_ = url.substr(path);
    while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
  }
  descriptor_.name = "http:" + url;
}

HttpBackend::HttpBackend(const HttpBackend& other)
    : host_(other.host_),
      prefix_(other.prefix_),
      options_(other.options_),
      descriptor_(other.descriptor_),
      warnings_(other.warnings()) {}

HttpBackend::HttpBackend(HttpBackend&& other) noexcept
    : host_(std::move(other.host_)),
      prefix_(std::move(other.prefix_)),
      options_(other.options_),
      descriptor_(std::move(other.descriptor_)),
      warnings_(std::move(other.warnings_)) {}

HttpBackend HttpBackend::connect(const std::string& url, const HttpOptions& options) {
  HttpBackend backend(url, options);
  const json doc = parse_body(backend.get("/v1/vocab"), "vocab response");
  if (!doc.is_object() || !doc.contains("tokens") || !doc["tokens"].is_array()) {
    throw Error(ErrorKind::kProtocol, "vocab response: missing 'tokens' array");
  }
  try {
    backend.descriptor_.vocab = Vocab(doc["tokens"].get<std::vector<std::string>>());
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kProtocol, std::string("vocab response: ") + e.what());
  } catch (const Error& e) {
    throw Error(ErrorKind::kProtocol, std::string("vocab response: ") + e.what());
  }
  std::size_t max_len = options.max_segment_len;
  if (max_len == 0) {
    max_len = std::numeric_limits<std::size_t>::max();
    if (doc.contains("max_segment_len") && doc["max_segment_len"].is_number_unsigned()) {
      max_len = doc["max_segment_len"].get<std::size_t>();
    }
  }
  backend.descriptor_.max_segment_len = max_len;
  return backend;
}

std::string HttpBackend::post(const std::string& path, const std::string& body) const {
  httplib::Client client(host_);
  const auto timeout = std::chrono::milliseconds(options_.timeout_ms);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  auto result = client.Post(prefix_ + path, body, "application/json");
  if (!result) {
    throw Error(ErrorKind::kTransport, "POST " + host_ + prefix_ + path + " failed: " +
                                           httplib::to_string(result.error()));
  }
  if (result->status != 200) {
    throw Error(ErrorKind::kTransport, "POST " + host_ + prefix_ + path + " returned HTTP " +
                                           std::to_string(result->status));
  }
  return result->body;
}

std::string HttpBackend::get(const std::string& path) const {
  httplib::Client client(host_);
  const auto timeout = std::chrono::milliseconds(options_.timeout_ms);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  auto result = client.Get(prefix_ + path);
  if (!result) {
    throw Error(ErrorKind::kTransport, "GET " + host_ + prefix_ + path + " failed: " +
                                           httplib::to_string(result.error()));
  }
  if (result->status != 200) {
    throw Error(ErrorKind::kTransport, "GET " + host_ + prefix_ + path + " returned HTTP " +
                                           std::to_string(result->status));
  }
  return result->body;
}

void HttpBackend::warn(std::string message) const {
  std::cerr << "warning: " << descriptor_.name << ": " << message << '\n';
  std::lock_guard lock(warnings_mutex_);
  warnings_.push_back(std::move(message));
}

std::vector<std::string> HttpBackend::warnings() const {
  std::lock_guard lock(warnings_mutex_);
  return warnings_;
}

std::vector<LogProbRows> HttpBackend::evaluate_batch(
    std::span<const std::vector<TokenId>> segments) const {
  for (const auto& s : segments) validate_segment(s);
  const std::string body = post("/v1/evaluate", encode_evaluate_request(segments));
  std::vector<std::string> warnings;
  auto rows = decode_evaluate_response(body, segments, vocab_size(), &warnings);
  for (auto& w : warnings) warn(std::move(w));
  return rows;
}

LogProbRows HttpBackend::evaluate_unchecked(std::span<const TokenId> segment) const {
  const std::vector<TokenId> one(segment.begin(), segment.end());
  return std::move(evaluate_batch(std::span(&one, 1)).front());
}

Tokenization HttpBackend::tokenize(std::string_view text) const {
  const json doc = parse_body(post("/v1/tokenize", json{{"text", text}}.dump()), "tokenize response");
  Tokenization out;
  try {
    out.ids = doc.at("ids").get<std::vector<TokenId>>();
    for (const auto& span : doc.at("spans")) {
      out.spans.push_back({span.at(0).get<std::size_t>(), span.at(1).get<std::size_t>()});
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kProtocol, std::string("tokenize response: ") + e.what());
  }
  if (out.ids.size() != out.spans.size()) {
    throw Error(ErrorKind::kProtocol, "tokenize response: ids and spans differ in length");
  }
  for (TokenId id : out.ids) {
    if (id >= vocab_size()) {
      throw Error(ErrorKind::kProtocol, "tokenize response: id " + std::to_string(id) +
                                            " outside vocabulary");
    }
  }
  return out;
}

}  // namespace ctxprobe
