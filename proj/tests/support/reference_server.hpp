// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ctxprobe Authors

#pragma once

#include <functional>
#include <optional>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "ctxprobe/backend.hpp"
#include "ctxprobe/tokenizer.hpp"

namespace ctxprobe::testing {

/// Serves a Backend over the evaluation wire protocol on 127.0.0.1 for
/// client tests. `evaluate_override`, when set, replaces the response body.
class ReferenceServer {
 public:
  ReferenceServer(const Backend& backend, const Tokenizer* tokenizer = nullptr)
      : backend_(backend), tokenizer_(tokenizer) {
    using nlohmann::json;
    server_.Get("/v1/vocab", [this](const httplib::Request&, httplib::Response& res) {
      json body = {{"tokens", backend_.vocab().tokens()},
                   {"max_segment_len", backend_.descriptor().max_segment_len}};
      res.set_content(body.dump(), "application/json");
    });
    server_.Post("/v1/evaluate", [this](const httplib::Request& req, httplib::Response& res) {
      ++evaluate_calls;
      if (evaluate_override) {
        res.set_content(evaluate_override(req.body), "application/json");
        return;
      }
      const json request = json::parse(req.body);
      json batch = json::array();
      for (const auto& seg : request.at("segments")) {
        const auto ids = seg.get<std::vector<TokenId>>();
        const LogProbRows rows = backend_.evaluate_segment(ids);
        json entry = json::array();
        for (std::size_t r = 0; r < rows.rows(); ++r) {
          auto row = rows.row(r);
          entry.push_back(std::vector<float>(row.begin(), row.end()));
        }
        batch.push_back(std::move(entry));
      }
      res.set_content(json{{"logprobs", std::move(batch)}}.dump(), "application/json");
    });
    server_.Post("/v1/tokenize", [this](const httplib::Request& req, httplib::Response& res) {
      if (tokenizer_ == nullptr) {
        res.status = 404;
        return;
      }
      const auto text = json::parse(req.body).at("text").get<std::string>();
      const Tokenization t = tokenizer_->tokenize(text);
      json spans = json::array();
      for (const auto& s : t.spans) spans.push_back({s.begin, s.end});
      res.set_content(json{{"ids", t.ids}, {"spans", spans}}.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~ReferenceServer() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  ReferenceServer(const ReferenceServer&) = delete;
  ReferenceServer& operator=(const ReferenceServer&) = delete;

  int port() const { return port_; }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

  std::function<std::string(const std::string&)> evaluate_override;
  std::atomic<int> evaluate_calls{0};

 private:
  const Backend& backend_;
  const Tokenizer* tokenizer_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

}  // namespace ctxprobe::testing
