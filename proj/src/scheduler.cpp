// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ctxprobe Authors

#include "ctxprobe/scheduler.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "ctxprobe/error.hpp"

namespace ctxprobe {

using nlohmann::json;

std::size_t SegmentPlan::row_count() const {
  std::size_t rows = 0;
  for (const Segment& s : entries) rows += s.length;
  return rows;
}

std::vector<Cell> SegmentPlan::contributed_cells() const {
  std::vector<Cell> cells;
  cells.reserve(row_count());
  for (const Segment& s : entries) {
    for (std::size_t n = s.start; n < s.start + s.length; ++n) cells.emplace_back(n, n - s.start + 1);
  }
  return cells;
}

SegmentPlan plan_segments(std::size_t doc_length, std::size_t c_max, std::size_t stride) {
  SegmentPlan plan;
  plan.doc_length = doc_length;
  plan.c_max = c_max;
  plan.stride = stride;
  plan.entries = canonical_segments(doc_length, c_max, stride);
  return plan;
}

ProbeCost probe_cost(std::size_t doc_length, std::size_t c_max, std::size_t stride) {
  const SegmentPlan plan = plan_segments(doc_length, c_max, stride);
  return {plan.entries.size(), plan.row_count()};
}

PredictionStore run_probe(const Backend& backend, const TokenizedDocument& doc,
                          const ProbeConfig& config) {
  config.validate();
  const auto& desc = backend.descriptor();
  doc.validate(desc.vocab.size());
  if (config.c_max > desc.max_segment_len) {
    throw Error(ErrorKind::kInvalidArgument,
                "c_max " + std::to_string(config.c_max) + " exceeds " + desc.name +
                    " max_segment_len " + std::to_string(desc.max_segment_len));
  }

  const SegmentPlan plan = plan_segments(doc.size(), config.c_max, config.stride);
  StoreShape shape{doc.size(), config.c_max, config.stride, desc.vocab.size(), config.store_dtype};
  StoreWriter writer(shape, plan.entries);

  const std::size_t total = plan.entries.size();
  const std::size_t batches = (total + config.batch_size - 1) / config.batch_size;
  std::atomic<std::size_t> next_batch{0};
  std::atomic<bool> failed{false};
  std::mutex error_mutex;
  std::exception_ptr first_error;

  auto worker = [&] {
    std::vector<std::vector<TokenId>> inputs;
    while (!failed.load()) {
      const std::size_t b = next_batch.fetch_add(1);
      if (b >= batches) return;
      const std::size_t first = b * config.batch_size;
      const std::size_t last = std::min(total, first + config.batch_size);
      try {
        inputs.clear();
        for (std::size_t j = first; j < last; ++j) {
          const Segment& s = plan.entries[j];
          const auto begin = doc.token_ids.begin() + static_cast<std::ptrdiff_t>(s.start - 1);
          inputs.emplace_back(begin, begin + static_cast<std::ptrdiff_t>(s.length));
        }
        std::vector<LogProbRows> outputs;
        try {
          outputs = backend.evaluate_batch(inputs);
        } catch (const Error& e) {
          throw Error(e.kind(), "document '" + doc.doc_id + "', segments " +
                                    std::to_string(first) + ".." + std::to_string(last - 1) +
                                    " (starts " + std::to_string(plan.entries[first].start) + ".." +
                                    std::to_string(plan.entries[last - 1].start) + "): " + e.what());
        }
        if (outputs.size() != inputs.size()) {
          throw Error(ErrorKind::kProtocol, "backend returned " + std::to_string(outputs.size()) +
                                                " results for a batch of " +
                                                std::to_string(inputs.size()));
        }
        for (std::size_t j = first; j < last; ++j) {
          const LogProbRows& rows = outputs[j - first];
          if (rows.rows() != plan.entries[j].length || rows.vocab_size() != shape.vocab_size) {
            throw Error(ErrorKind::kProtocol, "document '" + doc.doc_id + "', segment " +
                                                  std::to_string(j) + " (start " +
                                                  std::to_string(plan.entries[j].start) +
                                                  "): backend output has wrong shape");
          }
          writer.write_segment(j, rows.values());
        }
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        failed.store(true);
        return;
      }
    }
  };

  const std::size_t threads = std::min(config.parallelism, std::max<std::size_t>(batches, 1));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (first_error) std::rethrow_exception(first_error);
  return std::move(writer).finalize();
}

std::string RunManifest::to_json() const {
  json j = {
      {"doc_id", doc_id},
      {"config",
       {{"c_max", config.c_max},
        {"stride", config.stride},
        {"batch_size", config.batch_size},
        {"dtype", to_string(config.store_dtype)},
        {"top_k_export", config.top_k_export},
        {"parallelism", config.parallelism}}},
      {"backend",
       {{"name", backend_name}, {"vocab_size", vocab_size}, {"max_segment_len", max_segment_len}}},
      {"doc_length", doc_length},
      {"segment_count", segment_count},
      {"row_count", row_count},
      {"wall_time_seconds", wall_time_seconds},
  };
  return j.dump(2);
}

RunManifest RunManifest::from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    RunManifest m;
    m.doc_id = j.at("doc_id").get<std::string>();
    const json& c = j.at("config");
    m.config.c_max = c.at("c_max").get<std::size_t>();
    m.config.stride = c.at("stride").get<std::size_t>();
    m.config.batch_size = c.at("batch_size").get<std::size_t>();
    m.config.store_dtype = parse_dtype(c.at("dtype").get<std::string>());
    m.config.top_k_export = c.at("top_k_export").get<std::size_t>();
    m.config.parallelism = c.at("parallelism").get<std::size_t>();
    const json& b = j.at("backend");
    m.backend_name = b.at("name").get<std::string>();
    m.vocab_size = b.at("vocab_size").get<std::size_t>();
    m.max_segment_len = b.at("max_segment_len").get<std::size_t>();
    m.doc_length = j.at("doc_length").get<std::size_t>();
    m.segment_count = j.at("segment_count").get<std::size_t>();
    m.row_count = j.at("row_count").get<std::size_t>();
    m.wall_time_seconds = j.at("wall_time_seconds").get<double>();
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kDataFormat, std::string("run manifest: ") + e.what());
  }
}

RunManifest probe_to_file(const Backend& backend, const TokenizedDocument& doc,
                          const ProbeConfig& config, const std::filesystem::path& store_path,
                          const std::filesystem::path& manifest_path) {
  const auto started = std::chrono::steady_clock::now();
  const PredictionStore store = run_probe(backend, doc, config);
  const auto elapsed = std::chrono::steady_clock::now() - started;

  RunManifest manifest;
  manifest.doc_id = doc.doc_id;
  manifest.config = config;
  manifest.backend_name = backend.descriptor().name;
  manifest.vocab_size = backend.vocab_size();
  manifest.max_segment_len = backend.descriptor().max_segment_len;
  manifest.doc_length = doc.size();
  manifest.segment_count = store.segments().size();
  manifest.row_count = store.row_count();
  manifest.wall_time_seconds = std::chrono::duration<double>(elapsed).count();

  auto tmp_store = store_path;
  tmp_store += ".tmp";
  auto tmp_manifest = manifest_path;
  tmp_manifest += ".tmp";
  try {
    store.save(tmp_store);
    {
      std::ofstream out(tmp_manifest, std::ios::trunc);
      out << manifest.to_json() << '\n';
      if (!out) throw Error(ErrorKind::kIo, "cannot write '" + tmp_manifest.string() + "'");
    }
    std::filesystem::rename(tmp_store, store_path);
    std::filesystem::rename(tmp_manifest, manifest_path);
  } catch (...) {
    std::error_code ignored;
    std::filesystem::remove(tmp_store, ignored);
    std::filesystem::remove(tmp_manifest, ignored);
    throw;
  }
  return manifest;
}

}  // namespace ctxprobe
