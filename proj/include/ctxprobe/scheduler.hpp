// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ctxprobe Authors

#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "ctxprobe/backend.hpp"
#include "ctxprobe/prediction_store.hpp"
#include "ctxprobe/types.hpp"

namespace ctxprobe {

/// (target position n, context length c)
using Cell = std::pair<std::size_t, std::size_t>;

/// Sliding-window schedule. Windows start at 1, 1+k, 1+2k, ... up to N-1 and
/// have length min(c_max, N - s); the window starting at N would only predict
/// past the end of the document, so it is dropped.
struct SegmentPlan {
  std::size_t doc_length = 0;
  std::size_t c_max = 0;
  std::size_t stride = 1;
  std::vector<Segment> entries;

  std::size_t row_count() const;
  /// Cells contributed by every entry, in plan order.
  std::vector<Cell> contributed_cells() const;
};

SegmentPlan plan_segments(std::size_t doc_length, std::size_t c_max, std::size_t stride);

struct ProbeCost {
  std::size_t segments = 0;  // backend evaluations of one window each
  std::size_t rows = 0;      // stored |V|-vectors
  std::size_t batches(std::size_t batch_size) const {
    return (segments + batch_size - 1) / batch_size;
  }
};

ProbeCost probe_cost(std::size_t doc_length, std::size_t c_max, std::size_t stride);

/// Evaluates every planned window in plan-order batches of config.batch_size,
/// with up to config.parallelism batches in flight, and returns the finalized
/// store. Backend errors are rethrown with the failing segment identified.
PredictionStore run_probe(const Backend& backend, const TokenizedDocument& doc,
                          const ProbeConfig& config);

struct RunManifest {
  std::string doc_id;
  ProbeConfig config;
  std::string backend_name;
  std::size_t vocab_size = 0;
  std::size_t max_segment_len = 0;
  std::size_t doc_length = 0;
  std::size_t segment_count = 0;
  std::size_t row_count = 0;
  double wall_time_seconds = 0.0;

  std::string to_json() const;
  static RunManifest from_json(const std::string& text);
};

/// run_probe followed by an atomic write: the store goes to a temporary file
/// that is renamed into place only after the whole run succeeded. The manifest
/// is written next to it.
RunManifest probe_to_file(const Backend& backend, const TokenizedDocument& doc,
                          const ProbeConfig& config, const std::filesystem::path& store_path,
                          const std::filesystem::path& manifest_path);

}  // namespace ctxprobe
