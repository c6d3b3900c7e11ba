// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ctxprobe Authors

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "ctxprobe/types.hpp"

namespace ctxprobe {

/// One sliding-window evaluation: tokens x_start .. x_{start+length-1}
/// (1-based). Row i of the window predicts x_{start+i} from context length i.
struct Segment {
  std::size_t start = 0;
  std::size_t length = 0;

  bool operator==(const Segment&) const = default;
};

struct StoreShape {
  std::size_t doc_length = 0;  // N
  std::size_t c_max = 0;
  std::size_t stride = 1;
  std::size_t vocab_size = 0;
  StoreDtype dtype = StoreDtype::kFloat32;

  bool operator==(const StoreShape&) const = default;
};

/// Position of one stored row.
struct CellAddress {
  std::size_t segment = 0;     // index into segments()
  std::size_t offset = 0;      // row within the segment, equals c' - 1
  std::size_t row = 0;         // global row index into the payload
  std::size_t context = 0;     // effective context length c'
};

/// Raw per-segment next-token log-probabilities with the index arithmetic
/// that realizes the (N-1) x c_max x |V| table without materializing it.
///
/// Cell (n, c) is clamped to c' = min(c, n, c_max) and lives in the segment
/// starting at s = n - c' + 1, at in-segment offset c' - 1. With stride k only
/// cells with (n - c') mod k == 0 exist.
///
/// Immutable; safe to share between threads.
class PredictionStore {
 public:
  PredictionStore() = default;

  const StoreShape& shape() const noexcept { return shape_; }
  std::size_t doc_length() const noexcept { return shape_.doc_length; }
  std::size_t c_max() const noexcept { return shape_.c_max; }
  std::size_t stride() const noexcept { return shape_.stride; }
  std::size_t vocab_size() const noexcept { return shape_.vocab_size; }
  StoreDtype dtype() const noexcept { return shape_.dtype; }
  const std::vector<Segment>& segments() const noexcept { return segments_; }
  std::size_t row_count() const noexcept { return row_count_; }

  /// min(c, n, c_max); n must be a valid target position.
  std::size_t effective_context(std::size_t n, std::size_t c) const;
  /// min(n, c_max).
  std::size_t max_context(std::size_t n) const;

  bool covers(std::size_t n, std::size_t c) const;
  CellAddress locate(std::size_t n, std::size_t c) const;

  std::vector<float> cell_lookup(std::size_t n, std::size_t c) const;
  void read_cell(std::size_t n, std::size_t c, std::span<float> out) const;
  void read_row(std::size_t row, std::span<float> out) const;

  /// Covered context lengths for target n, ascending.
  std::vector<std::size_t> covered_contexts(std::size_t n) const;

  /// Bitwise comparison of header, segment table and payload.
  bool operator==(const PredictionStore& other) const;

  void save(const std::filesystem::path& path) const;
  static PredictionStore load(const std::filesystem::path& path);

 private:
  friend class StoreWriter;

  static PredictionStore allocate(const StoreShape& shape, std::vector<Segment> segments);
  void check_target(std::size_t n) const;

  StoreShape shape_;
  std::vector<Segment> segments_;
  std::vector<std::size_t> segment_offsets_;  // first row of each segment
  std::size_t row_count_ = 0;
  std::vector<float> f32_;
  std::vector<std::uint16_t> f16_;
};

/// Canonical segment table for (N, c_max, stride); the layout every store uses.
std::vector<Segment> canonical_segments(std::size_t doc_length, std::size_t c_max,
                                        std::size_t stride);

/// Builds a store. Concurrent write_segment() calls on distinct segments are
/// safe; finalize() must run after all writers have joined.
class StoreWriter {
 public:
  StoreWriter(const StoreShape& shape, std::vector<Segment> segments);

  const StoreShape& shape() const noexcept { return store_.shape_; }
  const std::vector<Segment>& segments() const noexcept { return store_.segments_; }

  /// `log_probs` holds segments()[index].length rows of vocab_size values.
  void write_segment(std::size_t index, std::span<const float> log_probs);

  PredictionStore finalize() &&;

 private:
  PredictionStore store_;
  std::vector<std::uint8_t> written_;
};

}  // namespace ctxprobe
