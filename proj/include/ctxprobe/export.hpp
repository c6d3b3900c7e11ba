// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ctxprobe Authors

#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "ctxprobe/aggregate.hpp"
#include "ctxprobe/metrics.hpp"
#include "ctxprobe/prediction_store.hpp"
#include "ctxprobe/types.hpp"

namespace ctxprobe {

inline constexpr const char* kBundleSchemaVersion = "1.0";
inline constexpr std::size_t kFullResolutionContexts = 64;
/// Geometric step above kFullResolutionContexts: eight points per doubling.
inline constexpr double kGeometricRatio = 1.0905077326652577;  // 2^(1/8)

struct TopPrediction {
  TokenId id = 0;
  std::string token;
  float probability = 0.0f;

  bool operator==(const TopPrediction&) const = default;
};

struct BundleTarget {
  std::size_t n = 0;
  TokenId target_id = 0;
  std::size_t c_eff = 0;
  std::size_t c_ref = 0;
  std::vector<std::size_t> retained_c;
  std::vector<double> nll;  // aligned with retained_c
  std::vector<double> kl;
  DeltaScores delta_kl;
  DeltaScores delta_nll;
  std::vector<std::vector<TopPrediction>> top_k;  // aligned with retained_c

  bool operator==(const BundleTarget&) const = default;
};

struct BundleDocument {
  std::string doc_id;
  std::string text;
  std::vector<std::string> tokens;
  std::vector<TokenId> token_ids;
  std::vector<CharSpan> spans;
  std::vector<std::string> pos_tags;

  bool operator==(const BundleDocument&) const = default;
};

struct BundleManifest {
  std::string backend;
  std::size_t vocab_size = 0;
  std::size_t c_max = 0;
  std::size_t stride = 1;
  std::string dtype;
  std::size_t top_k = 0;
  bool full_resolution = false;

  bool operator==(const BundleManifest&) const = default;
};

struct ViewerBundle {
  std::string schema_version = kBundleSchemaVersion;
  BundleDocument doc;
  std::vector<BundleTarget> targets;
  BundleManifest manifest;

  std::string to_json() const;
  /// Rejects malformed bundles and unknown major schema versions.
  static ViewerBundle from_json(const std::string& text);

  bool operator==(const ViewerBundle&) const = default;
};

struct ExportOptions {
  std::size_t top_k = 10;
  bool full_resolution = false;
  std::string backend_name;
};

/// Context lengths kept in a bundle: every covered c <= 64, then the smallest
/// covered c at or above each point of a geometric progression from 64 with
/// ratio 2^(1/8), and always c_ref. `covered` is ascending.
std::vector<std::size_t> retained_contexts(const std::vector<std::size_t>& covered,
                                           std::size_t c_ref, bool full_resolution);

/// The k most probable tokens of a stored row, probabilities normalized in
/// double and emitted as 32-bit floats; ties resolve to the lower id.
std::vector<TopPrediction> top_predictions(std::span<const float> log_probs, std::size_t k,
                                           const Vocab& vocab);

ViewerBundle build_viewer_bundle(const TokenizedDocument& doc, const Vocab& vocab,
                                 const MetricSeries& series, const PredictionStore& store,
                                 const ExportOptions& options);

void export_viewer_bundle(const std::filesystem::path& path, const TokenizedDocument& doc,
                          const Vocab& vocab, const MetricSeries& series,
                          const PredictionStore& store, const ExportOptions& options);

struct CsvFiles {
  std::filesystem::path loss_by_context;  // fig2
  std::filesystem::path loss_by_pos;      // fig3
  std::filesystem::path delta_decay;      // fig4
  std::filesystem::path delta_by_pos;     // fig6
};

/// Writes the four figure tables (columns: group,c,mean,std,count).
CsvFiles export_curves_csv(const AggregateReport& report, const std::filesystem::path& dir);

/// Writes `text` to `path` through a temporary file and a rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& text);
std::string read_file(const std::filesystem::path& path);

}  // namespace ctxprobe
