// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ctxprobe Authors

#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ctxprobe/metrics.hpp"
#include "ctxprobe/types.hpp"

namespace ctxprobe {

/// Streaming mean / variance (Welford, with Chan's merge).
struct Moments {
  std::size_t count = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x);
  void merge(const Moments& other);
  double stddev() const;  // population
};

struct CurveStat {
  std::size_t c = 0;
  double mean = 0.0;
  double stddev = 0.0;
  std::size_t count = 0;
};

struct TagCurve {
  std::string tag;
  std::size_t occurrences = 0;  // targets carrying the tag
  std::vector<CurveStat> points;
};

/// log10 of normalized |delta| weights, keyed by the context length at which
/// the context token enters (c = n - m + 1). Exact-zero weights have no
/// logarithm and are only counted.
struct DecayStat {
  std::size_t c = 0;
  double mean = 0.0;
  double stddev = 0.0;
  std::size_t count = 0;
  std::size_t zero_count = 0;
};

struct DecayResult {
  std::vector<DecayStat> points;
  std::size_t qualifying_targets = 0;
  std::size_t flagged_targets = 0;  // all-zero delta vectors, excluded
  std::optional<std::string> empty_reason;
};

struct TagMean {
  std::string tag;
  double mean = 0.0;
  double stddev = 0.0;
  std::size_t count = 0;
};

struct AggregateConfig {
  std::size_t min_pos_count = 100;
  std::size_t min_position = 1024;
  DeltaKind delta_kind = DeltaKind::kKl;
};

struct AggregateReport {
  AggregateConfig config;
  std::size_t c_max = 0;
  std::size_t stride = 1;
  std::size_t documents = 0;
  std::vector<CurveStat> loss_by_c;
  std::vector<TagCurve> loss_by_c_and_pos;
  std::optional<std::string> pos_empty_reason;
  DecayResult delta_decay;
  std::vector<TagMean> delta_by_pos;

  std::string to_json() const;
};

/// Per-document partial sums. Partials merge in any order, so documents can
/// be reduced in parallel.
class AggregateAccumulator {
 public:
  explicit AggregateAccumulator(AggregateConfig config = {});

  /// `doc` supplies POS tags; without it (or without tags) only the
  /// tag-independent pipelines see this document.
  void add(const MetricSeries& series, const TokenizedDocument* doc = nullptr);
  void merge(const AggregateAccumulator& other);

  /// Throws when nothing was added.
  AggregateReport report() const;

  std::vector<CurveStat> loss_by_c() const;
  std::vector<TagCurve> loss_by_pos() const;
  DecayResult delta_decay() const;
  std::vector<TagMean> delta_by_pos() const;

  std::size_t documents() const noexcept { return documents_; }
  std::size_t tagged_documents() const noexcept { return tagged_documents_; }

 private:
  void check_shape(std::size_t c_max, std::size_t stride);

  AggregateConfig config_;
  std::size_t c_max_ = 0;
  std::size_t stride_ = 0;
  std::size_t documents_ = 0;
  std::size_t tagged_documents_ = 0;
  std::vector<Moments> loss_;
  std::map<std::string, std::vector<Moments>> loss_by_tag_;
  std::map<std::string, std::size_t> tag_occurrences_;
  std::vector<Moments> decay_;
  std::vector<std::size_t> decay_zero_;
  std::size_t decay_targets_ = 0;
  std::size_t decay_flagged_ = 0;
  std::map<std::string, Moments> delta_by_tag_;
};

std::vector<CurveStat> mean_loss_by_context_length(std::span<const MetricSeries> series);

std::vector<TagCurve> mean_loss_by_pos(std::span<const MetricSeries> series,
                                       std::span<const TokenizedDocument> docs,
                                       std::size_t min_count = 100);

DecayResult delta_magnitude_decay(std::span<const MetricSeries> series,
                                  std::size_t min_position = 1024,
                                  DeltaKind kind = DeltaKind::kKl);

std::vector<TagMean> mean_delta_by_pos(std::span<const MetricSeries> series,
                                       std::span<const TokenizedDocument> docs,
                                       DeltaKind kind = DeltaKind::kKl);

AggregateReport aggregate(std::span<const MetricSeries> series,
                          std::span<const TokenizedDocument> docs,
                          const AggregateConfig& config = {});

}  // namespace ctxprobe
