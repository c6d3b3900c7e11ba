// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ctxprobe Authors

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ctxprobe/prediction_store.hpp"
#include "ctxprobe/types.hpp"

namespace ctxprobe {

// All logarithms are natural; metric values are in nats.

enum class DeltaKind { kKl, kNll };

const char* to_string(DeltaKind kind);

/// Differential importance of context token x_m for target x_{n+1}: the drop
/// in the metric when x_m enters the context,
///
///   delta(n, m) = D(n, n - m) - D(n, n - m + 1),
///
/// defined when both lengths are covered and lie in [1, c_eff(n)]. The
/// immediately preceding token x_n would need a zero-length context and has
/// no score. With stride k the pair is (c, c + k) and the score goes to the
/// farthest entering token, m = n - c - k + 1.
struct DeltaScore {
  std::size_t m = 0;
  double score = 0.0;

  bool operator==(const DeltaScore&) const = default;
};

using DeltaScores = std::vector<DeltaScore>;  // ascending m

/// -log P(x_{n+1} | x_{n-c+1..n}) read straight from the stored cell.
double nll(const PredictionStore& store, const TokenizedDocument& doc, std::size_t n,
           std::size_t c);

/// Largest covered context length <= c_eff(n); equals c_eff(n) at stride 1.
std::size_t reference_context(const PredictionStore& store, std::size_t n);

/// D_KL[P(n, c_ref) || P(n, c)]. Rows are re-centred by their double-precision
/// log-sum-exp first. Zero reference mass contributes nothing; zero mass in the
/// shorter-context row under nonzero reference mass yields +inf.
double kl_to_max_context(const PredictionStore& store, std::size_t n, std::size_t c);

/// KL divergence between two log-probability rows (each re-centred).
double kl_divergence(std::span<const float> reference, std::span<const float> other);

DeltaScores delta_scores(const PredictionStore& store, const TokenizedDocument& doc,
                         std::size_t n, DeltaKind kind);

struct NormalizedWeights {
  bool flagged_empty = false;  // every |delta| was zero
  DeltaScores weights;         // |delta_m| / sum |delta|
};

NormalizedWeights normalized_delta_magnitudes(const DeltaScores& deltas);

struct CurvePoint {
  std::size_t c = 0;
  double value = 0.0;

  bool operator==(const CurvePoint&) const = default;
};

struct TargetMetrics {
  std::size_t n = 0;
  TokenId target_id = 0;
  std::size_t c_eff = 0;  // min(n, c_max)
  std::size_t c_ref = 0;  // KL reference context
  std::vector<CurvePoint> nll;  // covered c, ascending
  std::vector<CurvePoint> kl;
  DeltaScores delta_kl;
  DeltaScores delta_nll;

  bool operator==(const TargetMetrics&) const = default;
};

struct MetricSeries {
  std::string doc_id;
  std::size_t doc_length = 0;
  std::size_t c_max = 0;
  std::size_t stride = 1;
  std::vector<TargetMetrics> targets;  // targets[n - 1]

  const TargetMetrics& target(std::size_t n) const;

  std::string to_json() const;
  static MetricSeries from_json(const std::string& text);

  bool operator==(const MetricSeries&) const = default;
};

/// All per-target metrics of a finalized store; targets are split across
/// `parallelism` threads.
MetricSeries compute_series(const PredictionStore& store, const TokenizedDocument& doc,
                            std::size_t parallelism = 1);

/// Delta scores from a metric curve over covered context lengths.
DeltaScores deltas_from_curve(std::size_t n, std::size_t stride,
                              std::span<const CurvePoint> curve);

}  // namespace ctxprobe
