// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ctxprobe Authors

#include "ctxprobe/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <thread>

#include "ctxprobe/backend.hpp"
#include "ctxprobe/error.hpp"
#include "json_util.hpp"

namespace ctxprobe {

using nlohmann::json;

namespace {

constexpr double kClampWindow = 1e-12;

std::vector<double> centred(std::span<const float> row) {
  const double lse = log_sum_exp(row);
  std::vector<double> out(row.size());
  for (std::size_t i = 0; i < row.size(); ++i) out[i] = double{row[i]} - lse;
  return out;
}

double kl_centred(std::span<const double> ref, std::span<const double> other) {
  double sum = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    if (ref[i] == -std::numeric_limits<double>::infinity()) continue;
    if (other[i] == -std::numeric_limits<double>::infinity()) {
      return std::numeric_limits<double>::infinity();
    }
    sum += std::exp(ref[i]) * (ref[i] - other[i]);
  }
  if (sum < 0.0) {
    if (sum < -kClampWindow) {
      throw Error(ErrorKind::kInternal, "negative KL divergence " + std::to_string(sum));
    }
    sum = 0.0;
  }
  return sum;
}

void check_doc(const PredictionStore& store, const TokenizedDocument& doc) {
  if (doc.size() != store.doc_length()) {
    throw Error(ErrorKind::kInvalidArgument,
                "document '" + doc.doc_id + "' has " + std::to_string(doc.size()) +
                    " tokens but the store was built for " + std::to_string(store.doc_length()));
  }
}

TargetMetrics compute_target(const PredictionStore& store, const TokenizedDocument& doc,
                             std::size_t n) {
  TargetMetrics t;
  t.n = n;
  t.target_id = doc.token_at(n + 1);
  t.c_eff = store.max_context(n);
  t.c_ref = reference_context(store, n);
  std::vector<float> row(store.vocab_size());
  store.read_cell(n, t.c_ref, row);
  const std::vector<double> ref = centred(row);

  for (std::size_t c : store.covered_contexts(n)) {
    store.read_cell(n, c, row);
    t.nll.push_back({c, -double{row[t.target_id]}});
    t.kl.push_back({c, kl_centred(ref, centred(row))});
  }
  t.delta_kl = deltas_from_curve(n, store.stride(), t.kl);
  t.delta_nll = deltas_from_curve(n, store.stride(), t.nll);
  return t;
}

}  // namespace

const char* to_string(DeltaKind kind) { return kind == DeltaKind::kKl ? "kl" : "nll"; }

double nll(const PredictionStore& store, const TokenizedDocument& doc, std::size_t n,
           std::size_t c) {
  check_doc(store, doc);
  const std::vector<float> row = store.cell_lookup(n, c);
  return -double{row[doc.token_at(n + 1)]};
}

std::size_t reference_context(const PredictionStore& store, std::size_t n) {
  const std::size_t c_eff = store.max_context(n);
  const std::size_t k = store.stride();
  // largest c <= c_eff with (n - c) mod k == 0
  const std::size_t back = (k - (n - c_eff) % k) % k;
  if (back >= c_eff) {
    throw Error(ErrorKind::kCellNotCovered,
                "no covered context for target n=" + std::to_string(n));
  }
  return c_eff - back;
}

double kl_divergence(std::span<const float> reference, std::span<const float> other) {
  if (reference.size() != other.size()) {
    throw Error(ErrorKind::kInvalidArgument, "KL rows differ in length");
  }
  return kl_centred(centred(reference), centred(other));
}

double kl_to_max_context(const PredictionStore& store, std::size_t n, std::size_t c) {
  const std::size_t c_ref = reference_context(store, n);
  const std::vector<float> ref = store.cell_lookup(n, c_ref);
  const std::vector<float> row = store.cell_lookup(n, c);
  return kl_divergence(ref, row);
}

DeltaScores deltas_from_curve(std::size_t n, std::size_t stride,
                              std::span<const CurvePoint> curve) {
  DeltaScores out;
  if (curve.size() < 2) return out;
  out.reserve(curve.size() - 1);
  for (std::size_t i = curve.size() - 1; i-- > 0;) {
    const CurvePoint& shorter = curve[i];
    const CurvePoint& longer = curve[i + 1];
    if (longer.c != shorter.c + stride) continue;
    out.push_back({n - longer.c + 1, shorter.value - longer.value});
  }
  return out;  // longest context first -> ascending m
}

DeltaScores delta_scores(const PredictionStore& store, const TokenizedDocument& doc,
                         std::size_t n, DeltaKind kind) {
  check_doc(store, doc);
  const TargetMetrics t = compute_target(store, doc, n);
  return kind == DeltaKind::kKl ? t.delta_kl : t.delta_nll;
}

NormalizedWeights normalized_delta_magnitudes(const DeltaScores& deltas) {
  NormalizedWeights out;
  double total = 0.0;
  for (const auto& d : deltas) total += std::abs(d.score);
  if (!(total > 0.0)) {
    out.flagged_empty = true;
    return out;
  }
  out.weights.reserve(deltas.size());
  for (const auto& d : deltas) out.weights.push_back({d.m, std::abs(d.score) / total});
  return out;
}

const TargetMetrics& MetricSeries::target(std::size_t n) const {
  if (n < 1 || n > targets.size()) {
    throw Error(ErrorKind::kOutOfRange, "target n=" + std::to_string(n) + " not in series");
  }
  return targets[n - 1];
}

MetricSeries compute_series(const PredictionStore& store, const TokenizedDocument& doc,
                            std::size_t parallelism) {
  check_doc(store, doc);
  MetricSeries series;
  series.doc_id = doc.doc_id;
  series.doc_length = store.doc_length();
  series.c_max = store.c_max();
  series.stride = store.stride();
  const std::size_t targets = store.doc_length() - 1;
  series.targets.resize(targets);

  const std::size_t threads = std::clamp<std::size_t>(parallelism, 1, targets);
  std::vector<std::exception_ptr> errors(threads);
  auto work = [&](std::size_t first) {
    try {
      for (std::size_t i = first; i < targets; i += threads) {
        series.targets[i] = compute_target(store, doc, i + 1);
      }
    } catch (...) {
      errors[first] = std::current_exception();
    }
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work, t);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return series;
}

namespace {

json curve_to_json(const std::vector<CurvePoint>& curve) {
  json out = json::array();
  for (const auto& p : curve) out.push_back({p.c, detail::number_to_json(p.value)});
  return out;
}

std::vector<CurvePoint> curve_from_json(const json& j) {
  std::vector<CurvePoint> out;
  for (const auto& p : j) out.push_back({p.at(0).get<std::size_t>(), detail::number_from_json(p.at(1))});
  return out;
}

json deltas_to_json(const DeltaScores& deltas) {
  json out = json::array();
  for (const auto& d : deltas) out.push_back({d.m, detail::number_to_json(d.score)});
  return out;
}

DeltaScores deltas_from_json(const json& j) {
  DeltaScores out;
  for (const auto& d : j) out.push_back({d.at(0).get<std::size_t>(), detail::number_from_json(d.at(1))});
  return out;
}

}  // namespace

std::string MetricSeries::to_json() const {
  json out = {{"doc_id", doc_id}, {"doc_length", doc_length}, {"c_max", c_max}, {"stride", stride}};
  json list = json::array();
  for (const auto& t : targets) {
    list.push_back({{"n", t.n},
                    {"target_id", t.target_id},
                    {"c_eff", t.c_eff},
                    {"c_ref", t.c_ref},
                    {"nll", curve_to_json(t.nll)},
                    {"kl", curve_to_json(t.kl)},
                    {"delta_kl", deltas_to_json(t.delta_kl)},
                    {"delta_nll", deltas_to_json(t.delta_nll)}});
  }
  out["targets"] = std::move(list);
  return out.dump();
}

MetricSeries MetricSeries::from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    MetricSeries s;
    s.doc_id = j.at("doc_id").get<std::string>();
    s.doc_length = j.at("doc_length").get<std::size_t>();
    s.c_max = j.at("c_max").get<std::size_t>();
    s.stride = j.at("stride").get<std::size_t>();
    for (const auto& t : j.at("targets")) {
      TargetMetrics m;
      m.n = t.at("n").get<std::size_t>();
      m.target_id = t.at("target_id").get<TokenId>();
      m.c_eff = t.at("c_eff").get<std::size_t>();
      m.c_ref = t.at("c_ref").get<std::size_t>();
      m.nll = curve_from_json(t.at("nll"));
      m.kl = curve_from_json(t.at("kl"));
      m.delta_kl = deltas_from_json(t.at("delta_kl"));
      m.delta_nll = deltas_from_json(t.at("delta_nll"));
      s.targets.push_back(std::move(m));
    }
    return s;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kDataFormat, std::string("metric series: ") + e.what());
  }
}

}  // namespace ctxprobe
