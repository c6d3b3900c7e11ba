// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ctxprobe Authors

#include "ctxprobe/aggregate.hpp"

#include <cmath>

#include "ctxprobe/error.hpp"
#include "json_util.hpp"

namespace ctxprobe {

using nlohmann::json;

void Moments::add(double x) {
  ++count;
  const double delta = x - mean;
  mean += delta / static_cast<double>(count);
  m2 += delta * (x - mean);
}

void Moments::merge(const Moments& other) {
  if (other.count == 0) return;
  if (count == 0) {
    *this = other;
    return;
  }
  const auto na = static_cast<double>(count);
  const auto nb = static_cast<double>(other.count);
  const double delta = other.mean - mean;
  const double total = na + nb;
  mean += delta * nb / total;
  m2 += other.m2 + delta * delta * na * nb / total;
  count += other.count;
}

double Moments::stddev() const {
  return count == 0 ? 0.0 : std::sqrt(std::max(0.0, m2 / static_cast<double>(count)));
}

AggregateAccumulator::AggregateAccumulator(AggregateConfig config) : config_(config) {
  if (config_.min_pos_count < 1) {
    throw Error(ErrorKind::kInvalidArgument, "min_pos_count must be >= 1");
  }
}

void AggregateAccumulator::check_shape(std::size_t c_max, std::size_t stride) {
  if (documents_ == 0 && c_max_ == 0) {
    c_max_ = c_max;
    stride_ = stride;
    loss_.assign(c_max, {});
    decay_.assign(c_max, {});
    decay_zero_.assign(c_max, 0);
    return;
  }
  if (c_max != c_max_ || stride != stride_) {
    throw Error(ErrorKind::kInvalidArgument,
                "series disagree on c_max/stride (" + std::to_string(c_max) + "/" +
                    std::to_string(stride) + " vs " + std::to_string(c_max_) + "/" +
                    std::to_string(stride_) + ")");
  }
}

void AggregateAccumulator::add(const MetricSeries& series, const TokenizedDocument* doc) {
  check_shape(series.c_max, series.stride);
  const bool tagged = doc != nullptr && doc->has_pos_tags();
  if (doc != nullptr && doc->size() != series.doc_length) {
    throw Error(ErrorKind::kInvalidArgument, "document '" + doc->doc_id +
                                                 "' does not match series '" + series.doc_id + "'");
  }
  ++documents_;
  if (tagged) ++tagged_documents_;

  for (const TargetMetrics& t : series.targets) {
    const std::string* tag = tagged ? &doc->pos_tags[t.n] : nullptr;  // tag of x_{n+1}
    const bool grouped = tag != nullptr && *tag != kNoTag;
    std::vector<Moments>* group = nullptr;
    if (grouped) {
      ++tag_occurrences_[*tag];
      auto& curves = loss_by_tag_[*tag];
      if (curves.empty()) curves.assign(c_max_, {});
      group = &curves;
    }
    for (const CurvePoint& p : t.nll) {
      if (p.c > t.c_eff) continue;
      loss_[p.c - 1].add(p.value);
      if (group) (*group)[p.c - 1].add(p.value);
    }

    if (stride_ != 1) continue;
    const DeltaScores& deltas = config_.delta_kind == DeltaKind::kKl ? t.delta_kl : t.delta_nll;
    if (tagged) {
      for (const DeltaScore& d : deltas) {
        const std::string& context_tag = doc->pos_tags[d.m - 1];
        if (context_tag != kNoTag) delta_by_tag_[context_tag].add(d.score);
      }
    }
    if (t.n >= config_.min_position) {
      ++decay_targets_;
      const NormalizedWeights w = normalized_delta_magnitudes(deltas);
      if (w.flagged_empty) {
        ++decay_flagged_;
        continue;
      }
      for (const DeltaScore& entry : w.weights) {
        const std::size_t c = t.n - entry.m + 1;
        if (entry.score == 0.0) {
          ++decay_zero_[c - 1];
        } else {
          decay_[c - 1].add(std::log10(entry.score));
        }
      }
    }
  }
}

void AggregateAccumulator::merge(const AggregateAccumulator& other) {
  if (other.documents_ == 0) return;
  if (documents_ == 0) {
    const AggregateConfig mine = config_;
    *this = other;
    config_ = mine;
    return;
  }
  check_shape(other.c_max_, other.stride_);
  documents_ += other.documents_;
  tagged_documents_ += other.tagged_documents_;
  for (std::size_t i = 0; i < c_max_; ++i) {
    loss_[i].merge(other.loss_[i]);
    decay_[i].merge(other.decay_[i]);
    decay_zero_[i] += other.decay_zero_[i];
  }
  for (const auto& [tag, curves] : other.loss_by_tag_) {
    auto& mine = loss_by_tag_[tag];
    if (mine.empty()) mine.assign(c_max_, {});
    for (std::size_t i = 0; i < c_max_; ++i) mine[i].merge(curves[i]);
  }
  for (const auto& [tag, n] : other.tag_occurrences_) tag_occurrences_[tag] += n;
  for (const auto& [tag, m] : other.delta_by_tag_) delta_by_tag_[tag].merge(m);
  decay_targets_ += other.decay_targets_;
  decay_flagged_ += other.decay_flagged_;
}

namespace {

std::vector<CurveStat> to_curve(const std::vector<Moments>& moments) {
  std::vector<CurveStat> out;
  for (std::size_t i = 0; i < moments.size(); ++i) {
    if (moments[i].count == 0) continue;
    out.push_back({i + 1, moments[i].mean, moments[i].stddev(), moments[i].count});
  }
  return out;
}

}  // namespace

std::vector<CurveStat> AggregateAccumulator::loss_by_c() const { return to_curve(loss_); }

std::vector<TagCurve> AggregateAccumulator::loss_by_pos() const {
  std::vector<TagCurve> out;
  for (const auto& [tag, curves] : loss_by_tag_) {
    const std::size_t occurrences = tag_occurrences_.at(tag);
    if (occurrences < config_.min_pos_count) continue;
    out.push_back({tag, occurrences, to_curve(curves)});
  }
  return out;
}

DecayResult AggregateAccumulator::delta_decay() const {
  DecayResult out;
  out.qualifying_targets = decay_targets_ - decay_flagged_;
  out.flagged_targets = decay_flagged_;
  if (stride_ != 1) {
    out.empty_reason = "delta decay needs a stride-1 run";
    return out;
  }
  for (std::size_t i = 0; i < decay_.size(); ++i) {
    if (decay_[i].count == 0 && decay_zero_[i] == 0) continue;
    out.points.push_back({i + 1, decay_[i].mean, decay_[i].stddev(), decay_[i].count, decay_zero_[i]});
  }
  if (decay_targets_ == 0) {
    out.empty_reason = "no targets at positions n >= " + std::to_string(config_.min_position);
  } else if (out.qualifying_targets == 0) {
    out.empty_reason = "all " + std::to_string(decay_targets_) +
                       " targets at n >= " + std::to_string(config_.min_position) +
                       " have all-zero delta scores";
  }
  return out;
}

std::vector<TagMean> AggregateAccumulator::delta_by_pos() const {
  std::vector<TagMean> out;
  for (const auto& [tag, m] : delta_by_tag_) out.push_back({tag, m.mean, m.stddev(), m.count});
  return out;
}

AggregateReport AggregateAccumulator::report() const {
  if (documents_ == 0) throw Error(ErrorKind::kInvalidArgument, "no metric series to aggregate");
  AggregateReport r;
  r.config = config_;
  r.c_max = c_max_;
  r.stride = stride_;
  r.documents = documents_;
  r.loss_by_c = loss_by_c();
  if (tagged_documents_ == 0) {
    r.pos_empty_reason = "no POS-tagged documents";
  } else {
    r.loss_by_c_and_pos = loss_by_pos();
    r.delta_by_pos = delta_by_pos();
  }
  r.delta_decay = delta_decay();
  return r;
}

namespace {

void require_series(std::span<const MetricSeries> series) {
  if (series.empty()) throw Error(ErrorKind::kInvalidArgument, "empty series set");
}

void require_stride_one(std::span<const MetricSeries> series) {
  for (const auto& s : series) {
    if (s.stride != 1) {
      throw Error(ErrorKind::kInvalidArgument,
                  "series '" + s.doc_id + "' has stride " + std::to_string(s.stride) +
                      "; delta aggregation needs stride 1");
    }
  }
}

AggregateAccumulator accumulate(std::span<const MetricSeries> series,
                                std::span<const TokenizedDocument> docs,
                                const AggregateConfig& config) {
  if (!docs.empty() && docs.size() != series.size()) {
    throw Error(ErrorKind::kInvalidArgument, "series and document counts differ");
  }
  AggregateAccumulator acc(config);
  for (std::size_t i = 0; i < series.size(); ++i) {
    acc.add(series[i], docs.empty() ? nullptr : &docs[i]);
  }
  return acc;
}

}  // namespace

std::vector<CurveStat> mean_loss_by_context_length(std::span<const MetricSeries> series) {
  require_series(series);
  return accumulate(series, {}, {}).loss_by_c();
}

std::vector<TagCurve> mean_loss_by_pos(std::span<const MetricSeries> series,
                                       std::span<const TokenizedDocument> docs,
                                       std::size_t min_count) {
  require_series(series);
  AggregateConfig config;
  config.min_pos_count = min_count;
  const AggregateAccumulator acc = accumulate(series, docs, config);
  if (acc.tagged_documents() == 0) throw Error(ErrorKind::kDataFormat, "no tagged documents");
  return acc.loss_by_pos();
}

DecayResult delta_magnitude_decay(std::span<const MetricSeries> series, std::size_t min_position,
                                  DeltaKind kind) {
  require_series(series);
  require_stride_one(series);
  AggregateConfig config;
  config.min_position = min_position;
  config.delta_kind = kind;
  return accumulate(series, {}, config).delta_decay();
}

std::vector<TagMean> mean_delta_by_pos(std::span<const MetricSeries> series,
                                       std::span<const TokenizedDocument> docs, DeltaKind kind) {
  require_series(series);
  require_stride_one(series);
  AggregateConfig config;
  config.delta_kind = kind;
  const AggregateAccumulator acc = accumulate(series, docs, config);
  if (acc.tagged_documents() == 0) throw Error(ErrorKind::kDataFormat, "no tagged documents");
  return acc.delta_by_pos();
}

AggregateReport aggregate(std::span<const MetricSeries> series,
                          std::span<const TokenizedDocument> docs,
                          const AggregateConfig& config) {
  require_series(series);
  return accumulate(series, docs, config).report();
}

std::string AggregateReport::to_json() const {
  using detail::number_to_json;
  auto curve_json = [](const std::vector<CurveStat>& curve) {
    json out = json::array();
    for (const auto& p : curve) {
      out.push_back({{"c", p.c},
                     {"mean", number_to_json(p.mean)},
                     {"std", number_to_json(p.stddev)},
                     {"count", p.count}});
    }
    return out;
  };
  json j;
  j["config"] = {{"min_pos_count", config.min_pos_count},
                 {"min_position", config.min_position},
                 {"delta_kind", to_string(config.delta_kind)}};
  j["c_max"] = c_max;
  j["stride"] = stride;
  j["documents"] = documents;
  j["loss_by_c"] = curve_json(loss_by_c);
  json by_pos = json::object();
  for (const auto& tc : loss_by_c_and_pos) {
    by_pos[tc.tag] = {{"occurrences", tc.occurrences}, {"curve", curve_json(tc.points)}};
  }
  j["loss_by_c_and_pos"] = std::move(by_pos);
  j["pos_empty_reason"] = pos_empty_reason ? json(*pos_empty_reason) : json(nullptr);
  json decay = json::array();
  for (const auto& p : delta_decay.points) {
    decay.push_back({{"c", p.c},
                     {"mean_log10_weight", number_to_json(p.mean)},
                     {"std", number_to_json(p.stddev)},
                     {"count", p.count},
                     {"zero_count", p.zero_count}});
  }
  j["delta_decay"] = {
      {"points", std::move(decay)},
      {"qualifying_targets", delta_decay.qualifying_targets},
      {"flagged_targets", delta_decay.flagged_targets},
      {"empty_reason", delta_decay.empty_reason ? json(*delta_decay.empty_reason) : json(nullptr)}};
  json by_tag = json::object();
  for (const auto& t : delta_by_pos) {
    by_tag[t.tag] = {
        {"mean", number_to_json(t.mean)}, {"std", number_to_json(t.stddev)}, {"count", t.count}};
  }
  j["delta_by_pos"] = std::move(by_tag);
  return j.dump(2);
}

}  // namespace ctxprobe
