// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ctxprobe Authors

#include "ctxprobe/trigger_model.hpp"

#include <cmath>

#include "ctxprobe/error.hpp"

namespace ctxprobe {

namespace {

std::vector<float> two_point_row(std::size_t vocab_size, TokenId target, double p_target) {
  const double rest = (1.0 - p_target) / static_cast<double>(vocab_size - 1);
  std::vector<float> row(vocab_size, static_cast<float>(std::log(rest)));
  row[target] = static_cast<float>(std::log(p_target));
  return row;
}

}  // namespace

TriggerModel::TriggerModel(Vocab vocab, TriggerParams params, std::size_t max_segment_len)
    : params_(params) {
  const std::size_t v = vocab.size();
  if (v < 2) throw Error(ErrorKind::kInvalidArgument, "vocabulary needs >= 2 tokens");
  if (params.trigger >= v || params.target >= v) {
    throw Error(ErrorKind::kInvalidArgument, "trigger/target ids outside vocabulary");
  }
  if (params.trigger == params.target) {
    throw Error(ErrorKind::kInvalidArgument, "trigger and target must differ");
  }
  if (params.horizon < 1) throw Error(ErrorKind::kInvalidArgument, "horizon must be >= 1");
  if (!(0.0 < params.p_lo && params.p_lo < params.p_hi && params.p_hi < 1.0)) {
    throw Error(ErrorKind::kInvalidArgument, "need 0 < p_lo < p_hi < 1");
  }
  descriptor_.name = "trigger";
  descriptor_.vocab = std::move(vocab);
  descriptor_.max_segment_len = max_segment_len;
  boosted_ = two_point_row(v, params.target, params.p_hi);
  unboosted_ = two_point_row(v, params.target, params.p_lo);
}

bool TriggerModel::trigger_in_horizon(std::span<const TokenId> context) const {
  const std::size_t window = std::min(context.size(), params_.horizon);
  for (std::size_t i = context.size() - window; i < context.size(); ++i) {
    if (context[i] == params_.trigger) return true;
  }
  return false;
}

LogProbRows TriggerModel::evaluate_unchecked(std::span<const TokenId> segment) const {
  LogProbRows rows(segment.size(), vocab_size());
  bool seen = false;
  std::size_t last = 0;  // offset of the most recent trigger
  for (std::size_t i = 0; i < segment.size(); ++i) {
    if (segment[i] == params_.trigger) {
      seen = true;
      last = i;
    }
    const bool boosted = seen && i - last < params_.horizon;
    const auto& src = boosted ? boosted_ : unboosted_;
    std::copy(src.begin(), src.end(), rows.row(i).begin());
  }
  return rows;
}

}  // namespace ctxprobe
