// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ctxprobe Authors

#include "ctxprobe/ngram_model.hpp"

#include <cmath>

#include "ctxprobe/error.hpp"

namespace ctxprobe {

std::size_t NGramModel::ContextHash::operator()(const std::vector<TokenId>& key) const noexcept {
  std::size_t h = 1469598103934665603ull;
  for (TokenId id : key) {
    h ^= id;
    h *= 1099511628211ull;
  }
  return h;
}

NGramModel::NGramModel(Vocab vocab, std::size_t order, double alpha,
                       std::size_t max_segment_len)
    : order_(order), alpha_(alpha), tables_(order) {
  if (order < 1) throw Error(ErrorKind::kInvalidArgument, "n-gram order must be >= 1");
  if (!(alpha > 0.0)) throw Error(ErrorKind::kInvalidArgument, "n-gram alpha must be > 0");
  if (vocab.size() < 2) throw Error(ErrorKind::kInvalidArgument, "vocabulary needs >= 2 tokens");
  descriptor_.name = "ngram:" + std::to_string(order);
  descriptor_.vocab = std::move(vocab);
  descriptor_.max_segment_len = max_segment_len;
}

NGramModel NGramModel::train(std::span<const std::vector<TokenId>> corpus, Vocab vocab,
                             std::size_t order, double alpha, std::size_t max_segment_len) {
  NGramModel model(std::move(vocab), order, alpha, max_segment_len);
  std::size_t tokens = 0;
  for (const auto& doc : corpus) tokens += doc.size();
  if (tokens == 0) throw Error(ErrorKind::kInvalidArgument, "n-gram training corpus is empty");

  const std::size_t v = model.vocab_size();
  std::vector<TokenId> key;
  for (const auto& doc : corpus) {
    for (std::size_t j = 0; j < doc.size(); ++j) {
      if (doc[j] >= v) {
        throw Error(ErrorKind::kUnknownToken,
                    "training token id " + std::to_string(doc[j]) + " outside vocabulary");
      }
      for (std::size_t k = 0; k < order && k <= j; ++k) {
        key.assign(doc.begin() + static_cast<std::ptrdiff_t>(j - k),
                   doc.begin() + static_cast<std::ptrdiff_t>(j));
        NextCounts& counts = model.tables_[k][key];
        ++counts.next[doc[j]];
        ++counts.total;
      }
    }
  }
  return model;
}

const NGramModel::NextCounts* NGramModel::find(std::span<const TokenId> context) const {
  if (context.size() >= order_) {
    throw Error(ErrorKind::kInvalidArgument, "context longer than order - 1");
  }
  const Table& table = tables_[context.size()];
  auto it = table.find(std::vector<TokenId>(context.begin(), context.end()));
  return it == table.end() ? nullptr : &it->second;
}

std::uint64_t NGramModel::count(std::span<const TokenId> context, TokenId next) const {
  const NextCounts* counts = find(context);
  if (counts == nullptr) return 0;
  auto it = counts->next.find(next);
  return it == counts->next.end() ? 0 : it->second;
}

std::uint64_t NGramModel::context_total(std::span<const TokenId> context) const {
  const NextCounts* counts = find(context);
  return counts == nullptr ? 0 : counts->total;
}

std::span<const TokenId> NGramModel::truncate(std::span<const TokenId> context) const {
  const std::size_t keep = std::min(context.size(), order_ - 1);
  return context.subspan(context.size() - keep);
}

double NGramModel::probability(std::span<const TokenId> context, TokenId next) const {
  const auto h = truncate(context);
  const double denom = static_cast<double>(context_total(h)) +
                       alpha_ * static_cast<double>(vocab_size());
  return (static_cast<double>(count(h, next)) + alpha_) / denom;
}

void NGramModel::log_distribution(std::span<const TokenId> context, std::span<float> out) const {
  const NextCounts* counts = find(truncate(context));
  const double total = counts ? static_cast<double>(counts->total) : 0.0;
  const double denom = total + alpha_ * static_cast<double>(vocab_size());
  const auto unseen = static_cast<float>(std::log(alpha_ / denom));
  std::fill(out.begin(), out.end(), unseen);
  if (counts == nullptr) return;
  for (const auto& [id, n] : counts->next) {
    out[id] = static_cast<float>(std::log((static_cast<double>(n) + alpha_) / denom));
  }
}

LogProbRows NGramModel::evaluate_unchecked(std::span<const TokenId> segment) const {
  LogProbRows rows(segment.size(), vocab_size());
  for (std::size_t i = 0; i < segment.size(); ++i) {
    log_distribution(segment.first(i + 1), rows.row(i));
  }
  return rows;
}

}  // namespace ctxprobe
