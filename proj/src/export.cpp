// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ctxprobe Authors

#include "ctxprobe/export.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "ctxprobe/backend.hpp"
#include "ctxprobe/error.hpp"
#include "json_util.hpp"

namespace ctxprobe {

using nlohmann::json;
using detail::number_from_json;
using detail::number_to_json;

std::vector<std::size_t> retained_contexts(const std::vector<std::size_t>& covered,
                                           std::size_t c_ref, bool full_resolution) {
  std::vector<std::size_t> out;
  for (std::size_t c : covered) {
    if (c > c_ref) break;
    if (full_resolution || c <= kFullResolutionContexts) out.push_back(c);
  }
  if (full_resolution) return out;

  double point = static_cast<double>(kFullResolutionContexts);
  while (true) {
    point *= kGeometricRatio;
    const auto wanted = static_cast<std::size_t>(std::ceil(point - 1e-9));
    if (wanted > c_ref) break;
    auto it = std::lower_bound(covered.begin(), covered.end(), wanted);
    if (it == covered.end() || *it > c_ref) break;
    if (out.empty() || *it > out.back()) out.push_back(*it);
  }
  if (out.empty() || out.back() != c_ref) out.push_back(c_ref);
  return out;
}

std::vector<TopPrediction> top_predictions(std::span<const float> log_probs, std::size_t k,
                                           const Vocab& vocab) {
  k = std::min(k, log_probs.size());
  std::vector<std::size_t> order(log_probs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (log_probs[a] != log_probs[b]) return log_probs[a] > log_probs[b];
                      return a < b;
                    });
  const double lse = log_sum_exp(log_probs);
  std::vector<TopPrediction> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    const auto id = static_cast<TokenId>(order[i]);
    out.push_back({id, vocab.token(id),
                   static_cast<float>(std::exp(double{log_probs[order[i]]} - lse))});
  }
  return out;
}

namespace {

double curve_value(const std::vector<CurvePoint>& curve, std::size_t c) {
  auto it = std::lower_bound(curve.begin(), curve.end(), c,
                             [](const CurvePoint& p, std::size_t value) { return p.c < value; });
  if (it == curve.end() || it->c != c) {
    throw Error(ErrorKind::kInvalidArgument, "series lacks context length " + std::to_string(c));
  }
  return it->value;
}

}  // namespace

ViewerBundle build_viewer_bundle(const TokenizedDocument& doc, const Vocab& vocab,
                                 const MetricSeries& series, const PredictionStore& store,
                                 const ExportOptions& options) {
  if (series.doc_id != doc.doc_id || series.doc_length != doc.size() ||
      store.doc_length() != doc.size() || series.c_max != store.c_max() ||
      series.stride != store.stride() || series.targets.size() + 1 != doc.size()) {
    throw Error(ErrorKind::kInvalidArgument,
                "series/store mismatch for document '" + doc.doc_id + "'");
  }
  if (vocab.size() != store.vocab_size()) {
    throw Error(ErrorKind::kInvalidArgument, "vocabulary size differs from the store");
  }
  if (options.top_k < 1) throw Error(ErrorKind::kInvalidArgument, "top_k must be >= 1");

  ViewerBundle bundle;
  bundle.doc.doc_id = doc.doc_id;
  bundle.doc.text = doc.text;
  bundle.doc.token_ids = doc.token_ids;
  bundle.doc.spans = doc.source_spans;
  bundle.doc.pos_tags = doc.pos_tags;
  for (TokenId id : doc.token_ids) bundle.doc.tokens.push_back(vocab.token(id));

  bundle.manifest.backend = options.backend_name;
  bundle.manifest.vocab_size = store.vocab_size();
  bundle.manifest.c_max = store.c_max();
  bundle.manifest.stride = store.stride();
  bundle.manifest.dtype = to_string(store.dtype());
  bundle.manifest.top_k = std::min(options.top_k, store.vocab_size());
  bundle.manifest.full_resolution = options.full_resolution;

  std::vector<float> row(store.vocab_size());
  for (const TargetMetrics& t : series.targets) {
    BundleTarget bt;
    bt.n = t.n;
    bt.target_id = t.target_id;
    bt.c_eff = t.c_eff;
    bt.c_ref = t.c_ref;
    bt.retained_c = retained_contexts(store.covered_contexts(t.n), t.c_ref, options.full_resolution);
    for (std::size_t c : bt.retained_c) {
      bt.nll.push_back(curve_value(t.nll, c));
      bt.kl.push_back(curve_value(t.kl, c));
      store.read_cell(t.n, c, row);
      bt.top_k.push_back(top_predictions(row, options.top_k, vocab));
    }
    bt.delta_kl = t.delta_kl;
    bt.delta_nll = t.delta_nll;
    bundle.targets.push_back(std::move(bt));
  }
  return bundle;
}

namespace {

json deltas_json(const DeltaScores& deltas) {
  json out = json::array();
  for (const auto& d : deltas) out.push_back({d.m, number_to_json(d.score)});
  return out;
}

json values_json(const std::vector<double>& values) {
  json out = json::array();
  for (double v : values) out.push_back(number_to_json(v));
  return out;
}

[[noreturn]] void reject(const std::string& why) {
  throw Error(ErrorKind::kDataFormat, "viewer bundle rejected: " + why);
}

}  // namespace

std::string ViewerBundle::to_json() const {
  json spans = json::array();
  for (const auto& s : doc.spans) spans.push_back({s.begin, s.end});
  json j;
  j["schema_version"] = schema_version;
  j["doc"] = {{"doc_id", doc.doc_id},
              {"text", doc.text},
              {"tokens", doc.tokens},
              {"token_ids", doc.token_ids},
              {"spans", std::move(spans)},
              {"pos_tags", doc.pos_tags}};
  json targets_json = json::array();
  for (const auto& t : targets) {
    json top = json::array();
    for (const auto& list : t.top_k) {
      json entries = json::array();
      for (const auto& p : list) entries.push_back({{"id", p.id}, {"token", p.token}, {"p", p.probability}});
      top.push_back(std::move(entries));
    }
    targets_json.push_back({{"n", t.n},
                            {"target_id", t.target_id},
                            {"c_eff", t.c_eff},
                            {"c_ref", t.c_ref},
                            {"retained_c", t.retained_c},
                            {"nll", values_json(t.nll)},
                            {"kl", values_json(t.kl)},
                            {"delta_kl", deltas_json(t.delta_kl)},
                            {"delta_nll", deltas_json(t.delta_nll)},
                            {"top_k", std::move(top)}});
  }
  j["targets"] = std::move(targets_json);
  j["manifest"] = {{"backend", manifest.backend},
                   {"vocab_size", manifest.vocab_size},
                   {"c_max", manifest.c_max},
                   {"stride", manifest.stride},
                   {"dtype", manifest.dtype},
                   {"top_k", manifest.top_k},
                   {"full_resolution", manifest.full_resolution}};
  return j.dump();
}

ViewerBundle ViewerBundle::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    reject(std::string("malformed JSON: ") + e.what());
  }
  ViewerBundle b;
  try {
    b.schema_version = j.at("schema_version").get<std::string>();
    const std::string major = b.schema_version.substr(0, b.schema_version.find('.'));
    const std::string expected(kBundleSchemaVersion);
    if (major != expected.substr(0, expected.find('.'))) {
      reject("unsupported schema version " + b.schema_version);
    }
    const json& d = j.at("doc");
    b.doc.doc_id = d.at("doc_id").get<std::string>();
    b.doc.text = d.at("text").get<std::string>();
    b.doc.tokens = d.at("tokens").get<std::vector<std::string>>();
    b.doc.token_ids = d.at("token_ids").get<std::vector<TokenId>>();
    for (const auto& s : d.at("spans")) b.doc.spans.push_back({s.at(0).get<std::size_t>(), s.at(1).get<std::size_t>()});
    b.doc.pos_tags = d.at("pos_tags").get<std::vector<std::string>>();

    for (const auto& t : j.at("targets")) {
      BundleTarget bt;
      bt.n = t.at("n").get<std::size_t>();
      bt.target_id = t.at("target_id").get<TokenId>();
      bt.c_eff = t.at("c_eff").get<std::size_t>();
      bt.c_ref = t.at("c_ref").get<std::size_t>();
      bt.retained_c = t.at("retained_c").get<std::vector<std::size_t>>();
      for (const auto& v : t.at("nll")) bt.nll.push_back(number_from_json(v));
      for (const auto& v : t.at("kl")) bt.kl.push_back(number_from_json(v));
      for (const auto& e : t.at("delta_kl")) bt.delta_kl.push_back({e.at(0).get<std::size_t>(), number_from_json(e.at(1))});
      for (const auto& e : t.at("delta_nll")) bt.delta_nll.push_back({e.at(0).get<std::size_t>(), number_from_json(e.at(1))});
      for (const auto& list : t.at("top_k")) {
        std::vector<TopPrediction> entries;
        for (const auto& p : list) {
          entries.push_back({p.at("id").get<TokenId>(), p.at("token").get<std::string>(), p.at("p").get<float>()});
        }
        bt.top_k.push_back(std::move(entries));
      }
      b.targets.push_back(std::move(bt));
    }
    const json& m = j.at("manifest");
    b.manifest.backend = m.at("backend").get<std::string>();
    b.manifest.vocab_size = m.at("vocab_size").get<std::size_t>();
    b.manifest.c_max = m.at("c_max").get<std::size_t>();
    b.manifest.stride = m.at("stride").get<std::size_t>();
    b.manifest.dtype = m.at("dtype").get<std::string>();
    b.manifest.top_k = m.at("top_k").get<std::size_t>();
    b.manifest.full_resolution = m.at("full_resolution").get<bool>();
  } catch (const json::exception& e) {
    reject(e.what());
  }

  const std::size_t n_tokens = b.doc.token_ids.size();
  if (b.doc.tokens.size() != n_tokens) reject("tokens and token_ids differ in length");
  for (const auto& t : b.targets) {
    const std::size_t k = t.retained_c.size();
    if (t.nll.size() != k || t.kl.size() != k || t.top_k.size() != k) {
      reject("target " + std::to_string(t.n) + " has misaligned curves");
    }
    if (t.n < 1 || t.n + 1 > n_tokens) reject("target position " + std::to_string(t.n) + " out of range");
    for (const auto& d : t.delta_kl) {
      if (d.m < 1 || d.m >= t.n) reject("delta position " + std::to_string(d.m) + " not before n");
    }
    for (const auto& d : t.delta_nll) {
      if (d.m < 1 || d.m >= t.n) reject("delta position " + std::to_string(d.m) + " not before n");
    }
    for (const auto& list : t.top_k) {
      double sum = 0.0;
      for (std::size_t i = 0; i < list.size(); ++i) {
        if (list[i].probability < 0.0f || list[i].probability > 1.0f) reject("probability out of range");
        if (i > 0 && list[i].probability > list[i - 1].probability) reject("top-k list not sorted");
        sum += list[i].probability;
      }
      if (sum > 1.0 + 1e-6) reject("top-k probabilities sum above 1");
    }
  }
  return b;
}

void export_viewer_bundle(const std::filesystem::path& path, const TokenizedDocument& doc,
                          const Vocab& vocab, const MetricSeries& series,
                          const PredictionStore& store, const ExportOptions& options) {
  write_file_atomic(path, build_viewer_bundle(doc, vocab, series, store, options).to_json());
}

namespace {

std::string format_number(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buffer[32];
  std::snprintf(buffer, sizeof buffer, "%.17g", value);
  return buffer;
}

std::string csv_field(const std::string& text) {
  if (text.find_first_of(",\"\n") == std::string::npos) return text;
  std::string out = "\"";
  for (char ch : text) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + '"';
}

constexpr const char* kCsvHeader = "group,c,mean,std,count\n";

void curve_rows(std::ostringstream& out, const std::string& group, const std::vector<CurveStat>& curve) {
  for (const auto& p : curve) {
    out << csv_field(group) << ',' << p.c << ',' << format_number(p.mean) << ','
        << format_number(p.stddev) << ',' << p.count << '\n';
  }
}

}  // namespace

CsvFiles export_curves_csv(const AggregateReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  CsvFiles files{dir / "fig2_loss_by_context.csv", dir / "fig3_loss_by_pos.csv",
                 dir / "fig4_delta_decay.csv", dir / "fig6_delta_by_pos.csv"};

  std::ostringstream fig2;
  fig2 << kCsvHeader;
  curve_rows(fig2, "all", report.loss_by_c);
  write_file_atomic(files.loss_by_context, fig2.str());

  std::ostringstream fig3;
  fig3 << kCsvHeader;
  for (const auto& tc : report.loss_by_c_and_pos) curve_rows(fig3, tc.tag, tc.points);
  write_file_atomic(files.loss_by_pos, fig3.str());

  std::ostringstream fig4;
  fig4 << kCsvHeader;
  for (const auto& p : report.delta_decay.points) {
    if (p.count == 0) continue;
    fig4 << "all," << p.c << ',' << format_number(p.mean) << ',' << format_number(p.stddev) << ','
         << p.count << '\n';
  }
  write_file_atomic(files.delta_decay, fig4.str());

  std::ostringstream fig6;
  fig6 << kCsvHeader;
  for (const auto& t : report.delta_by_pos) {
    fig6 << csv_field(t.tag) << ",," << format_number(t.mean) << ',' << format_number(t.stddev)
         << ',' << t.count << '\n';
  }
  write_file_atomic(files.delta_by_pos, fig6.str());
  return files;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::kIo, "cannot open '" + tmp.string() + "' for writing");
    out << text;
    out.flush();
    if (!out) throw Error(ErrorKind::kIo, "write to '" + tmp.string() + "' failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(ErrorKind::kIo, "cannot rename into '" + path.string() + "'");
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot read '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace ctxprobe
