// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ctxprobe Authors

// Command-line front end: ingest -> probe -> metrics -> aggregate -> export.

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ctxprobe/aggregate.hpp"
#include "ctxprobe/corpus.hpp"
#include "ctxprobe/error.hpp"
#include "ctxprobe/export.hpp"
#include "ctxprobe/http_backend.hpp"
#include "ctxprobe/metrics.hpp"
#include "ctxprobe/ngram_model.hpp"
#include "ctxprobe/scheduler.hpp"
#include "ctxprobe/tokenizer.hpp"
#include "ctxprobe/trigger_model.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ctxprobe;

namespace {

enum Exit { kOk = 0, kUsage = 2, kBackendExit = 3, kDataExit = 4, kInternalExit = 5 };

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument:
    case ErrorKind::kOutOfRange:
      return kUsage;
    case ErrorKind::kTransport:
    case ErrorKind::kProtocol:
    case ErrorKind::kBackend:
    case ErrorKind::kSegmentTooLong:
      return kBackendExit;
    case ErrorKind::kDataFormat:
    case ErrorKind::kUnknownToken:
    case ErrorKind::kIo:
      return kDataExit;
    case ErrorKind::kCellNotCovered:
    case ErrorKind::kInternal:
      return kInternalExit;
  }
  return kInternalExit;
}

struct Options {
  std::vector<std::string> conllu;
  std::vector<std::string> text;
  std::vector<std::string> train;
  std::string pieces;
  std::string backend;
  std::size_t c_max = 1023;
  std::size_t stride = 1;
  std::size_t batch_size = 16;
  std::string dtype = "f16";
  std::size_t top_k = 10;
  std::size_t min_pos_count = 100;
  std::size_t min_position = 1024;
  std::string delta = "kl";
  bool full_resolution = false;
  std::string out;
  std::string in;
  std::size_t parallelism = 1;
  std::size_t jobs = 1;
  bool dry_run = false;
};

// Doc ids come from CoNLL-U metadata; keep file names portable.
std::string file_stem(const std::string& doc_id) {
  std::string out;
  for (char ch : doc_id) {
    const bool keep = std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_' || ch == '.';
    out.push_back(keep ? ch : '_');
  }
  if (out.empty() || out[0] == '.') out.insert(out.begin(), '_');
  return out;
}

std::vector<fs::path> expand(const std::vector<std::string>& inputs, const std::string& ext) {
  std::vector<fs::path> out;
  for (const auto& input : inputs) {
    const fs::path p(input);
    if (fs::is_directory(p)) {
      std::vector<fs::path> found;
      for (const auto& entry : fs::directory_iterator(p)) {
        if (entry.is_regular_file() && entry.path().extension() == ext) found.push_back(entry.path());
      }
      std::sort(found.begin(), found.end());
      if (found.empty()) {
        throw Error(ErrorKind::kDataFormat, "no *" + ext + " files in '" + input + "'");
      }
      out.insert(out.end(), found.begin(), found.end());
    } else if (fs::is_regular_file(p)) {
      out.push_back(p);
    } else {
      throw Error(ErrorKind::kIo, "input '" + input + "' does not exist");
    }
  }
  return out;
}

// ---- document files -------------------------------------------------------

json doc_to_json(const TokenizedDocument& doc) {
  json spans = json::array();
  for (const auto& s : doc.source_spans) spans.push_back({s.begin, s.end});
  return {{"doc_id", doc.doc_id},
          {"token_ids", doc.token_ids},
          {"pos_tags", doc.pos_tags},
          {"spans", spans},
          {"text", doc.text}};
}

TokenizedDocument doc_from_json(const std::string& text, const std::string& where) {
  try {
    const json j = json::parse(text);
    TokenizedDocument doc;
    doc.doc_id = j.at("doc_id").get<std::string>();
    doc.token_ids = j.at("token_ids").get<std::vector<TokenId>>();
    doc.pos_tags = j.at("pos_tags").get<std::vector<std::string>>();
    for (const auto& s : j.at("spans")) {
      doc.source_spans.push_back({s.at(0).get<std::size_t>(), s.at(1).get<std::size_t>()});
    }
    doc.text = j.at("text").get<std::string>();
    return doc;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kDataFormat, where + ": " + e.what());
  }
}

Vocab vocab_from_file(const fs::path& path) {
  try {
    const json j = json::parse(read_file(path));
    const json& tokens = j.is_object() ? j.at("tokens") : j;
    return Vocab(tokens.get<std::vector<std::string>>());
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kDataFormat, path.string() + ": " + e.what());
  }
}

// ---- ingest + backend -----------------------------------------------------

struct Source {
  std::string doc_id;
  std::vector<AnnotatedWord> words;  // empty for plain text
  std::string text;
};

std::vector<Source> read_sources(const Options& o) {
  std::vector<Source> out;
  if (!o.conllu.empty()) {
    for (auto& wd : load_conllu(expand(o.conllu, ".conllu"))) {
      Source s{wd.doc_id, std::move(wd.words), {}};
      s.text = join_words(s.words);
      out.push_back(std::move(s));
    }
  }
  if (!o.text.empty()) {
    for (const auto& path : expand(o.text, ".txt")) {
      out.push_back({path.stem().string(), {}, read_file(path)});
    }
  }
  std::set<std::string> seen;
  for (const auto& s : out) {
    if (!seen.insert(file_stem(s.doc_id)).second) {
      throw Error(ErrorKind::kDataFormat, "duplicate document id '" + s.doc_id + "'");
    }
  }
  return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

template <typename T>
T parse_number(const std::string& field, const std::string& what) {
  try {
    std::size_t used = 0;
    T value;
    if constexpr (std::is_same_v<T, double>) {
      value = std::stod(field, &used);
    } else {
      if (!field.empty() && field[0] == '-') throw std::invalid_argument("negative");
      value = static_cast<T>(std::stoull(field, &used));
    }
    if (used != field.size()) throw std::invalid_argument("trailing");
    return value;
  } catch (const std::exception&) {
    throw Error(ErrorKind::kInvalidArgument, "bad " + what + " '" + field + "' in --backend");
  }
}

struct Pipeline {
  std::unique_ptr<Backend> backend;
  std::unique_ptr<Tokenizer> tokenizer;
  std::vector<TokenizedDocument> docs;
};

TokenizedDocument tokenize_source(Source& s, const Tokenizer& tok) {
  if (!s.words.empty()) {
    TokenizedDocument doc = concatenate_and_retokenize(s.doc_id, s.words, tok);
    return map_pos_tags(std::move(doc), s.words);
  }
  const Tokenization t = tok.tokenize(s.text);
  TokenizedDocument doc;
  doc.doc_id = s.doc_id;
  doc.token_ids = t.ids;
  doc.source_spans = t.spans;
  doc.text = s.text;
  return doc;
}

Pipeline build_pipeline(const Options& o) {
  const auto kind_end = o.backend.find(':');
  const std::string kind = o.backend.substr(0, kind_end);
  const std::string rest = kind_end == std::string::npos ? "" : o.backend.substr(kind_end + 1);

  std::vector<Source> sources = read_sources(o);
  if (sources.empty()) throw Error(ErrorKind::kInvalidArgument, "no input documents");
  Pipeline p;

  if (kind == "http") {
    if (rest.empty()) throw Error(ErrorKind::kInvalidArgument, "--backend http:<url> needs a url");
    // Accept a bare http://host URL as well as http:<url>.
    const std::string url = rest.starts_with("//") ? o.backend : rest;
    auto http = std::make_unique<HttpBackend>(HttpBackend::connect(url));
    if (o.pieces.empty()) {
      p.tokenizer = std::make_unique<HttpTokenizer>(*http);
    } else {
      p.tokenizer = std::make_unique<GreedyPieceTokenizer>(vocab_from_file(o.pieces));
    }
    p.backend = std::move(http);
  } else if (kind == "ngram" || kind == "trigger") {
    const auto fields = split(rest, ':');
    std::vector<std::string> reserved;
    if (kind == "trigger") {
      if (fields.size() != 5) {
        throw Error(ErrorKind::kInvalidArgument,
                    "--backend trigger:<trigger>:<target>:<horizon>:<p_hi>:<p_lo>");
      }
      reserved = {fields[0], fields[1]};
    } else if (fields.size() != 2) {
      throw Error(ErrorKind::kInvalidArgument, "--backend ngram:<order>:<alpha>");
    }

    std::vector<std::string> train_texts;
    for (const auto& path : o.train.empty() ? std::vector<fs::path>{} : expand(o.train, ".txt")) {
      train_texts.push_back(read_file(path));
    }
    Vocab vocab;
    if (!o.pieces.empty()) {
      vocab = vocab_from_file(o.pieces);
      for (const auto& r : reserved) vocab.add(r);
      p.tokenizer = std::make_unique<GreedyPieceTokenizer>(vocab);
    } else {
      std::vector<std::string> texts;
      for (const auto& s : sources) texts.push_back(s.text);
      texts.insert(texts.end(), train_texts.begin(), train_texts.end());
      vocab = WhitespacePunctTokenizer::build_vocab(texts, reserved);
      p.tokenizer = std::make_unique<WhitespacePunctTokenizer>(vocab);
    }

    if (kind == "ngram") {
      const auto order = parse_number<std::size_t>(fields[0], "order");
      const auto alpha = parse_number<double>(fields[1], "alpha");
      std::vector<std::vector<TokenId>> corpus;
      if (train_texts.empty()) {
        for (auto& s : sources) corpus.push_back(tokenize_source(s, *p.tokenizer).token_ids);
      } else {
        for (const auto& t : train_texts) corpus.push_back(p.tokenizer->tokenize(t).ids);
      }
      p.backend = std::make_unique<NGramModel>(NGramModel::train(corpus, vocab, order, alpha));
    } else {
      TriggerParams params;
      params.trigger = vocab.id(fields[0]);
      params.target = vocab.id(fields[1]);
      params.horizon = parse_number<std::size_t>(fields[2], "horizon");
      params.p_hi = parse_number<double>(fields[3], "p_hi");
      params.p_lo = parse_number<double>(fields[4], "p_lo");
      p.backend = std::make_unique<TriggerModel>(vocab, params);
    }
  } else {
    throw Error(ErrorKind::kInvalidArgument, "unknown backend '" + o.backend +
                                                 "' (expected ngram:, trigger: or http:)");
  }

  for (auto& s : sources) {
    try {
      p.docs.push_back(tokenize_source(s, *p.tokenizer));
    } catch (const Error& e) {
      throw Error(e.kind(), "document '" + s.doc_id + "': " + e.what());
    }
  }
  return p;
}

ProbeConfig probe_config(const Options& o) {
  ProbeConfig c;
  c.c_max = o.c_max;
  c.stride = o.stride;
  c.batch_size = o.batch_size;
  c.store_dtype = parse_dtype(o.dtype);
  c.top_k_export = o.top_k;
  c.parallelism = o.parallelism;
  c.validate();
  return c;
}

AggregateConfig aggregate_config(const Options& o) {
  AggregateConfig c;
  c.min_pos_count = o.min_pos_count;
  c.min_position = o.min_position;
  if (o.delta != "kl" && o.delta != "nll") {
    throw Error(ErrorKind::kInvalidArgument, "--delta must be kl or nll");
  }
  c.delta_kind = o.delta == "kl" ? DeltaKind::kKl : DeltaKind::kNll;
  return c;
}

// Runs fn over [0, count) with up to `jobs` workers; the first error wins.
template <typename Fn>
void for_each_doc(std::size_t count, std::size_t jobs, Fn fn) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex mutex;
  auto worker = [&] {
    for (std::size_t i; (i = next++) < count;) {
      {
        std::lock_guard lock(mutex);
        if (error) return;
      }
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(count, 1));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (error) std::rethrow_exception(error);
}

template <typename Fn>
auto in_doc(const std::string& doc_id, Fn fn) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.kind(), "document '" + doc_id + "': " + e.what());
  }
}

// ---- commands -------------------------------------------------------------

fs::path out_dir(const Options& o) {
  if (o.out.empty()) throw Error(ErrorKind::kInvalidArgument, "--out is required");
  return fs::path(o.out);
}

fs::path in_dir(const Options& o) { return fs::path(o.in.empty() ? o.out : o.in); }

// Document ids listed in a run directory, by their .doc.json files.
std::vector<std::string> run_docs(const fs::path& dir) {
  std::vector<std::string> stems;
  if (!fs::is_directory(dir)) throw Error(ErrorKind::kIo, "run directory '" + dir.string() + "' missing");
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    const std::string suffix = ".doc.json";
    if (name.size() > suffix.size() && name.ends_with(suffix)) {
      stems.push_back(name.substr(0, name.size() - suffix.size()));
    }
  }
  std::sort(stems.begin(), stems.end());
  if (stems.empty()) throw Error(ErrorKind::kDataFormat, "no documents in '" + dir.string() + "'");
  return stems;
}

TokenizedDocument load_doc(const fs::path& dir, const std::string& stem) {
  const fs::path path = dir / (stem + ".doc.json");
  return doc_from_json(read_file(path), path.string());
}

int cmd_probe(const Options& o) {
  const ProbeConfig config = probe_config(o);
  Pipeline p = build_pipeline(o);
  for (const auto& doc : p.docs) in_doc(doc.doc_id, [&] { doc.validate(p.backend->vocab_size()); });

  if (o.dry_run) {
    json docs = json::array();
    ProbeCost total;
    for (const auto& doc : p.docs) {
      const ProbeCost cost = probe_cost(doc.size(), config.c_max, config.stride);
      total.segments += cost.segments;
      total.rows += cost.rows;
      docs.push_back({{"doc_id", doc.doc_id},
                      {"tokens", doc.size()},
                      {"segments", cost.segments},
                      {"rows", cost.rows},
                      {"batches", cost.batches(config.batch_size)}});
    }
    const json report = {{"backend", p.backend->descriptor().name},
                         {"documents", docs},
                         {"total_segments", total.segments},
                         {"total_rows", total.rows},
                         {"total_evaluations", total.segments}};
    std::cout << report.dump(2) << '\n';
    return kOk;
  }

  const fs::path dir = out_dir(o);
  fs::create_directories(dir);
  write_file_atomic(dir / "vocab.json",
                    json({{"backend", p.backend->descriptor().name},
                          {"tokens", p.backend->vocab().tokens()}})
                            .dump() +
                        "\n");
  for_each_doc(p.docs.size(), o.jobs, [&](std::size_t i) {
    const auto& doc = p.docs[i];
    const std::string stem = file_stem(doc.doc_id);
    in_doc(doc.doc_id, [&] {
      probe_to_file(*p.backend, doc, config, dir / (stem + ".clps"), dir / (stem + ".manifest.json"));
      write_file_atomic(dir / (stem + ".doc.json"), doc_to_json(doc).dump() + "\n");
    });
  });
  if (const auto* http = dynamic_cast<const HttpBackend*>(p.backend.get())) {
    for (const auto& w : http->warnings()) std::cerr << "warning: " << w << '\n';
  }
  std::cerr << "probed " << p.docs.size() << " document(s) into " << dir.string() << '\n';
  return kOk;
}

int cmd_metrics(const Options& o) {
  const fs::path in = in_dir(o);
  const fs::path dir = out_dir(o);
  fs::create_directories(dir);
  const auto stems = run_docs(in);
  for_each_doc(stems.size(), o.jobs, [&](std::size_t i) {
    const auto doc = load_doc(in, stems[i]);
    in_doc(doc.doc_id, [&] {
      const auto store = PredictionStore::load(in / (stems[i] + ".clps"));
      const auto series = compute_series(store, doc, o.parallelism);
      write_file_atomic(dir / (stems[i] + ".metrics.json"), series.to_json() + "\n");
    });
  });
  std::cerr << "computed metrics for " << stems.size() << " document(s)\n";
  return kOk;
}

int cmd_aggregate(const Options& o) {
  const AggregateConfig config = aggregate_config(o);
  const fs::path in = in_dir(o);
  const fs::path dir = out_dir(o);
  fs::create_directories(dir);
  AggregateAccumulator acc(config);
  for (const auto& stem : run_docs(in)) {
    const auto doc = load_doc(in, stem);
    in_doc(doc.doc_id, [&] {
      const auto series = MetricSeries::from_json(read_file(in / (stem + ".metrics.json")));
      acc.add(series, &doc);
    });
  }
  const AggregateReport report = acc.report();
  write_file_atomic(dir / "report.json", report.to_json() + "\n");
  export_curves_csv(report, dir);
  if (report.pos_empty_reason) std::cerr << "note: " << *report.pos_empty_reason << '\n';
  if (report.delta_decay.empty_reason) std::cerr << "note: " << *report.delta_decay.empty_reason << '\n';
  return kOk;
}

int cmd_export(const Options& o) {
  if (o.top_k < 1) throw Error(ErrorKind::kInvalidArgument, "--top-k must be >= 1");
  const fs::path in = in_dir(o);
  const fs::path dir = out_dir(o);
  fs::create_directories(dir);
  const Vocab vocab = vocab_from_file(in / "vocab.json");
  const auto stems = run_docs(in);
  for_each_doc(stems.size(), o.jobs, [&](std::size_t i) {
    const auto doc = load_doc(in, stems[i]);
    in_doc(doc.doc_id, [&] {
      const auto store = PredictionStore::load(in / (stems[i] + ".clps"));
      const auto series = MetricSeries::from_json(read_file(in / (stems[i] + ".metrics.json")));
      const auto manifest = RunManifest::from_json(read_file(in / (stems[i] + ".manifest.json")));
      ExportOptions options;
      options.top_k = o.top_k;
      options.full_resolution = o.full_resolution;
      options.backend_name = manifest.backend_name;
      export_viewer_bundle(dir / (stems[i] + ".bundle.json"), doc, vocab, series, store, options);
    });
  });
  std::cerr << "exported " << stems.size() << " bundle(s)\n";
  return kOk;
}

int cmd_run(const Options& o) {
  if (int rc = cmd_probe(o); rc != kOk || o.dry_run) return rc;
  Options next = o;
  next.in = o.out;
  if (int rc = cmd_metrics(next); rc != kOk) return rc;
  if (int rc = cmd_aggregate(next); rc != kOk) return rc;
  return cmd_export(next);
}

void add_ingest(CLI::App* cmd, Options& o) {
  cmd->add_option("--conllu", o.conllu, "CoNLL-U files or directories of *.conllu");
  cmd->add_option("--text", o.text, "plain-text files or directories of *.txt");
  cmd->add_option("--backend", o.backend,
                  "ngram:<order>:<alpha> | trigger:<t>:<u>:<h>:<p_hi>:<p_lo> | http:<url>")
      ->required();
  cmd->add_option("--pieces", o.pieces, "JSON array of vocabulary pieces for greedy tokenization");
  cmd->add_option("--train", o.train, "plain-text n-gram training files (default: the inputs)");
  cmd->add_option("--c-max", o.c_max, "maximum context length")->capture_default_str();
  cmd->add_option("--stride", o.stride, "context-length stride")->capture_default_str();
  cmd->add_option("--batch-size", o.batch_size, "segments per backend call")->capture_default_str();
  cmd->add_option("--dtype", o.dtype, "store dtype: f16 or f32")->capture_default_str();
  cmd->add_flag("--dry-run", o.dry_run, "print the probe cost and exit");
}

void add_aggregate(CLI::App* cmd, Options& o) {
  cmd->add_option("--min-pos-count", o.min_pos_count, "minimum occurrences per POS tag")
      ->capture_default_str();
  cmd->add_option("--min-position", o.min_position, "minimum target position for the decay curve")
      ->capture_default_str();
  cmd->add_option("--delta", o.delta, "delta score kind: kl or nll")->capture_default_str();
}

void add_export(CLI::App* cmd, Options& o) {
  cmd->add_option("--top-k", o.top_k, "predictions kept per retained context")->capture_default_str();
  cmd->add_flag("--full-resolution", o.full_resolution, "keep every covered context length");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ctxprobe: context length probing of causal language models"};
  app.require_subcommand(1);
  Options o;

  auto* probe = app.add_subcommand("probe", "probe documents into per-document stores");
  auto* metrics = app.add_subcommand("metrics", "compute NLL, KL and delta series");
  auto* agg = app.add_subcommand("aggregate", "aggregate curves and write CSV files");
  auto* exp = app.add_subcommand("export", "write viewer bundles");
  auto* run = app.add_subcommand("run", "probe, metrics, aggregate and export in one go");

  add_ingest(probe, o);
  add_ingest(run, o);
  add_aggregate(agg, o);
  add_aggregate(run, o);
  add_export(exp, o);
  add_export(run, o);
  for (auto* cmd : {probe, metrics, agg, exp, run}) {
    cmd->add_option("--out", o.out, "output directory");
    cmd->add_option("--parallelism", o.parallelism, "threads within a document")->capture_default_str();
    cmd->add_option("--jobs", o.jobs, "documents processed concurrently")->capture_default_str();
  }
  for (auto* cmd : {metrics, agg, exp}) {
    cmd->add_option("--in", o.in, "run directory (default: --out)");
  }
  probe->add_option("--top-k", o.top_k, "recorded in the run manifest")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (probe->parsed()) return cmd_probe(o);
    if (metrics->parsed()) return cmd_metrics(o);
    if (agg->parsed()) return cmd_aggregate(o);
    if (exp->parsed()) return cmd_export(o);
    if (run->parsed()) return cmd_run(o);
    return kUsage;
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error (io): " << e.what() << '\n';
    return kDataExit;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kInternalExit;
  }
}
