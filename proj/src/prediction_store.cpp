// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ctxprobe Authors

#include "ctxprobe/prediction_store.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "ctxprobe/error.hpp"
#include "ctxprobe/half.hpp"

namespace ctxprobe {

namespace {

constexpr std::array<char, 4> kMagic = {'C', 'L', 'P', 'S'};
constexpr std::uint32_t kFormatVersion = 1;

std::string cell_name(std::size_t n, std::size_t c) {
  return "(n=" + std::to_string(n) + ", c=" + std::to_string(c) + ")";
}

template <typename T>
T to_little_endian(T value) {
  if constexpr (std::endian::native == std::endian::little) {
    return value;
  } else {
    auto bytes = std::bit_cast<std::array<std::uint8_t, sizeof(T)>>(value);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
}

class Writer {
 public:
  explicit Writer(std::ofstream& out) : out_(out) {}

  template <typename T>
  void put(T value) {
    value = to_little_endian(value);
    out_.write(reinterpret_cast<const char*>(&value), sizeof(T));
  }

  template <typename T>
  void put_array(const std::vector<T>& values) {
    if constexpr (std::endian::native == std::endian::little) {
      out_.write(reinterpret_cast<const char*>(values.data()),
                 static_cast<std::streamsize>(values.size() * sizeof(T)));
    } else {
      for (T v : values) put(v);
    }
  }

 private:
  std::ofstream& out_;
};

class Reader {
 public:
  Reader(std::ifstream& in, const std::filesystem::path& path) : in_(in), path_(path) {}

  template <typename T>
  T get() {
    T value{};
    in_.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in_) truncated();
    return to_little_endian(value);
  }

  template <typename T>
  void get_array(std::vector<T>& values) {
    in_.read(reinterpret_cast<char*>(values.data()),
             static_cast<std::streamsize>(values.size() * sizeof(T)));
    if (!in_) truncated();
    if constexpr (std::endian::native != std::endian::little) {
      for (T& v : values) v = to_little_endian(v);
    }
  }

  [[noreturn]] void truncated() const {
    throw Error(ErrorKind::kDataFormat, "store file '" + path_.string() + "' is truncated");
  }

 private:
  std::ifstream& in_;
  const std::filesystem::path& path_;
};

}  // namespace

std::vector<Segment> canonical_segments(std::size_t doc_length, std::size_t c_max,
                                        std::size_t stride) {
  if (doc_length < 2 || c_max < 1 || stride < 1 || stride > c_max) {
    throw Error(ErrorKind::kInvalidArgument,
                "invalid segment parameters N=" + std::to_string(doc_length) +
                    " c_max=" + std::to_string(c_max) + " stride=" + std::to_string(stride));
  }
  std::vector<Segment> segments;
  segments.reserve((doc_length - 2) / stride + 1);
  for (std::size_t start = 1; start <= doc_length - 1; start += stride) {
    segments.push_back({start, std::min(c_max, doc_length - start)});
  }
  return segments;
}

void PredictionStore::check_target(std::size_t n) const {
  if (n < 1 || n + 1 > shape_.doc_length) {
    throw Error(ErrorKind::kOutOfRange, "target position n=" + std::to_string(n) +
                                            " outside 1.." +
                                            std::to_string(shape_.doc_length - 1));
  }
}

std::size_t PredictionStore::max_context(std::size_t n) const {
  check_target(n);
  return std::min(n, shape_.c_max);
}

std::size_t PredictionStore::effective_context(std::size_t n, std::size_t c) const {
  if (c < 1) {
    throw Error(ErrorKind::kOutOfRange, "context length must be >= 1, got " + std::to_string(c));
  }
  return std::min(c, max_context(n));
}

bool PredictionStore::covers(std::size_t n, std::size_t c) const {
  if (n < 1 || n + 1 > shape_.doc_length || c < 1) return false;
  const std::size_t clamped = std::min({c, n, shape_.c_max});
  return (n - clamped) % shape_.stride == 0;
}

CellAddress PredictionStore::locate(std::size_t n, std::size_t c) const {
  const std::size_t clamped = effective_context(n, c);
  const std::size_t start_minus_one = n - clamped;  // s - 1
  if (start_minus_one % shape_.stride != 0) {
    throw Error(ErrorKind::kCellNotCovered,
                "cell " + cell_name(n, clamped) + " not covered by stride-" +
                    std::to_string(shape_.stride) + " store");
  }
  CellAddress address;
  address.segment = start_minus_one / shape_.stride;
  address.offset = clamped - 1;
  address.row = segment_offsets_[address.segment] + address.offset;
  address.context = clamped;
  return address;
}

void PredictionStore::read_row(std::size_t row, std::span<float> out) const {
  const std::size_t v = shape_.vocab_size;
  if (row >= row_count_ || out.size() != v) {
    throw Error(ErrorKind::kOutOfRange, "row " + std::to_string(row) + " out of range");
  }
  if (shape_.dtype == StoreDtype::kFloat32) {
    std::copy_n(f32_.begin() + static_cast<std::ptrdiff_t>(row * v), v, out.begin());
  } else {
    const std::uint16_t* src = f16_.data() + row * v;
    for (std::size_t i = 0; i < v; ++i) out[i] = half::to_float(src[i]);
  }
}

void PredictionStore::read_cell(std::size_t n, std::size_t c, std::span<float> out) const {
  read_row(locate(n, c).row, out);
}

std::vector<float> PredictionStore::cell_lookup(std::size_t n, std::size_t c) const {
  std::vector<float> row(shape_.vocab_size);
  read_cell(n, c, row);
  return row;
}

std::vector<std::size_t> PredictionStore::covered_contexts(std::size_t n) const {
  const std::size_t c_eff = max_context(n);
  std::vector<std::size_t> contexts;
  // (n - c) mod k == 0  <=>  c == n mod k (shifted into 1..k)
  std::size_t first = n % shape_.stride;
  if (first == 0) first = shape_.stride;
  for (std::size_t c = first; c <= c_eff; c += shape_.stride) contexts.push_back(c);
  return contexts;
}

bool PredictionStore::operator==(const PredictionStore& other) const {
  const auto same_bytes = [](const auto& a, const auto& b) {
    return a.size() == b.size() &&
           (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(a[0])) == 0);
  };
  return shape_ == other.shape_ && segments_ == other.segments_ && same_bytes(f32_, other.f32_) &&
         same_bytes(f16_, other.f16_);
}

void PredictionStore::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot open '" + path.string() + "' for writing");
  Writer w(out);
  out.write(kMagic.data(), kMagic.size());
  w.put<std::uint32_t>(kFormatVersion);
  w.put<std::uint64_t>(shape_.doc_length);
  w.put<std::uint64_t>(shape_.c_max);
  w.put<std::uint64_t>(shape_.stride);
  w.put<std::uint64_t>(shape_.vocab_size);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(shape_.dtype));
  w.put<std::uint64_t>(segments_.size());
  for (const Segment& s : segments_) {
    w.put<std::uint64_t>(s.start);
    w.put<std::uint64_t>(s.length);
  }
  if (shape_.dtype == StoreDtype::kFloat32) {
    w.put_array(f32_);
  } else {
    w.put_array(f16_);
  }
  out.flush();
  if (!out) throw Error(ErrorKind::kIo, "write to '" + path.string() + "' failed");
}

PredictionStore PredictionStore::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open store '" + path.string() + "'");
  const auto bad = [&](const std::string& what) {
    return Error(ErrorKind::kDataFormat, "store file '" + path.string() + "': " + what);
  };

  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw bad("bad magic");
  Reader r(in, path);
  const auto version = r.get<std::uint32_t>();
  if (version != kFormatVersion) throw bad("unsupported format version " + std::to_string(version));

  StoreShape shape;
  shape.doc_length = r.get<std::uint64_t>();
  shape.c_max = r.get<std::uint64_t>();
  shape.stride = r.get<std::uint64_t>();
  shape.vocab_size = r.get<std::uint64_t>();
  const auto dtype = r.get<std::uint32_t>();
  if (dtype > 1) throw bad("unknown dtype code " + std::to_string(dtype));
  shape.dtype = static_cast<StoreDtype>(dtype);
  if (shape.vocab_size < 2) throw bad("vocab_size < 2");

  const auto count = r.get<std::uint64_t>();
  std::vector<Segment> segments;
  if (count > shape.doc_length) throw bad("segment count exceeds document length");
  segments.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    Segment s;
    s.start = r.get<std::uint64_t>();
    s.length = r.get<std::uint64_t>();
    segments.push_back(s);
  }

  std::vector<Segment> expected;
  try {
    expected = canonical_segments(shape.doc_length, shape.c_max, shape.stride);
  } catch (const Error& e) {
    throw bad(e.what());
  }
  if (segments != expected) throw bad("segment table does not match the sliding-window plan");

  PredictionStore store = allocate(shape, std::move(segments));
  if (shape.dtype == StoreDtype::kFloat32) {
    r.get_array(store.f32_);
  } else {
    r.get_array(store.f16_);
  }
  if (in.peek() != std::char_traits<char>::eof()) throw bad("trailing bytes after payload");
  return store;
}

PredictionStore PredictionStore::allocate(const StoreShape& shape, std::vector<Segment> segments) {
  if (segments != canonical_segments(shape.doc_length, shape.c_max, shape.stride)) {
    throw Error(ErrorKind::kInvalidArgument, "segment table is not the canonical plan");
  }
  if (shape.vocab_size < 2) throw Error(ErrorKind::kInvalidArgument, "vocab_size must be >= 2");
  PredictionStore store;
  store.shape_ = shape;
  store.segments_ = std::move(segments);
  store.segment_offsets_.reserve(store.segments_.size());
  std::size_t rows = 0;
  for (const Segment& s : store.segments_) {
    store.segment_offsets_.push_back(rows);
    rows += s.length;
  }
  store.row_count_ = rows;
  if (shape.dtype == StoreDtype::kFloat32) {
    store.f32_.assign(rows * shape.vocab_size, 0.0f);
  } else {
    store.f16_.assign(rows * shape.vocab_size, 0);
  }
  return store;
}

StoreWriter::StoreWriter(const StoreShape& shape, std::vector<Segment> segments)
    : store_(PredictionStore::allocate(shape, std::move(segments))),
      written_(store_.segments_.size(), 0) {}

void StoreWriter::write_segment(std::size_t index, std::span<const float> log_probs) {
  if (index >= store_.segments_.size()) {
    throw Error(ErrorKind::kOutOfRange, "segment index " + std::to_string(index) + " out of range");
  }
  const std::size_t v = store_.shape_.vocab_size;
  const std::size_t rows = store_.segments_[index].length;
  if (log_probs.size() != rows * v) {
    throw Error(ErrorKind::kInvalidArgument,
                "segment " + std::to_string(index) + " expects " + std::to_string(rows * v) +
                    " values, got " + std::to_string(log_probs.size()));
  }
  const std::size_t first = store_.segment_offsets_[index] * v;
  if (store_.shape_.dtype == StoreDtype::kFloat32) {
    std::copy(log_probs.begin(), log_probs.end(),
              store_.f32_.begin() + static_cast<std::ptrdiff_t>(first));
  } else {
    for (std::size_t r = 0; r < rows; ++r) {
      half::quantize_log_row(log_probs.subspan(r * v, v),
                             std::span(store_.f16_).subspan(first + r * v, v));
    }
  }
  written_[index] = 1;
}

PredictionStore StoreWriter::finalize() && {
  const auto missing = std::find(written_.begin(), written_.end(), std::uint8_t{0});
  if (missing != written_.end()) {
    const auto index = static_cast<std::size_t>(missing - written_.begin());
    throw Error(ErrorKind::kInternal, "segment " + std::to_string(index) + " (start " +
                                          std::to_string(store_.segments_[index].start) +
                                          ") was never written");
  }
  return std::move(store_);
}

}  // namespace ctxprobe
