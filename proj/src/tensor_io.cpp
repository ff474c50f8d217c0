#include "swiftprune/tensor_io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "swiftprune/errors.hpp"

namespace swiftprune {

namespace {

constexpr std::uint32_t kVersion = 1;
constexpr char kTensorMagic[4] = {'S', 'W', 'P', 'T'};
constexpr char kMaskMagic[4] = {'S', 'W', 'M', 'K'};

class ByteWriter {
 public:
  void magic(const char (&m)[4]) { out_.insert(out_.end(), m, m + 4); }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) { put_le(v); }
  void u64(std::uint64_t v) { put_le(v); }
  void f32(float v) { put_le(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { put_le(std::bit_cast<std::uint64_t>(v)); }
  void bytes(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  template <typename T>
  void put_le(T v) {
    for (std::size_t k = 0; k < sizeof(T); ++k) out_.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
  }
  std::vector<std::uint8_t> out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> in) : in_(in) {}

  bool magic(const char (&m)[4]) {
    if (remaining() < 4) return false;
    bool ok = std::memcmp(in_.data() + pos_, m, 4) == 0;
    pos_ += 4;
    return ok;
  }
  std::uint8_t u8() { return get_le<std::uint8_t>(); }
  std::uint32_t u32() { return get_le<std::uint32_t>(); }
  std::uint64_t u64() { return get_le<std::uint64_t>(); }
  float f32() { return std::bit_cast<float>(get_le<std::uint32_t>()); }
  double f64() { return std::bit_cast<double>(get_le<std::uint64_t>()); }
  std::span<const std::uint8_t> bytes(std::size_t n) {
    need(n);
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) throw Error(ErrorKind::truncation, "unexpected end of data");
  }
  template <typename T>
  T get_le() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t k = 0; k < sizeof(T); ++k) v |= static_cast<T>(static_cast<T>(in_[pos_ + k]) << (8 * k));
    pos_ += sizeof(T);
    return v;
  }

  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

void check_finite(std::span<const double> data, const char* what) {
  for (std::size_t k = 0; k < data.size(); ++k) {
    if (!std::isfinite(data[k])) {
      throw Error(ErrorKind::data, std::string(what) + ": non-finite element at index " + std::to_string(k));
    }
  }
}

struct TensorHeader {
  DType dtype;
  std::vector<std::uint64_t> dims;
};

void write_tensor(ByteWriter& w, DType dtype, std::span<const std::uint64_t> dims, std::span<const double> data) {
  w.magic(kTensorMagic);
  w.u32(kVersion);
  w.u8(static_cast<std::uint8_t>(dtype));
  w.u8(static_cast<std::uint8_t>(dims.size()));
  for (auto d : dims) w.u64(d);
  if (dtype == DType::f32) {
    for (double v : data) w.f32(static_cast<float>(v));
  } else {
    for (double v : data) w.f64(v);
  }
}

TensorHeader read_tensor_header(ByteReader& r) {
  if (!r.magic(kTensorMagic)) throw Error(ErrorKind::format, "bad magic: not a .swpt tensor");
  if (r.remaining() < 6) throw Error(ErrorKind::format, "truncated header");
  const auto version = r.u32();
  if (version != kVersion) throw Error(ErrorKind::format, "unsupported tensor version " + std::to_string(version));
  const auto code = r.u8();
  if (code > 1) throw Error(ErrorKind::format, "unknown dtype code " + std::to_string(code));
  const auto ndim = r.u8();
  if (ndim == 0 || ndim > 2) throw Error(ErrorKind::format, "unsupported rank " + std::to_string(ndim));
  if (r.remaining() < 8u * ndim) throw Error(ErrorKind::format, "truncated header");
  TensorHeader h{static_cast<DType>(code), {}};
  for (unsigned k = 0; k < ndim; ++k) h.dims.push_back(r.u64());
  return h;
}

std::vector<double> read_payload(ByteReader& r, DType dtype, std::uint64_t count) {
  const std::size_t esize = element_size(dtype);
  if (count > r.remaining() / esize || r.remaining() != count * esize) {
    throw Error(ErrorKind::truncation, "payload holds " + std::to_string(r.remaining() / esize) +
                                           " elements, header declares " + std::to_string(count));
  }
  std::vector<double> data(count);
  if (dtype == DType::f32) {
    for (auto& v : data) v = r.f32();
  } else {
    for (auto& v : data) v = r.f64();
  }
  return data;
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double parse_real(std::string_view key, std::string_view text) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
    throw Error(ErrorKind::config, "malformed number for '" + std::string(key) + "': '" + std::string(text) + "'");
  }
  return v;
}

std::uint64_t parse_count(std::string_view key, std::string_view text) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
    throw Error(ErrorKind::config, "malformed integer for '" + std::string(key) + "': '" + std::string(text) + "'");
  }
  return v;
}

bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "1" || text == "true" || text == "on" || text == "yes") return true;
  if (text == "0" || text == "false" || text == "off" || text == "no") return false;
  throw Error(ErrorKind::config, "malformed boolean for '" + std::string(key) + "': '" + std::string(text) + "'");
}

}  // namespace

const char* to_string(DType dtype) noexcept { return dtype == DType::f32 ? "f32" : "f64"; }

std::size_t element_size(DType dtype) noexcept { return dtype == DType::f32 ? 4 : 8; }

MatrixBuffer make_matrix(std::size_t rows, std::size_t cols, std::vector<double> data, DType dtype) {
  if (data.size() != rows * cols) {
    throw Error(ErrorKind::truncation, "matrix data holds " + std::to_string(data.size()) + " elements, shape needs " +
                                           std::to_string(rows * cols));
  }
  check_finite(data, "matrix");
  return MatrixBuffer{rows, cols, dtype, std::move(data)};
}

std::size_t MaskMatrix::pruned_count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{0}));
}

double MaskMatrix::sparsity() const {
  if (bits.empty()) return 0.0;
  return static_cast<double>(pruned_count()) / static_cast<double>(bits.size());
}

const char* to_string(PruneMode mode) noexcept {
  switch (mode) {
    case PruneMode::ewma: return "ewma";
    case PruneMode::topk: return "topk";
    case PruneMode::nm: return "nm";
    case PruneMode::magnitude_threshold: return "magnitude-threshold";
  }
  return "?";
}

const char* to_string(MetricKind metric) noexcept {
  switch (metric) {
    case MetricKind::swiftprune: return "swiftprune";
    case MetricKind::magnitude: return "magnitude";
    case MetricKind::wanda: return "wanda";
    case MetricKind::exact: return "exact";
  }
  return "?";
}

PruneMode parse_mode(std::string_view text) {
  for (auto m : {PruneMode::ewma, PruneMode::topk, PruneMode::nm, PruneMode::magnitude_threshold}) {
    if (text == to_string(m)) return m;
  }
  throw Error(ErrorKind::config, "unknown mode '" + std::string(text) + "'");
}

MetricKind parse_metric(std::string_view text) {
  for (auto m : {MetricKind::swiftprune, MetricKind::magnitude, MetricKind::wanda, MetricKind::exact}) {
    if (text == to_string(m)) return m;
  }
  throw Error(ErrorKind::config, "unknown metric '" + std::string(text) + "'");
}

void RunConfig::validate() const {
  auto open_unit = [](double v) { return v > 0.0 && v < 1.0; };
  if (!open_unit(alpha)) throw Error(ErrorKind::range, "alpha must lie in (0,1), got " + format_real(alpha));
  if (!open_unit(beta)) throw Error(ErrorKind::range, "beta must lie in (0,1), got " + format_real(beta));
  if (!std::isfinite(la)) throw Error(ErrorKind::range, "la must be finite");
  if (!(target_sparsity >= 0.0 && target_sparsity <= 1.0)) {
    throw Error(ErrorKind::range, "sparsity must lie in [0,1], got " + format_real(target_sparsity));
  }
  if (nm_n == 0 || nm_n >= nm_m) {
    throw Error(ErrorKind::range, "N:M pattern needs 0 < N < M, got " + std::to_string(nm_n) + ":" + std::to_string(nm_m));
  }
  if (workers == 0) throw Error(ErrorKind::range, "workers must be >= 1");
}

// ---------------------------------------------------------------------------
// tensors

std::vector<std::uint8_t> encode_matrix(const MatrixBuffer& m) {
  if (m.data.size() != m.rows * m.cols) throw Error(ErrorKind::truncation, "matrix data/shape mismatch");
  ByteWriter w;
  const std::uint64_t dims[2] = {m.rows, m.cols};
  write_tensor(w, m.dtype, dims, m.data);
  return w.take();
}

MatrixBuffer decode_matrix(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  auto h = read_tensor_header(r);
  if (h.dims.size() != 2) throw Error(ErrorKind::format, "expected a 2-D tensor");
  if (h.dims[1] != 0 && h.dims[0] > UINT64_MAX / h.dims[1]) throw Error(ErrorKind::format, "shape overflows");
  auto data = read_payload(r, h.dtype, h.dims[0] * h.dims[1]);
  return make_matrix(h.dims[0], h.dims[1], std::move(data), h.dtype);
}

std::vector<std::uint8_t> encode_vector(const VectorBuffer& v) {
  ByteWriter w;
  const std::uint64_t dims[1] = {v.data.size()};
  write_tensor(w, v.dtype, dims, v.data);
  return w.take();
}

VectorBuffer decode_vector(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  auto h = read_tensor_header(r);
  if (h.dims.size() != 1) throw Error(ErrorKind::format, "expected a 1-D tensor");
  auto data = read_payload(r, h.dtype, h.dims[0]);
  check_finite(data, "vector");
  return VectorBuffer{h.dtype, std::move(data)};
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot create " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::io, "write failed for " + path.string());
}

MatrixBuffer read_matrix(const std::filesystem::path& path) { return decode_matrix(read_file_bytes(path)); }

void write_matrix(const MatrixBuffer& m, const std::filesystem::path& path) { write_file_bytes(path, encode_matrix(m)); }

VectorBuffer read_vector(const std::filesystem::path& path) { return decode_vector(read_file_bytes(path)); }

void write_vector(const VectorBuffer& v, const std::filesystem::path& path) { write_file_bytes(path, encode_vector(v)); }

VectorBuffer reduce_calibration(const MatrixBuffer& samples) {
  if (samples.rows == 0) throw Error(ErrorKind::dimension, "calibration matrix has no samples");
  std::vector<double> x(samples.cols, 0.0);
  for (std::size_t b = 0; b < samples.rows; ++b) {
    auto row = samples.row(b);
    for (std::size_t j = 0; j < samples.cols; ++j) x[j] += row[j] * row[j];
  }
  for (auto& v : x) v = std::sqrt(v / static_cast<double>(samples.rows));
  return VectorBuffer{DType::f64, std::move(x)};
}

VectorBuffer read_calibration(const std::filesystem::path& path) {
  auto bytes = read_file_bytes(path);
  ByteReader r(bytes);
  auto h = read_tensor_header(r);
  if (h.dims.size() == 1) return decode_vector(bytes);
  return reduce_calibration(decode_matrix(bytes));
}

// ---------------------------------------------------------------------------
// masks

std::vector<std::uint8_t> pack_mask_bits(const MaskMatrix& mask) {
  std::vector<std::uint8_t> packed((mask.bits.size() + 7) / 8, 0);
  for (std::size_t k = 0; k < mask.bits.size(); ++k) {
    if (mask.bits[k]) packed[k / 8] |= static_cast<std::uint8_t>(1u << (k % 8));
  }
  return packed;
}

MaskMatrix unpack_mask_bits(std::size_t rows, std::size_t cols, std::span<const std::uint8_t> packed) {
  const std::size_t count = rows * cols;
  if (packed.size() != (count + 7) / 8) {
    throw Error(ErrorKind::truncation, "mask payload has " + std::to_string(packed.size()) + " bytes, shape needs " +
                                           std::to_string((count + 7) / 8));
  }
  MaskMatrix mask(rows, cols, false);
  for (std::size_t k = 0; k < count; ++k) mask.bits[k] = (packed[k / 8] >> (k % 8)) & 1u;
  return mask;
}

std::vector<std::uint8_t> encode_mask(const MaskMatrix& mask) {
  if (mask.bits.size() != mask.rows * mask.cols) throw Error(ErrorKind::truncation, "mask bits/shape mismatch");
  ByteWriter w;
  w.magic(kMaskMagic);
  w.u32(kVersion);
  w.u64(mask.rows);
  w.u64(mask.cols);
  w.bytes(pack_mask_bits(mask));
  return w.take();
}

MaskMatrix decode_mask(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (!r.magic(kMaskMagic)) throw Error(ErrorKind::format, "bad magic: not a .mask file");
  if (r.remaining() < 20) throw Error(ErrorKind::format, "truncated mask header");
  if (r.u32() != kVersion) throw Error(ErrorKind::format, "unsupported mask version");
  const auto rows = r.u64();
  const auto cols = r.u64();
  return unpack_mask_bits(rows, cols, r.bytes(r.remaining()));
}

void write_mask(const MaskMatrix& mask, const std::filesystem::path& path) { write_file_bytes(path, encode_mask(mask)); }

MaskMatrix read_mask(const std::filesystem::path& path) { return decode_mask(read_file_bytes(path)); }

// ---------------------------------------------------------------------------
// traces

std::string format_real(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

void write_trace(std::span<const TraceRecord> records, std::ostream& out) {
  out << kTraceHeader << '\n';
  for (const auto& r : records) {
    out << r.row << ',' << r.i << ',' << format_real(r.L) << ',' << format_real(r.est) << ',' << format_real(r.dev)
        << ',' << (r.pruned ? 1 : 0) << '\n';
  }
}

void write_trace(std::span<const TraceRecord> records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot create " + path.string());
  write_trace(records, out);
  if (!out) throw Error(ErrorKind::io, "write failed for " + path.string());
}

std::vector<TraceRecord> parse_trace(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || trim(line) != kTraceHeader) {
    throw Error(ErrorKind::format, "trace CSV must start with '" + std::string(kTraceHeader) + "'");
  }
  std::vector<TraceRecord> records;
  while (std::getline(in, line)) {
    auto text = trim(line);
    if (text.empty() || text.front() == '#') continue;
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
      auto comma = text.find(',', start);
      fields.push_back(text.substr(start, comma == std::string_view::npos ? comma : comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (fields.size() != 6) throw Error(ErrorKind::format, "trace line needs 6 fields: " + std::string(text));
    // strtod accepts "inf", which the guarded scores print as.
    auto real = [](std::string_view f) {
      std::string s(f);
      char* end = nullptr;
      double v = std::strtod(s.c_str(), &end);
      if (s.empty() || end != s.c_str() + s.size()) throw Error(ErrorKind::format, "bad real in trace: " + s);
      return v;
    };
    TraceRecord rec;
    rec.row = parse_count("row", fields[0]);
    rec.i = parse_count("i", fields[1]);
    rec.L = real(fields[2]);
    rec.est = real(fields[3]);
    rec.dev = real(fields[4]);
    rec.pruned = parse_bool("pruned", fields[5]);
    records.push_back(rec);
  }
  return records;
}

std::vector<TraceRecord> read_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
  return parse_trace(in);
}

// ---------------------------------------------------------------------------
// config

void apply_config_entry(RunConfig& cfg, std::string_view key, std::string_view value) {
  if (key == "mode") {
    cfg.mode = parse_mode(value);
  } else if (key == "metric") {
    cfg.metric = parse_metric(value);
  } else if (key == "alpha") {
    cfg.alpha = parse_real(key, value);
  } else if (key == "beta") {
    cfg.beta = parse_real(key, value);
  } else if (key == "la") {
    cfg.la = parse_real(key, value);
  } else if (key == "sparsity" || key == "target_sparsity") {
    cfg.target_sparsity = parse_real(key, value);
  } else if (key == "nm") {
    auto colon = value.find(':');
    if (colon == std::string_view::npos) throw Error(ErrorKind::config, "nm expects N:M, got '" + std::string(value) + "'");
    cfg.nm_n = parse_count(key, value.substr(0, colon));
    cfg.nm_m = parse_count(key, value.substr(colon + 1));
  } else if (key == "nm_n") {
    cfg.nm_n = parse_count(key, value);
  } else if (key == "nm_m") {
    cfg.nm_m = parse_count(key, value);
  } else if (key == "seed") {
    cfg.seed = parse_count(key, value);
  } else if (key == "workers") {
    cfg.workers = parse_count(key, value);
  } else if (key == "dtype") {
    if (value == "f32") {
      cfg.dtype = DType::f32;
    } else if (value == "f64") {
      cfg.dtype = DType::f64;
    } else {
      throw Error(ErrorKind::config, "dtype must be f32 or f64");
    }
  } else if (key == "s_update") {
    cfg.s_update = parse_bool(key, value);
  } else if (key == "nm_streaming") {
    cfg.nm_streaming = parse_bool(key, value);
  } else if (key == "trace") {
    cfg.trace = parse_bool(key, value);
  } else {
    throw Error(ErrorKind::config, "unknown config key '" + std::string(key) + "'");
  }
}

RunConfig parse_config(std::string_view text) {
  RunConfig cfg;
  std::size_t lineno = 0;
  while (!text.empty()) {
    auto nl = text.find('\n');
    auto line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++lineno;
    if (line.empty() || line.front() == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorKind::config, "line " + std::to_string(lineno) + ": expected key=value");
    }
    apply_config_entry(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  cfg.validate();
  return cfg;
}

RunConfig read_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string format_config(const RunConfig& cfg) {
  std::ostringstream out;
  out << "mode=" << to_string(cfg.mode) << '\n'
      << "metric=" << to_string(cfg.metric) << '\n'
      << "alpha=" << format_real(cfg.alpha) << '\n'
      << "beta=" << format_real(cfg.beta) << '\n'
      << "la=" << format_real(cfg.la) << '\n'
      << "sparsity=" << format_real(cfg.target_sparsity) << '\n'
      << "nm=" << cfg.nm_n << ':' << cfg.nm_m << '\n'
      << "seed=" << cfg.seed << '\n'
      << "workers=" << cfg.workers << '\n'
      << "dtype=" << to_string(cfg.dtype) << '\n'
      << "s_update=" << (cfg.s_update ? "true" : "false") << '\n'
      << "nm_streaming=" << (cfg.nm_streaming ? "true" : "false") << '\n'
      << "trace=" << (cfg.trace ? "true" : "false") << '\n';
  return out.str();
}

}  // namespace swiftprune
