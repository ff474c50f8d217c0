#pragma once

// Persistence for weight matrices, calibration vectors, prune masks, EWMA
// traces and run configuration.
//
// Binary tensor layout (.swpt), all integers little-endian:
//   "SWPT" | u32 version = 1 | u8 dtype (0 = f32, 1 = f64) | u8 ndim
//   | u64 dims[ndim] | payload (row-major, little-endian IEEE-754)
//
// Mask layout (.mask):
//   "SWMK" | u32 version = 1 | u64 rows | u64 cols
//   | ceil(rows*cols / 8) bytes, element k stored in bit (k % 8) of byte k / 8

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace swiftprune {

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

const char* to_string(DType dtype) noexcept;
std::size_t element_size(DType dtype) noexcept;

/// Dense row-major matrix. Elements are held in double precision; `dtype`
/// records the storage precision used on disk.
struct MatrixBuffer {
  std::size_t rows = 0;
  std::size_t cols = 0;
  DType dtype = DType::f32;
  std::vector<double> data;

  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  bool operator==(const MatrixBuffer&) const = default;
};

/// Builds a matrix and checks the length and finiteness invariants.
MatrixBuffer make_matrix(std::size_t rows, std::size_t cols, std::vector<double> data,
                         DType dtype = DType::f32);

struct VectorBuffer {
  DType dtype = DType::f32;
  std::vector<double> data;

  std::size_t size() const { return data.size(); }
  bool operator==(const VectorBuffer&) const = default;
};

/// Row-major keep/prune bits; 1 = weight kept.
struct MaskMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> bits;

  MaskMatrix() = default;
  MaskMatrix(std::size_t r, std::size_t c, bool kept = true) : rows(r), cols(c), bits(r * c, kept ? 1 : 0) {}

  bool kept(std::size_t r, std::size_t c) const { return bits[r * cols + c] != 0; }
  std::span<const std::uint8_t> row(std::size_t r) const { return {bits.data() + r * cols, cols}; }
  std::span<std::uint8_t> row(std::size_t r) { return {bits.data() + r * cols, cols}; }
  std::size_t pruned_count() const;
  /// Fraction of pruned entries; 0 for an empty mask.
  double sparsity() const;

  bool operator==(const MaskMatrix&) const = default;
};

enum class PruneMode { ewma, topk, nm, magnitude_threshold };
enum class MetricKind { swiftprune, magnitude, wanda, exact };

const char* to_string(PruneMode mode) noexcept;
const char* to_string(MetricKind metric) noexcept;
PruneMode parse_mode(std::string_view text);
MetricKind parse_metric(std::string_view text);

struct RunConfig {
  PruneMode mode = PruneMode::ewma;
  MetricKind metric = MetricKind::swiftprune;
  double alpha = 0.125;
  double beta = 0.125;
  double la = 4.0;
  double target_sparsity = 0.5;
  std::size_t nm_n = 2;
  std::size_t nm_m = 4;
  std::uint64_t seed = 42;
  std::size_t workers = 1;
  DType dtype = DType::f32;
  // Ablation switch for the S <- S - w^2 tensor-state update.
  bool s_update = true;
  // Structured mode: let S shrink group by group instead of staying at S0.
  bool nm_streaming = false;
  bool trace = false;

  /// Throws range errors for alpha/beta outside (0,1), sparsity outside
  /// [0,1], nm_n >= nm_m, or workers == 0.
  void validate() const;

  bool operator==(const RunConfig&) const = default;
};

struct TraceRecord {
  std::size_t row = 0;
  std::size_t i = 0;
  double L = 0.0;
  double est = 0.0;
  double dev = 0.0;
  bool pruned = false;

  bool operator==(const TraceRecord&) const = default;
};

// Byte-level codecs; the path overloads below are thin wrappers.
std::vector<std::uint8_t> encode_matrix(const MatrixBuffer& m);
MatrixBuffer decode_matrix(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_vector(const VectorBuffer& v);
VectorBuffer decode_vector(std::span<const std::uint8_t> bytes);

MatrixBuffer read_matrix(const std::filesystem::path& path);
void write_matrix(const MatrixBuffer& m, const std::filesystem::path& path);
VectorBuffer read_vector(const std::filesystem::path& path);
void write_vector(const VectorBuffer& v, const std::filesystem::path& path);

/// Collapses B calibration samples (B x n) into one vector with
/// x_j = sqrt(mean_b x_{b,j}^2), which preserves the sum-of-squares statistic.
VectorBuffer reduce_calibration(const MatrixBuffer& samples);

/// Accepts either a 1-D .swpt vector or a 2-D sample matrix.
VectorBuffer read_calibration(const std::filesystem::path& path);

std::vector<std::uint8_t> pack_mask_bits(const MaskMatrix& mask);
MaskMatrix unpack_mask_bits(std::size_t rows, std::size_t cols, std::span<const std::uint8_t> packed);
std::vector<std::uint8_t> encode_mask(const MaskMatrix& mask);
MaskMatrix decode_mask(std::span<const std::uint8_t> bytes);
void write_mask(const MaskMatrix& mask, const std::filesystem::path& path);
MaskMatrix read_mask(const std::filesystem::path& path);

inline constexpr std::string_view kTraceHeader = "row,i,L,est,dev,pruned";

/// CSV with the fixed header; reals printed with 17 significant digits.
/// Lines starting with '#' are comments (used for summary lines).
void write_trace(std::span<const TraceRecord> records, std::ostream& out);
void write_trace(std::span<const TraceRecord> records, const std::filesystem::path& path);
std::vector<TraceRecord> parse_trace(std::istream& in);
std::vector<TraceRecord> read_trace(const std::filesystem::path& path);

/// Flat key=value text. Blank lines and '#' comments are skipped; unknown
/// keys and malformed values are errors. Absent keys keep their defaults.
RunConfig parse_config(std::string_view text);
RunConfig read_config(const std::filesystem::path& path);
/// Applies one key=value assignment to `cfg` (shared by the parser and CLI flags).
void apply_config_entry(RunConfig& cfg, std::string_view key, std::string_view value);
std::string format_config(const RunConfig& cfg);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

/// 17 significant digits (%.17g), enough for a double round-trip.
std::string format_real(double value);

}  // namespace swiftprune
