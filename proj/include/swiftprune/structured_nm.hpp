#pragma once

// N:M fine-grained structured sparsity: every aligned group of M consecutive
// weights in a row keeps exactly N of them.
//
// Packed layout (.swnm), all integers little-endian:
//   "SWNM" | u32 version = 1 | u8 dtype (0 = f32, 1 = f64) | u8 n_keep
//   | u8 m_group | u8 index_bits | u64 rows | u64 cols
//   | values: rows * (cols / m_group) * n_keep elements, group-major
//   | indices: one byte per kept value, within-group position in [0, m_group)
// index_bits records how many low bits of each index byte are significant
// (2 for M = 4, 3 for M = 8).

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "swiftprune/metrics.hpp"
#include "swiftprune/report.hpp"
#include "swiftprune/tensor_io.hpp"

namespace swiftprune {

struct NMPattern {
  std::size_t n_keep = 2;
  std::size_t m_group = 4;

  /// 0 < n_keep < m_group <= kMaxGroup, else a range error.
  void validate() const;
  unsigned index_bits() const;

  static constexpr std::size_t kMaxGroup = 32;

  bool operator==(const NMPattern&) const = default;
};

/// Selects the n_keep largest scores of one group, writing 1 (keep) or 0
/// (prune) into `keep`. The m - n smallest are found by repeated minimum
/// scans; equal scores prune the lower index first. Returns the number of
/// score comparisons made (m-1 + m-2 + ... over m - n rounds; 5 for 2:4).
std::size_t select_nm_group(std::span<const double> scores, const NMPattern& pattern, std::span<std::uint8_t> keep);

/// Convenience form returning the kept indices in ascending order.
std::vector<std::size_t> select_nm_group(std::span<const double> scores, const NMPattern& pattern);

struct NmOptions {
  MetricKind metric = MetricKind::swiftprune;
  // Let S shrink by the pruned w^2 after each group (swiftprune metric only).
  bool streaming = false;
};

/// Scores each row (S fixed at S0 unless streaming) and applies
/// select_nm_group to every aligned group. A trailing partial group is left
/// dense and counted in report.guards.partial_groups.
PruneOutcome prune_matrix_nm(const MatrixBuffer& W, const RowContext& ctx, const NMPattern& pattern,
                             const NmOptions& options = {}, std::size_t workers = 1);

/// True when every aligned group of every row keeps exactly n_keep entries.
/// Trailing partial groups are ignored.
bool satisfies_nm(const MaskMatrix& mask, const NMPattern& pattern);

struct PackedNM {
  std::size_t rows = 0;
  std::size_t cols = 0;
  NMPattern pattern;
  DType dtype = DType::f32;
  std::vector<double> values;
  std::vector<std::uint8_t> indices;

  std::size_t groups_per_row() const { return cols / pattern.m_group; }
  std::size_t kept_per_row() const { return groups_per_row() * pattern.n_keep; }

  /// Structure error unless cols % m == 0, lengths agree and each group's
  /// indices are strictly increasing and below m_group.
  void validate() const;

  bool operator==(const PackedNM&) const = default;
};

/// Structure error if the mask is not exactly N:M or cols % m != 0.
PackedNM pack_nm(const MatrixBuffer& pruned, const MaskMatrix& mask, const NMPattern& pattern);
MatrixBuffer unpack_nm(const PackedNM& packed);

/// Mask implied by the packed indices.
MaskMatrix packed_mask(const PackedNM& packed);

/// y = unpack_nm(p) * v, computed directly on the packed form.
std::vector<double> masked_matvec(const PackedNM& packed, std::span<const double> v);

std::vector<std::uint8_t> encode_packed(const PackedNM& packed);
PackedNM decode_packed(std::span<const std::uint8_t> bytes);
void write_packed(const PackedNM& packed, const std::filesystem::path& path);
PackedNM read_packed(const std::filesystem::path& path);

}  // namespace swiftprune
