#include "swiftprune/structured_nm.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <chrono>
#include <climits>
#include <cmath>
#include <cstring>
#include <string>

#include "parallel.hpp"
#include "swiftprune/errors.hpp"
#include "swiftprune/kernels.hpp"

namespace swiftprune {

void NMPattern::validate() const {
  if (n_keep == 0 || n_keep >= m_group || m_group > kMaxGroup) {
    throw Error(ErrorKind::range, "unsupported N:M pattern " + std::to_string(n_keep) + ":" + std::to_string(m_group));
  }
}

unsigned NMPattern::index_bits() const {
  return static_cast<unsigned>(std::bit_width(m_group - 1));
}

std::size_t select_nm_group(std::span<const double> scores, const NMPattern& pattern, std::span<std::uint8_t> keep) {
  const std::size_t m = pattern.m_group;
  std::fill(keep.begin(), keep.begin() + static_cast<std::ptrdiff_t>(m), std::uint8_t{1});
  std::size_t comparisons = 0;
  for (std::size_t round = 0; round < m - pattern.n_keep; ++round) {
    std::size_t best = m;
    for (std::size_t j = 0; j < m; ++j) {
      if (!keep[j]) continue;
      if (best == m) {
        best = j;
        continue;
      }
      ++comparisons;
      // Strict < while scanning upward keeps the lowest index among ties.
      if (scores[j] < scores[best]) best = j;
    }
    keep[best] = 0;
  }
  return comparisons;
}

std::vector<std::size_t> select_nm_group(std::span<const double> scores, const NMPattern& pattern) {
  pattern.validate();
  if (scores.size() != pattern.m_group) throw Error(ErrorKind::dimension, "group size does not match the pattern");
  std::array<std::uint8_t, NMPattern::kMaxGroup> keep{};
  select_nm_group(scores, pattern, keep);
  std::vector<std::size_t> kept;
  for (std::size_t j = 0; j < pattern.m_group; ++j) {
    if (keep[j]) kept.push_back(j);
  }
  return kept;
}

PruneOutcome prune_matrix_nm(const MatrixBuffer& W, const RowContext& ctx, const NMPattern& pattern,
                             const NmOptions& options, std::size_t workers) {
  pattern.validate();
  if (W.cols != ctx.n()) throw Error(ErrorKind::dimension, "matrix columns do not match calibration length");
  if (options.streaming && options.metric != MetricKind::swiftprune) {
    throw Error(ErrorKind::config, "streaming N:M selection needs the swiftprune metric");
  }

  const std::size_t m = pattern.m_group;
  const std::size_t groups = W.cols / m;
  PruneOutcome out{W, MaskMatrix(W.rows, W.cols), PruneReport{}, {}};

  const auto start = std::chrono::steady_clock::now();
  detail::for_each_row(W.rows, workers, [&](std::size_t r) {
    const auto w = W.row(r);
    auto dst = out.pruned.row(r);
    auto mask = out.mask.row(r);
    std::vector<double> scores(W.cols);
    if (!options.streaming) score_row(options.metric, w, ctx, scores);

    const auto x = ctx.x();
    const double floor = 1e-12 * ctx.s0();
    double S = ctx.s0();
    for (std::size_t g = 0; g < groups; ++g) {
      const std::size_t base = g * m;
      if (options.streaming) {
        kernels::active().contribution_scores(w.data() + base, x.data() + base, m, S, scores.data() + base);
      }
      select_nm_group(std::span<const double>(scores).subspan(base, m), pattern, mask.subspan(base, m));
      for (std::size_t j = base; j < base + m; ++j) {
        if (mask[j]) continue;
        dst[j] = 0.0;
        if (options.streaming) S = std::max(S - w[j] * w[j], floor);
      }
    }
  });
  const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;

  summarize_mask(out.mask, out.report);
  out.report.wall_time_s = std::max(elapsed.count(), 1e-9);
  out.report.guards.partial_groups = W.cols % m == 0 ? 0 : W.rows;
  return out;
}

bool satisfies_nm(const MaskMatrix& mask, const NMPattern& pattern) {
  const std::size_t m = pattern.m_group;
  const std::size_t groups = mask.cols / m;
  for (std::size_t r = 0; r < mask.rows; ++r) {
    const auto row = mask.row(r);
    for (std::size_t g = 0; g < groups; ++g) {
      std::size_t kept = 0;
      for (std::size_t j = g * m; j < g * m + m; ++j) kept += row[j] ? 1 : 0;
      if (kept != pattern.n_keep) return false;
    }
  }
  return true;
}

void PackedNM::validate() const {
  pattern.validate();
  if (cols % pattern.m_group != 0) {
    throw Error(ErrorKind::structure, "packed N:M needs cols divisible by " + std::to_string(pattern.m_group));
  }
  const std::size_t kept = rows * kept_per_row();
  if (values.size() != kept || indices.size() != kept) {
    throw Error(ErrorKind::structure, "packed payload lengths disagree with the shape");
  }
  for (std::size_t g = 0; g < kept; g += pattern.n_keep) {
    for (std::size_t k = 0; k < pattern.n_keep; ++k) {
      const auto idx = indices[g + k];
      if (idx >= pattern.m_group) throw Error(ErrorKind::structure, "group index out of range");
      if (k > 0 && idx <= indices[g + k - 1]) {
        throw Error(ErrorKind::structure, "group indices must be strictly increasing");
      }
    }
  }
}

PackedNM pack_nm(const MatrixBuffer& pruned, const MaskMatrix& mask, const NMPattern& pattern) {
  pattern.validate();
  if (mask.rows != pruned.rows || mask.cols != pruned.cols) throw Error(ErrorKind::dimension, "mask/matrix shape mismatch");
  if (pruned.cols % pattern.m_group != 0) {
    throw Error(ErrorKind::structure, "cannot pack: cols not divisible by " + std::to_string(pattern.m_group));
  }
  if (!satisfies_nm(mask, pattern)) throw Error(ErrorKind::structure, "mask violates the N:M pattern");

  PackedNM p{pruned.rows, pruned.cols, pattern, pruned.dtype, {}, {}};
  p.values.reserve(pruned.rows * p.kept_per_row());
  p.indices.reserve(pruned.rows * p.kept_per_row());
  for (std::size_t k = 0; k < mask.bits.size(); ++k) {
    if (!mask.bits[k]) continue;
    p.values.push_back(pruned.data[k]);
    p.indices.push_back(static_cast<std::uint8_t>((k % pruned.cols) % pattern.m_group));
  }
  return p;
}

MatrixBuffer unpack_nm(const PackedNM& packed) {
  packed.validate();
  MatrixBuffer dense{packed.rows, packed.cols, packed.dtype, std::vector<double>(packed.rows * packed.cols, 0.0)};
  const std::size_t n = packed.pattern.n_keep;
  const std::size_t m = packed.pattern.m_group;
  for (std::size_t k = 0; k < packed.values.size(); ++k) {
    const std::size_t group = k / n;  // global group index, row-major
    dense.data[group * m + packed.indices[k]] = packed.values[k];
  }
  return dense;
}

MaskMatrix packed_mask(const PackedNM& packed) {
  packed.validate();
  MaskMatrix mask(packed.rows, packed.cols, false);
  for (std::size_t k = 0; k < packed.indices.size(); ++k) {
    mask.bits[(k / packed.pattern.n_keep) * packed.pattern.m_group + packed.indices[k]] = 1;
  }
  return mask;
}

std::vector<double> masked_matvec(const PackedNM& packed, std::span<const double> v) {
  packed.validate();
  if (v.size() != packed.cols) throw Error(ErrorKind::dimension, "masked_matvec: vector length does not match cols");
  // The SIMD gather takes 32-bit offsets.
  const auto& table = packed.cols <= static_cast<std::size_t>(INT32_MAX) ? kernels::active() : kernels::scalar();
  const std::size_t per_row = packed.kept_per_row();
  std::vector<double> y(packed.rows);
  for (std::size_t r = 0; r < packed.rows; ++r) {
    y[r] = table.packed_row_dot(packed.values.data() + r * per_row, packed.indices.data() + r * per_row, per_row,
                                packed.pattern.n_keep, packed.pattern.m_group, v.data());
  }
  return y;
}

namespace {

constexpr char kPackedMagic[4] = {'S', 'W', 'N', 'M'};
constexpr std::uint32_t kPackedVersion = 1;

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T v) {
  for (std::size_t k = 0; k < sizeof(T); ++k) out.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
}

template <typename T>
T get_le(std::span<const std::uint8_t> in, std::size_t& pos) {
  if (in.size() - pos < sizeof(T)) throw Error(ErrorKind::truncation, "packed file ends early");
  T v = 0;
  for (std::size_t k = 0; k < sizeof(T); ++k) v |= static_cast<T>(static_cast<T>(in[pos + k]) << (8 * k));
  pos += sizeof(T);
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode_packed(const PackedNM& packed) {
  packed.validate();
  std::vector<std::uint8_t> out(kPackedMagic, kPackedMagic + 4);
  put_le<std::uint32_t>(out, kPackedVersion);
  put_le<std::uint8_t>(out, static_cast<std::uint8_t>(packed.dtype));
  put_le<std::uint8_t>(out, static_cast<std::uint8_t>(packed.pattern.n_keep));
  put_le<std::uint8_t>(out, static_cast<std::uint8_t>(packed.pattern.m_group));
  put_le<std::uint8_t>(out, static_cast<std::uint8_t>(packed.pattern.index_bits()));
  put_le<std::uint64_t>(out, packed.rows);
  put_le<std::uint64_t>(out, packed.cols);
  for (double v : packed.values) {
    if (packed.dtype == DType::f32) {
      put_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    } else {
      put_le(out, std::bit_cast<std::uint64_t>(v));
    }
  }
  out.insert(out.end(), packed.indices.begin(), packed.indices.end());
  return out;
}

PackedNM decode_packed(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 28 || std::memcmp(bytes.data(), kPackedMagic, 4) != 0) {
    throw Error(ErrorKind::format, "bad magic: not a .swnm file");
  }
  std::size_t pos = 4;
  if (get_le<std::uint32_t>(bytes, pos) != kPackedVersion) throw Error(ErrorKind::format, "unsupported .swnm version");
  const auto dtype = get_le<std::uint8_t>(bytes, pos);
  if (dtype > 1) throw Error(ErrorKind::format, "unknown dtype code");
  PackedNM p;
  p.dtype = static_cast<DType>(dtype);
  p.pattern.n_keep = get_le<std::uint8_t>(bytes, pos);
  p.pattern.m_group = get_le<std::uint8_t>(bytes, pos);
  const auto bits = get_le<std::uint8_t>(bytes, pos);
  try {
    p.pattern.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::format, e.what());
  }
  if (bits != p.pattern.index_bits()) throw Error(ErrorKind::format, "index bit-width disagrees with the pattern");
  p.rows = get_le<std::uint64_t>(bytes, pos);
  p.cols = get_le<std::uint64_t>(bytes, pos);
  if (p.cols % p.pattern.m_group != 0) throw Error(ErrorKind::format, "cols not divisible by m_group");

  const std::size_t kept = p.rows * p.kept_per_row();
  const std::size_t esize = element_size(p.dtype);
  if (bytes.size() - pos != kept * (esize + 1)) {
    throw Error(ErrorKind::truncation, "packed payload length disagrees with the declared shape");
  }
  p.values.resize(kept);
  for (auto& v : p.values) {
    v = p.dtype == DType::f32 ? static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(bytes, pos)))
                              : std::bit_cast<double>(get_le<std::uint64_t>(bytes, pos));
    if (!std::isfinite(v)) throw Error(ErrorKind::data, "non-finite packed value");
  }
  p.indices.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
  p.validate();
  return p;
}

void write_packed(const PackedNM& packed, const std::filesystem::path& path) {
  write_file_bytes(path, encode_packed(packed));
}

PackedNM read_packed(const std::filesystem::path& path) { return decode_packed(read_file_bytes(path)); }

}  // namespace swiftprune
