#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "lama/error.hpp"

namespace lama {

/// HBM2 stack organization in pseudo-channel mode.
///
/// Counts follow the pseudo-channel convention: a "channel" aggregate is two
/// pseudo-channels, each with its own 1 KB row buffer and 8 banks.
struct HbmConfig {
  std::uint32_t channels_per_die = 2;
  std::uint32_t dies = 4;
  std::uint32_t pseudo_channels_per_channel = 2;
  std::uint32_t bank_groups_per_pch = 2;
  std::uint32_t banks_per_group = 4;
  std::uint32_t subarrays_per_bank = 64;
  std::uint32_t rows_per_subarray = 512;
  std::uint32_t bank_rows = 32768;
  std::uint32_t mats_per_subarray = 16;
  std::uint32_t mat_rows = 512;   // bits
  std::uint32_t mat_cols = 512;   // bits
  std::uint32_t row_buffer_bytes_per_pch = 1024;
  std::uint32_t atom_bytes = 32;
  std::uint32_t dq_bits = 64;     // per pseudo-channel

  std::uint32_t banks_per_pch() const { return bank_groups_per_pch * banks_per_group; }
  std::uint32_t total_pch() const { return dies * channels_per_die * pseudo_channels_per_channel; }
  /// Bytes one mat contributes to an open row.
  std::uint32_t mat_segment_bytes() const { return mat_cols / 8; }
  /// Bytes delivered by one internal column access (8 bits per mat).
  std::uint32_t ica_bytes() const { return mats_per_subarray; }

  bool operator==(const HbmConfig&) const = default;
};

inline HbmConfig default_config() { return HbmConfig{}; }

/// Returns one human-readable entry per violated invariant; empty when valid.
inline std::vector<std::string> validate_config(const HbmConfig& c) {
  std::vector<std::string> v;
  const std::uint32_t counts[] = {c.channels_per_die, c.pseudo_channels_per_channel,
                                  c.bank_groups_per_pch, c.banks_per_group,
                                  c.subarrays_per_bank, c.rows_per_subarray,
                                  c.mats_per_subarray, c.mat_rows, c.mat_cols,
                                  c.row_buffer_bytes_per_pch, c.atom_bytes, c.dq_bits};
  for (auto n : counts) {
    if (n == 0) {
      v.emplace_back("hierarchy counts must be non-zero");
      break;
    }
  }
  if (c.pseudo_channels_per_channel != 2)
    v.emplace_back("only pseudo-channel mode (2 pseudo-channels per channel) is modeled");
  if (std::uint64_t{c.mats_per_subarray} * c.mat_cols / 8 != c.row_buffer_bytes_per_pch)
    v.emplace_back("mats_per_subarray * mat_cols / 8 must equal row_buffer_bytes_per_pch");
  if (std::uint64_t{c.rows_per_subarray} * c.subarrays_per_bank != c.bank_rows)
    v.emplace_back("rows_per_subarray * subarrays_per_bank must equal bank_rows");
  if (c.atom_bytes != 2 * c.mats_per_subarray)
    v.emplace_back("atom_bytes must equal two internal column accesses (2 * mats_per_subarray bytes)");
  if (c.mat_cols % 8 != 0)
    v.emplace_back("mat_cols must be a whole number of bytes");
  return v;
}

/// Total stack capacity: hierarchy counts times row bytes.
inline std::uint64_t capacity_bytes(const HbmConfig& c) {
  return std::uint64_t{c.dies} * c.channels_per_die * c.pseudo_channels_per_channel *
         c.bank_groups_per_pch * c.banks_per_group * c.subarrays_per_bank *
         c.rows_per_subarray * c.row_buffer_bytes_per_pch;
}

inline std::uint64_t bank_bytes(const HbmConfig& c) {
  return std::uint64_t{c.subarrays_per_bank} * c.rows_per_subarray * c.row_buffer_bytes_per_pch;
}

/// A byte inside the stack. `pch` is the stack-global pseudo-channel index.
struct Location {
  std::uint32_t pch = 0;
  std::uint32_t bank_group = 0;
  std::uint32_t bank = 0;
  std::uint32_t subarray = 0;
  std::uint32_t row = 0;
  std::uint32_t mat = 0;
  std::uint32_t byte_col = 0;

  bool operator==(const Location&) const = default;
};

inline bool is_valid(const Location& l, const HbmConfig& c) {
  return l.pch < c.total_pch() && l.bank_group < c.bank_groups_per_pch &&
         l.bank < c.banks_per_group && l.subarray < c.subarrays_per_bank &&
         l.row < c.rows_per_subarray && l.mat < c.mats_per_subarray &&
         l.byte_col < c.mat_segment_bytes();
}

// Row-major: pch -> bank_group -> bank -> subarray -> row -> mat -> byte_col.
inline std::uint64_t flat_offset(const Location& l, const HbmConfig& c) {
  if (!is_valid(l, c)) throw Error(ErrorKind::InvalidArgument, "location outside configuration");
  std::uint64_t o = l.pch;
  o = o * c.bank_groups_per_pch + l.bank_group;
  o = o * c.banks_per_group + l.bank;
  o = o * c.subarrays_per_bank + l.subarray;
  o = o * c.rows_per_subarray + l.row;
  o = o * c.mats_per_subarray + l.mat;
  o = o * c.mat_segment_bytes() + l.byte_col;
  return o;
}

inline Location locate(std::uint64_t offset, const HbmConfig& c) {
  if (offset >= capacity_bytes(c)) throw Error(ErrorKind::InvalidArgument, "offset beyond capacity");
  Location l;
  auto take = [&offset](std::uint32_t n) {
    auto r = static_cast<std::uint32_t>(offset % n);
    offset /= n;
    return r;
  };
  l.byte_col = take(c.mat_segment_bytes());
  l.mat = take(c.mats_per_subarray);
  l.row = take(c.rows_per_subarray);
  l.subarray = take(c.subarrays_per_bank);
  l.bank = take(c.banks_per_group);
  l.bank_group = take(c.bank_groups_per_pch);
  l.pch = static_cast<std::uint32_t>(offset);
  return l;
}

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(HbmConfig, channels_per_die, dies,
                                                pseudo_channels_per_channel, bank_groups_per_pch,
                                                banks_per_group, subarrays_per_bank,
                                                rows_per_subarray, bank_rows, mats_per_subarray,
                                                mat_rows, mat_cols, row_buffer_bytes_per_pch,
                                                atom_bytes, dq_bits)

}  // namespace lama
