#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "lama/error.hpp"
#include "lama/mem_topology.hpp"
#include "lama/timing.hpp"

namespace lama {

using BinaryFn = std::function<std::uint32_t(std::uint32_t, std::uint32_t)>;

inline std::uint32_t multiply(std::uint32_t a, std::uint32_t b) { return a * b; }

/// Placement of one function table in the compute subarray.
struct LutLayout {
  std::uint32_t op_bitwidth = 4;
  std::uint32_t result_bits = 8;
  std::uint32_t mats_per_lut = 1;
  std::uint32_t p = 16;
  std::uint32_t lut_rows = 16;
  std::uint32_t replicas_per_subarray = 16;
  std::uint32_t icas_per_result = 1;
  std::uint32_t col_lsbs = 4;
  std::uint32_t mask_msb_count = 0;

  std::uint32_t result_bytes() const { return result_bits / 8; }
  bool masked() const { return p < 16; }
};

inline constexpr std::uint32_t kLutMats = 16;
inline constexpr std::uint32_t kSegmentBytes = 64;

inline LutLayout layout_for(std::uint32_t n) {
  if (n < 4 || n > 8)
    throw Error(ErrorKind::UnsupportedPrecision,
                "operand bitwidth " + std::to_string(n) + " outside 4..8");
  LutLayout l;
  l.op_bitwidth = n;
  l.lut_rows = 1u << n;
  if (n == 4) return l;
  l.result_bits = 16;
  l.icas_per_result = 2;
  l.col_lsbs = 5;
  l.mask_msb_count = n - 5;
  l.mats_per_lut = 1u << l.mask_msb_count;
  l.p = kLutMats / l.mats_per_lut;
  l.replicas_per_subarray = l.p;
  return l;
}

/// A materialized compute subarray: one 1 KB image per LUT row.
struct LutImage {
  LutLayout layout;
  std::vector<std::vector<std::uint8_t>> rows;

  std::uint8_t at(std::uint32_t row, std::uint32_t mat, std::uint32_t col) const {
    return rows[row][mat * kSegmentBytes + col];
  }
};

inline void check_lut_geometry(const HbmConfig& cfg) {
  if (cfg.mats_per_subarray != kLutMats || cfg.mat_segment_bytes() != kSegmentBytes)
    throw Error(ErrorKind::InvalidArgument, "LUT layouts assume 16 mats with 64-byte row segments");
}

/// Row r holds f(r, b) for every b. 4-bit results are single bytes at column b
/// of every mat; wider results are 16-bit little-endian, mat m of a group
/// holding b = m * 32 + col / 2.
inline LutImage build_layout(const BinaryFn& f, std::uint32_t n, const HbmConfig& cfg = {}) {
  check_lut_geometry(cfg);
  LutImage img;
  img.layout = layout_for(n);
  const LutLayout& L = img.layout;
  if (L.lut_rows > cfg.rows_per_subarray)
    throw Error(ErrorKind::CapacityExceeded, "LUT rows exceed subarray rows");
  const std::uint32_t limit = L.result_bits == 8 ? 0xFFu : 0xFFFFu;
  img.rows.assign(L.lut_rows, std::vector<std::uint8_t>(cfg.row_buffer_bytes_per_pch, 0));
  for (std::uint32_t a = 0; a < L.lut_rows; ++a) {
    auto& row = img.rows[a];
    for (std::uint32_t b = 0; b < L.lut_rows; ++b) {
      const std::uint32_t v = f(a, b);
      if (v > limit)
        throw Error(ErrorKind::OperandOutOfDomain,
                    "f(" + std::to_string(a) + "," + std::to_string(b) + ") does not fit " +
                        std::to_string(L.result_bits) + " bits");
      if (L.result_bits == 8) {
        for (std::uint32_t m = 0; m < kLutMats; ++m) row[m * kSegmentBytes + b] = std::uint8_t(v);
        continue;
      }
      const std::uint32_t local = b >> 5, col = (b & 31u) << 1;
      for (std::uint32_t g = 0; g < L.p; ++g) {
        const std::uint32_t mat = g * L.mats_per_lut + local;
        row[mat * kSegmentBytes + col] = std::uint8_t(v & 0xFF);
        row[mat * kSegmentBytes + col + 1] = std::uint8_t(v >> 8);
      }
    }
  }
  return img;
}

/// Raw bytes of every LUT row, row after row.
inline void export_lut_image(std::ostream& os, const LutImage& img) {
  for (const auto& r : img.rows) os.write(reinterpret_cast<const char*>(r.data()), std::streamsize(r.size()));
}

struct ColumnAddress {
  std::uint32_t ica1 = 0;
  std::optional<std::uint32_t> ica2;
  std::uint32_t mask_select = 0;
};

inline ColumnAddress column_addresses(std::uint32_t b, const LutLayout& L) {
  if (b >= L.lut_rows)
    throw Error(ErrorKind::OperandOutOfDomain, "operand " + std::to_string(b) + " out of range");
  if (L.result_bits == 8) return {b, std::nullopt, 0};
  const std::uint32_t lo = (b & 31u) << 1;
  return {lo, lo | 1u, b >> 5};
}

/// Keeps, for each of the p LUT groups, the byte of the mat chosen by its select.
inline std::vector<std::uint8_t> mask_select(std::span<const std::uint8_t> fetched,
                                             std::span<const std::uint32_t> selects,
                                             const LutLayout& L) {
  if (fetched.size() != kLutMats)
    throw Error(ErrorKind::LengthMismatch, "mask logic expects one byte per mat");
  if (!L.masked()) return {fetched.begin(), fetched.end()};
  if (selects.size() != L.p)
    throw Error(ErrorKind::LengthMismatch, "need one select per LUT group");
  std::vector<std::uint8_t> out(L.p);
  for (std::uint32_t g = 0; g < L.p; ++g) {
    if (selects[g] >= L.mats_per_lut) throw Error(ErrorKind::InvalidArgument, "select beyond LUT group");
    out[g] = fetched[g * L.mats_per_lut + selects[g]];
  }
  return out;
}

/// Per-bank staging for vector elements read from the source row.
class TemporaryBuffer {
 public:
  static constexpr std::size_t kCapacity = 64;

  void load(std::span<const std::uint8_t> bytes) {
    if (data_.size() + bytes.size() > kCapacity)
      throw Error(ErrorKind::BufferOverflow,
                  "temporary buffer holds " + std::to_string(kCapacity) + " bytes");
    data_.insert(data_.end(), bytes.begin(), bytes.end());
  }

  std::vector<std::uint8_t> take(std::size_t n) {
    n = std::min(n, data_.size());
    std::vector<std::uint8_t> out(data_.begin(), data_.begin() + std::ptrdiff_t(n));
    data_.erase(data_.begin(), data_.begin() + std::ptrdiff_t(n));
    return out;
  }

  std::size_t size() const { return data_.size(); }

 private:
  std::vector<std::uint8_t> data_;
};

/// Concatenates masked bytes and releases them in 16-byte flushes.
class OutputBuffer {
 public:
  static constexpr std::size_t kFlushBytes = 16;

  /// Returns the size of each flush triggered by this push.
  std::vector<std::size_t> push(std::span<const std::uint8_t> bytes) {
    std::vector<std::size_t> flushes;
    for (auto b : bytes) {
      pending_.push_back(b);
      if (pending_.size() == kFlushBytes) flushes.push_back(flush());
    }
    return flushes;
  }

  /// Final partial flush; 0 when nothing is pending.
  std::size_t finish() { return pending_.empty() ? 0 : flush(); }

  const std::vector<std::uint8_t>& delivered() const { return delivered_; }
  std::size_t pending() const { return pending_.size(); }

 private:
  std::size_t flush() {
    const std::size_t n = pending_.size();
    delivered_.insert(delivered_.end(), pending_.begin(), pending_.end());
    pending_.clear();
    return n;
  }

  std::vector<std::uint8_t> pending_;
  std::vector<std::uint8_t> delivered_;
};

struct CoalescedBatch {
  std::uint32_t scalar_a = 0;
  std::vector<std::uint32_t> vector_b;
  std::uint32_t positional_index = 0;
};

inline constexpr std::uint32_t kSourceSubarray = 0;
inline constexpr std::uint32_t kComputeSubarray = 1;
inline constexpr std::uint32_t kElementsPerRead = 32;

inline std::uint32_t elements_per_source_row(const HbmConfig& cfg) {
  return cfg.row_buffer_bytes_per_pch;
}

struct BatchProgram {
  std::vector<std::uint32_t> results;
  std::vector<Command> commands;  // unscheduled
  std::vector<std::uint8_t> host_bytes;
};

/// Emits the command list for one batch on the bank at `bank` and runs it
/// functionally: source bytes go through the temporary buffer, retrievals read
/// the LUT image with per-mat column addresses, and results are decoded from
/// the bytes that reach the host.
inline BatchProgram emit_batch(const CoalescedBatch& batch, const LutImage& img,
                               const HbmConfig& cfg, Location bank) {
  check_lut_geometry(cfg);
  const LutLayout& L = img.layout;
  if (batch.scalar_a >= L.lut_rows)
    throw Error(ErrorKind::OperandOutOfDomain, "scalar operand out of range");
  for (auto b : batch.vector_b)
    if (b >= L.lut_rows)
      throw Error(ErrorKind::OperandOutOfDomain, "vector element " + std::to_string(b) + " out of range");
  if (batch.positional_index >= cfg.rows_per_subarray)
    throw Error(ErrorKind::InvalidArgument, "positional index beyond subarray rows");

  BatchProgram prog;
  const std::size_t m = batch.vector_b.size();
  if (m == 0) return prog;
  const std::uint32_t epr = elements_per_source_row(cfg);
  const std::uint32_t src_rows = std::uint32_t((m + epr - 1) / epr);
  if (std::uint64_t{batch.positional_index + 1} * src_rows > cfg.rows_per_subarray)
    throw Error(ErrorKind::CapacityExceeded, "vector does not fit the source subarray");

  const std::uint32_t lanes = L.p;
  const std::uint32_t chunk_bytes = lanes * L.icas_per_result;
  std::vector<std::uint8_t> host;
  OutputBuffer obuf;
  TemporaryBuffer tbuf;
  auto& cmds = prog.commands;

  Location comp = bank;
  comp.subarray = kComputeSubarray;
  comp.row = batch.scalar_a;
  comp.byte_col = 0;

  for (std::uint32_t k = 0; k < src_rows; ++k) {
    Location src = bank;
    src.subarray = kSourceSubarray;
    src.row = batch.positional_index * src_rows + k;
    src.byte_col = 0;
    const std::size_t begin = std::size_t(k) * epr, end = std::min<std::size_t>(m, begin + epr);

    // Source row image: element j at mat j % 16, column j / 16, zero padded.
    std::vector<std::uint8_t> row(cfg.row_buffer_bytes_per_pch, 0);
    for (std::size_t j = begin; j < end; ++j) {
      const std::size_t e = j - begin;
      row[(e % kLutMats) * kSegmentBytes + e / kLutMats] = std::uint8_t(batch.vector_b[j]);
    }

    cmds.push_back(Command::act(src));
    for (std::size_t off = 0; off < end - begin; off += kElementsPerRead) {
      Location rd = src;
      rd.byte_col = std::uint32_t(off / kLutMats);
      cmds.push_back(Command::internal_read(rd, 2));
      std::uint8_t atom[kElementsPerRead];
      for (std::uint32_t ica = 0; ica < 2; ++ica)
        for (std::uint32_t mat = 0; mat < kLutMats; ++mat)
          atom[ica * kLutMats + mat] = row[mat * kSegmentBytes + rd.byte_col + ica];
      tbuf.load(atom);
      if (off == 0) cmds.push_back(Command::act(comp));

      const std::size_t valid = std::min<std::size_t>(kElementsPerRead, end - begin - off);
      for (std::size_t done = 0; done < valid; done += lanes) {
        auto elems = tbuf.take(lanes);
        const std::size_t live = std::min<std::size_t>(lanes, valid - done);
        std::vector<std::uint8_t> chunk;
        chunk.reserve(chunk_bytes);
        std::vector<std::uint32_t> sel(lanes, 0);
        std::vector<ColumnAddress> addr(lanes);
        for (std::uint32_t g = 0; g < lanes; ++g) {
          addr[g] = column_addresses(g < live ? elems[g] : 0u, L);
          sel[g] = addr[g].mask_select;
        }
        for (std::uint32_t ica = 0; ica < L.icas_per_result; ++ica) {
          std::uint8_t fetched[kLutMats];
          for (std::uint32_t mat = 0; mat < kLutMats; ++mat) {
            const auto& a = addr[mat / L.mats_per_lut];
            const std::uint32_t col = ica == 0 ? a.ica1 : *a.ica2;
            fetched[mat] = img.at(batch.scalar_a, mat, col);
          }
          auto kept = mask_select(fetched, sel, L);
          chunk.insert(chunk.end(), kept.begin(), kept.end());
        }
        Location rt = comp;
        rt.byte_col = addr[0].ica1;
        cmds.push_back(Command::lut_retrieval(rt, L.icas_per_result, L.masked() ? L.p : 0,
                                              !L.masked()));
        if (!L.masked()) {
          host.insert(host.end(), chunk.begin(), chunk.end());
        } else {
          for (auto n : obuf.push(chunk)) cmds.push_back(Command::output_xfer(comp, std::uint32_t(n)));
        }
      }
      tbuf.take(tbuf.size());
    }
    if (L.masked())
      if (auto n = obuf.finish()) cmds.push_back(Command::output_xfer(comp, std::uint32_t(n)));
    cmds.push_back(Command::pre(src));
    cmds.push_back(Command::pre(comp));
  }
  if (L.masked()) host = obuf.delivered();

  // Decode the host byte stream: per retrieval, p low bytes then p high bytes.
  prog.results.reserve(m);
  std::size_t pos = 0;
  for (std::uint32_t k = 0; k < src_rows; ++k) {
    const std::size_t rows_elems = std::min<std::size_t>(m - std::size_t(k) * epr, epr);
    for (std::size_t off = 0; off < rows_elems; off += kElementsPerRead) {
      const std::size_t valid = std::min<std::size_t>(kElementsPerRead, rows_elems - off);
      for (std::size_t done = 0; done < valid; done += lanes) {
        const std::size_t live = std::min<std::size_t>(lanes, valid - done);
        if (pos + chunk_bytes > host.size())
          throw Error(ErrorKind::OracleMismatch, "host stream shorter than expected");
        for (std::size_t g = 0; g < live; ++g) {
          std::uint32_t v = host[pos + g];
          if (L.icas_per_result == 2) v |= std::uint32_t(host[pos + lanes + g]) << 8;
          prog.results.push_back(v);
        }
        pos += chunk_bytes;
      }
    }
  }
  prog.host_bytes = std::move(host);
  return prog;
}

struct BatchResult {
  std::vector<std::uint32_t> results;
  CommandStream stream;
};

inline BatchResult execute_batch(const CoalescedBatch& batch, const LutImage& img,
                                 const HbmConfig& cfg, const TimingParams& t,
                                 Location bank = {}) {
  auto prog = emit_batch(batch, img, cfg, bank);
  return {std::move(prog.results), schedule(std::move(prog.commands), t)};
}

/// The bank serving the i-th slice of a bulk operation: banks fill a bank
/// group first, then the next group, then the next pseudo-channel.
inline Location bank_slot(std::uint32_t i, const HbmConfig& cfg) {
  Location l;
  l.pch = i / cfg.banks_per_pch();
  const std::uint32_t in_pch = i % cfg.banks_per_pch();
  l.bank_group = in_pch / cfg.banks_per_group;
  l.bank = in_pch % cfg.banks_per_group;
  if (l.pch >= cfg.total_pch())
    throw Error(ErrorKind::CapacityExceeded, "parallelism exceeds banks in the stack");
  return l;
}

/// Merges per-bank lists one command at a time in bank order.
inline std::vector<Command> interleave(const std::vector<std::vector<Command>>& lists) {
  std::vector<Command> out;
  std::size_t longest = 0, total = 0;
  for (const auto& l : lists) {
    longest = std::max(longest, l.size());
    total += l.size();
  }
  out.reserve(total);
  for (std::size_t i = 0; i < longest; ++i)
    for (const auto& l : lists)
      if (i < l.size()) out.push_back(l[i]);
  return out;
}

struct BulkResult {
  std::vector<std::uint32_t> results;
  CommandStream stream;
  std::uint32_t active_banks = 0;
};

/// f(a, b_i) for every element, with b split into `parallelism` contiguous
/// slices that run as independent batches on separate banks.
inline BulkResult execute_bulk(std::uint32_t a, const std::vector<std::uint32_t>& b,
                               const LutImage& img, const HbmConfig& cfg,
                               const TimingParams& t, std::uint32_t parallelism,
                               std::uint32_t positional_index = 0) {
  if (parallelism == 0) throw Error(ErrorKind::InvalidArgument, "parallelism must be >= 1");
  if (parallelism > std::uint64_t{cfg.total_pch()} * cfg.banks_per_pch())
    throw Error(ErrorKind::CapacityExceeded, "parallelism exceeds banks in the stack");
  BulkResult r;
  const std::size_t per = (b.size() + parallelism - 1) / parallelism;
  std::vector<std::vector<Command>> lists;
  for (std::uint32_t i = 0; i < parallelism; ++i) {
    const std::size_t lo = std::min(b.size(), i * per), hi = std::min(b.size(), lo + per);
    if (lo == hi) continue;
    CoalescedBatch batch{a, {b.begin() + std::ptrdiff_t(lo), b.begin() + std::ptrdiff_t(hi)},
                         positional_index};
    auto prog = emit_batch(batch, img, cfg, bank_slot(i, cfg));
    r.results.insert(r.results.end(), prog.results.begin(), prog.results.end());
    lists.push_back(std::move(prog.commands));
  }
  r.active_banks = std::uint32_t(lists.size());
  r.stream = schedule(interleave(lists), t);
  return r;
}

}  // namespace lama
