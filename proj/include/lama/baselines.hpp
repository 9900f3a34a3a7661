#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "lama/energy.hpp"
#include "lama/error.hpp"
#include "lama/lut_engine.hpp"
#include "lama/timing.hpp"

namespace lama {

/// Cost of one bulk operation on an engine that is modeled by formula
/// rather than by a scheduled command stream.
struct EngineCost {
  std::uint64_t act_count = 0;
  std::uint64_t total_count = 0;
  Nanoseconds latency_ns = 0;
  double energy_nj = 0;
  std::uint64_t ops = 0;
};

// ---------------------------------------------------------------------------
// pLUTo

struct PlutoParams {
  std::uint32_t queries_per_subarray = 256;
  std::uint32_t aux_acts = 16;          // per sweep, on top of the LUT rows
  std::uint32_t sweep_input_bits = 4;   // operand width of one native sweep
  Nanoseconds sweep_tail_ns = 64;
  Nanoseconds combine_ns = 3;           // merging partial sweeps of a split operand
  double e_act_pj = 227.4;              // per sweep activation, copy included
};

/// ceil(n / w)^2 native sweeps per operation when the operands are split
/// into w-bit digits.
inline std::uint32_t pluto_decomposition(std::uint32_t n, const PlutoParams& p = {}) {
  const std::uint32_t d = (n + p.sweep_input_bits - 1) / p.sweep_input_bits;
  return d * d;
}

inline EngineCost pluto_cost(std::uint32_t n, std::uint64_t ops, std::uint32_t parallelism,
                             const TimingParams& t = {}, const PlutoParams& p = {}) {
  if (n < 1 || n > 8) throw Error(ErrorKind::UnsupportedPrecision, "pLUTo models 1..8-bit operands");
  if (parallelism == 0) throw Error(ErrorKind::InvalidArgument, "parallelism must be >= 1");
  EngineCost c;
  c.ops = ops;
  if (ops == 0) return c;
  const std::uint64_t per_round = std::uint64_t{parallelism} * p.queries_per_subarray;
  const std::uint64_t rounds = (ops + per_round - 1) / per_round;
  const std::uint64_t sweep_rows = (1ull << (2 * p.sweep_input_bits)) + p.aux_acts;
  const std::uint32_t pieces = pluto_decomposition(n, p);
  c.act_count = rounds * parallelism * sweep_rows * pieces;
  c.total_count = 2 * c.act_count;
  const Nanoseconds native = double(rounds * parallelism * sweep_rows) * t.tRRD + p.sweep_tail_ns;
  c.latency_ns = pieces == 1 ? native : pieces * native + p.combine_ns;
  c.energy_nj = double(c.act_count) * p.e_act_pj / 1e3;
  return c;
}

struct PlutoResult {
  std::vector<std::uint32_t> results;
  EngineCost cost;
};

/// Row-sweep emulation: every query is the concatenation {a, b}; sweeping LUT
/// row r copies f at r into each output slot whose query equals r.
inline PlutoResult pluto_execute(const std::vector<std::pair<std::uint32_t, std::uint32_t>>& queries,
                                 std::uint32_t n, std::uint32_t parallelism,
                                 const BinaryFn& f = multiply, const TimingParams& t = {},
                                 const PlutoParams& p = {}) {
  if (n == 0 || 2 * n > 8)
    throw Error(ErrorKind::UnsupportedPrecision,
                "pLUTo queries are limited to 8 bits; " + std::to_string(n) + "-bit operands need decomposition");
  const std::uint32_t rows = 1u << (2 * n);
  std::vector<std::uint32_t> lut(rows);
  for (std::uint32_t r = 0; r < rows; ++r) lut[r] = f(r >> n, r & ((1u << n) - 1));

  std::vector<std::uint32_t> q(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    auto [a, b] = queries[i];
    if (a >> n || b >> n) throw Error(ErrorKind::OperandOutOfDomain, "query operand out of range");
    q[i] = (a << n) | b;
  }
  PlutoResult r;
  r.results.assign(q.size(), 0);
  for (std::uint32_t row = 0; row < rows; ++row)
    for (std::size_t i = 0; i < q.size(); ++i)
      if (q[i] == row) r.results[i] = lut[row];
  r.cost = pluto_cost(n, queries.size(), parallelism, t, p);
  return r;
}

// ---------------------------------------------------------------------------
// SIMDRAM

struct SimdramCostTable {
  struct Entry {
    std::uint32_t bits;
    std::uint64_t act_count;
    std::uint64_t total_count;
    Nanoseconds latency_ns;
    double energy_nj;
  };
  static constexpr std::uint64_t kCanonicalOps = 1024;
  static constexpr std::uint32_t kCanonicalParallelism = 4;
  std::vector<Entry> entries = {{4, 310, 465, 7964, 151.23}, {8, 1326, 1989, 34065, 646.9}};
};

inline EngineCost simdram_cost(std::uint32_t n, std::uint64_t ops, std::uint32_t parallelism,
                               const SimdramCostTable& table = {}) {
  if (parallelism == 0) throw Error(ErrorKind::InvalidArgument, "parallelism must be >= 1");
  for (const auto& e : table.entries) {
    if (e.bits != n) continue;
    const double scale = double(ops) / SimdramCostTable::kCanonicalOps;
    EngineCost c;
    c.ops = ops;
    c.act_count = std::uint64_t(std::llround(e.act_count * scale));
    c.total_count = std::uint64_t(std::llround(e.total_count * scale));
    c.latency_ns = e.latency_ns * scale * SimdramCostTable::kCanonicalParallelism / parallelism;
    c.energy_nj = e.energy_nj * scale;
    return c;
  }
  throw Error(ErrorKind::UnsupportedPrecision,
              "no SIMDRAM cost entry for " + std::to_string(n) + "-bit operands");
}

/// Measured 8-bit CPU reference (AVX-512), 1024 multiplications.
struct CpuReference {
  static constexpr Nanoseconds latency_ns = 9760.4;
  static constexpr double energy_nj = 7900;
  static constexpr double gops_per_s = 0.1;
};

}  // namespace lama
