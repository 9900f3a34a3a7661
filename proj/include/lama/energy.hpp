#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "lama/error.hpp"
#include "lama/timing.hpp"

namespace lama {

/// Per-command and per-bit DRAM energies plus the power of the bank-level
/// LUT logic. The three multipliers are fitted once (see calibration.hpp).
struct EnergyParams {
  double e_act_pj = 909;
  double e_pre_gsa_pj_per_bit = 1.51;
  double e_post_gsa_pj_per_bit = 1.17;
  double e_io_pj_per_bit = 0.80;
  double column_counter_mw = 1.49;  // each of the 16 per bank
  std::uint32_t column_counters_per_bank = 16;
  double mask_mw = 1.01;
  double temp_buffer_mw = 3.76;
  double other_mw = 0.09;
  double act_scale = 1.0;
  double col_scale = 1.0;
  double logic_duty = 1.0;

  double logic_mw_per_bank() const {
    return column_counters_per_bank * column_counter_mw + mask_mw + temp_buffer_mw + other_mw;
  }

  std::vector<std::string> violations() const {
    std::vector<std::string> v;
    for (double x : {e_act_pj, e_pre_gsa_pj_per_bit, e_post_gsa_pj_per_bit, e_io_pj_per_bit,
                     column_counter_mw, mask_mw, temp_buffer_mw, other_mw, act_scale, col_scale,
                     logic_duty})
      if (x < 0) { v.emplace_back("energy parameters must be non-negative"); break; }
    return v;
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(EnergyParams, e_act_pj, e_pre_gsa_pj_per_bit,
                                                e_post_gsa_pj_per_bit, e_io_pj_per_bit,
                                                column_counter_mw, column_counters_per_bank,
                                                mask_mw, temp_buffer_mw, other_mw, act_scale,
                                                col_scale, logic_duty)

struct EnergyBreakdown {
  double activation_nj = 0;
  double column_movement_nj = 0;
  double io_nj = 0;
  double logic_nj = 0;
};

struct EnergyReport {
  double total_nj = 0;
  EnergyBreakdown breakdown;
  Nanoseconds latency_ns = 0;
  std::uint64_t ops = 0;
  double gops_per_s = 0;
};

inline void to_json(nlohmann::json& j, const EnergyReport& r) {
  j = {{"total_nj", r.total_nj},
       {"activation_nj", r.breakdown.activation_nj},
       {"column_movement_nj", r.breakdown.column_movement_nj},
       {"io_nj", r.breakdown.io_nj},
       {"logic_nj", r.breakdown.logic_nj},
       {"latency_ns", r.latency_ns},
       {"ops", r.ops},
       {"gops_per_s", r.gops_per_s}};
}

/// Operations per nanosecond, i.e. GOPs/s. Zero ops gives zero.
inline double performance(std::uint64_t ops, Nanoseconds latency_ns) {
  if (ops == 0) return 0;
  if (!(latency_ns > 0)) throw Error(ErrorKind::InvalidArgument, "latency must be positive");
  return static_cast<double>(ops) / latency_ns;
}

/// Activation, data-movement, I/O and logic energy of a scheduled stream.
///
/// Internal traffic (source reads, masked retrievals, counter updates) pays
/// pre- and post-GSA energy; traffic reaching the host also pays I/O energy.
/// Logic energy integrates the LUT periphery power of every active bank over
/// the stream's elapsed time.
inline EnergyReport energy(const CommandStream& s, const EnergyParams& p,
                           std::uint32_t active_banks, const TimingParams& t = {},
                           std::uint64_t ops = 0) {
  EnergyReport r;
  double act_pj = 0, col_pj = 0, io_pj = 0;
  for (std::size_t i = 0; i < s.commands.size(); ++i) {
    const Command& c = s.commands[i];
    if (c.kind == CommandKind::ACT) {
      act_pj += p.e_act_pj * p.act_scale;
      continue;
    }
    if (c.kind == CommandKind::PRE) continue;
    if (!c.data_bits)
      throw Error(ErrorKind::MissingAnnotation,
                  "command " + std::to_string(i) + " (" + std::string(to_string(c.kind)) +
                      ") has no data-bit annotation");
    const double bits = *c.data_bits;
    col_pj += bits * (p.e_pre_gsa_pj_per_bit + p.e_post_gsa_pj_per_bit) * p.col_scale;
    if (c.to_host) io_pj += bits * p.e_io_pj_per_bit * p.col_scale;
  }
  r.latency_ns = elapsed_ns(s, t);
  // mW * ns = pJ
  const double logic_pj = active_banks * p.logic_mw_per_bank() * r.latency_ns * p.logic_duty;
  r.breakdown = {act_pj / 1e3, col_pj / 1e3, io_pj / 1e3, logic_pj / 1e3};
  r.total_nj = r.breakdown.activation_nj + r.breakdown.column_movement_nj + r.breakdown.io_nj +
               r.breakdown.logic_nj;
  r.ops = ops;
  r.gops_per_s = ops && r.latency_ns > 0 ? performance(ops, r.latency_ns) : 0;
  return r;
}

}  // namespace lama
