#pragma once

#include <cstdint>
#include <vector>

#include "lama/energy.hpp"
#include "lama/error.hpp"
#include "lama/lut_engine.hpp"
#include "lama/timing.hpp"

namespace lama {

/// Reference bulk-multiplication workload: 1024 products over 4 banks.
inline constexpr std::uint64_t kReferenceOps = 1024;
inline constexpr std::uint32_t kReferenceParallelism = 4;

struct EnergyTargets {
  double nj_4bit = 25.8;
  double nj_8bit = 118.8;
};

struct EnergyCalibration {
  double act_scale = 1.0;
  double col_scale = 1.0;
  double logic_duty = 1.0;
};

/// Fitted once by `lama_cli calibrate` and frozen here.
inline constexpr EnergyCalibration kCommittedCalibration{1.0, 0.1565440882, 0.1627091895};

inline EnergyParams calibrated_energy_params(EnergyParams p = {}) {
  p.act_scale = kCommittedCalibration.act_scale;
  p.col_scale = kCommittedCalibration.col_scale;
  p.logic_duty = kCommittedCalibration.logic_duty;
  return p;
}

/// Scheduled Lama stream of the reference workload at `bits` precision.
inline BulkResult reference_lama_run(std::uint32_t bits, const HbmConfig& cfg = {},
                                     const TimingParams& t = {}) {
  const auto img = build_layout(multiply, bits, cfg);
  const std::uint32_t mask = (1u << bits) - 1;
  std::vector<std::uint32_t> b(kReferenceOps);
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = std::uint32_t(i * 2654435761u) & mask;
  return execute_bulk(mask, b, img, cfg, t, kReferenceParallelism);
}

/// Keeps activation energy at face value and solves the 2x2 linear system
/// for the column-energy scale and logic duty that hit both targets.
inline EnergyCalibration solve_calibration(const HbmConfig& cfg = {}, const TimingParams& t = {},
                                           EnergyParams base = {}, EnergyTargets target = {}) {
  base.act_scale = 1.0;
  base.col_scale = 1.0;
  base.logic_duty = 1.0;
  double act[2], col[2], logic[2];
  const std::uint32_t bits[2] = {4, 8};
  for (int k = 0; k < 2; ++k) {
    const auto run = reference_lama_run(bits[k], cfg, t);
    const auto e = energy(run.stream, base, run.active_banks, t, kReferenceOps);
    act[k] = e.breakdown.activation_nj;
    col[k] = e.breakdown.column_movement_nj + e.breakdown.io_nj;
    logic[k] = e.breakdown.logic_nj;
  }
  const double r0 = target.nj_4bit - act[0], r1 = target.nj_8bit - act[1];
  const double det = col[0] * logic[1] - col[1] * logic[0];
  if (det == 0) throw Error(ErrorKind::DegenerateInput, "calibration system is singular");
  EnergyCalibration c;
  c.col_scale = (r0 * logic[1] - r1 * logic[0]) / det;
  c.logic_duty = (col[0] * r1 - col[1] * r0) / det;
  if (c.col_scale < 0 || c.logic_duty < 0)
    throw Error(ErrorKind::DegenerateInput, "calibration produced a negative multiplier");
  return c;
}

}  // namespace lama
