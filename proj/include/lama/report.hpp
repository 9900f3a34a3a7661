#pragma once

#include <cstdint>
#include <cstdio>
#include <future>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lama/baselines.hpp"
#include "lama/calibration.hpp"
#include "lama/energy.hpp"
#include "lama/error.hpp"
#include "lama/lut_engine.hpp"
#include "lama/timing.hpp"

namespace lama {

enum class Engine { lama, pluto, simdram };

NLOHMANN_JSON_SERIALIZE_ENUM(Engine, {{Engine::lama, "lama"}, {Engine::pluto, "pluto"}, {Engine::simdram, "simdram"}})

inline const char* to_string(Engine e) {
  switch (e) {
    case Engine::lama: return "lama";
    case Engine::pluto: return "pluto";
    case Engine::simdram: return "simdram";
  }
  return "?";
}

inline Engine parse_engine(const std::string& s) {
  if (s == "lama") return Engine::lama;
  if (s == "pluto") return Engine::pluto;
  if (s == "simdram") return Engine::simdram;
  throw Error(ErrorKind::InvalidArgument, "unknown engine '" + s + "'");
}

struct ExperimentSpec {
  Engine engine = Engine::lama;
  std::uint32_t op_bits = 4;
  std::uint64_t ops = kReferenceOps;
  std::uint32_t parallelism = kReferenceParallelism;
  std::uint64_t seed = 1;

  std::vector<std::string> violations() const {
    std::vector<std::string> v;
    if (parallelism < 1) v.emplace_back("parallelism must be >= 1");
    if (ops < 1) v.emplace_back("ops must be >= 1");
    if (op_bits < 1 || op_bits > 8) v.emplace_back("op_bits must be 1..8");
    return v;
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ExperimentSpec, engine, op_bits, ops, parallelism, seed)

struct ResultRow {
  ExperimentSpec spec;
  Nanoseconds latency_ns = 0;
  double energy_nj = 0;
  double gops = 0;
  std::uint64_t act_count = 0;
  std::uint64_t total_count = 0;
  bool checks_passed = true;
  std::uint64_t mismatches = 0;
  std::uint64_t timing_violations = 0;
  bool functional = false;  // results were checked, not only costed
  std::optional<double> speedup_vs_ref;
  std::optional<double> energy_saving_vs_ref;
};

struct RunContext {
  HbmConfig cfg{};
  TimingParams timing{};
  EnergyParams energy = calibrated_energy_params();
};

struct RunArtifacts {
  std::optional<CommandStream> stream;
  std::optional<LutImage> lut;
};

/// Uniform operands from a seeded 64-bit Mersenne Twister.
class OperandSource {
 public:
  explicit OperandSource(std::uint64_t seed) : rng_(seed) {}
  std::uint32_t next(std::uint32_t bits) { return std::uint32_t(rng_() % (std::uint64_t{1} << bits)); }

 private:
  std::mt19937_64 rng_;
};

/// Runs one experiment and checks functional results against host arithmetic.
inline ResultRow run(const ExperimentSpec& spec, const RunContext& ctx = {}, RunArtifacts* art = nullptr) {
  auto bad = spec.violations();
  if (!bad.empty()) throw Error(ErrorKind::InvalidArgument, bad.front());
  ResultRow row;
  row.spec = spec;
  OperandSource src(spec.seed);

  switch (spec.engine) {
    case Engine::lama: {
      const auto img = build_layout(multiply, spec.op_bits, ctx.cfg);
      const std::uint32_t a = src.next(spec.op_bits);
      std::vector<std::uint32_t> b(spec.ops);
      for (auto& x : b) x = src.next(spec.op_bits);
      auto r = execute_bulk(a, b, img, ctx.cfg, ctx.timing, spec.parallelism);
      for (std::size_t i = 0; i < b.size(); ++i) row.mismatches += r.results[i] != a * b[i];
      row.timing_violations = validate(r.stream, ctx.timing).size();
      const auto e = energy(r.stream, ctx.energy, r.active_banks, ctx.timing, spec.ops);
      const auto n = count_commands(r.stream);
      row.latency_ns = e.latency_ns;
      row.energy_nj = e.total_nj;
      row.act_count = n.act;
      row.total_count = n.controller;
      row.functional = true;
      if (art) {
        art->stream = std::move(r.stream);
        art->lut = img;
      }
      break;
    }
    case Engine::pluto: {
      EngineCost c;
      if (2 * spec.op_bits <= 8) {
        std::vector<std::pair<std::uint32_t, std::uint32_t>> q(spec.ops);
        for (auto& [x, y] : q) {
          x = src.next(spec.op_bits);
          y = src.next(spec.op_bits);
        }
        auto r = pluto_execute(q, spec.op_bits, spec.parallelism, multiply, ctx.timing);
        for (std::size_t i = 0; i < q.size(); ++i) row.mismatches += r.results[i] != q[i].first * q[i].second;
        c = r.cost;
        row.functional = true;
      } else {
        c = pluto_cost(spec.op_bits, spec.ops, spec.parallelism, ctx.timing);
      }
      row.latency_ns = c.latency_ns;
      row.energy_nj = c.energy_nj;
      row.act_count = c.act_count;
      row.total_count = c.total_count;
      break;
    }
    case Engine::simdram: {
      const auto c = simdram_cost(spec.op_bits, spec.ops, spec.parallelism);
      row.latency_ns = c.latency_ns;
      row.energy_nj = c.energy_nj;
      row.act_count = c.act_count;
      row.total_count = c.total_count;
      break;
    }
  }
  row.gops = performance(spec.ops, row.latency_ns);
  row.checks_passed = row.mismatches == 0 && row.timing_violations == 0;
  return row;
}

/// Runs every spec concurrently; rows keep input order. Ratio columns are
/// relative to the row of `reference` with the same operand width.
inline std::vector<ResultRow> compare(const std::vector<ExperimentSpec>& specs,
                                      std::optional<Engine> reference = std::nullopt,
                                      const RunContext& ctx = {}) {
  std::vector<std::future<ResultRow>> jobs;
  jobs.reserve(specs.size());
  for (const auto& s : specs) jobs.push_back(std::async(std::launch::async, [s, &ctx] { return run(s, ctx); }));
  std::vector<ResultRow> rows;
  rows.reserve(specs.size());
  for (auto& j : jobs) rows.push_back(j.get());
  if (!reference) return rows;
  for (auto& r : rows) {
    for (const auto& ref : rows) {
      if (ref.spec.engine != *reference || ref.spec.op_bits != r.spec.op_bits) continue;
      r.speedup_vs_ref = r.gops / ref.gops;
      r.energy_saving_vs_ref = ref.energy_nj / r.energy_nj;
      break;
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Output

inline constexpr const char* kCsvSchema = "# lama-results-csv v1";

inline const std::vector<std::string>& csv_columns() {
  static const std::vector<std::string> cols = {
      "engine", "op_bits", "ops", "parallelism", "seed", "Latency (ns)", "Energy (nJ)",
      "Performance (GOPs/s)", "Num ACT commands", "Num Total commands", "checks_passed",
      "speedup_vs_ref", "energy_saving_vs_ref"};
  return cols;
}

inline std::string fmt_num(double v, int digits = 10) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

inline std::vector<std::string> row_cells(const ResultRow& r) {
  auto opt = [](const std::optional<double>& v) { return v ? fmt_num(*v, 6) : std::string{}; };
  return {to_string(r.spec.engine),      std::to_string(r.spec.op_bits),
          std::to_string(r.spec.ops),    std::to_string(r.spec.parallelism),
          std::to_string(r.spec.seed),   fmt_num(r.latency_ns),
          fmt_num(r.energy_nj),          fmt_num(r.gops, 6),
          std::to_string(r.act_count),   std::to_string(r.total_count),
          r.checks_passed ? "1" : "0",   opt(r.speedup_vs_ref),
          opt(r.energy_saving_vs_ref)};
}

inline void write_csv(std::ostream& os, const std::vector<ResultRow>& rows) {
  os << kCsvSchema << '\n';
  const auto& cols = csv_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  os << '\n';
  for (const auto& r : rows) {
    const auto cells = row_cells(r);
    for (std::size_t i = 0; i < cells.size(); ++i) os << (i ? "," : "") << cells[i];
    os << '\n';
  }
}

inline void write_table(std::ostream& os, const std::vector<ResultRow>& rows) {
  const auto& cols = csv_columns();
  std::vector<std::vector<std::string>> grid{cols};
  for (const auto& r : rows) grid.push_back(row_cells(r));
  std::vector<std::size_t> w(cols.size(), 0);
  for (const auto& g : grid)
    for (std::size_t i = 0; i < g.size(); ++i) w[i] = std::max(w[i], g[i].size());
  for (const auto& g : grid) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      os << (i ? "  " : "") << g[i];
      if (i + 1 < g.size()) os << std::string(w[i] - g[i].size(), ' ');
    }
    os << '\n';
  }
}

inline nlohmann::json to_json_rows(const std::vector<ResultRow>& rows) {
  nlohmann::json out = {{"schema", "lama-results-json v1"}, {"rows", nlohmann::json::array()}};
  for (const auto& r : rows) {
    nlohmann::json j = {{"engine", to_string(r.spec.engine)},
                        {"op_bits", r.spec.op_bits},
                        {"ops", r.spec.ops},
                        {"parallelism", r.spec.parallelism},
                        {"seed", r.spec.seed},
                        {"Latency (ns)", r.latency_ns},
                        {"Energy (nJ)", r.energy_nj},
                        {"Performance (GOPs/s)", r.gops},
                        {"Num ACT commands", r.act_count},
                        {"Num Total commands", r.total_count},
                        {"checks_passed", r.checks_passed},
                        {"functional", r.functional},
                        {"mismatches", r.mismatches},
                        {"timing_violations", r.timing_violations}};
    if (r.speedup_vs_ref) j["speedup_vs_ref"] = *r.speedup_vs_ref;
    if (r.energy_saving_vs_ref) j["energy_saving_vs_ref"] = *r.energy_saving_vs_ref;
    out["rows"].push_back(j);
  }
  return out;
}

}  // namespace lama
