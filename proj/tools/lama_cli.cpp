#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lama/lama.hpp"

using nlohmann::json;

namespace {

struct OutputSink {
  std::unique_ptr<std::ofstream> file;
  std::ostream* os = &std::cout;

  explicit OutputSink(const std::string& path) {
    if (path.empty() || path == "-") return;
    file = std::make_unique<std::ofstream>(path, std::ios::binary);
    if (!*file) throw lama::Error(lama::ErrorKind::InvalidArgument, "cannot write " + path);
    os = file.get();
  }
};

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw lama::Error(lama::ErrorKind::InvalidArgument, "cannot read " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw lama::Error(lama::ErrorKind::ParseError, path + ": " + e.what());
  }
}

lama::RunContext load_context(const std::string& path) {
  lama::RunContext ctx;
  if (path.empty()) return ctx;
  const json j = read_json(path);
  auto merge = [&j](const char* key, auto& target) {
    if (!j.contains(key)) return;
    json base = target;
    base.merge_patch(j[key]);
    target = base.get<std::decay_t<decltype(target)>>();
  };
  merge("hbm", ctx.cfg);
  merge("timing", ctx.timing);
  merge("energy", ctx.energy);
  std::vector<std::string> bad = lama::validate_config(ctx.cfg);
  for (auto& v : ctx.timing.violations()) bad.push_back(v);
  for (auto& v : ctx.energy.violations()) bad.push_back(v);
  if (!bad.empty()) throw lama::Error(lama::ErrorKind::InvalidArgument, bad.front());
  return ctx;
}

void emit_rows(std::ostream& os, const std::vector<lama::ResultRow>& rows, const std::string& format) {
  if (format == "json") os << lama::to_json_rows(rows).dump(2) << '\n';
  else if (format == "table") lama::write_table(os, rows);
  else lama::write_csv(os, rows);
}

int report_failures(const std::vector<lama::ResultRow>& rows) {
  int rc = 0;
  for (const auto& r : rows) {
    if (r.checks_passed) continue;
    std::cerr << "check failed: " << lama::to_string(r.spec.engine) << ' ' << r.spec.op_bits << "-bit: "
              << r.mismatches << " result mismatches, " << r.timing_violations << " timing violations\n";
    rc = 1;
  }
  return rc;
}

std::vector<lama::ExperimentSpec> reference_quartet() {
  std::vector<lama::ExperimentSpec> specs;
  for (std::uint32_t bits : {4u, 8u})
    for (auto e : {lama::Engine::pluto, lama::Engine::simdram, lama::Engine::lama})
      specs.push_back({e, bits, lama::kReferenceOps, lama::kReferenceParallelism, 1});
  return specs;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LUT-based processing-using-memory simulator"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "JSON file with hbm/timing/energy overrides");

  auto* config = app.add_subcommand("config", "Show the architectural configuration");
  bool dump = false;
  config->add_flag("--dump", dump, "Print every parameter as JSON");

  auto* bulk = app.add_subcommand("bulk-mul", "Run one bulk multiplication experiment");
  std::string engine = "lama", format = "csv", out, trace_out, lut_out;
  lama::ExperimentSpec spec;
  bulk->add_option("--engine", engine)->check(CLI::IsMember({"lama", "pluto", "simdram"}));
  bulk->add_option("--bits", spec.op_bits)->check(CLI::Range(1, 8));
  bulk->add_option("--ops", spec.ops);
  bulk->add_option("--parallel", spec.parallelism);
  bulk->add_option("--seed", spec.seed);
  bulk->add_option("--out", out, "Output file (default stdout)");
  bulk->add_option("--format", format)->check(CLI::IsMember({"csv", "json", "table"}));
  bulk->add_option("--trace-out", trace_out, "Write the scheduled command trace (lama only)");
  bulk->add_option("--lut-out", lut_out, "Write the raw LUT image (lama only)");

  auto* cmp = app.add_subcommand("compare", "Run several experiments and add ratio columns");
  std::string specs_path, ref = "pluto";
  cmp->add_option("--specs", specs_path, "JSON list of experiments (default: the reference quartet)");
  cmp->add_option("--ref", ref)->check(CLI::IsMember({"lama", "pluto", "simdram"}));
  cmp->add_option("--out", out);
  cmp->add_option("--format", format)->check(CLI::IsMember({"csv", "json", "table"}));

  auto* accel = app.add_subcommand("accel", "Map a model and estimate pipelined inference cost");
  std::string model_path;
  std::uint32_t inferences = 1;
  accel->add_option("--model", model_path)->required();
  accel->add_option("--inferences", inferences)->check(CLI::PositiveNumber);
  accel->add_option("--out", out);

  auto* vt = app.add_subcommand("validate-trace", "Check a command trace against the timing rules");
  std::string trace_path;
  vt->add_option("trace", trace_path)->required();

  auto* cal = app.add_subcommand("calibrate", "Re-solve the energy calibration and compare");

  CLI11_PARSE(app, argc, argv);

  try {
    const auto ctx = load_context(config_path);

    if (*config) {
      json j = {{"hbm", ctx.cfg}, {"timing", ctx.timing}, {"energy", ctx.energy}};
      if (dump) {
        std::cout << j.dump(2) << '\n';
      } else {
        std::cout << "pseudo-channels " << ctx.cfg.total_pch() << ", banks/pch " << ctx.cfg.banks_per_pch()
                  << ", capacity " << lama::capacity_bytes(ctx.cfg) << " bytes\n";
      }
      return 0;
    }

    if (*bulk) {
      spec.engine = lama::parse_engine(engine);
      lama::RunArtifacts art;
      const auto row = lama::run(spec, ctx, &art);
      OutputSink sink(out);
      emit_rows(*sink.os, {row}, format);
      if (!trace_out.empty() && art.stream) {
        std::ofstream t(trace_out);
        lama::write_trace(t, *art.stream);
      }
      if (!lut_out.empty() && art.lut) {
        std::ofstream l(lut_out, std::ios::binary);
        lama::export_lut_image(l, *art.lut);
      }
      return report_failures({row});
    }

    if (*cmp) {
      std::vector<lama::ExperimentSpec> specs =
          specs_path.empty() ? reference_quartet() : read_json(specs_path).get<std::vector<lama::ExperimentSpec>>();
      const auto rows = lama::compare(specs, lama::parse_engine(ref), ctx);
      OutputSink sink(out);
      emit_rows(*sink.os, rows, format);
      return report_failures(rows);
    }

    if (*accel) {
      const auto model = read_json(model_path).get<lama::ModelSpec>();
      const auto plan = lama::map_model(model, ctx.cfg, ctx.timing, ctx.energy);
      const auto rep = lama::estimate_inference(model, plan, ctx.cfg, ctx.timing, ctx.energy, {}, inferences);
      json j = rep;
      j["model"] = model.name;
      j["pch_used"] = plan.pch_used;
      j["pch_idle"] = plan.pch_idle;
      OutputSink sink(out);
      *sink.os << j.dump(2) << '\n';
      return 0;
    }

    if (*vt) {
      std::ifstream in(trace_path);
      if (!in) throw lama::Error(lama::ErrorKind::InvalidArgument, "cannot read " + trace_path);
      const auto stream = lama::read_trace(in);
      const auto v = lama::validate(stream, ctx.timing);
      for (const auto& x : v) std::cout << "command " << x.index << ": " << x.rule << ": " << x.detail << '\n';
      std::cout << stream.size() << " commands, " << v.size() << " violations, elapsed "
                << lama::format_ns(lama::elapsed_ns(stream, ctx.timing)) << " ns\n";
      return v.empty() ? 0 : 1;
    }

    if (*cal) {
      const auto c = lama::solve_calibration(ctx.cfg, ctx.timing, ctx.energy);
      const auto& k = lama::kCommittedCalibration;
      std::printf("            act_scale     col_scale     logic_duty\n");
      std::printf("solved      %.10f  %.10f  %.10f\n", c.act_scale, c.col_scale, c.logic_duty);
      std::printf("committed   %.10f  %.10f  %.10f\n", k.act_scale, k.col_scale, k.logic_duty);
      return 0;
    }
  } catch (const lama::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
