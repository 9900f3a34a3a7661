// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "lama/lama.hpp"
#include "support.hpp"

using namespace lama;

namespace {

int failures = 0;

void report(int id, bool ok, const std::string& what, const std::string& detail) {
  std::printf("%s  %d  %s  [%s]\n", ok ? "PASS" : "FAIL", id, what.c_str(), detail.c_str());
  std::fflush(stdout);
  failures += !ok;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

bool within(double got, double want, double rel) { return std::abs(got - want) <= rel * std::abs(want); }

// ---------------------------------------------------------------------------

void exhaustive_multiply() {
  const auto start = std::chrono::steady_clock::now();
  std::uint64_t pairs = 0, bad = 0;
  for (std::uint32_t n = 4; n <= 8; ++n) {
    const auto img = build_layout(multiply, n);
    std::vector<std::uint32_t> all(1u << n);
    for (std::uint32_t b = 0; b < all.size(); ++b) all[b] = b;
    for (std::uint32_t a = 0; a < all.size(); ++a) {
      const auto prog = emit_batch({a, all, 0}, img, {}, {});
      for (std::uint32_t b = 0; b < all.size(); ++b) bad += prog.results[b] != a * b;
      pairs += all.size();
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  report(1, bad == 0 && pairs == 16ull * 16 + 32 * 32 + 64 * 64 + 128 * 128 + 256 * 256 && secs < 5.0,
         "exhaustive multiply n=4..8, zero mismatches, < 5 s",
         fmt("%llu pairs, %llu mismatches, %.3f s", (unsigned long long)pairs, (unsigned long long)bad, secs));
}

void command_counts() {
  const auto l4 = run({Engine::lama, 4, 1024, 4, 1}), l8 = run({Engine::lama, 8, 1024, 4, 1});
  const auto p4 = run({Engine::pluto, 4, 1024, 4, 1}), p8 = run({Engine::pluto, 8, 1024, 4, 1});
  const auto s4 = run({Engine::simdram, 4, 1024, 4, 1}), s8 = run({Engine::simdram, 8, 1024, 4, 1});
  const double resid = (double(l8.total_count) - 592) / 592;
  const bool ok = l4.act_count == 8 && l8.act_count == 8 && l4.total_count == 112 && std::abs(resid) <= 0.10 &&
                  p4.act_count == 1088 && p4.total_count == 2176 && p8.act_count == 4352 &&
                  p8.total_count == 8704 && s4.act_count == 310 && s4.total_count == 465 &&
                  s8.act_count == 1326 && s8.total_count == 1989;
  report(2, ok, "command counts of the bulk-multiplication table",
         fmt("lama ACT %llu/%llu total %llu/%llu (8-bit residual %+.1f%% vs 592); pluto %llu/%llu %llu/%llu; "
             "simdram %llu/%llu %llu/%llu",
             (unsigned long long)l4.act_count, (unsigned long long)l8.act_count,
             (unsigned long long)l4.total_count, (unsigned long long)l8.total_count, 100 * resid,
             (unsigned long long)p4.act_count, (unsigned long long)p4.total_count,
             (unsigned long long)p8.act_count, (unsigned long long)p8.total_count,
             (unsigned long long)s4.act_count, (unsigned long long)s4.total_count,
             (unsigned long long)s8.act_count, (unsigned long long)s8.total_count));
}

void latency_energy() {
  const auto l4 = run({Engine::lama, 4, 1024, 4, 1}), l8 = run({Engine::lama, 8, 1024, 4, 1});
  bool ok = within(l4.latency_ns, 583, 0.20) && within(l4.energy_nj, 25.8, 0.20) &&
            within(l8.latency_ns, 2534, 0.20) && within(l8.energy_nj, 118.8, 0.20);
  // Performance column: each printed latency reproduces its printed GOPs to
  // the table's rounding, and the model's rows use the same definition.
  const struct {
    double lat, gops, decimals;
  } cells[] = {{2240, 0.46, 2}, {7964, 0.13, 2}, {583, 1.75, 2}, {8963, 0.11, 2}, {34065, 0.03, 2}, {2534, 0.4, 1}};
  int cell_ok = 0;
  for (auto c : cells) {
    const double q = std::pow(10.0, c.decimals);
    // Half a unit in the last printed place, plus truncation to that place.
    const double g = performance(1024, c.lat);
    cell_ok += std::abs(g - c.gops) <= 1.0 / q + 1e-12;
  }
  ok = ok && cell_ok == 6;
  for (const auto* r : {&l4, &l8}) ok = ok && std::abs(r->gops - 1024 / r->latency_ns) < 1e-12;
  report(3, ok, "latency/energy within 20% after committed calibration; GOPs = ops/latency",
         fmt("4-bit %.0f ns (%+.1f%%) %.2f nJ (%+.1f%%); 8-bit %.0f ns (%+.1f%%) %.2f nJ (%+.1f%%); "
             "%d/6 GOPs cells",
             l4.latency_ns, 100 * (l4.latency_ns / 583 - 1), l4.energy_nj, 100 * (l4.energy_nj / 25.8 - 1),
             l8.latency_ns, 100 * (l8.latency_ns / 2534 - 1), l8.energy_nj, 100 * (l8.energy_nj / 118.8 - 1),
             cell_ok));
}

void headline_ratios() {
  std::vector<ExperimentSpec> specs;
  for (std::uint32_t bits : {4u, 8u})
    for (auto e : {Engine::pluto, Engine::lama}) specs.push_back({e, bits, 1024, 4, 1});
  const auto rows = compare(specs, Engine::pluto);
  const double e4 = *rows[1].energy_saving_vs_ref, e8 = *rows[3].energy_saving_vs_ref;
  const double s4 = *rows[1].speedup_vs_ref, s8 = *rows[3].speedup_vs_ref;
  const bool ok = within(e4, 9.6, 0.15) && within(e8, 8.3, 0.15) && within(s4, 3.8, 0.15) && within(s8, 3.5, 0.15);
  report(4, ok, "Lama vs pLUTo ratios within 15%",
         fmt("energy %.2fx / %.2fx (9.6 / 8.3), throughput %.2fx / %.2fx (3.8 / 3.5)", e4, e8, s4, s8));
}

// All 16 banks of a channel (two pseudo-channels of 8 banks) run 4-bit
// coalesced batches back to back; an ACT counts as a stall when the
// activation-window rule alone delays it.
std::size_t faw_stalls(std::uint32_t batch, const TimingParams& t, std::uint32_t rounds = 4) {
  const auto img = build_layout(multiply, 4);
  std::vector<std::vector<Command>> per_bank;
  for (std::uint32_t bank = 0; bank < 16; ++bank) {
    std::vector<Command> cmds;
    for (std::uint32_t r = 0; r < rounds; ++r) {
      std::vector<std::uint32_t> b(batch);
      for (std::uint32_t i = 0; i < batch; ++i) b[i] = (i * 7 + bank + r) % 16;
      auto prog = emit_batch({(bank + r) % 16, b, r}, img, {}, bank_slot(bank, {}));
      cmds.insert(cmds.end(), prog.commands.begin(), prog.commands.end());
    }
    per_bank.push_back(std::move(cmds));
  }
  return test_support::faw_delayed_acts(interleave(per_bank), t);
}

void faw_threshold() {
  const TimingParams t;
  const std::uint32_t sizes[] = {16, 32, 48, 64, 96, 112, 128, 144, 160, 192, 256, 512};
  bool ok = true;
  std::uint32_t largest_stalling = 0;
  std::string seen;
  for (auto m : sizes) {
    const auto s = faw_stalls(m, t);
    if (s) largest_stalling = m;
    ok = ok && ((s > 0) == (m <= 128));
    seen += fmt("%s%u:%zu", seen.empty() ? "" : " ", m, s);
  }
  TimingParams four = t;
  four.acts_per_faw = 4;
  std::uint32_t four_threshold = 0;
  for (auto m : sizes)
    if (faw_stalls(m, four)) four_threshold = m;
  report(5, ok, "tFAW stalls iff 4-bit batch <= 128 with 16 active banks",
         fmt("stalled ACTs per batch size {%s}; largest stalling size %s; with %u ACTs per %.0f ns tRRD=%.0f "
             "already spaces any window to <= %d ACTs; with 4 ACTs per window stalls reach size %u",
             seen.c_str(), largest_stalling ? std::to_string(largest_stalling).c_str() : "none", t.acts_per_faw,
             t.tFAW, t.tRRD, int(std::ceil(t.tFAW / t.tRRD)), four_threshold));
}

void timing_soundness() {
  const TimingParams t;
  std::mt19937_64 rng(20240601);
  std::size_t dirty = 0;
  for (int k = 0; k < 10000; ++k) {
    const auto s = schedule(test_support::random_legal_commands(rng, 1 + rng() % 64), t);
    dirty += !validate(s, t).empty();
  }
  std::size_t caught = 0, made = 0;
  while (made < 100) {
    auto s = schedule(test_support::random_legal_commands(rng, 48), t);
    if (!test_support::mutate(s, rng, t, int(made % 4))) continue;
    ++made;
    caught += !validate(s, t).empty();
  }
  report(6, dirty == 0 && caught == 100, "scheduler output validates; mutations are caught",
         fmt("10000 fuzzed streams, %zu with violations; %zu/100 mutated streams flagged", dirty, caught));
}

void counting_identity() {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0, 1);
  double worst = 0;
  std::size_t bad = 0;
  for (int k = 0; k < 1000; ++k) {
    const std::uint32_t n = 3 + std::uint32_t(k % 5);
    const double base = 1.05 + 1.95 * u(rng);
    const TeqParams pa{0.05 + 2 * u(rng), u(rng) < 0.3 ? 0.0 : 0.5 * u(rng), base, n};
    const TeqParams pw{0.05 + 2 * u(rng), u(rng) < 0.3 ? 0.0 : 0.5 * u(rng), base, n};
    const std::size_t m = 1 + rng() % 512;
    std::normal_distribution<double> g(0, 1);
    std::vector<double> av(m), wv(m);
    for (auto& x : av) x = u(rng) < 0.05 ? 0.0 : g(rng);
    for (auto& x : wv) x = u(rng) < 0.05 ? 0.0 : g(rng);
    const auto a = encode(av, pa), w = encode(wv, pw);
    const double got = combine_terms(dot_terms_by_counting(a, w), pa, pw);
    const double err = test_support::relative_error(got, reference_dot(a, w));
    worst = std::max(worst, err);
    bad += err > 1e-9;
  }
  report(7, bad == 0, "counting identity within 1e-9 relative, 1000 pairs, n=3..7",
         fmt("%zu over tolerance, worst relative error %.3g", bad, worst));
}

void accelerator_equivalence() {
  std::mt19937_64 rng(4242);
  std::normal_distribution<double> g(0, 1);
  const double bases[] = {1.2, 1.5, 2.0};
  double worst = 0;
  std::size_t outputs = 0, bad = 0, code_mismatch = 0, viol = 0, act_law = 0, streams = 0;
  for (int net = 0; net < 50; ++net) {
    const std::uint32_t n = 3 + std::uint32_t(rng() % 5);
    const double base = bases[rng() % 3];
    const std::uint32_t layers = 1 + std::uint32_t(rng() % 3);
    std::vector<std::uint32_t> dims{1 + std::uint32_t(rng() % 128)};
    for (std::uint32_t l = 0; l < layers; ++l) dims.push_back(1 + std::uint32_t(rng() % 128));

    std::vector<double> x(dims[0]);
    for (auto& v : x) v = g(rng);
    TeqParams ap = calibrate(x, n, base);
    TeqTensor flow = encode(x, ap);  // activations on the accelerator path
    TeqTensor direct = flow;         // activations of the host reference
    for (std::uint32_t l = 0; l < layers; ++l) {
      const std::uint32_t in = dims[l], out = dims[l + 1];
      std::vector<double> w(std::size_t(in) * out);
      for (auto& v : w) v = g(rng) / std::sqrt(double(in));
      LayerSpec s;
      s.in_dim = in;
      s.out_dim = out;
      s.precision_n = n;
      s.weight_params = calibrate(w, n, base);
      s.act_params = ap;
      const QuantLayer q{s, encode(w, s.weight_params)};
      const auto plan = layout_layer(s, {});
      const auto lr = run_layer(q, flow, plan);
      ++streams;
      viol += !validate(lr.stream, {}).empty();
      std::uint64_t want_acts = 0;
      for (std::uint32_t b = 0; b < plan.banks; ++b) {
        const std::uint32_t first = b * plan.neurons_per_bank;
        const std::uint32_t cnt = first >= out ? 0 : std::min(plan.neurons_per_bank, out - first);
        want_acts += expected_acts_per_activation(plan, cnt);
      }
      act_law += count_commands(lr.stream).act != want_acts * lr.activations_processed;

      // Host reference: dense product of decoded values.
      const auto wd = decode(q.weights), ad = decode(direct);
      std::vector<double> dense(out);
      for (std::uint32_t o = 0; o < out; ++o) {
        long double acc = 0;
        for (std::uint32_t i = 0; i < in; ++i) acc += (long double)ad[i] * wd[std::size_t(i) * out + o];
        dense[o] = double(acc);
      }
      for (std::uint32_t o = 0; o < out; ++o) {
        const double got = combine_terms(lr.counters.accumulators(o), ap, s.weight_params);
        const double err = test_support::relative_error(got, dense[o]);
        worst = std::max(worst, err);
        bad += err > 1e-6;
        ++outputs;
      }
      if (l + 1 == layers) break;
      const TeqParams next = calibrate(dense, n, base);
      flow = postprocess_layer(lr.counters, ap, s.weight_params, next);
      direct = encode(dense, next);
      for (std::size_t i = 0; i < flow.size(); ++i)
        code_mismatch += flow.exponents[i] != direct.exponents[i] || flow.signs[i] != direct.signs[i] ||
                         flow.zero_flags[i] != direct.zero_flags[i];
      ap = next;
    }
  }
  report(8, bad == 0 && code_mismatch == 0 && viol == 0 && act_law == 0,
         "accelerator flow equals direct quantized MLP, 50 networks",
         fmt("%zu outputs, %zu over 1e-6 (worst %.3g), %zu re-encoded codes differ, %zu/%zu streams with "
             "violations, %zu ACT-law breaks",
             outputs, bad, worst, code_mismatch, viol, streams, act_law));
}

}  // namespace

int main() {
  exhaustive_multiply();
  command_counts();
  latency_energy();
  headline_ratios();
  faw_threshold();
  timing_soundness();
  counting_identity();
  accelerator_equivalence();
  std::printf("N/A   9  TPU/GPU speedups  [external hardware; not simulated]\n");
  std::printf("%d criterion(s) failed\n", failures);
  return failures ? 1 : 0;
}
