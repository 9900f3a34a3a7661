#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "lama/energy.hpp"
#include "lama/error.hpp"
#include "lama/exp_quant.hpp"
#include "lama/lut_engine.hpp"
#include "lama/mem_topology.hpp"
#include "lama/timing.hpp"

namespace lama {

enum class LayerKind { fc, attention_score, attention_output };

NLOHMANN_JSON_SERIALIZE_ENUM(LayerKind, {{LayerKind::fc, "fc"},
                                         {LayerKind::attention_score, "attention_score"},
                                         {LayerKind::attention_output, "attention_output"}})

struct LayerSpec {
  std::uint32_t in_dim = 1;
  std::uint32_t out_dim = 1;
  std::uint32_t precision_n = 4;
  LayerKind kind = LayerKind::fc;
  TeqParams act_params{1.0, 0.0, 2.0, 4};
  TeqParams weight_params{1.0, 0.0, 2.0, 4};

  /// Attention operands are produced at run time and written before use.
  bool runtime_weights() const { return kind != LayerKind::fc; }

  std::vector<std::string> violations() const {
    std::vector<std::string> v;
    if (in_dim == 0 || out_dim == 0) v.emplace_back("layer dimensions must be positive");
    if (precision_n < 3 || precision_n > 7) v.emplace_back("layer precision must be 3..7 bits");
    return v;
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(LayerSpec, in_dim, out_dim, precision_n, kind,
                                                act_params, weight_params)

enum class CounterTerm { sum, weight, act };  // A+W, W, A arrays

/// Bank-level placement of one layer.
struct SubarrayPlan {
  std::uint32_t n = 4;
  std::uint32_t banks = 8;
  std::uint32_t neurons_per_bank = 0;
  std::uint32_t sets_per_bank = 0;         // 16-neuron groups
  std::uint32_t p_weights = 16;
  std::uint32_t p_sum = 16;
  std::uint32_t p_count = 16;
  std::uint32_t sum_mats = 1;              // mats holding one exponent-sum row
  std::uint32_t counter_families = 1;      // counter subarrays per bank
  std::uint32_t rows_per_set = 1;          // counter rows per family per set
  std::uint32_t source_subarrays = 1;
  std::uint32_t compute_subarray = 1;
  std::vector<std::uint32_t> counter_subarrays;
  std::vector<std::vector<CounterTerm>> family_terms;
  std::vector<std::vector<std::uint8_t>> sum_lut;  // 2^n rows x row bytes

  std::uint32_t offset() const { return 1u << (n - 1); }
  std::uint32_t sum_counters() const { return 2u << n; }
  std::uint32_t counters_per_array() const { return 1u << n; }
  std::uint32_t counter_bytes_per_neuron() const { return sum_counters() + 2 * counters_per_array(); }
  std::uint32_t counter_rows_per_set() const { return counter_families * rows_per_set; }
};

inline SubarrayPlan layout_layer(const LayerSpec& layer, const HbmConfig& cfg, std::uint32_t banks = 0) {
  auto bad = layer.violations();
  if (!bad.empty()) throw Error(ErrorKind::InvalidArgument, bad.front());
  check_lut_geometry(cfg);
  SubarrayPlan p;
  p.n = layer.precision_n;
  p.banks = banks ? banks : cfg.banks_per_pch();
  if (p.banks > cfg.banks_per_pch())
    throw Error(ErrorKind::CapacityExceeded, "a layer occupies at most one pseudo-channel");
  p.neurons_per_bank = (layer.out_dim + p.banks - 1) / p.banks;
  if (p.neurons_per_bank > elements_per_source_row(cfg))
    throw Error(ErrorKind::CapacityExceeded,
                "layer needs " + std::to_string(p.neurons_per_bank) + " output neurons per bank; one row holds " +
                    std::to_string(elements_per_source_row(cfg)));
  p.sets_per_bank = (p.neurons_per_bank + kLutMats - 1) / kLutMats;

  p.sum_mats = p.n == 7 ? 2 : 1;
  p.p_sum = kLutMats / p.sum_mats;
  switch (p.n) {
    case 3:
    case 4: p.p_count = 16; p.counter_families = 1; break;
    case 5: p.p_count = 16; p.counter_families = 2; break;
    case 6: p.p_count = 8; p.counter_families = 2; break;
    default: p.p_count = 4; p.counter_families = 2; break;
  }
  p.rows_per_set = kLutMats / p.p_count;
  if (p.counter_families == 1)
    p.family_terms = {{CounterTerm::sum, CounterTerm::weight, CounterTerm::act}};
  else
    p.family_terms = {{CounterTerm::sum}, {CounterTerm::weight, CounterTerm::act}};

  p.source_subarrays = (layer.in_dim + cfg.rows_per_subarray - 1) / cfg.rows_per_subarray;
  p.compute_subarray = p.source_subarrays;
  for (std::uint32_t f = 0; f < p.counter_families; ++f) p.counter_subarrays.push_back(p.compute_subarray + 1 + f);
  if (p.counter_subarrays.back() >= cfg.subarrays_per_bank)
    throw Error(ErrorKind::CapacityExceeded, "layer needs more subarrays than a bank has");
  if (p.sets_per_bank * p.rows_per_set > cfg.rows_per_subarray)
    throw Error(ErrorKind::CapacityExceeded, "counter rows exceed a subarray");

  // Exponent-sum LUT: row int_A + off, entry int_W + off, signed byte.
  const std::uint32_t entries = 1u << p.n, off = p.offset();
  p.sum_lut.assign(entries, std::vector<std::uint8_t>(cfg.row_buffer_bytes_per_pch, 0));
  for (std::uint32_t ra = 0; ra < entries; ++ra)
    for (std::uint32_t rw = 0; rw < entries; ++rw) {
      const int s = int(ra) - int(off) + int(rw) - int(off);
      for (std::uint32_t g = 0; g < p.p_sum; ++g) {
        const std::uint32_t mat = g * p.sum_mats + rw / kSegmentBytes;
        p.sum_lut[ra][mat * kSegmentBytes + rw % kSegmentBytes] = std::uint8_t(std::int8_t(s));
      }
    }
  return p;
}

/// Signed 8-bit occurrence counters, three arrays per output neuron.
struct CounterBank {
  std::uint32_t n = 4;
  std::vector<std::vector<std::int8_t>> sum, weight, act;

  CounterBank() = default;
  CounterBank(std::uint32_t bits, std::uint32_t neurons)
      : n(bits),
        sum(neurons, std::vector<std::int8_t>(2u << bits, 0)),
        weight(neurons, std::vector<std::int8_t>(1u << bits, 0)),
        act(neurons, std::vector<std::int8_t>(1u << bits, 0)) {}

  std::size_t neurons() const { return sum.size(); }

  static void bump(std::int8_t& c, int delta) {
    const int v = c + delta;
    if (v < -128 || v > 127) throw Error(ErrorKind::CounterOverflow, "8-bit occurrence counter overflow");
    c = std::int8_t(v);
  }

  /// Accumulators of one neuron in the layout used by the counting dot product.
  TermAccumulators accumulators(std::size_t neuron) const {
    TermAccumulators acc(n);
    for (std::size_t k = 0; k < acc.t1.size(); ++k) acc.t1[k] = sum[neuron][k];
    for (std::size_t j = 0; j < acc.t2.size(); ++j) {
      acc.t2[j] = weight[neuron][j];
      acc.t4 += weight[neuron][j];
    }
    for (std::size_t i = 0; i < acc.t3.size(); ++i) acc.t3[i] = act[neuron][i];
    return acc;
  }
};

/// Layer weights as an in_dim x out_dim row-major code tensor.
struct QuantLayer {
  LayerSpec spec;
  TeqTensor weights;
};

struct LayerRun {
  CounterBank counters;
  CommandStream stream;
  std::uint64_t activations_processed = 0;
};

namespace detail {

struct ActivationCode {
  std::int8_t sign = 1;
  std::int8_t exponent = 0;
};

/// Commands of one bank for one activation. When `w` and `counters` are given the
/// counting is executed functionally on the way.
inline std::vector<Command> emit_activation(const SubarrayPlan& p, const LayerSpec& spec,
                                            std::uint32_t input, ActivationCode a, Location bank,
                                            std::uint32_t first_neuron, std::uint32_t neurons,
                                            const TeqTensor* w, CounterBank* counters,
                                            const HbmConfig& cfg) {
  std::vector<Command> cmds;
  if (neurons == 0) return cmds;
  const std::uint32_t off = p.offset();
  const std::uint32_t sets = (neurons + kLutMats - 1) / kLutMats;

  Location src = bank;
  src.subarray = input / cfg.rows_per_subarray;
  src.row = input % cfg.rows_per_subarray;
  Location comp = bank;
  comp.subarray = p.compute_subarray;
  comp.row = std::uint32_t(a.exponent + int(off));

  cmds.push_back(Command::act(src));
  if (spec.runtime_weights())
    for (std::uint32_t s = 0; s < sets; ++s) {
      Location wr = src;
      wr.byte_col = s;
      cmds.push_back(Command::write(wr, 1));
    }

  for (std::uint32_t s = 0; s < sets; ++s) {
    Location rd = src;
    rd.byte_col = s;
    cmds.push_back(Command::internal_read(rd, 1));
    if (s == 0) cmds.push_back(Command::act(comp));
    Location rt = comp;
    rt.byte_col = 0;
    cmds.push_back(Command::lut_retrieval(rt, p.sum_mats, p.sum_mats > 1 ? p.p_sum : 0, false));

    // Lanes of this set: weight code, retrieved exponent sum, validity.
    struct Lane {
      bool live = false;
      std::int8_t sign = 1, w_exp = 0, sum = 0;
    };
    Lane lanes[kLutMats];
    if (w && counters) {
      for (std::uint32_t m = 0; m < kLutMats; ++m) {
        const std::uint32_t local = s * kLutMats + m;
        if (local >= neurons) continue;
        const std::size_t idx = std::size_t(input) * spec.out_dim + first_neuron + local;
        if (w->is_zero(idx)) continue;
        // Source row byte: the {sign, exponent} code at mat m, column s.
        auto [ws, we] = unpack_code(pack_code(w->signs[idx], w->exponents[idx]));
        const std::uint32_t e = std::uint32_t(we + int(off));
        const std::uint32_t group = m / p.sum_mats;
        const std::uint32_t mat = group * p.sum_mats + e / kSegmentBytes;
        lanes[m] = {true, ws, we, std::int8_t(p.sum_lut[comp.row][mat * kSegmentBytes + e % kSegmentBytes])};
      }
    }

    for (std::uint32_t f = 0; f < p.counter_families; ++f) {
      for (std::uint32_t r = 0; r < p.rows_per_set; ++r) {
        Location ctr = bank;
        ctr.subarray = p.counter_subarrays[f];
        ctr.row = s * p.rows_per_set + r;
        cmds.push_back(Command::act(ctr));
        for (CounterTerm term : p.family_terms[f]) {
          cmds.push_back(Command::count_update(ctr));
          cmds.push_back(Command::write(ctr, 1));
          if (!counters) continue;
          for (std::uint32_t m = r * p.p_count; m < (r + 1) * p.p_count; ++m) {
            if (!lanes[m].live) continue;
            const int delta = a.sign * lanes[m].sign;
            const std::size_t neuron = first_neuron + s * kLutMats + m;
            switch (term) {
              case CounterTerm::sum:
                CounterBank::bump(counters->sum[neuron][std::size_t(lanes[m].sum + (1 << p.n))], delta);
                break;
              case CounterTerm::weight:
                CounterBank::bump(counters->weight[neuron][std::size_t(lanes[m].w_exp + int(off))], delta);
                break;
              case CounterTerm::act:
                CounterBank::bump(counters->act[neuron][std::size_t(a.exponent + int(off))], delta);
                break;
            }
          }
        }
        cmds.push_back(Command::pre(ctr));
      }
    }
  }
  cmds.push_back(Command::pre(src));
  cmds.push_back(Command::pre(comp));
  return cmds;
}

inline Location layer_bank(std::uint32_t b, std::uint32_t pch, const HbmConfig& cfg) {
  Location l;
  l.pch = pch;
  l.bank_group = b / cfg.banks_per_group;
  l.bank = b % cfg.banks_per_group;
  return l;
}

}  // namespace detail

/// Runs the three-step counting flow for every non-zero activation and
/// returns the final counters with the scheduled command stream.
inline LayerRun run_layer(const QuantLayer& layer, const TeqTensor& activations,
                          const SubarrayPlan& plan, const TimingParams& t = {},
                          const HbmConfig& cfg = {}, std::uint32_t pch = 0) {
  const LayerSpec& spec = layer.spec;
  if (activations.size() != spec.in_dim)
    throw Error(ErrorKind::LengthMismatch, "activation count differs from the layer input width");
  if (layer.weights.size() != std::size_t(spec.in_dim) * spec.out_dim)
    throw Error(ErrorKind::LengthMismatch, "weight tensor is not in_dim x out_dim");
  if (activations.params.n != plan.n || layer.weights.params.n != plan.n)
    throw Error(ErrorKind::InvalidArgument, "tensor bitwidths differ from the layer precision");

  LayerRun run;
  run.counters = CounterBank(plan.n, spec.out_dim);
  std::vector<Command> all;
  for (std::uint32_t i = 0; i < spec.in_dim; ++i) {
    if (activations.is_zero(i)) continue;
    ++run.activations_processed;
    const detail::ActivationCode a{activations.signs[i], activations.exponents[i]};
    std::vector<std::vector<Command>> per_bank;
    for (std::uint32_t b = 0; b < plan.banks; ++b) {
      const std::uint32_t first = b * plan.neurons_per_bank;
      const std::uint32_t count = first >= spec.out_dim ? 0 : std::min(plan.neurons_per_bank, spec.out_dim - first);
      per_bank.push_back(detail::emit_activation(plan, spec, i, a, detail::layer_bank(b, pch, cfg), first,
                                                 count, &layer.weights, &run.counters, cfg));
    }
    auto merged = interleave(per_bank);
    all.insert(all.end(), merged.begin(), merged.end());
  }
  run.stream = schedule(std::move(all), t);
  return run;
}

/// ACTs one activation should cost on a bank serving `neurons` outputs.
inline std::uint64_t expected_acts_per_activation(const SubarrayPlan& p, std::uint32_t neurons) {
  if (neurons == 0) return 0;
  const std::uint64_t sets = (neurons + kLutMats - 1) / kLutMats;
  return 2 + sets * p.counter_rows_per_set();
}

inline TeqTensor postprocess_layer(const CounterBank& counters, const TeqParams& pa,
                                   const TeqParams& pw, const TeqParams& next) {
  std::vector<double> out(counters.neurons());
  for (std::size_t o = 0; o < out.size(); ++o) out[o] = combine_terms(counters.accumulators(o), pa, pw);
  return encode(out, next);
}

// ---------------------------------------------------------------------------
// Model mapping and pipelined cost

enum class BlockKind { encoder, decoder };

NLOHMANN_JSON_SERIALIZE_ENUM(BlockKind, {{BlockKind::encoder, "encoder"}, {BlockKind::decoder, "decoder"}})

struct BlockSpec {
  std::string name;
  BlockKind kind = BlockKind::encoder;
  std::vector<LayerSpec> layers;
};

struct ModelSpec {
  std::string name;
  std::uint32_t max_seq_len = 1;
  double decoder_slowdown = 2.0;  // serialized-token factor on decoder stage time
  std::vector<BlockSpec> blocks;
};

inline void from_json(const nlohmann::json& j, BlockSpec& b) {
  b.name = j.value("name", std::string{});
  b.kind = j.value("kind", BlockKind::encoder);
  b.layers = j.at("layers").get<std::vector<LayerSpec>>();
}

inline void to_json(nlohmann::json& j, const BlockSpec& b) {
  j = {{"name", b.name}, {"kind", b.kind}, {"layers", b.layers}};
}

/// Blocks may carry "repeat": k to stand for k identical copies.
inline void from_json(const nlohmann::json& j, ModelSpec& m) {
  m.name = j.value("name", std::string{});
  m.max_seq_len = j.value("max_seq_len", 1u);
  m.decoder_slowdown = j.value("decoder_slowdown", 2.0);
  m.blocks.clear();
  for (const auto& jb : j.at("blocks")) {
    const auto block = jb.get<BlockSpec>();
    const auto repeat = jb.value("repeat", 1u);
    for (std::uint32_t r = 0; r < repeat; ++r) {
      m.blocks.push_back(block);
      if (repeat > 1) m.blocks.back().name += "." + std::to_string(r);
    }
  }
  if (m.max_seq_len == 0) throw Error(ErrorKind::InvalidArgument, "max_seq_len must be positive");
}

inline void to_json(nlohmann::json& j, const ModelSpec& m) {
  j = {{"name", m.name}, {"max_seq_len", m.max_seq_len}, {"decoder_slowdown", m.decoder_slowdown},
       {"blocks", m.blocks}};
}

struct Stage {
  std::vector<std::uint32_t> blocks;
  std::uint32_t first_pch = 0;
  std::uint32_t pch_count = 1;
  Nanoseconds time_ns = 0;
};

struct MappingPlan {
  std::vector<Stage> stages;
  std::uint32_t pch_used = 0;
  std::uint32_t pch_idle = 0;

  Nanoseconds max_stage_ns() const {
    Nanoseconds m = 0;
    for (const auto& s : stages) m = std::max(m, s.time_ns);
    return m;
  }
};

namespace detail {

/// Minimal max-sum split of a contiguous sequence into at most k groups.
inline std::vector<std::vector<std::uint32_t>> split_contiguous(const std::vector<std::uint32_t>& ids,
                                                                const std::vector<Nanoseconds>& times,
                                                                std::uint32_t k) {
  const std::size_t n = ids.size();
  k = std::min<std::uint32_t>(k, std::uint32_t(n));
  if (n == 0 || k == 0) return {};
  std::vector<Nanoseconds> prefix(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + times[ids[i]];
  // best[g][i]: min max-sum of the first i items in g groups
  std::vector<std::vector<Nanoseconds>> best(k + 1, std::vector<Nanoseconds>(n + 1, INFINITY));
  std::vector<std::vector<std::size_t>> cut(k + 1, std::vector<std::size_t>(n + 1, 0));
  best[0][0] = 0;
  for (std::uint32_t g = 1; g <= k; ++g)
    for (std::size_t i = 1; i <= n; ++i)
      for (std::size_t j = g - 1; j < i; ++j) {
        const Nanoseconds v = std::max(best[g - 1][j], prefix[i] - prefix[j]);
        if (v < best[g][i]) {
          best[g][i] = v;
          cut[g][i] = j;
        }
      }
  std::vector<std::vector<std::uint32_t>> groups(k);
  std::size_t i = n;
  for (std::uint32_t g = k; g >= 1; --g) {
    const std::size_t j = cut[g][i];
    groups[g - 1].assign(ids.begin() + std::ptrdiff_t(j), ids.begin() + std::ptrdiff_t(i));
    i = j;
  }
  return groups;
}

}  // namespace detail

/// Assigns pseudo-channels to blocks from per-block stage times.
///
/// With enough channels every block gets one and spare channels go, one at a
/// time, to the slowest decoder for as long as every encoder is faster. With more blocks
/// than channels, encoders and decoders are split into contiguous groups and
/// the encoder/decoder channel split with the smallest slowest stage wins.
inline MappingPlan map_blocks(const std::vector<BlockKind>& kinds, const std::vector<Nanoseconds>& times,
                              std::uint32_t total_pch) {
  if (kinds.size() != times.size()) throw Error(ErrorKind::LengthMismatch, "one time per block");
  if (kinds.empty()) return {};
  if (total_pch == 0) throw Error(ErrorKind::InsufficientChannels, "no pseudo-channels available");
  MappingPlan plan;
  const std::uint32_t nb = std::uint32_t(kinds.size());

  if (nb <= total_pch) {
    for (std::uint32_t b = 0; b < nb; ++b) plan.stages.push_back({{b}, 0, 1, times[b]});
    std::uint32_t spare = total_pch - nb;
    while (spare > 0) {
      std::size_t slow = 0;
      for (std::size_t s = 1; s < plan.stages.size(); ++s)
        if (plan.stages[s].time_ns > plan.stages[slow].time_ns) slow = s;
      bool gain = kinds[plan.stages[slow].blocks[0]] == BlockKind::decoder;
      for (std::size_t s = 0; s < plan.stages.size() && gain; ++s)
        if (kinds[plan.stages[s].blocks[0]] == BlockKind::encoder &&
            plan.stages[s].time_ns >= plan.stages[slow].time_ns)
          gain = false;
      if (!gain) break;
      auto& st = plan.stages[slow];
      ++st.pch_count;
      st.time_ns = times[st.blocks[0]] / st.pch_count;
      --spare;
    }
  } else {
    std::vector<std::uint32_t> enc, dec;
    for (std::uint32_t b = 0; b < nb; ++b) (kinds[b] == BlockKind::encoder ? enc : dec).push_back(b);
    auto stage_of = [&](const std::vector<std::uint32_t>& g) {
      Stage s{g, 0, 1, 0};
      for (auto b : g) s.time_ns += times[b];
      return s;
    };
    Nanoseconds best = INFINITY;
    auto try_split = [&](std::uint32_t e) {
      std::vector<Stage> stages;
      for (auto& g : detail::split_contiguous(enc, times, e)) stages.push_back(stage_of(g));
      for (auto& g : detail::split_contiguous(dec, times, total_pch - e)) stages.push_back(stage_of(g));
      Nanoseconds m = 0;
      for (auto& s : stages) m = std::max(m, s.time_ns);
      if (m < best) {
        best = m;
        plan.stages = std::move(stages);
      }
    };
    if (enc.empty()) try_split(0);
    else if (dec.empty()) try_split(total_pch);
    else {
      if (total_pch < 2) throw Error(ErrorKind::InsufficientChannels, "encoders and decoders need a channel each");
      for (std::uint32_t e = 1; e < total_pch; ++e) try_split(e);
    }
  }
  std::uint32_t next = 0;
  for (auto& s : plan.stages) {
    s.first_pch = next;
    next += s.pch_count;
  }
  plan.pch_used = next;
  plan.pch_idle = total_pch - next;
  return plan;
}

struct AccelParams {
  std::uint32_t sample_activations = 8;
  std::uint32_t banks_per_layer = 0;  // 0: every bank of the pseudo-channel
  Nanoseconds postprocess_ns_per_neuron = 0.5;
  double postprocess_pj_per_neuron = 5.0;
  Nanoseconds softmax_ns_per_element = 1.0;
  double softmax_pj_per_element = 10.0;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(AccelParams, sample_activations, banks_per_layer,
                                                postprocess_ns_per_neuron, postprocess_pj_per_neuron,
                                                softmax_ns_per_element, softmax_pj_per_element)

struct LayerCost {
  Nanoseconds stream_ns = 0;   // in-DRAM counting, one token
  double stream_nj = 0;
  Nanoseconds readout_ns = 0;  // counters to the logic die
  double readout_nj = 0;
  Nanoseconds logic_ns = 0;    // re-quantization and softmax on the logic die
  double logic_nj = 0;

  Nanoseconds total_ns() const { return stream_ns + readout_ns + logic_ns; }
  double total_nj() const { return stream_nj + readout_nj + logic_nj; }
};

/// Cost of one token through one layer: the first K activations are
/// scheduled exactly and the rest extrapolated linearly.
inline LayerCost layer_cost(const LayerSpec& spec, const HbmConfig& cfg, const TimingParams& t,
                            const EnergyParams& ep, const AccelParams& ap = {}) {
  const SubarrayPlan plan = layout_layer(spec, cfg, ap.banks_per_layer);
  const std::uint32_t k = std::max(1u, std::min(spec.in_dim, ap.sample_activations));
  std::vector<Command> all;
  std::uint32_t active = 0;
  for (std::uint32_t i = 0; i < k; ++i) {
    std::vector<std::vector<Command>> per_bank;
    active = 0;
    for (std::uint32_t b = 0; b < plan.banks; ++b) {
      const std::uint32_t first = b * plan.neurons_per_bank;
      const std::uint32_t count = first >= spec.out_dim ? 0 : std::min(plan.neurons_per_bank, spec.out_dim - first);
      active += count > 0;
      per_bank.push_back(detail::emit_activation(plan, spec, i, {1, 0}, detail::layer_bank(b, 0, cfg), first,
                                                 count, nullptr, nullptr, cfg));
    }
    auto merged = interleave(per_bank);
    all.insert(all.end(), merged.begin(), merged.end());
  }
  const auto stream = schedule(std::move(all), t);
  const auto e = energy(stream, ep, active, t);
  const double scale = double(spec.in_dim) / k;
  LayerCost c;
  c.stream_ns = e.latency_ns * scale;
  c.stream_nj = e.total_nj * scale;

  // Counter readout: one ACT/PRE per counter row, then 16-byte beats over the
  // shared pseudo-channel bus.
  const std::uint64_t rows = std::uint64_t(active) * plan.sets_per_bank * plan.counter_rows_per_set();
  const std::uint64_t bytes = std::uint64_t(spec.out_dim) * plan.counter_bytes_per_neuron();
  const double bits = double(bytes) * 8;
  c.readout_ns = double(rows) / std::max(1u, active) * t.tRC + double((bytes + 15) / 16) * t.tCCD_S;
  c.readout_nj = (rows * ep.e_act_pj * ep.act_scale +
                  bits * (ep.e_pre_gsa_pj_per_bit + ep.e_post_gsa_pj_per_bit + ep.e_io_pj_per_bit) * ep.col_scale) /
                 1e3;
  c.logic_ns = spec.out_dim * ap.postprocess_ns_per_neuron;
  c.logic_nj = spec.out_dim * ap.postprocess_pj_per_neuron / 1e3;
  if (spec.kind == LayerKind::attention_score) {
    c.logic_ns += spec.out_dim * ap.softmax_ns_per_element;
    c.logic_nj += spec.out_dim * ap.softmax_pj_per_element / 1e3;
  }
  return c;
}

struct BlockCost {
  Nanoseconds time_ns = 0;
  double energy_nj = 0;
};

/// One inference through a block. Decoder attention spans a KV cache that
/// grows linearly over the generated tokens, so it is charged at the mean
/// length; decoder time also carries the serialized-token factor.
inline BlockCost block_cost(const BlockSpec& block, const ModelSpec& model, const HbmConfig& cfg,
                            const TimingParams& t, const EnergyParams& ep, const AccelParams& ap = {}) {
  BlockCost bc;
  const double tokens = model.max_seq_len;
  for (std::size_t li = 0; li < block.layers.size(); ++li) {
    const auto c = layer_cost(block.layers[li], cfg, t, ep, ap);
    double w = tokens;
    if (block.kind == BlockKind::decoder && block.layers[li].kind != LayerKind::fc)
      w *= (tokens + 1) / (2 * tokens);
    // Post-processing overlaps the next layer; only the last one is exposed.
    const Nanoseconds exposed = li + 1 == block.layers.size() ? c.total_ns() : c.stream_ns + c.readout_ns;
    bc.time_ns += exposed * w;
    bc.energy_nj += c.total_nj() * w;
  }
  if (block.kind == BlockKind::decoder) bc.time_ns *= model.decoder_slowdown;
  return bc;
}

inline MappingPlan map_model(const ModelSpec& model, const HbmConfig& cfg, const TimingParams& t = {},
                             const EnergyParams& ep = {}, const AccelParams& ap = {}) {
  std::vector<BlockKind> kinds;
  std::vector<Nanoseconds> times;
  for (const auto& b : model.blocks) {
    kinds.push_back(b.kind);
    times.push_back(block_cost(b, model, cfg, t, ep, ap).time_ns);
  }
  return map_blocks(kinds, times, cfg.total_pch());
}

struct StageReport {
  std::vector<std::uint32_t> blocks;
  std::uint32_t pch_count = 1;
  Nanoseconds latency_ns = 0;
  double energy_nj = 0;
};

struct AccelReport {
  Nanoseconds latency_ns = 0;
  double energy_nj = 0;
  std::uint32_t inferences = 1;
  std::vector<StageReport> stages;
};

inline void to_json(nlohmann::json& j, const AccelReport& r) {
  j = {{"latency_ns", r.latency_ns}, {"energy_nj", r.energy_nj}, {"inferences", r.inferences}};
  auto& st = j["stages"] = nlohmann::json::array();
  for (const auto& s : r.stages)
    st.push_back({{"blocks", s.blocks}, {"pch_count", s.pch_count}, {"latency_ns", s.latency_ns},
                  {"energy_nj", s.energy_nj}});
}

/// Pipelined cost of `inferences` back-to-back inputs: the pipeline fills
/// once, then one result leaves per slowest-stage time.
inline AccelReport estimate_inference(const ModelSpec& model, const MappingPlan& plan, const HbmConfig& cfg,
                                      const TimingParams& t = {}, const EnergyParams& ep = {},
                                      const AccelParams& ap = {}, std::uint32_t inferences = 1) {
  if (inferences == 0) throw Error(ErrorKind::InvalidArgument, "need at least one inference");
  AccelReport r;
  r.inferences = inferences;
  std::vector<BlockCost> costs;
  for (const auto& b : model.blocks) costs.push_back(block_cost(b, model, cfg, t, ep, ap));
  Nanoseconds fill = 0, slowest = 0;
  for (const auto& s : plan.stages) {
    StageReport sr{s.blocks, s.pch_count, 0, 0};
    for (auto b : s.blocks) {
      if (b >= costs.size()) throw Error(ErrorKind::InvalidArgument, "plan references an unknown block");
      sr.latency_ns += costs[b].time_ns;
      sr.energy_nj += costs[b].energy_nj;
    }
    sr.latency_ns /= s.pch_count;
    fill += sr.latency_ns;
    slowest = std::max(slowest, sr.latency_ns);
    r.energy_nj += sr.energy_nj * inferences;
    r.stages.push_back(sr);
  }
  r.latency_ns = fill + (inferences - 1) * slowest;
  return r;
}

}  // namespace lama
