#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "lama/error.hpp"
#include "lama/mem_topology.hpp"

namespace lama {

using Nanoseconds = double;

/// HBM2 timing constants plus the bank-logic clock of the LUT periphery.
///
/// Note: the activation-window constraint is named after "four" activates but
/// the configured cap is `acts_per_faw` (8 by default) per pseudo-channel.
struct TimingParams {
  Nanoseconds tRC = 45;
  Nanoseconds tRCD = 16;
  Nanoseconds tRAS = 29;
  Nanoseconds tCL = 16;
  Nanoseconds tRRD = 2;
  Nanoseconds tWR = 16;
  Nanoseconds tCCD_S = 2;
  Nanoseconds tCCD_L = 4;
  Nanoseconds tFAW = 12;
  std::uint32_t acts_per_faw = 8;
  Nanoseconds mask_cycle_ns = 2;  // 500 MHz bank logic

  Nanoseconds tRP() const { return tRC - tRAS; }

  std::vector<std::string> violations() const {
    std::vector<std::string> v;
    for (double x : {tRC, tRCD, tRAS, tCL, tRRD, tWR, tCCD_S, tCCD_L, tFAW, mask_cycle_ns})
      if (!(x > 0)) { v.emplace_back("all timing values must be positive"); break; }
    if (acts_per_faw == 0) v.emplace_back("acts_per_faw must be positive");
    if (tRC < tRAS) v.emplace_back("tRC must be >= tRAS");
    if (tCCD_L < tCCD_S) v.emplace_back("tCCD_L must be >= tCCD_S");
    return v;
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TimingParams, tRC, tRCD, tRAS, tCL, tRRD, tWR,
                                                tCCD_S, tCCD_L, tFAW, acts_per_faw,
                                                mask_cycle_ns)

enum class CommandKind : std::uint8_t {
  ACT,
  PRE,
  INTERNAL_READ,
  LUT_RETRIEVAL,
  OUTPUT_XFER,
  WRITE,
  COUNT_UPDATE,
};

inline constexpr std::array<std::string_view, 7> kCommandNames = {
    "ACT", "PRE", "INTERNAL_READ", "LUT_RETRIEVAL", "OUTPUT_XFER", "WRITE", "COUNT_UPDATE"};

inline std::string_view to_string(CommandKind k) { return kCommandNames[static_cast<int>(k)]; }

inline std::optional<CommandKind> parse_command_kind(std::string_view s) {
  for (std::size_t i = 0; i < kCommandNames.size(); ++i)
    if (kCommandNames[i] == s) return static_cast<CommandKind>(i);
  return std::nullopt;
}

inline bool is_column(CommandKind k) {
  return k == CommandKind::INTERNAL_READ || k == CommandKind::LUT_RETRIEVAL ||
         k == CommandKind::WRITE || k == CommandKind::COUNT_UPDATE;
}

/// OUTPUT_XFER is a data-path event raised by the bus arbiter when the mask
/// buffer fills; everything else goes through the memory controller.
inline bool is_controller_command(CommandKind k) { return k != CommandKind::OUTPUT_XFER; }

/// One DRAM command. `target.byte_col` carries the column address of column
/// commands; `target.mat` is unused.
struct Command {
  CommandKind kind = CommandKind::ACT;
  Location target;
  std::uint32_t icas = 0;
  std::uint32_t mask_cycles = 0;
  std::optional<std::uint32_t> data_bits;
  bool to_host = false;
  Nanoseconds issue_time = 0;

  static Command act(Location at) { return {CommandKind::ACT, at, 0, 0, std::nullopt}; }
  static Command pre(Location at) { return {CommandKind::PRE, at, 0, 0, std::nullopt}; }
  static Command internal_read(Location at, std::uint32_t icas = 2) {
    return {CommandKind::INTERNAL_READ, at, icas, 0, icas * 128u};
  }
  static Command lut_retrieval(Location at, std::uint32_t icas, std::uint32_t mask_cycles,
                               bool to_host) {
    return {CommandKind::LUT_RETRIEVAL, at, icas, mask_cycles, icas * 128u, to_host};
  }
  static Command output_xfer(Location at, std::uint32_t bytes) {
    return {CommandKind::OUTPUT_XFER, at, 0, 0, bytes * 8u, true};
  }
  static Command write(Location at, std::uint32_t icas = 1) {
    return {CommandKind::WRITE, at, icas, 0, icas * 128u};
  }
  static Command count_update(Location at) {
    return {CommandKind::COUNT_UPDATE, at, 1, 0, 128u};
  }
};

/// Open/close transition of one subarray; row == -1 means closed.
struct RowStateEvent {
  Nanoseconds time = 0;
  std::uint32_t pch = 0, bank_group = 0, bank = 0, subarray = 0;
  std::int64_t row = -1;
};

struct CommandStream {
  std::vector<Command> commands;
  std::vector<RowStateEvent> row_trace;

  std::size_t size() const { return commands.size(); }
  bool empty() const { return commands.empty(); }
};

struct TimingViolation {
  std::size_t index = 0;
  std::string rule;
  std::string detail;
};

namespace detail {

inline constexpr double kEps = 1e-9;

inline std::uint64_t pch_key(const Location& l) { return l.pch; }
inline std::uint64_t group_key(const Location& l) {
  return (std::uint64_t{l.pch} << 8) | l.bank_group;
}
inline std::uint64_t bank_key(const Location& l) {
  return (group_key(l) << 8) | l.bank;
}
inline std::uint64_t subarray_key(const Location& l) {
  return (bank_key(l) << 16) | l.subarray;
}

/// Column-path slots. Conventional reads/writes take one tCCD_L slot per ICA;
/// LUT retrievals and counter updates drive the per-mat column counters at
/// the tCCD_S rate, so their ICAs pack into tCCD_L slots.
inline std::uint32_t path_slots(const Command& c, const TimingParams& t) {
  const std::uint32_t icas = std::max<std::uint32_t>(c.icas, 1);
  if (c.kind == CommandKind::LUT_RETRIEVAL || c.kind == CommandKind::COUNT_UPDATE) {
    auto s = static_cast<std::uint32_t>(std::ceil(icas * t.tCCD_S / t.tCCD_L - kEps));
    return std::max<std::uint32_t>(s, 1);
  }
  return icas;
}

/// Time the issuing bank is busy with a column command (column slots plus
/// mask-logic or counter-update cycles).
inline Nanoseconds bank_hold(const Command& c, const TimingParams& t) {
  Nanoseconds h = path_slots(c, t) * t.tCCD_L + c.mask_cycles * t.mask_cycle_ns;
  if (c.kind == CommandKind::COUNT_UPDATE) h += t.mask_cycle_ns;
  return h;
}

}  // namespace detail

/// Time at which a scheduled command's effect is complete.
inline Nanoseconds completion_time(const Command& c, const TimingParams& t) {
  switch (c.kind) {
    case CommandKind::ACT: return c.issue_time + t.tRCD;
    case CommandKind::PRE: return c.issue_time + t.tRP();
    case CommandKind::OUTPUT_XFER: return c.issue_time + t.tCCD_S;
    case CommandKind::WRITE:
      return c.issue_time + detail::bank_hold(c, t) - t.tCCD_L + t.tWR;
    default: return c.issue_time + detail::bank_hold(c, t) - t.tCCD_L + t.tCL;
  }
}

/// Assigns each command the earliest issue time that satisfies every timing
/// rule, issuing controller commands in list order.
///
/// Throws Error(OpenPageViolation) when a column command targets a closed or
/// different row, an ACT hits an already-open subarray, or a PRE hits a
/// closed one.
inline CommandStream schedule(std::vector<Command> cmds, const TimingParams& t) {
  struct SubState {
    std::int64_t open_row = -1;
    Nanoseconds act = -1e18, pre = -1e18, col_done = -1e18;
  };
  struct BankState {
    Nanoseconds last_act = -1e18, busy_until = -1e18;
  };
  struct GroupState {
    Nanoseconds path_free = -1e18;
  };
  struct PchState {
    Nanoseconds last_act = -1e18, last_col = -1e18, io_free = -1e18;
    std::deque<Nanoseconds> acts;
  };
  std::unordered_map<std::uint64_t, SubState> subs;
  std::unordered_map<std::uint64_t, BankState> banks;
  std::unordered_map<std::uint64_t, GroupState> groups;
  std::unordered_map<std::uint64_t, PchState> pchs;

  CommandStream out;
  out.row_trace.reserve(cmds.size() / 4);
  Nanoseconds cursor = 0;

  for (std::size_t i = 0; i < cmds.size(); ++i) {
    Command& c = cmds[i];
    const Location& l = c.target;
    auto& sub = subs[detail::subarray_key(l)];
    auto& bank = banks[detail::bank_key(l)];
    auto& grp = groups[detail::group_key(l)];
    auto& pch = pchs[detail::pch_key(l)];
    Nanoseconds at = is_controller_command(c.kind) ? cursor : 0;

    switch (c.kind) {
      case CommandKind::ACT: {
        if (sub.open_row >= 0)
          throw Error(ErrorKind::OpenPageViolation,
                      "command " + std::to_string(i) + ": ACT to subarray with an open row");
        at = std::max({at, bank.last_act + t.tRC, pch.last_act + t.tRRD, sub.pre + t.tRP()});
        if (pch.acts.size() >= t.acts_per_faw)
          at = std::max(at, pch.acts[pch.acts.size() - t.acts_per_faw] + t.tFAW);
        c.issue_time = at;
        bank.last_act = at;
        pch.last_act = at;
        pch.acts.push_back(at);
        while (pch.acts.size() > t.acts_per_faw) pch.acts.pop_front();
        sub.open_row = l.row;
        sub.act = at;
        sub.col_done = -1e18;
        out.row_trace.push_back({at, l.pch, l.bank_group, l.bank, l.subarray, l.row});
        break;
      }
      case CommandKind::PRE: {
        if (sub.open_row < 0)
          throw Error(ErrorKind::OpenPageViolation,
                      "command " + std::to_string(i) + ": PRE to a closed subarray");
        at = std::max({at, sub.act + t.tRAS, sub.col_done});
        c.issue_time = at;
        sub.open_row = -1;
        sub.pre = at;
        out.row_trace.push_back({at, l.pch, l.bank_group, l.bank, l.subarray, -1});
        break;
      }
      case CommandKind::OUTPUT_XFER: {
        at = std::max({at, bank.busy_until, pch.io_free});
        c.issue_time = at;
        pch.io_free = at + t.tCCD_S;
        break;
      }
      default: {
        if (sub.open_row != static_cast<std::int64_t>(l.row))
          throw Error(ErrorKind::OpenPageViolation,
                      "command " + std::to_string(i) + ": " + std::string(to_string(c.kind)) +
                          " targets row " + std::to_string(l.row) + " which is not open");
        at = std::max({at, sub.act + t.tRCD, bank.busy_until, grp.path_free,
                       pch.last_col + t.tCCD_S});
        c.issue_time = at;
        grp.path_free = at + detail::path_slots(c, t) * t.tCCD_L;
        bank.busy_until = at + detail::bank_hold(c, t);
        pch.last_col = at;
        sub.col_done = std::max(sub.col_done, completion_time(c, t));
        break;
      }
    }
    if (is_controller_command(c.kind)) cursor = c.issue_time;
  }
  out.commands = std::move(cmds);
  return out;
}

/// Checks every scheduling rule against the timestamps already present in
/// the stream. Written rule-by-rule over time-sorted views, independent of
/// the scheduler's incremental bookkeeping.
inline std::vector<TimingViolation> validate(const CommandStream& s, const TimingParams& t) {
  using detail::kEps;
  std::vector<TimingViolation> v;
  const auto& cs = s.commands;
  auto add = [&v](std::size_t i, std::string rule, std::string d) {
    v.push_back({i, std::move(rule), std::move(d)});
  };

  // In-order issue of controller commands.
  {
    Nanoseconds prev = -1e18;
    for (std::size_t i = 0; i < cs.size(); ++i) {
      if (!is_controller_command(cs[i].kind)) continue;
      if (cs[i].issue_time + kEps < prev) add(i, "order", "issued before a preceding command");
      prev = std::max(prev, cs[i].issue_time);
    }
  }

  // Open-page state and per-subarray row timing, replayed in list order.
  {
    struct Sub {
      std::int64_t row = -1;
      Nanoseconds act = 0, pre = -1e18, col_done = -1e18, write_done = -1e18;
    };
    std::unordered_map<std::uint64_t, Sub> subs;
    for (std::size_t i = 0; i < cs.size(); ++i) {
      const Command& c = cs[i];
      auto& sub = subs[detail::subarray_key(c.target)];
      if (c.kind == CommandKind::ACT) {
        if (sub.row >= 0) add(i, "open-page", "ACT to a subarray with an open row");
        if (c.issue_time + kEps < sub.pre + t.tRP()) add(i, "tRP", "ACT too soon after PRE");
        sub.row = c.target.row;
        sub.act = c.issue_time;
        sub.col_done = sub.write_done = -1e18;
      } else if (c.kind == CommandKind::PRE) {
        if (sub.row < 0) {
          add(i, "open-page", "PRE to a closed subarray");
          continue;
        }
        if (c.issue_time + kEps < sub.act + t.tRAS) add(i, "tRAS", "PRE before tRAS elapsed");
        if (c.issue_time + kEps < sub.col_done) add(i, "col-complete", "PRE before column access completed");
        if (c.issue_time + kEps < sub.write_done) add(i, "tWR", "PRE before write recovery");
        sub.row = -1;
        sub.pre = c.issue_time;
      } else if (is_column(c.kind)) {
        if (sub.row != static_cast<std::int64_t>(c.target.row)) {
          add(i, "open-page", "column command to a row that is not open");
          continue;
        }
        if (c.issue_time + kEps < sub.act + t.tRCD) add(i, "tRCD", "column command before tRCD");
        if (c.kind == CommandKind::WRITE)
          sub.write_done = std::max(sub.write_done, completion_time(c, t));
        else
          sub.col_done = std::max(sub.col_done, completion_time(c, t));
      }
    }
  }

  // ACT spacing: tRC per bank, tRRD and the activation window per pseudo-channel.
  {
    std::map<std::uint64_t, std::vector<std::pair<Nanoseconds, std::size_t>>> by_bank, by_pch;
    for (std::size_t i = 0; i < cs.size(); ++i) {
      if (cs[i].kind != CommandKind::ACT) continue;
      by_bank[detail::bank_key(cs[i].target)].emplace_back(cs[i].issue_time, i);
      by_pch[detail::pch_key(cs[i].target)].emplace_back(cs[i].issue_time, i);
    }
    for (auto& [k, acts] : by_bank) {
      std::sort(acts.begin(), acts.end());
      for (std::size_t j = 1; j < acts.size(); ++j)
        if (acts[j].first + kEps < acts[j - 1].first + t.tRC)
          add(acts[j].second, "tRC", "ACT to the same bank within tRC");
    }
    for (auto& [k, acts] : by_pch) {
      std::sort(acts.begin(), acts.end());
      for (std::size_t j = 1; j < acts.size(); ++j)
        if (acts[j].first + kEps < acts[j - 1].first + t.tRRD)
          add(acts[j].second, "tRRD", "ACT within tRRD in the same pseudo-channel");
      const std::size_t cap = t.acts_per_faw;
      for (std::size_t j = cap; j < acts.size(); ++j)
        if (acts[j].first + kEps < acts[j - cap].first + t.tFAW)
          add(acts[j].second, "tFAW", "more than " + std::to_string(cap) + " ACTs in a tFAW window");
    }
  }

  // Column spacing per bank group / pseudo-channel, and bank occupancy.
  {
    std::map<std::uint64_t, std::vector<std::size_t>> by_group, by_pch, by_bank;
    for (std::size_t i = 0; i < cs.size(); ++i) {
      if (!is_column(cs[i].kind)) continue;
      by_group[detail::group_key(cs[i].target)].push_back(i);
      by_pch[detail::pch_key(cs[i].target)].push_back(i);
      by_bank[detail::bank_key(cs[i].target)].push_back(i);
    }
    auto by_time = [&cs](std::size_t a, std::size_t b) {
      return cs[a].issue_time < cs[b].issue_time || (cs[a].issue_time == cs[b].issue_time && a < b);
    };
    for (auto& [k, idx] : by_group) {
      std::sort(idx.begin(), idx.end(), by_time);
      for (std::size_t j = 1; j < idx.size(); ++j) {
        const Command& p = cs[idx[j - 1]];
        if (cs[idx[j]].issue_time + kEps < p.issue_time + detail::path_slots(p, t) * t.tCCD_L)
          add(idx[j], "tCCD_L", "column command inside the bank group's column slot");
      }
    }
    for (auto& [k, idx] : by_pch) {
      std::sort(idx.begin(), idx.end(), by_time);
      for (std::size_t j = 1; j < idx.size(); ++j)
        if (cs[idx[j]].issue_time + kEps < cs[idx[j - 1]].issue_time + t.tCCD_S)
          add(idx[j], "tCCD_S", "column commands closer than tCCD_S");
    }
    for (auto& [k, idx] : by_bank) {
      std::sort(idx.begin(), idx.end(), by_time);
      for (std::size_t j = 1; j < idx.size(); ++j) {
        const Command& p = cs[idx[j - 1]];
        if (cs[idx[j]].issue_time + kEps < p.issue_time + detail::bank_hold(p, t))
          add(idx[j], "bank-busy", "column command while the bank is still busy");
      }
    }
  }

  // Output transfers: data ready in the issuing bank, one at a time per I/O bus.
  {
    std::unordered_map<std::uint64_t, Nanoseconds> bank_ready;
    std::map<std::uint64_t, std::vector<std::size_t>> io;
    for (std::size_t i = 0; i < cs.size(); ++i) {
      const Command& c = cs[i];
      if (is_column(c.kind)) {
        auto& r = bank_ready[detail::bank_key(c.target)];
        r = std::max(r, c.issue_time + detail::bank_hold(c, t));
      } else if (c.kind == CommandKind::OUTPUT_XFER) {
        auto it = bank_ready.find(detail::bank_key(c.target));
        if (it != bank_ready.end() && c.issue_time + kEps < it->second)
          add(i, "xfer-ready", "output transfer before the mask buffer was filled");
        io[detail::pch_key(c.target)].push_back(i);
      }
    }
    for (auto& [k, idx] : io) {
      std::sort(idx.begin(), idx.end(),
                [&cs](std::size_t a, std::size_t b) { return cs[a].issue_time < cs[b].issue_time; });
      for (std::size_t j = 1; j < idx.size(); ++j)
        if (cs[idx[j]].issue_time + kEps < cs[idx[j - 1]].issue_time + t.tCCD_S)
          add(idx[j], "io-bus", "overlapping output transfers");
    }
  }
  return v;
}

/// Last completion minus first issue; zero for an empty stream.
inline Nanoseconds elapsed_ns(const CommandStream& s, const TimingParams& t) {
  if (s.commands.empty()) return 0;
  Nanoseconds first = 1e300, last = -1e300;
  for (const auto& c : s.commands) {
    first = std::min(first, c.issue_time);
    last = std::max(last, completion_time(c, t));
  }
  return last - first;
}

struct CommandCounts {
  std::uint64_t act = 0;
  std::uint64_t pre = 0;
  std::uint64_t controller = 0;  // everything the memory controller issues
  std::uint64_t xfer = 0;
  std::map<CommandKind, std::uint64_t> by_kind;
};

inline CommandCounts count_commands(const CommandStream& s) {
  CommandCounts n;
  for (const auto& c : s.commands) {
    ++n.by_kind[c.kind];
    if (c.kind == CommandKind::ACT) ++n.act;
    if (c.kind == CommandKind::PRE) ++n.pre;
    if (c.kind == CommandKind::OUTPUT_XFER) ++n.xfer;
    if (is_controller_command(c.kind)) ++n.controller;
  }
  return n;
}

/// Concatenates streams without rescheduling (timestamps are kept).
inline CommandStream concat(const CommandStream& a, const CommandStream& b) {
  CommandStream r = a;
  r.commands.insert(r.commands.end(), b.commands.begin(), b.commands.end());
  r.row_trace.insert(r.row_trace.end(), b.row_trace.begin(), b.row_trace.end());
  return r;
}

// ---------------------------------------------------------------------------
// Trace text format, one command per line:
//   <t_ns> <KIND> <pch>.<bg>.<bank>.<sub>.<row>.<col> [icas=N] [mask=N] [bits=N] [host=1]
// The optional key=value fields default to the kind's standard shape.

inline std::string format_ns(Nanoseconds t) {
  std::ostringstream os;
  os.precision(12);
  os << t;
  return os.str();
}

inline void write_trace(std::ostream& os, const CommandStream& s) {
  for (const auto& c : s.commands) {
    const auto& l = c.target;
    os << format_ns(c.issue_time) << ' ' << to_string(c.kind) << ' ' << l.pch << '.'
       << l.bank_group << '.' << l.bank << '.' << l.subarray << '.' << l.row << '.'
       << l.byte_col;
    if (c.icas) os << " icas=" << c.icas;
    if (c.mask_cycles) os << " mask=" << c.mask_cycles;
    if (c.data_bits) os << " bits=" << *c.data_bits;
    if (c.to_host) os << " host=1";
    os << '\n';
  }
}

inline CommandStream read_trace(std::istream& is) {
  CommandStream s;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string t, kind, coord;
    if (!(ls >> t >> kind >> coord))
      throw Error(ErrorKind::ParseError, "line " + std::to_string(lineno) + ": expected 3 fields");
    Command c;
    auto k = parse_command_kind(kind);
    if (!k) throw Error(ErrorKind::ParseError, "line " + std::to_string(lineno) + ": unknown kind " + kind);
    c.kind = *k;
    try {
      c.issue_time = std::stod(t);
    } catch (const std::exception&) {
      throw Error(ErrorKind::ParseError, "line " + std::to_string(lineno) + ": bad time " + t);
    }
    std::array<std::uint32_t, 6> f{};
    std::istringstream cs(coord);
    std::string part;
    std::size_t n = 0;
    while (std::getline(cs, part, '.')) {
      if (n >= f.size() || part.empty() ||
          part.find_first_not_of("0123456789") != std::string::npos)
        throw Error(ErrorKind::ParseError, "line " + std::to_string(lineno) + ": bad coordinate " + coord);
      f[n++] = static_cast<std::uint32_t>(std::stoul(part));
    }
    if (n != f.size())
      throw Error(ErrorKind::ParseError, "line " + std::to_string(lineno) + ": bad coordinate " + coord);
    c.target = {f[0], f[1], f[2], f[3], f[4], 0, f[5]};
    switch (c.kind) {
      case CommandKind::INTERNAL_READ: c.icas = 2; break;
      case CommandKind::LUT_RETRIEVAL:
      case CommandKind::WRITE:
      case CommandKind::COUNT_UPDATE: c.icas = 1; break;
      default: break;
    }
    std::string kv;
    while (ls >> kv) {
      auto eq = kv.find('=');
      if (eq == std::string::npos)
        throw Error(ErrorKind::ParseError, "line " + std::to_string(lineno) + ": bad field " + kv);
      auto key = kv.substr(0, eq);
      auto val = static_cast<std::uint32_t>(std::stoul(kv.substr(eq + 1)));
      if (key == "icas") c.icas = val;
      else if (key == "mask") c.mask_cycles = val;
      else if (key == "bits") c.data_bits = val;
      else if (key == "host") c.to_host = val != 0;
      else throw Error(ErrorKind::ParseError, "line " + std::to_string(lineno) + ": unknown field " + key);
    }
    s.commands.push_back(c);
  }
  return s;
}

}  // namespace lama
