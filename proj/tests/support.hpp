#pragma once

// Generators and oracles shared by the unit tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <tuple>
#include <vector>

#include "lama/lama.hpp"

namespace lama::test_support {

/// Random command list that respects open-page state, over a small grid of
/// 2 pch x 2 groups x 2 banks x 3 subarrays.
inline std::vector<Command> random_legal_commands(std::mt19937_64& rng, std::size_t len) {
  using Key = std::tuple<std::uint32_t, std::uint32_t, std::uint32_t, std::uint32_t>;
  std::map<Key, std::int64_t> open;
  std::vector<Command> out;
  auto pick = [&rng](std::uint32_t n) { return std::uint32_t(rng() % n); };
  while (out.size() < len) {
    Location l{pick(2), pick(2), pick(2), pick(3), 0, 0, pick(64)};
    const Key k{l.pch, l.bank_group, l.bank, l.subarray};
    auto it = open.find(k);
    const bool is_open = it != open.end() && it->second >= 0;
    const std::uint32_t roll = pick(10);
    if (!is_open) {
      l.row = pick(512);
      open[k] = l.row;
      out.push_back(Command::act(l));
      continue;
    }
    l.row = std::uint32_t(it->second);
    if (roll < 2) {
      it->second = -1;
      out.push_back(Command::pre(l));
    } else if (roll < 4) {
      out.push_back(Command::internal_read(l, 1 + pick(2)));
    } else if (roll < 6) {
      const std::uint32_t p = 1u << pick(5);
      out.push_back(Command::lut_retrieval(l, 1 + pick(2), p < 16 ? p : 0, p == 16));
    } else if (roll < 7) {
      out.push_back(Command::write(l, 1));
    } else if (roll < 8) {
      out.push_back(Command::count_update(l));
    } else {
      out.push_back(Command::output_xfer(l, 1 + pick(16)));
    }
  }
  return out;
}

/// Moves one command of a valid schedule so that at least one rule breaks.
/// Returns false when the stream offers no target for the chosen mutation.
inline bool mutate(CommandStream& s, std::mt19937_64& rng, const TimingParams& t, int kind) {
  auto& cs = s.commands;
  std::vector<std::size_t> idx;
  auto same_sub = [](const Location& a, const Location& b) {
    return a.pch == b.pch && a.bank_group == b.bank_group && a.bank == b.bank && a.subarray == b.subarray;
  };
  auto same_bank = [](const Location& a, const Location& b) {
    return a.pch == b.pch && a.bank_group == b.bank_group && a.bank == b.bank;
  };
  switch (kind) {
    case 0: {  // column command pulled inside tRCD of its activation
      for (std::size_t i = 0; i < cs.size(); ++i)
        if (is_column(cs[i].kind)) idx.push_back(i);
      if (idx.empty()) return false;
      const std::size_t i = idx[rng() % idx.size()];
      for (std::size_t j = i; j-- > 0;)
        if (cs[j].kind == CommandKind::ACT && same_sub(cs[j].target, cs[i].target)) {
          cs[i].issue_time = cs[j].issue_time + t.tRCD / 2;
          return true;
        }
      return false;
    }
    case 1: {  // second ACT to a bank inside tRC
      for (std::size_t i = 0; i < cs.size(); ++i)
        if (cs[i].kind == CommandKind::ACT)
          for (std::size_t j = i; j-- > 0;)
            if (cs[j].kind == CommandKind::ACT && same_bank(cs[j].target, cs[i].target)) {
              idx.push_back(i);
              break;
            }
      if (idx.empty()) return false;
      const std::size_t i = idx[rng() % idx.size()];
      for (std::size_t j = i; j-- > 0;)
        if (cs[j].kind == CommandKind::ACT && same_bank(cs[j].target, cs[i].target)) {
          cs[i].issue_time = cs[j].issue_time + t.tRC / 2;
          return true;
        }
      return false;
    }
    case 2: {  // PRE before tRAS
      for (std::size_t i = 0; i < cs.size(); ++i)
        if (cs[i].kind == CommandKind::PRE) idx.push_back(i);
      if (idx.empty()) return false;
      const std::size_t i = idx[rng() % idx.size()];
      for (std::size_t j = i; j-- > 0;)
        if (cs[j].kind == CommandKind::ACT && same_sub(cs[j].target, cs[i].target)) {
          cs[i].issue_time = cs[j].issue_time + t.tRAS / 2;
          return true;
        }
      return false;
    }
    default: {  // drop an ACT that has later column traffic
      for (std::size_t i = 0; i < cs.size(); ++i)
        if (cs[i].kind == CommandKind::ACT)
          for (std::size_t j = i + 1; j < cs.size(); ++j)
            if (same_sub(cs[j].target, cs[i].target)) {
              if (is_column(cs[j].kind) || cs[j].kind == CommandKind::PRE) idx.push_back(i);
              break;
            }
      if (idx.empty()) return false;
      cs.erase(cs.begin() + std::ptrdiff_t(idx[rng() % idx.size()]));
      return true;
    }
  }
}

/// Largest number of ACTs of one pseudo-channel inside any window of length
/// `w` (half-open), by brute force over window starts.
inline std::size_t max_acts_in_window(const CommandStream& s, Nanoseconds w) {
  std::map<std::uint32_t, std::vector<Nanoseconds>> acts;
  for (const auto& c : s.commands)
    if (c.kind == CommandKind::ACT) acts[c.target.pch].push_back(c.issue_time);
  std::size_t best = 0;
  for (const auto& [pch, ts] : acts)
    for (Nanoseconds start : ts) {
      std::size_t n = 0;
      for (Nanoseconds x : ts) n += x >= start - 1e-9 && x < start + w - 1e-9;
      best = std::max(best, n);
    }
  return best;
}

/// Number of ACTs whose issue was pushed past every other rule by the
/// activation-window limit: re-scheduling with an unlimited window makes
/// them earlier.
inline std::size_t faw_delayed_acts(const std::vector<Command>& cmds, const TimingParams& t) {
  TimingParams loose = t;
  loose.acts_per_faw = 1u << 30;
  const auto a = schedule(cmds, t), b = schedule(cmds, loose);
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    n += a.commands[i].kind == CommandKind::ACT && a.commands[i].issue_time > b.commands[i].issue_time + 1e-9;
  return n;
}

inline double relative_error(double got, double want) {
  const double d = std::abs(got - want);
  return want == 0 ? d : d / std::abs(want);
}

}  // namespace lama::test_support
