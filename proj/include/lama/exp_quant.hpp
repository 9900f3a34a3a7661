#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lama/error.hpp"

namespace lama {

/// Value model S * (alpha * base^int + beta) with a signed n-bit exponent.
struct TeqParams {
  double alpha = 1.0;
  double beta = 0.0;
  double base = 2.0;
  std::uint32_t n = 4;

  int min_exp() const { return -(1 << (n - 1)); }
  int max_exp() const { return (1 << (n - 1)) - 1; }
  double magnitude(int e) const { return alpha * std::pow(base, e) + beta; }

  std::vector<std::string> violations() const {
    std::vector<std::string> v;
    if (!(alpha > 0) || !std::isfinite(alpha)) v.emplace_back("alpha must be positive");
    if (!(beta >= 0) || !std::isfinite(beta)) v.emplace_back("beta must be non-negative");
    if (!(base > 1) || !std::isfinite(base)) v.emplace_back("base must exceed 1");
    if (n < 3 || n > 7) v.emplace_back("exponent width must be 3..7 bits");
    return v;
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TeqParams, alpha, beta, base, n)

inline void require_valid(const TeqParams& p) {
  auto v = p.violations();
  if (!v.empty()) throw Error(ErrorKind::InvalidArgument, v.front());
}

struct TeqTensor {
  std::vector<std::int8_t> signs;      // +1 / -1
  std::vector<std::int8_t> exponents;
  std::vector<std::uint8_t> zero_flags;
  TeqParams params;

  std::size_t size() const { return signs.size(); }
  bool is_zero(std::size_t i) const { return zero_flags[i] != 0; }
};

/// In-range exponent whose magnitude is nearest to |v|; ties go to the
/// smaller exponent.
inline int nearest_exponent(double mag, const TeqParams& p) {
  const int lo = p.min_exp(), hi = p.max_exp();
  if (mag <= p.beta + p.alpha * std::pow(p.base, lo)) return lo;
  const double x = std::log((mag - p.beta) / p.alpha) / std::log(p.base);
  const int k0 = static_cast<int>(std::floor(x));
  int best = lo;
  double best_err = INFINITY;
  const int first = std::clamp(k0 - 1, lo, hi), last = std::clamp(k0 + 2, lo, hi);
  for (int k = first; k <= last; ++k) {
    const double err = std::abs(p.magnitude(k) - mag);
    if (err < best_err) {
      best_err = err;
      best = k;
    }
  }
  return best;
}

inline TeqTensor encode(const std::vector<double>& values, const TeqParams& p) {
  require_valid(p);
  TeqTensor t;
  t.params = p;
  t.signs.resize(values.size());
  t.exponents.resize(values.size());
  t.zero_flags.resize(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = values[i];
    if (!std::isfinite(v)) throw Error(ErrorKind::InvalidArgument, "non-finite value");
    t.signs[i] = v < 0 ? -1 : 1;
    if (v == 0) {
      t.zero_flags[i] = 1;
      t.exponents[i] = 0;
      continue;
    }
    t.exponents[i] = static_cast<std::int8_t>(nearest_exponent(std::abs(v), p));
  }
  return t;
}

inline double decode_at(const TeqTensor& t, std::size_t i) {
  if (t.is_zero(i)) return 0.0;
  return t.signs[i] * t.params.magnitude(t.exponents[i]);
}

inline std::vector<double> decode(const TeqTensor& t) {
  std::vector<double> out(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = decode_at(t, i);
  return out;
}

inline double quantization_mse(const std::vector<double>& values, const TeqParams& p) {
  if (values.empty()) return 0;
  long double acc = 0;
  for (double v : values) {
    if (v == 0) continue;
    const double d = std::abs(v) - p.magnitude(nearest_exponent(std::abs(v), p));
    acc += static_cast<long double>(d) * d;
  }
  return static_cast<double>(acc / values.size());
}

namespace detail {

// Equal-error candidates are ordered by how far the scale is from 1.
inline bool better_fit(double mse, const TeqParams& p, double best_mse, const TeqParams& best) {
  const double tol = 1e-12 * std::max(best_mse, 1e-300);
  if (mse < best_mse - tol) return true;
  if (mse > best_mse + tol) return false;
  return std::abs(std::log(p.alpha)) < std::abs(std::log(best.alpha)) - 1e-12;
}

inline std::vector<double> calibration_sample(const std::vector<double>& values) {
  constexpr std::size_t kMax = 4096;
  if (values.size() <= kMax) return values;
  std::vector<double> s;
  s.reserve(kMax);
  const double stride = double(values.size()) / kMax;
  for (std::size_t i = 0; i < kMax; ++i) s.push_back(values[std::size_t(i * stride)]);
  return s;
}

}  // namespace detail

/// Deterministic fit of (alpha, beta, base) for an n-bit exponent.
///
/// A grid places the largest magnitude on every representable exponent for
/// each candidate base and offset, then coordinate descent polishes the best
/// point. The search for n starts from the result for n - 1, whose codebook
/// is a subset, so the error never grows with n.
inline TeqParams calibrate(const std::vector<double>& values, std::uint32_t n,
                           std::optional<double> fixed_base = std::nullopt) {
  if (n < 3 || n > 7) throw Error(ErrorKind::UnsupportedPrecision, "exponent width must be 3..7 bits");
  if (fixed_base && !(*fixed_base > 1)) throw Error(ErrorKind::InvalidArgument, "base must exceed 1");
  double max_abs = 0, min_abs = INFINITY;
  for (double v : values) {
    if (!std::isfinite(v)) throw Error(ErrorKind::InvalidArgument, "non-finite value");
    if (v != 0) {
      max_abs = std::max(max_abs, std::abs(v));
      min_abs = std::min(min_abs, std::abs(v));
    }
  }
  if (max_abs == 0) throw Error(ErrorKind::DegenerateInput, "cannot calibrate an empty or all-zero tensor");

  const auto sample = detail::calibration_sample(values);
  TeqParams best{max_abs, 0.0, fixed_base.value_or(2.0), n};
  double best_mse = INFINITY;
  auto consider = [&](const TeqParams& p) {
    if (!p.violations().empty()) return;
    const double mse = quantization_mse(sample, p);
    if (detail::better_fit(mse, p, best_mse, best)) {
      best = p;
      best_mse = mse;
    }
  };

  if (n > 3) {
    TeqParams prev = calibrate(values, n - 1, fixed_base);
    prev.n = n;
    consider(prev);
  }

  std::vector<double> bases;
  if (fixed_base) {
    bases = {*fixed_base};
  } else {
    const double centre = std::ldexp(1.0, 4 - int(n));  // log2 of the central base
    for (double f : {0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0}) bases.push_back(std::exp2(centre * f));
  }
  const double betas[] = {0.0, 0.25 * min_abs, 0.5 * min_abs, 0.9 * min_abs};
  TeqParams probe{1, 0, 2, n};
  for (double b : bases) {
    probe.base = b;
    for (double beta : betas) {
      probe.beta = beta;
      if (beta >= max_abs) continue;
      for (int k = probe.min_exp(); k <= probe.max_exp(); ++k) {
        probe.alpha = (max_abs - beta) / std::pow(b, k);
        consider(probe);
      }
    }
  }

  // Coordinate descent with shrinking multiplicative steps.
  double step = 0.25;
  for (int round = 0; round < 40 && step > 1e-6; ++round) {
    bool moved = false;
    for (int coord = 0; coord < 3; ++coord) {
      if (coord == 2 && fixed_base) continue;
      for (double dir : {1.0, -1.0}) {
        TeqParams p = best;
        const double f = std::exp(dir * step);
        if (coord == 0) p.alpha *= f;
        if (coord == 1) p.beta = best.beta > 0 ? best.beta * f : (dir > 0 ? step * min_abs : 0.0);
        if (coord == 2) p.base = 1 + (best.base - 1) * f;
        const double before = best_mse;
        consider(p);
        moved |= best_mse < before;
      }
    }
    if (!moved) step *= 0.5;
  }
  return best;
}

// ---------------------------------------------------------------------------
// Counting dot product

struct TermAccumulators {
  std::uint32_t n = 4;
  std::vector<std::int64_t> t1;  // index int_A + int_W + 2^n
  std::vector<std::int64_t> t2;  // index int_W + 2^(n-1)
  std::vector<std::int64_t> t3;  // index int_A + 2^(n-1)
  std::int64_t t4 = 0;

  explicit TermAccumulators(std::uint32_t bits = 4)
      : n(bits), t1(std::size_t{2} << bits, 0), t2(std::size_t{1} << bits, 0),
        t3(std::size_t{1} << bits, 0) {}

  int t1_offset() const { return 1 << n; }
  int t23_offset() const { return 1 << (n - 1); }

  std::size_t nonzero_bins() const {
    auto nz = [](const std::vector<std::int64_t>& v) {
      return std::size_t(std::count_if(v.begin(), v.end(), [](auto x) { return x != 0; }));
    };
    return nz(t1) + nz(t2) + nz(t3) + (t4 != 0);
  }

  bool operator==(const TermAccumulators&) const = default;
};

inline void require_same_length(const TeqTensor& a, const TeqTensor& w) {
  if (a.size() != w.size())
    throw Error(ErrorKind::LengthMismatch,
                "tensor lengths differ: " + std::to_string(a.size()) + " vs " + std::to_string(w.size()));
}

inline TermAccumulators dot_terms_by_counting(const TeqTensor& a, const TeqTensor& w) {
  require_same_length(a, w);
  if (a.params.n != w.params.n)
    throw Error(ErrorKind::InvalidArgument, "activation and weight exponents must share a bitwidth");
  TermAccumulators acc(a.params.n);
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.is_zero(i) || w.is_zero(i)) continue;
    const int s = a.signs[i] * w.signs[i];
    acc.t1[std::size_t(a.exponents[i] + w.exponents[i] + acc.t1_offset())] += s;
    acc.t2[std::size_t(w.exponents[i] + acc.t23_offset())] += s;
    acc.t3[std::size_t(a.exponents[i] + acc.t23_offset())] += s;
    acc.t4 += s;
  }
  return acc;
}

inline double combine_terms(const TermAccumulators& acc, const TeqParams& pa, const TeqParams& pw) {
  if (pa.base != pw.base)
    throw Error(ErrorKind::BaseMismatch, "activation and weight bases differ");
  const long double b = pa.base;
  long double s1 = 0, s2 = 0, s3 = 0;
  for (std::size_t k = 0; k < acc.t1.size(); ++k)
    if (acc.t1[k]) s1 += acc.t1[k] * std::pow(b, int(k) - acc.t1_offset());
  for (std::size_t j = 0; j < acc.t2.size(); ++j)
    if (acc.t2[j]) s2 += acc.t2[j] * std::pow(b, int(j) - acc.t23_offset());
  for (std::size_t i = 0; i < acc.t3.size(); ++i)
    if (acc.t3[i]) s3 += acc.t3[i] * std::pow(b, int(i) - acc.t23_offset());
  const long double r = (long double)pa.alpha * pw.alpha * s1 + (long double)pw.alpha * pa.beta * s2 +
                        (long double)pa.alpha * pw.beta * s3 +
                        (long double)pa.beta * pw.beta * acc.t4;
  return static_cast<double>(r);
}

inline double reference_dot(const TeqTensor& a, const TeqTensor& w) {
  require_same_length(a, w);
  long double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    s += static_cast<long double>(decode_at(a, i)) * decode_at(w, i);
  return static_cast<double>(s);
}

// ---------------------------------------------------------------------------
// Serialization: one JSON header line, then one byte per element
// (bit 7 = negative sign, bits 0..6 = two's-complement exponent).

inline std::uint8_t pack_code(std::int8_t sign, std::int8_t exponent) {
  return std::uint8_t((sign < 0 ? 0x80 : 0) | (std::uint8_t(exponent) & 0x7F));
}

inline std::pair<std::int8_t, std::int8_t> unpack_code(std::uint8_t code) {
  std::int8_t e = std::int8_t(code & 0x7F);
  if (e & 0x40) e = std::int8_t(e - 0x80);
  return {std::int8_t(code & 0x80 ? -1 : 1), e};
}

inline void write_teq(std::ostream& os, const TeqTensor& t) {
  nlohmann::json h;
  h["params"] = t.params;
  h["count"] = t.size();
  std::vector<std::size_t> zeros;
  for (std::size_t i = 0; i < t.size(); ++i)
    if (t.is_zero(i)) zeros.push_back(i);
  h["zeros"] = zeros;
  os << h.dump() << '\n';
  for (std::size_t i = 0; i < t.size(); ++i) os.put(char(pack_code(t.signs[i], t.exponents[i])));
}

inline TeqTensor read_teq(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw Error(ErrorKind::ParseError, "missing tensor header");
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseError, std::string("bad tensor header: ") + e.what());
  }
  TeqTensor t;
  t.params = h.at("params").get<TeqParams>();
  require_valid(t.params);
  const auto count = h.at("count").get<std::size_t>();
  t.signs.resize(count);
  t.exponents.resize(count);
  t.zero_flags.assign(count, 0);
  for (std::size_t i = 0; i < count; ++i) {
    const int c = is.get();
    if (c == EOF) throw Error(ErrorKind::ParseError, "tensor payload truncated");
    std::tie(t.signs[i], t.exponents[i]) = unpack_code(std::uint8_t(c));
    if (t.exponents[i] < t.params.min_exp() || t.exponents[i] > t.params.max_exp())
      throw Error(ErrorKind::ParseError, "exponent outside the declared width");
  }
  for (auto z : h.at("zeros").get<std::vector<std::size_t>>()) {
    if (z >= count) throw Error(ErrorKind::ParseError, "zero index out of range");
    t.zero_flags[z] = 1;
  }
  return t;
}

}  // namespace lama
