#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "lama/lama.hpp"

using namespace lama;

namespace {

struct Row {
  std::uint32_t n, p, col_lsbs, mask_msbs, icas;
};
// Operand-width parameter table.
constexpr Row kTable[] = {{4, 16, 4, 0, 1}, {5, 16, 5, 0, 2}, {6, 8, 5, 1, 2}, {7, 4, 5, 2, 2}, {8, 2, 5, 3, 2}};

std::uint32_t saturating_sub(std::uint32_t a, std::uint32_t b) { return a > b ? a - b : 0; }

}  // namespace

TEST(LutLayout, MatchesParameterTable) {
  for (const auto& r : kTable) {
    const auto L = layout_for(r.n);
    EXPECT_EQ(L.p, r.p) << r.n;
    EXPECT_EQ(L.col_lsbs, r.col_lsbs) << r.n;
    EXPECT_EQ(L.mask_msb_count, r.mask_msbs) << r.n;
    EXPECT_EQ(L.icas_per_result, r.icas) << r.n;
    EXPECT_EQ(L.mats_per_lut * L.p, 16u);
    EXPECT_EQ(L.lut_rows, 1u << r.n);
    EXPECT_EQ(L.result_bits, r.n == 4 ? 8u : 16u);
  }
  EXPECT_THROW(layout_for(3), Error);
  EXPECT_THROW(layout_for(9), Error);
}

TEST(LutLayout, FourBit) {
  const auto img = build_layout(multiply, 4);
  EXPECT_EQ(img.rows.size(), 16u);
  EXPECT_EQ(img.layout.mats_per_lut, 1u);
  EXPECT_EQ(img.layout.replicas_per_subarray, 16u);
  for (std::uint32_t m = 0; m < 16; ++m) EXPECT_EQ(img.at(7, m, 9), 63);
}

TEST(LutLayout, EightBit) {
  const auto img = build_layout(multiply, 8);
  EXPECT_EQ(img.rows.size(), 256u);
  EXPECT_EQ(img.layout.mats_per_lut, 8u);
  EXPECT_EQ(img.layout.replicas_per_subarray, 2u);
  EXPECT_EQ(img.layout.p, 2u);
}

TEST(LutLayout, SixBitRowBytes) {
  const auto img = build_layout(multiply, 6);
  EXPECT_EQ(img.rows.size(), 64u);
  EXPECT_EQ(img.layout.mats_per_lut, 2u);
  EXPECT_EQ(img.layout.p, 8u);
  // 64 results x 2 bytes fill exactly the two 64-byte segments of a LUT group.
  EXPECT_EQ(64u * img.layout.result_bytes(), 2 * kSegmentBytes);
  const std::uint32_t a = 45;
  for (std::uint32_t g = 0; g < 8; ++g)
    for (std::uint32_t b = 0; b < 64; ++b) {
      const std::uint32_t mat = g * 2 + b / 32, col = (b % 32) * 2;
      const std::uint32_t v = img.at(a, mat, col) | (img.at(a, mat, col + 1) << 8);
      ASSERT_EQ(v, a * b);
    }
}

TEST(LutLayout, ResultTooWideRejected) {
  EXPECT_THROW(build_layout([](auto a, auto b) { return a + b + 300; }, 4), Error);
}

TEST(LutLayout, ExportWritesEveryRow) {
  const auto img = build_layout(multiply, 5);
  std::ostringstream os;
  export_lut_image(os, img);
  EXPECT_EQ(os.str().size(), 32u * 1024u);
}

TEST(ColumnAddress, EightBitExample) {
  const auto c = column_addresses(0b10110101, layout_for(8));
  EXPECT_EQ(c.ica1, 42u);
  EXPECT_EQ(c.ica2, 43u);
  EXPECT_EQ(c.mask_select, 0b101u);
}

TEST(ColumnAddress, FourBitZero) {
  const auto c = column_addresses(0, layout_for(4));
  EXPECT_EQ(c.ica1, 0u);
  EXPECT_FALSE(c.ica2);
}

TEST(ColumnAddress, SixBitExample) {
  const auto c = column_addresses(0b100001, layout_for(6));
  EXPECT_EQ(c.ica1, 2u);
  EXPECT_EQ(c.ica2, 3u);
  EXPECT_EQ(c.mask_select, 1u);
}

// Reading back the addressed bytes of the LUT image gives f(a, b).
TEST(ColumnAddress, ReadBackOracle) {
  for (std::uint32_t n = 5; n <= 8; ++n) {
    const auto img = build_layout(multiply, n);
    const auto& L = img.layout;
    for (std::uint32_t a = 0; a < L.lut_rows; a += 7)
      for (std::uint32_t b = 0; b < L.lut_rows; ++b) {
        const auto c = column_addresses(b, L);
        const std::uint32_t mat = c.mask_select;  // first LUT group
        const std::uint32_t v = img.at(a, mat, c.ica1) | (img.at(a, mat, *c.ica2) << 8);
        ASSERT_EQ(v, a * b) << n << " " << a << " " << b;
      }
  }
}

TEST(MaskSelect, BypassAtFullParallelism) {
  std::vector<std::uint8_t> in(16);
  for (int i = 0; i < 16; ++i) in[i] = std::uint8_t(100 + i);
  const std::vector<std::uint32_t> none;
  EXPECT_EQ(mask_select(in, none, layout_for(4)), in);
}

TEST(MaskSelect, TwoGroups) {
  std::vector<std::uint8_t> in(16);
  for (int i = 0; i < 16; ++i) in[i] = std::uint8_t(i);
  const std::vector<std::uint32_t> sel{0, 7};
  EXPECT_EQ(mask_select(in, sel, layout_for(8)), (std::vector<std::uint8_t>{0, 15}));
}

TEST(MaskSelect, EightGroupsOddBytes) {
  std::vector<std::uint8_t> in(16);
  for (int i = 0; i < 16; ++i) in[i] = std::uint8_t(i);
  const std::vector<std::uint32_t> sel(8, 1);
  EXPECT_EQ(mask_select(in, sel, layout_for(6)), (std::vector<std::uint8_t>{1, 3, 5, 7, 9, 11, 13, 15}));
}

TEST(MaskSelect, BadSelectsRejected) {
  std::vector<std::uint8_t> in(16);
  const std::vector<std::uint32_t> few{0};
  EXPECT_THROW(mask_select(in, few, layout_for(8)), Error);
  const std::vector<std::uint32_t> far{0, 8};
  EXPECT_THROW(mask_select(in, far, layout_for(8)), Error);
}

TEST(Buffers, TemporaryBufferCapacity) {
  TemporaryBuffer t;
  std::vector<std::uint8_t> atom(32, 1);
  t.load(atom);
  t.load(atom);
  EXPECT_EQ(t.size(), 64u);
  try {
    t.load(atom);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::BufferOverflow);
  }
  EXPECT_EQ(t.take(40).size(), 40u);
  EXPECT_EQ(t.size(), 24u);
}

TEST(Buffers, OutputBufferFlushesAtSixteen) {
  OutputBuffer o;
  std::vector<std::uint8_t> chunk(6, 9);
  std::vector<std::size_t> flushes;
  for (int i = 0; i < 5; ++i)
    for (auto f : o.push(chunk)) flushes.push_back(f);
  EXPECT_EQ(flushes, (std::vector<std::size_t>{16}));
  EXPECT_EQ(o.pending(), 14u);
  EXPECT_EQ(o.finish(), 14u);
  EXPECT_EQ(o.finish(), 0u);
  EXPECT_EQ(o.delivered().size(), 30u);
}

TEST(Batch, FourBitFullDomainCommandShape) {
  const auto img = build_layout(multiply, 4);
  CoalescedBatch batch{3, {}, 0};
  for (std::uint32_t i = 0; i < 256; ++i) batch.vector_b.push_back(i % 16);
  const auto r = execute_batch(batch, img, {}, {});
  for (std::size_t i = 0; i < 256; ++i) ASSERT_EQ(r.results[i], 3 * batch.vector_b[i]);
  auto n = count_commands(r.stream);
  EXPECT_EQ(n.act, 2u);
  EXPECT_EQ(n.pre, 2u);
  EXPECT_EQ(n.by_kind[CommandKind::INTERNAL_READ], 8u);
  EXPECT_EQ(n.by_kind[CommandKind::LUT_RETRIEVAL], 16u);
  EXPECT_EQ(n.xfer, 0u);
  EXPECT_EQ(n.controller, 28u);
  EXPECT_TRUE(validate(r.stream, {}).empty());
  for (const auto& c : r.stream.commands) EXPECT_EQ(c.mask_cycles, 0u);
}

TEST(Batch, StepOrder) {
  const auto img = build_layout(multiply, 4);
  const auto r = execute_batch({5, std::vector<std::uint32_t>(64, 2), 3}, img, {}, {});
  const auto& c = r.stream.commands;
  ASSERT_GE(c.size(), 4u);
  EXPECT_EQ(c[0].kind, CommandKind::ACT);
  EXPECT_EQ(c[0].target.subarray, kSourceSubarray);
  EXPECT_EQ(c[0].target.row, 3u);
  EXPECT_EQ(c[1].kind, CommandKind::INTERNAL_READ);
  EXPECT_EQ(c[2].kind, CommandKind::ACT);
  EXPECT_EQ(c[2].target.subarray, kComputeSubarray);
  EXPECT_EQ(c[2].target.row, 5u);
  EXPECT_EQ(c.back().kind, CommandKind::PRE);
}

TEST(Batch, ZeroScalar) {
  const auto img = build_layout(multiply, 7);
  std::vector<std::uint32_t> b(100);
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = std::uint32_t(i);
  const auto r = execute_batch({0, b, 0}, img, {}, {});
  for (auto v : r.results) EXPECT_EQ(v, 0u);
}

TEST(Batch, EightBitMaxOperands) {
  const auto img = build_layout(multiply, 8);
  EXPECT_EQ(column_addresses(255, img.layout).mask_select, 0b111u);
  const auto r = execute_batch({255, {255}, 0}, img, {}, {});
  ASSERT_EQ(r.results.size(), 1u);
  EXPECT_EQ(r.results[0], 65025u);
}

TEST(Batch, MaskedRetrievalsCarryMaskCycles) {
  for (std::uint32_t n = 6; n <= 8; ++n) {
    const auto img = build_layout(multiply, n);
    const auto r = execute_batch({1, std::vector<std::uint32_t>(50, 1), 0}, img, {}, {});
    for (const auto& c : r.stream.commands)
      if (c.kind == CommandKind::LUT_RETRIEVAL) {
        EXPECT_EQ(c.mask_cycles, img.layout.p);
        EXPECT_FALSE(c.to_host);
      }
    // Every result byte leaves through 16-byte flushes plus one partial.
    std::uint64_t bytes = 0;
    for (const auto& c : r.stream.commands)
      if (c.kind == CommandKind::OUTPUT_XFER) bytes += *c.data_bits / 8;
    const std::uint64_t chunks = (50 + img.layout.p - 1) / img.layout.p;
    EXPECT_EQ(bytes, chunks * img.layout.p * 2);
  }
}

TEST(Batch, OutOfDomainRejected) {
  const auto img = build_layout(multiply, 5);
  EXPECT_THROW(execute_batch({32, {1}, 0}, img, {}, {}), Error);
  EXPECT_THROW(execute_batch({1, {1, 40}, 0}, img, {}, {}), Error);
  EXPECT_THROW(execute_batch({1, {1}, 512}, img, {}, {}), Error);
}

TEST(Batch, EmptyVector) {
  const auto img = build_layout(multiply, 4);
  const auto r = execute_batch({1, {}, 0}, img, {}, {});
  EXPECT_TRUE(r.results.empty());
  EXPECT_TRUE(r.stream.empty());
}

// Every operand pair at every width, each scalar as one coalesced batch.
class Exhaustive : public ::testing::TestWithParam<std::uint32_t> {};

TEST_P(Exhaustive, MatchesHostMultiply) {
  const std::uint32_t n = GetParam();
  const auto img = build_layout(multiply, n);
  const TimingParams t;
  std::vector<std::uint32_t> all(1u << n);
  for (std::uint32_t b = 0; b < all.size(); ++b) all[b] = b;
  for (std::uint32_t a = 0; a < all.size(); ++a) {
    const auto prog = emit_batch({a, all, 0}, img, {}, {});
    ASSERT_EQ(prog.results.size(), all.size());
    for (std::uint32_t b = 0; b < all.size(); ++b) ASSERT_EQ(prog.results[b], a * b) << a << "*" << b;
  }
  const auto r = execute_batch({all.back(), all, 0}, img, {}, t);
  EXPECT_TRUE(validate(r.stream, t).empty());
}

INSTANTIATE_TEST_SUITE_P(Widths, Exhaustive, ::testing::Values(4u, 5u, 6u, 7u, 8u));

TEST(Batch, OtherFunctions) {
  const BinaryFn add = [](std::uint32_t a, std::uint32_t b) { return a + b; };
  const BinaryFn sub = saturating_sub;
  for (std::uint32_t n : {4u, 6u, 8u}) {
    for (const auto* f : {&add, &sub}) {
      const auto img = build_layout(*f, n);
      std::vector<std::uint32_t> all(1u << n);
      for (std::uint32_t b = 0; b < all.size(); ++b) all[b] = b;
      for (std::uint32_t a = 0; a < all.size(); a += 3) {
        const auto prog = emit_batch({a, all, 0}, img, {}, {});
        for (std::uint32_t b = 0; b < all.size(); ++b) ASSERT_EQ(prog.results[b], (*f)(a, b));
      }
    }
  }
  const auto img = build_layout(add, 4);
  const auto prog = emit_batch({15, {0, 15, 7}, 0}, img, {}, {});
  EXPECT_EQ(prog.results, (std::vector<std::uint32_t>{15, 30, 22}));
}

TEST(Bulk, ActLawIndependentOfWidth) {
  const TimingParams t;
  std::mt19937_64 rng(8);
  for (std::uint32_t n = 4; n <= 8; ++n) {
    const auto img = build_layout(multiply, n);
    for (std::size_t m : {1ul, 256ul, 1024ul, 1025ul, 3000ul}) {
      for (std::uint32_t par : {1u, 4u}) {
        std::vector<std::uint32_t> b(m);
        for (auto& x : b) x = std::uint32_t(rng() % (1u << n));
        const auto r = execute_bulk(1, b, img, {}, t, par);
        std::uint64_t want = 0;
        const std::size_t per = (m + par - 1) / par;
        for (std::uint32_t i = 0; i < par; ++i) {
          const std::size_t lo = std::min(m, i * per), hi = std::min(m, lo + per);
          want += 2 * ((hi - lo + 1023) / 1024);
        }
        EXPECT_EQ(count_commands(r.stream).act, want) << n << " " << m << " " << par;
        EXPECT_TRUE(validate(r.stream, t).empty());
        for (std::size_t i = 0; i < m; ++i) ASSERT_EQ(r.results[i], b[i]);
      }
    }
  }
}

TEST(Bulk, ReferenceWorkloadCounts) {
  for (std::uint32_t n : {4u, 8u}) {
    const auto run = reference_lama_run(n);
    const auto c = count_commands(run.stream);
    EXPECT_EQ(c.act, 8u);
    if (n == 4) {
      EXPECT_EQ(c.controller, 112u);
    }
    EXPECT_EQ(run.active_banks, 4u);
  }
}

// The 8-bit command mix is frozen: per bank, 8 source reads, 128 two-ICA
// retrievals and 64 result flushes over the I/O bus.
TEST(Bulk, EightBitTaxonomyFrozen) {
  const auto run = reference_lama_run(8);
  auto c = count_commands(run.stream);
  EXPECT_EQ(c.by_kind[CommandKind::ACT], 8u);
  EXPECT_EQ(c.by_kind[CommandKind::PRE], 8u);
  EXPECT_EQ(c.by_kind[CommandKind::INTERNAL_READ], 32u);
  EXPECT_EQ(c.by_kind[CommandKind::LUT_RETRIEVAL], 512u);
  EXPECT_EQ(c.by_kind[CommandKind::OUTPUT_XFER], 128u);
  EXPECT_EQ(c.controller, 560u);
}

TEST(Bulk, ParallelismBeyondStackRejected) {
  const auto img = build_layout(multiply, 4);
  EXPECT_THROW(execute_bulk(1, std::vector<std::uint32_t>(200, 1), img, {}, {}, 129), Error);
  EXPECT_THROW(execute_bulk(1, {1}, img, {}, {}, 0), Error);
}
