#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <set>

#include "cdkit/errors.hpp"
#include "cdkit/grid.hpp"

using namespace cdkit;
using grid::BlockLabelSet;
using grid::ChangeMask;
using grid::GridSpec;

namespace {
const GridSpec kGrid8{8, 8, 64, 64};
const GridSpec kGrid4{4, 4, 32, 32};

BlockLabelSet labels(const GridSpec& g, std::initializer_list<int> idx) {
  return BlockLabelSet{g, std::set<int>(idx)};
}
}  // namespace

TEST_CASE("grid spec validation") {
  CHECK_NOTHROW(kGrid8.validate());
  CHECK_THROWS_AS((GridSpec{0, 8, 64, 64}.validate()), ConfigError);
  CHECK_THROWS_AS((GridSpec{8, 8, 63, 64}.validate()), ConfigError);  // 63 % 8 != 0
  CHECK_THROWS_AS((GridSpec{8, 8, 64, 0}.validate()), ConfigError);
}

TEST_CASE("block labels from mask") {
  SUBCASE("all-zero mask gives the empty set") {
    auto m = ChangeMask::zeros(64, 64);
    CHECK(grid::block_labels_from_mask(m, kGrid8).changed.empty());
  }
  SUBCASE("all-one mask marks every block") {
    auto m = ChangeMask::zeros(64, 64);
    for (auto& v : m.values) v = 1;
    CHECK(grid::block_labels_from_mask(m, kGrid8).changed.size() == 64);
  }
  SUBCASE("one filled block at row 1 col 2 maps to index 10") {
    auto m = ChangeMask::zeros(64, 64);
    for (int y = 8; y < 16; ++y)
      for (int x = 16; x < 24; ++x) m.at(y, x) = 1;
    auto got = grid::block_labels_from_mask(m, kGrid8);
    CHECK(got.changed == std::set<int>{10});
  }
  SUBCASE("tau thresholds the changed fraction strictly") {
    auto m = ChangeMask::zeros(64, 64);
    // half of block 0 changed: fraction = 0.5
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 4; ++x) m.at(y, x) = 1;
    CHECK(grid::block_labels_from_mask(m, kGrid8, 0.49).changed == std::set<int>{0});
    CHECK(grid::block_labels_from_mask(m, kGrid8, 0.5).changed.empty());  // strict >
  }
  SUBCASE("single changed pixel flags exactly its block at tau=0") {
    auto m = ChangeMask::zeros(64, 64);
    m.at(63, 63) = 1;
    CHECK(grid::block_labels_from_mask(m, kGrid8).changed == std::set<int>{63});
  }
}

TEST_CASE("run serialization") {
  CHECK(grid::serialize_runs(labels(kGrid8, {0, 1, 2, 5, 7})) == "0-2,5,7");
  CHECK(grid::serialize_runs(labels(kGrid8, {})) == "");
  CHECK(grid::serialize_runs(labels(kGrid8, {63})) == "63");
  CHECK(grid::serialize_runs(labels(kGrid8, {3, 4})) == "3-4");
}

TEST_CASE("run parsing, tolerant mode") {
  CHECK(grid::parse_runs("0-2,5", kGrid8).changed == std::set<int>{0, 1, 2, 5});
  CHECK(grid::parse_runs("", kGrid8).changed.empty());
  CHECK(grid::parse_runs("none", kGrid8).changed.empty());
  CHECK(grid::parse_runs(" 5 , 0-2 ", kGrid8).changed == std::set<int>{0, 1, 2, 5});
  CHECK(grid::parse_runs("1,1,0-1", kGrid8).changed == std::set<int>{0, 1});

  SUBCASE("errors carry the byte offset") {
    try {
      grid::parse_runs("0-2,5-3", kGrid8);
      FAIL("expected ParseError");
    } catch (const grid::ParseError& e) {
      CHECK(e.offset() == 4);
    }
  }
  CHECK_THROWS_AS(grid::parse_runs("5-3", kGrid8), grid::ParseError);
  CHECK_THROWS_AS(grid::parse_runs("70", kGrid8), grid::ParseError);  // 70 >= 64
  CHECK_THROWS_AS(grid::parse_runs("-1", kGrid8), grid::ParseError);
  CHECK_THROWS_AS(grid::parse_runs("a", kGrid8), grid::ParseError);
  CHECK_THROWS_AS(grid::parse_runs("1,,2", kGrid8), grid::ParseError);
}

TEST_CASE("run parsing, strict mode") {
  CHECK(grid::parse_runs("0-2,5", kGrid8, true).changed == std::set<int>{0, 1, 2, 5});
  // tolerant-only inputs are rejected
  CHECK_THROWS_AS(grid::parse_runs("none", kGrid8, true), grid::ParseError);
  CHECK_THROWS_AS(grid::parse_runs("5,0-2", kGrid8, true), grid::ParseError);  // unsorted
  CHECK_THROWS_AS(grid::parse_runs("0,1", kGrid8, true), grid::ParseError);    // unmerged
  CHECK_THROWS_AS(grid::parse_runs(" 0-2", kGrid8, true), grid::ParseError);   // whitespace
  CHECK_THROWS_AS(grid::parse_runs("1,1", kGrid8, true), grid::ParseError);    // duplicate
}

TEST_CASE("roundtrip: parse(serialize(s)) = s on random sets") {
  std::mt19937_64 rng(20240817);
  for (int trial = 0; trial < 2000; ++trial) {
    std::set<int> s;
    int n = int(rng() % 65);
    for (int i = 0; i < n; ++i) s.insert(int(rng() % 64));
    BlockLabelSet in{kGrid8, s};
    std::string text = grid::serialize_runs(in);
    CHECK(grid::parse_runs(text, kGrid8, true).changed == s);
    CHECK(grid::parse_runs(text, kGrid8, false).changed == s);
  }
}

TEST_CASE("coarse mask rasterization") {
  SUBCASE("block 0 fills exactly the top-left 8x8 region") {
    auto m = grid::coarse_mask_from_blocks(labels(kGrid8, {0}));
    REQUIRE(m.h == 64);
    REQUIRE(m.w == 64);
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) CHECK(m.at(y, x) == ((y < 8 && x < 8) ? 1 : 0));
  }
  SUBCASE("empty set gives all zeros, full set all ones") {
    auto z = grid::coarse_mask_from_blocks(labels(kGrid8, {}));
    CHECK(std::count(z.values.begin(), z.values.end(), 1) == 0);
    std::set<int> all;
    for (int i = 0; i < 64; ++i) all.insert(i);
    auto o = grid::coarse_mask_from_blocks(BlockLabelSet{kGrid8, all});
    CHECK(std::count(o.values.begin(), o.values.end(), 1) == 64 * 64);
  }
  SUBCASE("mask -> labels -> mask is the identity for block-aligned masks") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 50; ++trial) {
      std::set<int> s;
      for (int i = 0; i < 16; ++i) s.insert(int(rng() % 16));
      BlockLabelSet in{kGrid4, s};
      auto mask = grid::coarse_mask_from_blocks(in);
      CHECK(grid::block_labels_from_mask(mask, kGrid4).changed == s);
    }
  }
}

TEST_CASE("structured tag extraction") {
  auto ok = grid::extract_structured("<think>x</think><answer>0-2</answer>");
  CHECK(ok.think == "x");
  CHECK(ok.answer == "0-2");

  auto ws = grid::extract_structured("<think>a\nb</think>\n<answer> none </answer>\n");
  CHECK(ws.think == "a\nb");

  CHECK_THROWS_AS(grid::extract_structured("<answer>0</answer>"), grid::FormatError);
  CHECK_THROWS_AS(grid::extract_structured("<think>x</think>"), grid::FormatError);
  CHECK_THROWS_AS(grid::extract_structured("<think>x</think><answer>0</answer><answer>1</answer>"),
                  grid::FormatError);
  CHECK_THROWS_AS(grid::extract_structured("<answer>0</answer><think>x</think>"),
                  grid::FormatError);
  CHECK_THROWS_AS(grid::extract_structured("<think>x<answer>0</answer></think>"),
                  grid::FormatError);
  CHECK_THROWS_AS(grid::extract_structured(""), grid::FormatError);
}
