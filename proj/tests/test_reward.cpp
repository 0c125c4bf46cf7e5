#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "cdkit/errors.hpp"
#include "cdkit/reward.hpp"
#include "oracles.hpp"

using namespace cdkit;
using doctest::Approx;

namespace {
const grid::GridSpec kGrid8{8, 8, 64, 64};

std::string wrap(const std::string& answer) {
  return "<think>checked blocks</think><answer>" + answer + "</answer>";
}

std::set<int> random_set(std::mt19937_64& rng, int max_size) {
  std::set<int> s;
  int n = int(rng() % (max_size + 1));
  for (int i = 0; i < n; ++i) s.insert(int(rng() % 64));
  return s;
}
}  // namespace

TEST_CASE("format reward gates on tag structure and parseability") {
  CHECK(reward::format_reward(wrap("0-2,5"), kGrid8) == 1.0);
  CHECK(reward::format_reward(wrap("none"), kGrid8) == 1.0);
  CHECK(reward::format_reward("<answer>0</answer>", kGrid8) == 0.0);      // missing think
  CHECK(reward::format_reward(wrap("9-3"), kGrid8) == 0.0);               // reversed range
  CHECK(reward::format_reward(wrap("64"), kGrid8) == 0.0);                // out of range
  CHECK(reward::format_reward("", kGrid8) == 0.0);
  CHECK(reward::format_reward(wrap("0") + "<answer>1</answer>", kGrid8) == 0.0);
}

TEST_CASE("block precision/recall hand cases") {
  auto [p1, r1] = reward::block_precision_recall({0, 1}, {1, 2});
  CHECK(p1 == Approx(0.5).epsilon(1e-15));
  CHECK(r1 == Approx(0.5).epsilon(1e-15));

  auto [p2, r2] = reward::block_precision_recall({3, 4}, {3, 4});
  CHECK(p2 == 1.0);
  CHECK(r2 == 1.0);

  SUBCASE("empty-set conventions") {
    auto [p3, r3] = reward::block_precision_recall({}, {});
    CHECK(p3 == 1.0);
    CHECK(r3 == 1.0);
    auto [p4, r4] = reward::block_precision_recall({}, {1});
    CHECK(p4 == 0.0);  // empty prediction, nonempty target
    CHECK(r4 == 0.0);
    auto [p5, r5] = reward::block_precision_recall({1}, {});
    CHECK(p5 == 0.0);
    CHECK(r5 == 1.0);  // empty target: nothing to miss
  }
}

TEST_CASE("accuracy term is the beta-weighted mix") {
  reward::RewardConfig cfg;  // beta = 0.7
  CHECK(reward::accuracy_reward(0.5, 0.5, cfg) == Approx(0.5).epsilon(1e-15));
  CHECK(reward::accuracy_reward(1.0, 1.0, cfg) == 1.0);
  CHECK(reward::accuracy_reward(0.0, 1.0, cfg) == Approx(0.7).epsilon(1e-15));
  CHECK(reward::accuracy_reward(1.0, 0.0, cfg) == Approx(0.3).epsilon(1e-15));
}

TEST_CASE("recall bonus tiers") {
  reward::RewardConfig cfg;  // tiers (0.7,0.7) (0.9,0.9) (1.0,1.0)
  CHECK(reward::recall_bonus(0.5, cfg) == 0.0);
  CHECK(reward::recall_bonus(0.7, cfg) == 0.0);   // lower tiers are strict
  CHECK(reward::recall_bonus(0.75, cfg) == 0.7);
  CHECK(reward::recall_bonus(0.9, cfg) == 0.7);   // still strict
  CHECK(reward::recall_bonus(0.95, cfg) == 0.9);
  CHECK(reward::recall_bonus(1.0, cfg) == 1.0);   // top tier is inclusive
}

TEST_CASE("total reward composition") {
  reward::RewardConfig cfg;
  grid::BlockLabelSet gt{kGrid8, {0, 1, 2, 5}};

  SUBCASE("perfect answer maxes out at 3.0") {
    auto b = reward::total_reward(wrap("0-2,5"), gt, cfg);
    CHECK(b.format == 1.0);
    CHECK(b.total == Approx(3.0).epsilon(1e-15));
  }
  SUBCASE("malformed text zeroes everything") {
    auto b = reward::total_reward("<answer>0-2,5</answer>", gt, cfg);
    CHECK(b.format == 0.0);
    CHECK(b.total == 0.0);
  }
  SUBCASE("valid but disjoint prediction keeps only the format unit") {
    auto b = reward::total_reward(wrap("10-12"), gt, cfg);
    CHECK(b.format == 1.0);
    CHECK(b.accuracy == 0.0);
    CHECK(b.bonus == 0.0);
    CHECK(b.total == Approx(1.0).epsilon(1e-15));
  }
  SUBCASE("empty gt, empty answer is also perfect") {
    grid::BlockLabelSet none{kGrid8, {}};
    auto b = reward::total_reward(wrap("none"), none, cfg);
    CHECK(b.total == Approx(3.0).epsilon(1e-15));
  }
}

TEST_CASE("reward matches the brute-force oracle on random pairs") {
  reward::RewardConfig cfg;
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 20000; ++trial) {
    std::set<int> pred = random_set(rng, 20);
    std::set<int> gt = random_set(rng, 20);

    auto [p, r] = reward::block_precision_recall(pred, gt);
    auto c = oracles::count_sets(pred, gt, 64);
    double po = oracles::precision_of(c, gt.empty());
    double ro = oracles::recall_of(c);
    REQUIRE(std::abs(p - po) < 1e-12);
    REQUIRE(std::abs(r - ro) < 1e-12);
    REQUIRE(std::abs(reward::accuracy_reward(p, r, cfg) -
                     oracles::accuracy_of(po, ro, cfg.beta)) < 1e-12);
    REQUIRE(std::abs(reward::recall_bonus(r, cfg) - oracles::bonus_of(ro, cfg.bonus_tiers)) <
            1e-12);
  }
}

TEST_CASE("adding a correct block never lowers the total") {
  reward::RewardConfig cfg;
  std::mt19937_64 rng(123);
  for (int trial = 0; trial < 3000; ++trial) {
    std::set<int> gt = random_set(rng, 12);
    if (gt.empty()) continue;
    std::set<int> pred = random_set(rng, 12);
    // pick a gt block missing from pred, if any
    int extra = -1;
    for (int b : gt)
      if (!pred.count(b)) {
        extra = b;
        break;
      }
    if (extra < 0) continue;

    grid::BlockLabelSet gtl{kGrid8, gt};
    double before =
        reward::total_reward(wrap(grid::serialize_runs({kGrid8, pred})), gtl, cfg).total;
    pred.insert(extra);
    double after =
        reward::total_reward(wrap(grid::serialize_runs({kGrid8, pred})), gtl, cfg).total;
    REQUIRE(after >= before - 1e-12);
  }
}

TEST_CASE("adding an incorrect block never raises recall") {
  reward::RewardConfig cfg;
  std::mt19937_64 rng(321);
  for (int trial = 0; trial < 3000; ++trial) {
    std::set<int> gt = random_set(rng, 12);
    std::set<int> pred = random_set(rng, 12);
    int extra = -1;
    for (int b = 0; b < 64; ++b)
      if (!gt.count(b) && !pred.count(b)) {
        extra = b;
        break;
      }
    if (extra < 0) continue;

    grid::BlockLabelSet gtl{kGrid8, gt};
    double before =
        reward::total_reward(wrap(grid::serialize_runs({kGrid8, pred})), gtl, cfg).recall;
    pred.insert(extra);
    double after =
        reward::total_reward(wrap(grid::serialize_runs({kGrid8, pred})), gtl, cfg).recall;
    REQUIRE(after <= before + 1e-12);
  }
}

TEST_CASE("tier config validation") {
  reward::RewardConfig cfg;
  cfg.bonus_tiers = {{0.9, 0.5}, {0.7, 0.7}};  // not ascending
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.bonus_tiers = {{1.2, 0.5}};  // threshold out of range
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.bonus_tiers = {{0.5, -1.0}};  // negative bonus
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.bonus_tiers = {};  // empty is allowed: bonus is simply never granted
  CHECK_NOTHROW(cfg.validate());
  cfg = reward::RewardConfig{};
  cfg.beta = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
