#pragma once
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "cdkit/grid.hpp"

namespace cdkit::reward {

// Bonus tiers are (threshold, bonus) pairs sorted ascending by threshold. The
// highest tier whose condition holds wins: the top threshold is met
// inclusively (recall >= t), lower tiers strictly (recall > t).
struct RewardConfig {
  double beta = 0.7;  // recall weight inside the accuracy term
  std::vector<std::pair<double, double>> bonus_tiers = {{0.7, 0.7}, {0.9, 0.9}, {1.0, 1.0}};
  void validate() const;
};

struct RewardBreakdown {
  double format = 0.0;  // 0 or 1
  double precision = 0.0;
  double recall = 0.0;
  double accuracy = 0.0;  // (1-beta)*P + beta*R, zero when format fails
  double bonus = 0.0;
  double total = 0.0;  // format * (1 + accuracy + bonus)
};

// 1 if `raw` is exactly one think block followed by one answer block and the
// answer body parses as a block-index list for `grid`; else 0.
double format_reward(const std::string& raw, const grid::GridSpec& grid);

// Set precision/recall with the empty-set conventions: an empty prediction has
// precision 1 iff the target is also empty; an empty target always has
// recall 1.
std::pair<double, double> block_precision_recall(const std::set<int>& pred,
                                                 const std::set<int>& target);

double accuracy_reward(double precision, double recall, const RewardConfig& cfg);
double recall_bonus(double recall, const RewardConfig& cfg);

// Full reward for a raw rollout string against the target label set.
RewardBreakdown total_reward(const std::string& raw, const grid::BlockLabelSet& target,
                             const RewardConfig& cfg = {});

}  // namespace cdkit::reward
