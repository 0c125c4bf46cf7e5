#include "cdkit/reward.hpp"

#include <algorithm>

#include "cdkit/errors.hpp"

namespace cdkit::reward {

void RewardConfig::validate() const {
  if (beta < 0.0 || beta > 1.0) throw ConfigError("reward.beta must be in [0,1]");
  if (bonus_tiers.empty()) return;  // no bonus at all is fine
  double prev = -1.0;
  for (const auto& [thresh, bonus] : bonus_tiers) {
    if (thresh <= prev) throw ConfigError("reward.bonus_tiers thresholds must be ascending");
    if (thresh < 0.0 || thresh > 1.0) throw ConfigError("reward.bonus_tiers threshold out of [0,1]");
    if (bonus < 0.0) throw ConfigError("reward.bonus_tiers bonus must be >= 0");
    prev = thresh;
  }
}

double format_reward(const std::string& raw, const grid::GridSpec& grid) {
  grid::StructuredOutput out;
  try {
    out = grid::extract_structured(raw);
  } catch (const grid::FormatError&) {
    return 0.0;
  }
  try {
    grid::parse_runs(out.answer, grid);
  } catch (const grid::ParseError&) {
    return 0.0;
  }
  return 1.0;
}

std::pair<double, double> block_precision_recall(const std::set<int>& pred,
                                                 const std::set<int>& target) {
  size_t inter = 0;
  for (int b : pred) inter += target.count(b);
  double precision =
      pred.empty() ? (target.empty() ? 1.0 : 0.0) : double(inter) / double(pred.size());
  double recall = target.empty() ? 1.0 : double(inter) / double(target.size());
  return {precision, recall};
}

double accuracy_reward(double precision, double recall, const RewardConfig& cfg) {
  return (1.0 - cfg.beta) * precision + cfg.beta * recall;
}

double recall_bonus(double recall, const RewardConfig& cfg) {
  double best = 0.0;
  for (size_t i = 0; i < cfg.bonus_tiers.size(); ++i) {
    const auto& [thresh, bonus] = cfg.bonus_tiers[i];
    bool top = (i + 1 == cfg.bonus_tiers.size());
    if ((top && recall >= thresh) || (!top && recall > thresh)) best = std::max(best, bonus);
  }
  return best;
}

RewardBreakdown total_reward(const std::string& raw, const grid::BlockLabelSet& target,
                             const RewardConfig& cfg) {
  cfg.validate();
  RewardBreakdown b;
  b.format = format_reward(raw, target.grid);
  if (b.format == 0.0) {
    b.total = 0.0;
    return b;
  }
  // format==1 guarantees this parse succeeds
  grid::StructuredOutput out = grid::extract_structured(raw);
  grid::BlockLabelSet pred = grid::parse_runs(out.answer, target.grid);
  auto [p, r] = block_precision_recall(pred.changed, target.changed);
  b.precision = p;
  b.recall = r;
  b.accuracy = accuracy_reward(p, r, cfg);
  b.bonus = recall_bonus(r, cfg);
  b.total = b.format * (1.0 + b.accuracy + b.bonus);
  return b;
}

}  // namespace cdkit::reward
