#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "cdkit/policy.hpp"
#include "cdkit/reward.hpp"

namespace cdkit::grpo {

struct GrpoConfig {
  int group_size = 8;       // G samples per prompt
  double eps_std = 1e-8;    // floor on the group std
  double eps_clip = 0.2;    // ratio clip range
  int updates_per_group = 1;
  double kl_coef = 0.0;     // optional penalty, off by default
  double lr = 0.05;
  int steps = 200;
  int prompts_per_step = 8;
  uint64_t seed = 7;
  void validate() const;
};

// (r_i - mean) / max(population_std, eps_std)
std::vector<double> group_advantages(const std::vector<double>& rewards, double eps_std);

// mean_i min(ratio_i * adv_i, clip(ratio_i, 1-eps, 1+eps) * adv_i)
double clipped_objective(const std::vector<double>& ratios, const std::vector<double>& advantages,
                         double eps_clip);

struct Prompt {
  policy::BlockFeatures features;
  grid::BlockLabelSet gt;
};

struct StepStats {
  double mean_reward = 0;
  double mean_recall = 0;
  double clip_frac = 0;  // fraction of samples with |ratio-1| > eps_clip
  double objective = 0;
};

// One update: sample G rollouts per prompt from the frozen snapshot, score,
// normalize advantages within each group, ascend the clipped surrogate.
StepStats grpo_step(policy::ReasonerPolicy& policy, const policy::ReasonerPolicy& snapshot,
                    const std::vector<const Prompt*>& batch, const reward::RewardConfig& rcfg,
                    const GrpoConfig& cfg, tensor::Adam& opt, Rng& rng);

struct TrainResult {
  std::vector<StepStats> curve;
};

// On-policy loop: the snapshot is refreshed from `policy` before every step.
// When log_path is nonempty, appends one JSON line per step.
TrainResult grpo_train(policy::ReasonerPolicy& policy, const std::vector<Prompt>& dataset,
                       const reward::RewardConfig& rcfg, const GrpoConfig& cfg,
                       const std::string& log_path = "");

}  // namespace cdkit::grpo
