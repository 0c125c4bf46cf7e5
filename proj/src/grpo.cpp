#include "cdkit/grpo.hpp"

#include <cmath>
#include <fstream>

#include "cdkit/errors.hpp"
#include "json.hpp"

namespace cdkit::grpo {

using tensor::Tensor;

void GrpoConfig::validate() const {
  if (group_size < 1) throw ConfigError("grpo.group_size must be >= 1");
  if (!(eps_std > 0)) throw ConfigError("grpo.eps_std must be > 0");
  if (!(eps_clip > 0 && eps_clip < 1)) throw ConfigError("grpo.eps_clip must be in (0,1)");
  if (updates_per_group < 1) throw ConfigError("grpo.updates_per_group must be >= 1");
  if (kl_coef < 0) throw ConfigError("grpo.kl_coef must be >= 0");
  if (lr < 0) throw ConfigError("grpo.lr must be >= 0");
  if (steps < 0) throw ConfigError("grpo.steps must be >= 0");
  if (prompts_per_step < 1) throw ConfigError("grpo.prompts_per_step must be >= 1");
}

std::vector<double> group_advantages(const std::vector<double>& rewards, double eps_std) {
  const size_t g = rewards.size();
  if (g == 0) return {};
  double mu = 0;
  for (double r : rewards) mu += r;
  mu /= double(g);
  double var = 0;
  for (double r : rewards) var += (r - mu) * (r - mu);
  var /= double(g);  // population variance
  double denom = std::max(std::sqrt(var), eps_std);
  std::vector<double> adv(g);
  for (size_t i = 0; i < g; ++i) adv[i] = (rewards[i] - mu) / denom;
  return adv;
}

double clipped_objective(const std::vector<double>& ratios,
                         const std::vector<double>& advantages, double eps_clip) {
  if (ratios.size() != advantages.size())
    throw std::invalid_argument("clipped_objective: " + std::to_string(ratios.size()) +
                                " ratios vs " + std::to_string(advantages.size()) +
                                " advantages");
  if (ratios.empty()) return 0.0;
  double acc = 0;
  for (size_t i = 0; i < ratios.size(); ++i) {
    double r = ratios[i], a = advantages[i];
    double clipped = std::clamp(r, 1.0 - eps_clip, 1.0 + eps_clip);
    acc += std::min(r * a, clipped * a);
  }
  return acc / double(ratios.size());
}

StepStats grpo_step(policy::ReasonerPolicy& policy, const policy::ReasonerPolicy& snapshot,
                    const std::vector<const Prompt*>& batch, const reward::RewardConfig& rcfg,
                    const GrpoConfig& cfg, tensor::Adam& opt, Rng& rng) {
  cfg.validate();
  if (batch.empty()) throw ConfigError("grpo: empty prompt batch");

  struct Rollout {
    const Prompt* prompt;
    grid::BlockLabelSet blocks;
    double old_logprob;
    double advantage;
  };
  std::vector<Rollout> rollouts;
  rollouts.reserve(batch.size() * size_t(cfg.group_size));

  StepStats stats;
  size_t total = 0;
  for (const Prompt* prompt : batch) {
    std::vector<double> rewards(size_t(cfg.group_size));
    std::vector<Rollout> group(size_t(cfg.group_size));
    for (int i = 0; i < cfg.group_size; ++i) {
      policy::PolicySample s = snapshot.sample(prompt->features, prompt->gt.grid, rng);
      reward::RewardBreakdown rb = reward::total_reward(s.output.raw, prompt->gt, rcfg);
      rewards[size_t(i)] = rb.total;
      stats.mean_reward += rb.total;
      stats.mean_recall += rb.recall;
      ++total;
      group[size_t(i)] = {prompt, std::move(s.blocks), s.logprob, 0.0};
    }
    std::vector<double> adv = group_advantages(rewards, cfg.eps_std);
    for (int i = 0; i < cfg.group_size; ++i) group[size_t(i)].advantage = adv[size_t(i)];
    for (auto& r : group) rollouts.push_back(std::move(r));
  }
  stats.mean_reward /= double(total);
  stats.mean_recall /= double(total);

  for (int u = 0; u < cfg.updates_per_group; ++u) {
    // one logits graph per prompt, shared by its G rollouts
    std::vector<Tensor> logits(batch.size());
    for (size_t p = 0; p < batch.size(); ++p) logits[p] = policy.logits(batch[p]->features);

    std::vector<Tensor> terms, kl_terms;
    terms.reserve(rollouts.size());
    int clipped = 0;
    size_t pi = 0, in_prompt = 0;
    for (const Rollout& r : rollouts) {
      Tensor lp_new = policy.logprob_from_logits(logits[pi], r.blocks.changed);
      if (++in_prompt == size_t(cfg.group_size)) {
        in_prompt = 0;
        ++pi;
      }
      Tensor ratio = tensor::exp(tensor::add_scalar(lp_new, -r.old_logprob));
      if (std::fabs(ratio->values[0] - 1.0) > cfg.eps_clip) ++clipped;
      Tensor unclipped = tensor::mul_scalar(ratio, r.advantage);
      Tensor clipped_t =
          tensor::mul_scalar(tensor::clamp(ratio, 1.0 - cfg.eps_clip, 1.0 + cfg.eps_clip),
                             r.advantage);
      terms.push_back(tensor::minimum(unclipped, clipped_t));
      if (cfg.kl_coef > 0) kl_terms.push_back(tensor::add_scalar(lp_new, -r.old_logprob));
    }
    Tensor objective = tensor::mean(tensor::concat(terms, 0));
    stats.objective = objective->values[0];
    stats.clip_frac = double(clipped) / double(rollouts.size());
    Tensor loss = tensor::neg(objective);
    if (cfg.kl_coef > 0)
      loss = tensor::add(loss, tensor::mul_scalar(tensor::mean(tensor::concat(kl_terms, 0)),
                                                  cfg.kl_coef));
    tensor::backward(loss);
    opt.step(cfg.lr);
  }
  return stats;
}

TrainResult grpo_train(policy::ReasonerPolicy& policy, const std::vector<Prompt>& dataset,
                       const reward::RewardConfig& rcfg, const GrpoConfig& cfg,
                       const std::string& log_path) {
  cfg.validate();
  rcfg.validate();
  if (dataset.empty()) throw ConfigError("grpo: empty dataset");

  std::ofstream log;
  if (!log_path.empty()) {
    log.open(log_path);
    if (!log) throw IoError("cannot open " + log_path + " for writing");
  }

  Rng rng(mix_seed(cfg.seed, 0x6e90));
  tensor::Adam opt(policy.params());
  TrainResult res;
  res.curve.reserve(size_t(cfg.steps));

  const size_t n = dataset.size();
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  size_t cursor = n;  // forces an initial shuffle
  auto next_batch = [&] {
    std::vector<const Prompt*> batch;
    size_t want = std::min(size_t(cfg.prompts_per_step), n);
    while (batch.size() < want) {
      if (cursor >= n) {
        for (size_t i = n; i > 1; --i)
          std::swap(order[i - 1], order[size_t(rng.uniform_int(0, int(i) - 1))]);
        cursor = 0;
      }
      batch.push_back(&dataset[order[cursor++]]);
    }
    return batch;
  };

  for (int step = 0; step < cfg.steps; ++step) {
    policy::ReasonerPolicy snapshot = policy.clone();  // on-policy refresh
    StepStats s = grpo_step(policy, snapshot, next_batch(), rcfg, cfg, opt, rng);
    res.curve.push_back(s);
    if (log.is_open()) {
      nlohmann::json j = {{"step", step},
                          {"mean_reward", s.mean_reward},
                          {"mean_recall", s.mean_recall},
                          {"clip_frac", s.clip_frac},
                          {"objective", s.objective}};
      log << j.dump() << "\n";
    }
  }
  if (log.is_open() && !log) throw IoError("short write to " + log_path);
  return res;
}

}  // namespace cdkit::grpo
