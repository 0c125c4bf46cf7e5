#pragma once
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "cdkit/grid.hpp"
#include "cdkit/rng.hpp"
#include "cdkit/scene.hpp"
#include "cdkit/tensor.hpp"

namespace cdkit::policy {

// Per-block statistics feeding the reasoner: mean+std per channel for each
// timestamp, plus per-channel absolute mean difference. 15 numbers per block,
// all in [0,1].
struct BlockFeatures {
  static constexpr int dim = 15;
  int blocks = 0;
  std::vector<double> values;  // blocks x dim, row-major by block index
};

BlockFeatures featurize(const io::ImageRGB& t1, const io::ImageRGB& t2,
                        const grid::GridSpec& grid);
inline BlockFeatures featurize(const scene::ScenePair& pair, const grid::GridSpec& grid) {
  return featurize(pair.t1, pair.t2, grid);
}

struct PolicyConfig {
  int hidden = 32;
  double temperature = 1.0;
  void validate() const;
};

struct PolicySample {
  grid::StructuredOutput output;
  grid::BlockLabelSet blocks;
  double logprob = 0.0;  // factorized Bernoulli log-likelihood of `blocks`
};

// Two-layer MLP applied per block row; one logit per block,
// p = sigmoid(logit / temperature).
class ReasonerPolicy {
 public:
  ReasonerPolicy(PolicyConfig cfg, uint64_t seed);

  const PolicyConfig& config() const { return cfg_; }
  std::vector<tensor::Parameter*> params();

  // Graph of per-block logits, shape [blocks]. Reused across the G samples of
  // a GRPO group so the group shares one forward pass.
  tensor::Tensor logits(const BlockFeatures& f) const;
  // Scalar graph: log-likelihood of exactly `blocks` under these logits.
  tensor::Tensor logprob_from_logits(const tensor::Tensor& logits,
                                     const std::set<int>& blocks) const;

  std::vector<double> block_probs(const BlockFeatures& f) const;
  PolicySample sample(const BlockFeatures& f, const grid::GridSpec& grid, Rng& rng) const;
  double logprob_of(const BlockFeatures& f, const grid::BlockLabelSet& blocks) const;
  grid::BlockLabelSet greedy_decode(const BlockFeatures& f, const grid::GridSpec& grid) const;

  ReasonerPolicy clone() const;

  void save(const std::string& path) const;
  static ReasonerPolicy load(const std::string& path);

 private:
  ReasonerPolicy() = default;
  PolicyConfig cfg_;
  tensor::Parameter w1_{tensor::leaf({1}, {0.0})};  // re-bound in ctor/load
  tensor::Parameter b1_{tensor::leaf({1}, {0.0})};
  tensor::Parameter w2_{tensor::leaf({1}, {0.0})};
  tensor::Parameter b2_{tensor::leaf({1}, {0.0})};
};

// Builds the canonical structured output string for a block set given the
// per-block probabilities that produced it.
grid::StructuredOutput render_structured(const std::vector<double>& probs,
                                         const grid::BlockLabelSet& blocks);

struct SftItem {
  BlockFeatures features;
  grid::BlockLabelSet gt;
};

struct SftResult {
  std::vector<double> loss_curve;  // one entry per optimization step
};

// Per-scene stochastic steps, shuffled each epoch. Plain block-level BCE.
SftResult sft_train(ReasonerPolicy& policy, const std::vector<SftItem>& data, int epochs,
                    double lr, uint64_t seed);

// Convenience: manifest -> (features, gt blocks) pairs.
std::vector<SftItem> load_sft_items(const scene::Manifest& m);

}  // namespace cdkit::policy
