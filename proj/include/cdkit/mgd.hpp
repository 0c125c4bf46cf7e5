#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "cdkit/grid.hpp"
#include "cdkit/metrics.hpp"
#include "cdkit/pnm.hpp"
#include "cdkit/policy.hpp"
#include "cdkit/scene.hpp"
#include "cdkit/tensor.hpp"

namespace cdkit::mgd {

struct MGDConfig {
  std::vector<int> channels = {16, 32, 64};  // per encoder stage, strictly increasing
  int window = 4;                            // attention window at the bottleneck
  double alpha_init = 0.1;
  int input_h = 64;
  int input_w = 64;
  bool guidance = true;  // false pins every alpha at 0 (ablation)
  void validate() const;
};

struct Pyramid {
  std::vector<tensor::Tensor> levels;  // pre-pool activations, level l at H/2^l
  tensor::Tensor bottom;               // pooled output of the last stage
};

// Level l is the coarse mask max-pooled 2x2 l times; level 0 is the mask
// itself. A cell is set iff any covered pixel is set.
std::vector<grid::ChangeMask> mask_pyramid(const grid::ChangeMask& coarse, int levels);

tensor::Tensor image_to_tensor(const io::ImageRGB& img);  // [1,3,H,W], /255

// Siamese encoder, window attention over the fused bottleneck, and a decoder
// whose every stage is soft-guided by the coarse mask pyramid:
// F <- F * (1 + alpha * M).
class MgdModel {
 public:
  MgdModel(MGDConfig cfg, uint64_t seed);

  const MGDConfig& config() const { return cfg_; }
  std::vector<tensor::Parameter*> params();
  std::vector<double> alphas() const;
  void force_alpha_zero();  // also drops alphas from params()

  Pyramid encode(const tensor::Tensor& img) const;
  tensor::Tensor window_attention(const tensor::Tensor& fmap) const;
  tensor::Tensor decode(const Pyramid& p1, const Pyramid& p2,
                        const std::vector<grid::ChangeMask>& masks) const;
  tensor::Tensor forward(const io::ImageRGB& t1, const io::ImageRGB& t2,
                         const grid::ChangeMask& coarse) const;
  // forward + threshold; strictly > 0.5 counts as change
  grid::ChangeMask predict(const io::ImageRGB& t1, const io::ImageRGB& t2,
                           const grid::ChangeMask& coarse) const;

  void save(const std::string& path) const;
  static MgdModel load(const std::string& path);

 private:
  MgdModel() = default;
  int stages() const { return int(cfg_.channels.size()); }

  MGDConfig cfg_;
  std::vector<tensor::Parameter> enc_;    // 2 convs per stage, interleaved
  tensor::Parameter fuse_{tensor::leaf({1}, {0.0})};
  tensor::Parameter wq_{tensor::leaf({1}, {0.0})};
  tensor::Parameter wk_{tensor::leaf({1}, {0.0})};
  tensor::Parameter wv_{tensor::leaf({1}, {0.0})};
  std::vector<tensor::Parameter> dec_;    // one conv per stage
  tensor::Parameter head_w_{tensor::leaf({1}, {0.0})};
  tensor::Parameter head_b_{tensor::leaf({1}, {0.0})};
  std::vector<tensor::Parameter> alpha_;  // one scalar per decoder stage
};

enum class CoarseSource { oracle, reasoner };

CoarseSource coarse_source_from_string(const std::string& s);

struct DecoderTrainResult {
  std::vector<double> loss_curve;  // one entry per optimization step
};

// Per-scene stochastic steps over the manifest, shuffled each epoch. The
// coarse mask comes from gt blocks (oracle) or from the reasoner's greedy
// decode; either way it is fixed per scene before training starts.
DecoderTrainResult train_decoder(MgdModel& model, const scene::Manifest& manifest,
                                 CoarseSource src, const policy::ReasonerPolicy* reasoner,
                                 int epochs, double lr, const metrics::LossConfig& lcfg,
                                 uint64_t seed);

}  // namespace cdkit::mgd
