#pragma once
#include <cstdint>

#include "cdkit/grid.hpp"
#include "cdkit/tensor.hpp"

namespace cdkit::metrics {

struct LossConfig {
  double fg_weight = 9.0;   // foreground weight in the BCE term
  double dice_eps = 1e-6;   // keeps the all-empty dice case at 0
  double prob_clamp = 1e-7; // clamp before logs; sigmoid can saturate to 0/1
  void validate() const;
};

// P is a probability-map graph node; T is a same-shaped 0/1 constant.
// -(1/numel) * sum( w*T*log(P) + (1-T)*log(1-P) ), P clamped to
// [prob_clamp, 1-prob_clamp].
tensor::Tensor weighted_bce(const tensor::Tensor& P, const tensor::Tensor& T,
                            const LossConfig& cfg = {});

// 1 - (2*sum(P*T)+eps) / (sum(P)+sum(T)+eps), over the whole batch.
tensor::Tensor dice_loss(const tensor::Tensor& P, const tensor::Tensor& T,
                         const LossConfig& cfg = {});

// weighted_bce + dice_loss
tensor::Tensor cd_loss(const tensor::Tensor& P, const tensor::Tensor& T,
                       const LossConfig& cfg = {});

struct ConfusionMatrix {
  uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
  uint64_t total() const { return tp + fp + fn + tn; }
  ConfusionMatrix& operator+=(const ConfusionMatrix& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
};

ConfusionMatrix confusion(const grid::ChangeMask& pred, const grid::ChangeMask& gt);

struct Metrics {
  double precision = 0, recall = 0, f1 = 0, iou = 0, oa = 0;
};

// Micro-averaged derivations. Zero-denominator cases: 1 when the involved
// pred/gt sets are both empty, else 0.
Metrics metrics(const ConfusionMatrix& cm);

}  // namespace cdkit::metrics
