#include "cdkit/metrics.hpp"

#include <stdexcept>

#include "cdkit/errors.hpp"

namespace cdkit::metrics {

using tensor::Tensor;

void LossConfig::validate() const {
  if (fg_weight <= 0) throw ConfigError("loss.fg_weight must be > 0");
  if (dice_eps <= 0) throw ConfigError("loss.dice_eps must be > 0");
  if (prob_clamp <= 0 || prob_clamp >= 0.5) throw ConfigError("loss.prob_clamp must be in (0,0.5)");
}

namespace {
void require_same(const Tensor& P, const Tensor& T, const char* op) {
  if (P->shape != T->shape)
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                tensor::shape_str(P->shape) + " vs " +
                                tensor::shape_str(T->shape));
}
}  // namespace

Tensor weighted_bce(const Tensor& P, const Tensor& T, const LossConfig& cfg) {
  cfg.validate();
  require_same(P, T, "weighted_bce");
  Tensor Pc = tensor::clamp(P, cfg.prob_clamp, 1.0 - cfg.prob_clamp);
  // per-element coefficients are constants: w where T=1, 0 elsewhere (and the
  // complement for the background term)
  std::vector<double> wf(T->size()), wb(T->size());
  for (size_t i = 0; i < T->size(); ++i) {
    wf[i] = cfg.fg_weight * T->values[i];
    wb[i] = 1.0 - T->values[i];
  }
  Tensor fg = tensor::mul(tensor::constant(T->shape, std::move(wf)), tensor::log(Pc));
  Tensor bg = tensor::mul(tensor::constant(T->shape, std::move(wb)),
                          tensor::log(tensor::add_scalar(tensor::neg(Pc), 1.0)));
  return tensor::neg(tensor::mean(tensor::add(fg, bg)));
}

Tensor dice_loss(const Tensor& P, const Tensor& T, const LossConfig& cfg) {
  cfg.validate();
  require_same(P, T, "dice_loss");
  Tensor inter = tensor::sum(tensor::mul(P, T));
  Tensor num = tensor::add_scalar(tensor::mul_scalar(inter, 2.0), cfg.dice_eps);
  Tensor den = tensor::add_scalar(tensor::add(tensor::sum(P), tensor::sum(T)), cfg.dice_eps);
  return tensor::add_scalar(tensor::neg(tensor::div(num, den)), 1.0);
}

Tensor cd_loss(const Tensor& P, const Tensor& T, const LossConfig& cfg) {
  return tensor::add(weighted_bce(P, T, cfg), dice_loss(P, T, cfg));
}

ConfusionMatrix confusion(const grid::ChangeMask& pred, const grid::ChangeMask& gt) {
  if (pred.h != gt.h || pred.w != gt.w)
    throw std::invalid_argument("confusion: mask dims " + std::to_string(pred.h) + "x" +
                                std::to_string(pred.w) + " vs " + std::to_string(gt.h) + "x" +
                                std::to_string(gt.w));
  ConfusionMatrix cm;
  for (size_t i = 0; i < gt.values.size(); ++i) {
    bool p = pred.values[i] != 0, g = gt.values[i] != 0;
    if (p && g)
      ++cm.tp;
    else if (p)
      ++cm.fp;
    else if (g)
      ++cm.fn;
    else
      ++cm.tn;
  }
  return cm;
}

Metrics metrics(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw std::invalid_argument("metrics: empty confusion matrix");
  bool pred_empty = cm.tp + cm.fp == 0;
  bool gt_empty = cm.tp + cm.fn == 0;
  Metrics m;
  m.precision = pred_empty ? (gt_empty ? 1.0 : 0.0) : double(cm.tp) / double(cm.tp + cm.fp);
  m.recall = gt_empty ? (pred_empty ? 1.0 : 0.0) : double(cm.tp) / double(cm.tp + cm.fn);
  if (m.precision + m.recall > 0)
    m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  else
    m.f1 = (pred_empty && gt_empty) ? 1.0 : 0.0;
  m.iou = (cm.tp + cm.fp + cm.fn == 0) ? 1.0 : double(cm.tp) / double(cm.tp + cm.fp + cm.fn);
  m.oa = double(cm.tp + cm.tn) / double(cm.total());
  return m;
}

}  // namespace cdkit::metrics
