#include "cdkit/mgd.hpp"

#include <cmath>

#include "cdkit/checkpoint.hpp"
#include "cdkit/errors.hpp"
#include "cdkit/rng.hpp"

namespace cdkit::mgd {

using tensor::Tensor;

void MGDConfig::validate() const {
  if (channels.empty()) throw ConfigError("mgd.channels must not be empty");
  for (size_t i = 0; i < channels.size(); ++i) {
    if (channels[i] < 1) throw ConfigError("mgd.channels must be positive");
    if (i > 0 && channels[i] <= channels[i - 1])
      throw ConfigError("mgd.channels must be strictly increasing");
  }
  if (window < 1) throw ConfigError("mgd.window must be >= 1");
  if (!std::isfinite(alpha_init)) throw ConfigError("mgd.alpha_init must be finite");
  int down = 1 << channels.size();  // one 2x pool per stage
  if (input_h < down || input_w < down || input_h % down != 0 || input_w % down != 0)
    throw ConfigError("mgd.input dims must be divisible by 2^stages");
  if ((input_h / down) % window != 0 || (input_w / down) % window != 0)
    throw ConfigError("mgd.window must divide the bottleneck resolution");
}

std::vector<grid::ChangeMask> mask_pyramid(const grid::ChangeMask& coarse, int levels) {
  if (levels < 1) throw std::invalid_argument("mask_pyramid: levels must be >= 1");
  std::vector<grid::ChangeMask> pyr;
  pyr.reserve(size_t(levels));
  pyr.push_back(coarse);
  for (int l = 1; l < levels; ++l) {
    const grid::ChangeMask& prev = pyr.back();
    if (prev.h % 2 != 0 || prev.w % 2 != 0)
      throw std::invalid_argument("mask_pyramid: odd dims at level " + std::to_string(l));
    grid::ChangeMask next = grid::ChangeMask::zeros(prev.h / 2, prev.w / 2);
    for (int y = 0; y < next.h; ++y)
      for (int x = 0; x < next.w; ++x)
        next.at(y, x) = prev.at(2 * y, 2 * x) | prev.at(2 * y, 2 * x + 1) |
                        prev.at(2 * y + 1, 2 * x) | prev.at(2 * y + 1, 2 * x + 1);
    pyr.push_back(std::move(next));
  }
  return pyr;
}

Tensor image_to_tensor(const io::ImageRGB& img) {
  std::vector<double> v(size_t(3) * img.h * img.w);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < img.h; ++y)
      for (int x = 0; x < img.w; ++x)
        v[(size_t(c) * img.h + y) * img.w + x] = img.at(y, x, c) / 255.0;
  return tensor::constant({1, 3, img.h, img.w}, std::move(v));
}

MgdModel::MgdModel(MGDConfig cfg, uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  Rng rng(mix_seed(seed, 0x306d));
  auto conv_init = [&](int out, int in, int k) {
    std::vector<double> v(size_t(out) * in * k * k);
    double sd = std::sqrt(2.0 / double(in * k * k));
    for (double& x : v) x = rng.normal(0.0, sd);
    return tensor::Parameter(tensor::leaf({out, in, k, k}, std::move(v)));
  };
  int in = 3;
  for (int c : cfg_.channels) {
    enc_.push_back(conv_init(c, in, 3));
    enc_.push_back(conv_init(c, c, 3));
    in = c;
  }
  const int C = cfg_.channels.back();
  fuse_ = conv_init(C, 3 * C, 3);
  auto proj_init = [&] {
    std::vector<double> v(size_t(C) * C);
    double sd = 1.0 / std::sqrt(double(C));
    for (double& x : v) x = rng.normal(0.0, sd);
    return tensor::Parameter(tensor::leaf({C, C}, std::move(v)));
  };
  wq_ = proj_init();
  wk_ = proj_init();
  wv_ = proj_init();
  for (int s = stages() - 1; s >= 0; --s) {
    int carried = s == stages() - 1 ? C : cfg_.channels[size_t(s) + 1];
    dec_.push_back(conv_init(cfg_.channels[size_t(s)], carried + 2 * cfg_.channels[size_t(s)], 3));
  }
  head_w_ = conv_init(1, cfg_.channels[0], 3);
  head_b_ = tensor::Parameter(tensor::leaf({1}, {0.0}));
  double a0 = cfg_.guidance ? cfg_.alpha_init : 0.0;
  for (int s = 0; s < stages(); ++s)
    alpha_.push_back(tensor::Parameter(tensor::leaf({1}, {a0})));
}

std::vector<tensor::Parameter*> MgdModel::params() {
  std::vector<tensor::Parameter*> out;
  for (auto& p : enc_) out.push_back(&p);
  out.push_back(&fuse_);
  out.push_back(&wq_);
  out.push_back(&wk_);
  out.push_back(&wv_);
  for (auto& p : dec_) out.push_back(&p);
  out.push_back(&head_w_);
  out.push_back(&head_b_);
  if (cfg_.guidance)
    for (auto& p : alpha_) out.push_back(&p);
  return out;
}

std::vector<double> MgdModel::alphas() const {
  std::vector<double> out;
  for (const auto& p : alpha_) out.push_back(p.t->values[0]);
  return out;
}

void MgdModel::force_alpha_zero() {
  cfg_.guidance = false;
  for (auto& p : alpha_) p.t->values[0] = 0.0;
}

Pyramid MgdModel::encode(const Tensor& img) const {
  if (img->shape != std::vector<int>{1, 3, cfg_.input_h, cfg_.input_w})
    throw std::invalid_argument("encode: image shape " + tensor::shape_str(img->shape) +
                                " does not match config " +
                                tensor::shape_str({1, 3, cfg_.input_h, cfg_.input_w}));
  Pyramid p;
  Tensor x = img;
  for (int s = 0; s < stages(); ++s) {
    Tensor a = tensor::relu(tensor::conv2d(x, enc_[size_t(2 * s)].t, 1, 1));
    Tensor b = tensor::relu(tensor::conv2d(a, enc_[size_t(2 * s) + 1].t, 1, 1));
    p.levels.push_back(b);
    x = tensor::max_pool2d(b, 2);
  }
  p.bottom = x;
  return p;
}

Tensor MgdModel::window_attention(const Tensor& fmap) const {
  const int C = fmap->shape[1], h = fmap->shape[2], w = fmap->shape[3];
  Tensor win = tensor::window_partition(fmap, cfg_.window);
  Tensor q = tensor::matmul(win, wq_.t);
  Tensor k = tensor::matmul(win, wk_.t);
  Tensor v = tensor::matmul(win, wv_.t);
  Tensor scores =
      tensor::mul_scalar(tensor::matmul(q, tensor::transpose_last2(k)), 1.0 / std::sqrt(double(C)));
  Tensor attn = tensor::softmax(scores, 2);
  Tensor out = tensor::matmul(attn, v);
  Tensor merged = tensor::window_merge(out, fmap->shape[0], C, h, w, cfg_.window);
  return tensor::add(fmap, merged);  // residual
}

Tensor MgdModel::decode(const Pyramid& p1, const Pyramid& p2,
                        const std::vector<grid::ChangeMask>& masks) const {
  if (int(p1.levels.size()) != stages() || int(p2.levels.size()) != stages())
    throw std::invalid_argument("decode: pyramid level count mismatch");
  if (int(masks.size()) < stages())
    throw std::invalid_argument("decode: need one mask per stage");
  Tensor f1 = p1.bottom, f2 = p2.bottom;
  Tensor fused = tensor::relu(
      tensor::conv2d(tensor::concat({f1, f2, tensor::abs(tensor::sub(f1, f2))}, 1), fuse_.t, 1, 1));
  Tensor x = window_attention(fused);
  for (int s = stages() - 1; s >= 0; --s) {
    x = tensor::nearest_upsample(x, 2);
    Tensor cat = tensor::concat({x, p1.levels[size_t(s)], p2.levels[size_t(s)]}, 1);
    x = tensor::relu(tensor::conv2d(cat, dec_[size_t(stages() - 1 - s)].t, 1, 1));
    // soft guidance: F * (1 + alpha * M); background (M=0) passes unchanged
    const grid::ChangeMask& m = masks[size_t(s)];
    if (m.h != x->shape[2] || m.w != x->shape[3])
      throw std::invalid_argument("decode: mask level " + std::to_string(s) + " is " +
                                  std::to_string(m.h) + "x" + std::to_string(m.w) +
                                  ", features are " + tensor::shape_str(x->shape));
    std::vector<double> mv(m.values.begin(), m.values.end());
    Tensor mt = tensor::constant({1, 1, m.h, m.w}, std::move(mv));
    Tensor guide = tensor::add_scalar(tensor::scalar_scale(mt, alpha_[size_t(s)].t), 1.0);
    x = tensor::mul_spatial(x, guide);
  }
  Tensor logits = tensor::add_channel_bias(tensor::conv2d(x, head_w_.t, 1, 1), head_b_.t);
  return tensor::sigmoid(logits);
}

Tensor MgdModel::forward(const io::ImageRGB& t1, const io::ImageRGB& t2,
                         const grid::ChangeMask& coarse) const {
  if (coarse.h != cfg_.input_h || coarse.w != cfg_.input_w)
    throw std::invalid_argument("forward: coarse mask dims do not match config");
  std::vector<grid::ChangeMask> masks = mask_pyramid(coarse, stages());
  return decode(encode(image_to_tensor(t1)), encode(image_to_tensor(t2)), masks);
}

grid::ChangeMask MgdModel::predict(const io::ImageRGB& t1, const io::ImageRGB& t2,
                                   const grid::ChangeMask& coarse) const {
  Tensor p = forward(t1, t2, coarse);
  grid::ChangeMask out = grid::ChangeMask::zeros(cfg_.input_h, cfg_.input_w);
  for (size_t i = 0; i < out.values.size(); ++i) out.values[i] = p->values[i] > 0.5 ? 1 : 0;
  return out;
}

void MgdModel::save(const std::string& path) const {
  nlohmann::json meta = {{"kind", "mgd-decoder"},       {"channels", cfg_.channels},
                         {"window", cfg_.window},       {"alpha_init", cfg_.alpha_init},
                         {"input_h", cfg_.input_h},     {"input_w", cfg_.input_w},
                         {"guidance", cfg_.guidance},   {"threshold", 0.5}};
  std::vector<std::pair<std::string, Tensor>> ts;
  for (int s = 0; s < stages(); ++s) {
    ts.emplace_back("enc.s" + std::to_string(s) + ".c0", enc_[size_t(2 * s)].t);
    ts.emplace_back("enc.s" + std::to_string(s) + ".c1", enc_[size_t(2 * s) + 1].t);
  }
  ts.emplace_back("fuse.w", fuse_.t);
  ts.emplace_back("attn.wq", wq_.t);
  ts.emplace_back("attn.wk", wk_.t);
  ts.emplace_back("attn.wv", wv_.t);
  for (int s = stages() - 1; s >= 0; --s)
    ts.emplace_back("dec.s" + std::to_string(s) + ".w", dec_[size_t(stages() - 1 - s)].t);
  ts.emplace_back("head.w", head_w_.t);
  ts.emplace_back("head.b", head_b_.t);
  for (int s = 0; s < stages(); ++s)
    ts.emplace_back("alpha.s" + std::to_string(s), alpha_[size_t(s)].t);
  tensor::save_checkpoint(path, meta, ts);
}

MgdModel MgdModel::load(const std::string& path) {
  tensor::Checkpoint ckpt = tensor::load_checkpoint(path);
  if (ckpt.meta.value("kind", "") != "mgd-decoder")
    throw IoError("not a decoder checkpoint: " + path);
  MgdModel m;
  try {
    m.cfg_.channels = ckpt.meta.at("channels").get<std::vector<int>>();
    m.cfg_.window = ckpt.meta.at("window").get<int>();
    m.cfg_.alpha_init = ckpt.meta.at("alpha_init").get<double>();
    m.cfg_.input_h = ckpt.meta.at("input_h").get<int>();
    m.cfg_.input_w = ckpt.meta.at("input_w").get<int>();
    m.cfg_.guidance = ckpt.meta.at("guidance").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad decoder checkpoint meta in " + path + ": " + e.what());
  }
  m.cfg_.validate();
  auto bind = [&](const std::string& name) {
    const auto& e = ckpt.at(name);
    return tensor::Parameter(tensor::leaf(e.shape, e.values));
  };
  for (int s = 0; s < m.stages(); ++s) {
    m.enc_.push_back(bind("enc.s" + std::to_string(s) + ".c0"));
    m.enc_.push_back(bind("enc.s" + std::to_string(s) + ".c1"));
  }
  m.fuse_ = bind("fuse.w");
  m.wq_ = bind("attn.wq");
  m.wk_ = bind("attn.wk");
  m.wv_ = bind("attn.wv");
  for (int s = m.stages() - 1; s >= 0; --s)
    m.dec_.push_back(bind("dec.s" + std::to_string(s) + ".w"));
  m.head_w_ = bind("head.w");
  m.head_b_ = bind("head.b");
  for (int s = 0; s < m.stages(); ++s) m.alpha_.push_back(bind("alpha.s" + std::to_string(s)));
  return m;
}

CoarseSource coarse_source_from_string(const std::string& s) {
  if (s == "oracle") return CoarseSource::oracle;
  if (s == "reasoner") return CoarseSource::reasoner;
  throw ConfigError("coarse source must be 'oracle' or 'reasoner', got '" + s + "'");
}

DecoderTrainResult train_decoder(MgdModel& model, const scene::Manifest& manifest,
                                 CoarseSource src, const policy::ReasonerPolicy* reasoner,
                                 int epochs, double lr, const metrics::LossConfig& lcfg,
                                 uint64_t seed) {
  lcfg.validate();
  if (manifest.scenes.empty()) throw ConfigError("train_decoder: empty manifest");
  if (epochs < 0) throw ConfigError("train_decoder: epochs must be >= 0");
  if (src == CoarseSource::reasoner && reasoner == nullptr)
    throw ConfigError("train_decoder: reasoner coarse source needs a policy checkpoint");
  const MGDConfig& cfg = model.config();
  if (manifest.grid.image_h != cfg.input_h || manifest.grid.image_w != cfg.input_w)
    throw ConfigError("train_decoder: manifest scene size does not match mgd.input dims");

  struct Item {
    io::ImageRGB t1, t2;
    grid::ChangeMask coarse;
    Tensor gt;  // [1,1,H,W] constant
  };
  std::vector<Item> items;
  items.reserve(manifest.scenes.size());
  for (const auto& e : manifest.scenes) {
    Item it;
    it.t1 = io::read_ppm(manifest.resolve(e.t1));
    it.t2 = io::read_ppm(manifest.resolve(e.t2));
    grid::ChangeMask gt = io::read_pgm(manifest.resolve(e.gt));
    grid::BlockLabelSet blocks;
    if (src == CoarseSource::oracle) {
      blocks = grid::parse_runs(e.gt_runs, manifest.grid);
    } else {
      blocks = reasoner->greedy_decode(policy::featurize(it.t1, it.t2, manifest.grid),
                                       manifest.grid);
    }
    it.coarse = grid::coarse_mask_from_blocks(blocks);
    std::vector<double> gv(gt.values.begin(), gt.values.end());
    it.gt = tensor::constant({1, 1, gt.h, gt.w}, std::move(gv));
    items.push_back(std::move(it));
  }

  Rng rng(mix_seed(seed, 0xdec0de));
  tensor::Adam opt(model.params());
  DecoderTrainResult res;
  std::vector<size_t> order(items.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (int e = 0; e < epochs; ++e) {
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[size_t(rng.uniform_int(0, int(i) - 1))]);
    for (size_t idx : order) {
      const Item& it = items[idx];
      Tensor P = model.forward(it.t1, it.t2, it.coarse);
      Tensor loss = metrics::cd_loss(P, it.gt, lcfg);
      res.loss_curve.push_back(loss->values[0]);
      tensor::backward(loss);
      opt.step(lr);
    }
  }
  return res;
}

}  // namespace cdkit::mgd
