#include "cdkit/policy.hpp"

#include <cmath>
#include <cstdio>

#include "cdkit/checkpoint.hpp"
#include "cdkit/errors.hpp"

namespace cdkit::policy {

using tensor::Tensor;

BlockFeatures featurize(const io::ImageRGB& t1, const io::ImageRGB& t2,
                        const grid::GridSpec& grid) {
  grid.validate();
  if (t1.h != grid.image_h || t1.w != grid.image_w || t2.h != t1.h || t2.w != t1.w)
    throw std::invalid_argument("featurize: image dims do not match grid");
  const int bh = grid.block_h(), bw = grid.block_w();
  const double inv_n = 1.0 / double(bh * bw);
  BlockFeatures f;
  f.blocks = grid.block_count();
  f.values.resize(size_t(f.blocks) * BlockFeatures::dim);

  // pixel values are 8-bit, so the moments are exact in integer arithmetic;
  // constant blocks come out at exactly zero std this way
  const long long n_px = (long long)bh * bw;
  auto stats = [&](const io::ImageRGB& img, int by, int bx, double mean[3], double sd[3]) {
    long long sum[3] = {0, 0, 0}, sq[3] = {0, 0, 0};
    for (int y = by * bh; y < (by + 1) * bh; ++y)
      for (int x = bx * bw; x < (bx + 1) * bw; ++x)
        for (int c = 0; c < 3; ++c) {
          long long v = img.at(y, x, c);
          sum[c] += v;
          sq[c] += v * v;
        }
    for (int c = 0; c < 3; ++c) {
      mean[c] = double(sum[c]) * inv_n / 255.0;
      // n*E[x^2] - (E[x]*n)^2, scaled back down; exact for 8-bit inputs
      __int128 num = (__int128)n_px * sq[c] - (__int128)sum[c] * sum[c];
      sd[c] = std::sqrt(double(num)) * inv_n / 255.0;
    }
  };

  for (int by = 0; by < grid.rows; ++by)
    for (int bx = 0; bx < grid.cols; ++bx) {
      double m1[3], s1[3], m2[3], s2[3];
      stats(t1, by, bx, m1, s1);
      stats(t2, by, bx, m2, s2);
      double* row = f.values.data() + size_t(by * grid.cols + bx) * BlockFeatures::dim;
      for (int c = 0; c < 3; ++c) row[c] = m1[c];
      for (int c = 0; c < 3; ++c) row[3 + c] = s1[c];
      for (int c = 0; c < 3; ++c) row[6 + c] = m2[c];
      for (int c = 0; c < 3; ++c) row[9 + c] = s2[c];
      for (int c = 0; c < 3; ++c) row[12 + c] = std::fabs(m1[c] - m2[c]);
    }
  return f;
}

void PolicyConfig::validate() const {
  if (hidden < 1) throw ConfigError("policy.hidden must be >= 1");
  if (!(temperature > 0)) throw ConfigError("policy.temperature must be > 0");
}

ReasonerPolicy::ReasonerPolicy(PolicyConfig cfg, uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(mix_seed(seed, 0x90110c7));
  const int D = BlockFeatures::dim, H = cfg_.hidden;
  std::vector<double> w1(size_t(D) * H);
  std::vector<double> w2(size_t(H), 0.0);
  for (double& v : w1) v = rng.normal(0.0, 1.0 / std::sqrt(double(D)));
  for (double& v : w2) v = rng.normal(0.0, 1.0 / std::sqrt(double(H)));
  w1_ = tensor::Parameter(tensor::leaf({D, H}, std::move(w1)));
  b1_ = tensor::Parameter(tensor::leaf({H}, std::vector<double>(size_t(H), 0.0)));
  w2_ = tensor::Parameter(tensor::leaf({H, 1}, std::move(w2)));
  b2_ = tensor::Parameter(tensor::leaf({1}, {0.0}));
}

std::vector<tensor::Parameter*> ReasonerPolicy::params() { return {&w1_, &b1_, &w2_, &b2_}; }

Tensor ReasonerPolicy::logits(const BlockFeatures& f) const {
  if (f.blocks <= 0 || f.values.size() != size_t(f.blocks) * BlockFeatures::dim)
    throw std::invalid_argument("logits: malformed features");
  Tensor x = tensor::constant({f.blocks, BlockFeatures::dim}, f.values);
  Tensor h = tensor::relu(tensor::add_row_bias(tensor::matmul(x, w1_.t), b1_.t));
  Tensor z = tensor::add_row_bias(tensor::matmul(h, w2_.t), b2_.t);
  return tensor::reshape(z, {f.blocks});
}

Tensor ReasonerPolicy::logprob_from_logits(const Tensor& logits,
                                           const std::set<int>& blocks) const {
  int n = logits->shape[0];
  std::vector<double> y(size_t(n), 0.0), ny(size_t(n), 1.0);
  for (int b : blocks) {
    if (b < 0 || b >= n) throw std::invalid_argument("logprob: block index out of range");
    y[size_t(b)] = 1.0;
    ny[size_t(b)] = 0.0;
  }
  Tensor zt = tensor::mul_scalar(logits, 1.0 / cfg_.temperature);
  Tensor pos = tensor::mul(tensor::constant({n}, std::move(y)), tensor::logsigmoid(zt));
  Tensor neg = tensor::mul(tensor::constant({n}, std::move(ny)),
                           tensor::logsigmoid(tensor::neg(zt)));
  return tensor::sum(tensor::add(pos, neg));
}

namespace {
double stable_logsigmoid(double x) {
  return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}
}  // namespace

std::vector<double> ReasonerPolicy::block_probs(const BlockFeatures& f) const {
  Tensor z = logits(f);
  std::vector<double> p(z->size());
  for (size_t i = 0; i < p.size(); ++i) {
    double x = z->values[i] / cfg_.temperature;
    p[i] = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  }
  return p;
}

grid::StructuredOutput render_structured(const std::vector<double>& probs,
                                         const grid::BlockLabelSet& blocks) {
  grid::StructuredOutput out;
  std::string think = "Compared " + std::to_string(probs.size()) +
                      " blocks across timestamps; change probabilities:";
  char buf[48];
  for (size_t i = 0; i < probs.size(); ++i) {
    std::snprintf(buf, sizeof buf, " b%zu=%.3f", i, probs[i]);
    think += buf;
  }
  out.think = think;
  out.answer = grid::serialize_runs(blocks);
  out.raw = "<think>" + out.think + "</think>\n<answer>" + out.answer + "</answer>";
  return out;
}

PolicySample ReasonerPolicy::sample(const BlockFeatures& f, const grid::GridSpec& grid,
                                    Rng& rng) const {
  if (f.blocks != grid.block_count())
    throw std::invalid_argument("sample: feature rows do not match grid");
  Tensor z = logits(f);
  PolicySample s;
  s.blocks.grid = grid;
  std::vector<double> probs(z->size());
  for (size_t i = 0; i < z->size(); ++i) {
    double x = z->values[i] / cfg_.temperature;
    double p = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    probs[i] = p;
    bool on = rng.bernoulli(p);
    if (on) s.blocks.changed.insert(int(i));
    s.logprob += on ? stable_logsigmoid(x) : stable_logsigmoid(-x);
  }
  s.output = render_structured(probs, s.blocks);
  return s;
}

double ReasonerPolicy::logprob_of(const BlockFeatures& f,
                                  const grid::BlockLabelSet& blocks) const {
  Tensor z = logits(f);
  double lp = 0;
  for (size_t i = 0; i < z->size(); ++i) {
    double x = z->values[i] / cfg_.temperature;
    lp += blocks.changed.count(int(i)) ? stable_logsigmoid(x) : stable_logsigmoid(-x);
  }
  return lp;
}

grid::BlockLabelSet ReasonerPolicy::greedy_decode(const BlockFeatures& f,
                                                  const grid::GridSpec& grid) const {
  if (f.blocks != grid.block_count())
    throw std::invalid_argument("greedy_decode: feature rows do not match grid");
  grid::BlockLabelSet out;
  out.grid = grid;
  std::vector<double> p = block_probs(f);
  for (size_t i = 0; i < p.size(); ++i)
    if (p[i] > 0.5) out.changed.insert(int(i));
  return out;
}

ReasonerPolicy ReasonerPolicy::clone() const {
  ReasonerPolicy c;
  c.cfg_ = cfg_;
  c.w1_ = tensor::Parameter(tensor::leaf(w1_.t->shape, w1_.t->values));
  c.b1_ = tensor::Parameter(tensor::leaf(b1_.t->shape, b1_.t->values));
  c.w2_ = tensor::Parameter(tensor::leaf(w2_.t->shape, w2_.t->values));
  c.b2_ = tensor::Parameter(tensor::leaf(b2_.t->shape, b2_.t->values));
  return c;
}

void ReasonerPolicy::save(const std::string& path) const {
  nlohmann::json meta = {{"kind", "reasoner-policy"},
                         {"hidden", cfg_.hidden},
                         {"temperature", cfg_.temperature},
                         {"feature_dim", BlockFeatures::dim}};
  tensor::save_checkpoint(path, meta,
                          {{"w1", w1_.t}, {"b1", b1_.t}, {"w2", w2_.t}, {"b2", b2_.t}});
}

ReasonerPolicy ReasonerPolicy::load(const std::string& path) {
  tensor::Checkpoint ckpt = tensor::load_checkpoint(path);
  if (ckpt.meta.value("kind", "") != "reasoner-policy")
    throw IoError("not a policy checkpoint: " + path);
  ReasonerPolicy p;
  p.cfg_.hidden = ckpt.meta.at("hidden").get<int>();
  p.cfg_.temperature = ckpt.meta.at("temperature").get<double>();
  p.cfg_.validate();
  auto bind = [&](const char* name, const std::vector<int>& want) {
    const auto& e = ckpt.at(name);
    if (e.shape != want)
      throw IoError("policy checkpoint tensor '" + std::string(name) + "' has shape " +
                    tensor::shape_str(e.shape) + ", expected " + tensor::shape_str(want));
    return tensor::Parameter(tensor::leaf(e.shape, e.values));
  };
  const int D = BlockFeatures::dim, H = p.cfg_.hidden;
  p.w1_ = bind("w1", {D, H});
  p.b1_ = bind("b1", {H});
  p.w2_ = bind("w2", {H, 1});
  p.b2_ = bind("b2", {1});
  return p;
}

SftResult sft_train(ReasonerPolicy& policy, const std::vector<SftItem>& data, int epochs,
                    double lr, uint64_t seed) {
  if (data.empty()) throw ConfigError("sft: empty dataset");
  if (epochs < 0) throw ConfigError("sft: epochs must be >= 0");
  Rng rng(mix_seed(seed, 0x5f7e11));
  tensor::Adam opt(policy.params());
  SftResult res;
  std::vector<size_t> order(data.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (int e = 0; e < epochs; ++e) {
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[size_t(rng.uniform_int(0, int(i) - 1))]);
    for (size_t idx : order) {
      const SftItem& item = data[idx];
      Tensor lp = policy.logprob_from_logits(policy.logits(item.features), item.gt.changed);
      // mean BCE over blocks = -logprob / n
      Tensor loss = tensor::mul_scalar(lp, -1.0 / double(item.features.blocks));
      res.loss_curve.push_back(loss->values[0]);
      tensor::backward(loss);
      opt.step(lr);
    }
  }
  return res;
}

std::vector<SftItem> load_sft_items(const scene::Manifest& m) {
  std::vector<SftItem> items;
  items.reserve(m.scenes.size());
  for (const auto& e : m.scenes) {
    SftItem it;
    io::ImageRGB t1 = io::read_ppm(m.resolve(e.t1));
    io::ImageRGB t2 = io::read_ppm(m.resolve(e.t2));
    it.features = featurize(t1, t2, m.grid);
    it.gt = grid::parse_runs(e.gt_runs, m.grid);
    items.push_back(std::move(it));
  }
  return items;
}

}  // namespace cdkit::policy
