// Acceptance suite: ten end-to-end checks, one verdict line each. Run it
// after the unit tests; several checks train real models and take minutes.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "cdkit/errors.hpp"
#include "cdkit/grpo.hpp"
#include "cdkit/metrics.hpp"
#include "cdkit/mgd.hpp"
#include "cdkit/pipeline.hpp"
#include "cdkit/pnm.hpp"
#include "cdkit/policy.hpp"
#include "cdkit/reward.hpp"
#include "cdkit/rng.hpp"
#include "cdkit/scene.hpp"
#include "oracles.hpp"

using namespace cdkit;
using tensor::Tensor;

namespace {

// failure notes for the criterion currently running
std::vector<std::string> g_notes;

void expect(bool ok, const std::string& what) {
  if (!ok) g_notes.push_back(what);
}

void expect_near(double got, double want, double tol, const std::string& what) {
  if (!(std::fabs(got - want) <= tol))
    g_notes.push_back(what + ": got " + std::to_string(got) + ", want " + std::to_string(want));
}

double rel_err(double a, double b, double floor_ = 1e-6) {
  return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), floor_});
}

std::set<int> random_blocks(Rng& rng, int n_blocks) {
  // mix densities so empty, sparse and near-full sets all appear
  double density = rng.uniform();
  std::set<int> s;
  for (int b = 0; b < n_blocks; ++b)
    if (rng.uniform() < density) s.insert(b);
  return s;
}

std::string wrap_answer(const std::string& runs) {
  return "<think>scan</think><answer>" + runs + "</answer>";
}

// ---------------------------------------------------------------------------
// 1. run-string codec: serialize/parse identity
void check_codec() {
  grid::GridSpec g4{4, 4, 32, 32};
  for (int bits = 0; bits < (1 << 16); ++bits) {
    std::set<int> s;
    for (int b = 0; b < 16; ++b)
      if (bits & (1 << b)) s.insert(b);
    grid::BlockLabelSet labels{g4, s};
    std::string runs = grid::serialize_runs(labels);
    if (grid::parse_runs(runs, g4).changed != s) {
      g_notes.push_back("4x4 roundtrip broke on \"" + runs + "\"");
      return;
    }
    if (grid::parse_runs(runs, g4, /*strict=*/true).changed != s) {
      g_notes.push_back("4x4 strict re-parse broke on \"" + runs + "\"");
      return;
    }
  }

  grid::GridSpec g8;  // stock 8x8 over 64x64
  Rng rng(2024);
  for (int t = 0; t < 10000; ++t) {
    std::set<int> s = random_blocks(rng, g8.block_count());
    grid::BlockLabelSet labels{g8, s};
    if (grid::parse_runs(grid::serialize_runs(labels), g8).changed != s) {
      g_notes.push_back("8x8 roundtrip broke on trial " + std::to_string(t));
      return;
    }
  }
}

// ---------------------------------------------------------------------------
// 2. reward against a brute-force enumeration oracle, plus monotonicity
void check_reward() {
  grid::GridSpec g8;
  reward::RewardConfig rcfg;
  Rng rng(515);
  int bad = 0;
  for (int t = 0; t < 10000 && bad < 5; ++t) {
    std::set<int> pred = random_blocks(rng, 64), gt = random_blocks(rng, 64);

    oracles::SetCounts c = oracles::count_sets(pred, gt, 64);
    double P = oracles::precision_of(c, gt.empty());
    double R = oracles::recall_of(c);
    double acc = oracles::accuracy_of(P, R, rcfg.beta);
    double bon = oracles::bonus_of(R, rcfg.bonus_tiers);

    grid::BlockLabelSet target{g8, gt};
    std::string raw = wrap_answer(grid::serialize_runs(grid::BlockLabelSet{g8, pred}));
    reward::RewardBreakdown got = reward::total_reward(raw, target, rcfg);

    if (std::fabs(got.precision - P) > 1e-12 || std::fabs(got.recall - R) > 1e-12 ||
        std::fabs(got.accuracy - acc) > 1e-12 || std::fabs(got.bonus - bon) > 1e-12 ||
        std::fabs(got.total - (1.0 + acc + bon)) > 1e-12) {
      g_notes.push_back("breakdown disagrees with the oracle on trial " + std::to_string(t));
      ++bad;
      continue;
    }

    // adding a missed gt block can only help the total
    for (int b : gt)
      if (!pred.count(b)) {
        std::set<int> more = pred;
        more.insert(b);
        std::string raw2 = wrap_answer(grid::serialize_runs(grid::BlockLabelSet{g8, more}));
        double t2 = reward::total_reward(raw2, target, rcfg).total;
        if (t2 + 1e-12 < got.total) {
          g_notes.push_back("adding correct block " + std::to_string(b) + " lowered the total");
          ++bad;
        }
        break;
      }
    // adding a spurious block can only leave recall alone or keep it equal
    for (int b = 0; b < 64; ++b)
      if (!gt.count(b) && !pred.count(b)) {
        std::set<int> more = pred;
        more.insert(b);
        std::string raw2 = wrap_answer(grid::serialize_runs(grid::BlockLabelSet{g8, more}));
        double r2 = reward::total_reward(raw2, target, rcfg).recall;
        if (r2 > got.recall + 1e-12) {
          g_notes.push_back("adding wrong block " + std::to_string(b) + " raised recall");
          ++bad;
        }
        break;
      }
  }
}

// ---------------------------------------------------------------------------
// 3. group normalization, clip rule, and the on-policy gradient
grpo::Prompt tiny_prompt(uint64_t scene_seed) {
  grid::GridSpec g{2, 2, 16, 16};
  scene::GenConfig gen;
  gen.h = 16;
  gen.w = 16;
  gen.n_objects_min = 1;
  gen.n_objects_max = 2;
  gen.seed = scene_seed;
  scene::ScenePair pair = scene::generate(gen);
  return {policy::featurize(pair, g), grid::block_labels_from_mask(pair.gt, g)};
}

void check_grpo_math() {
  // normalization: zero mean always, unit population variance above the floor
  Rng rng(404);
  const double eps_std = 1e-8;
  for (int t = 0; t < 300; ++t) {
    size_t n = 2 + size_t(rng.uniform_int(0, 14));
    std::vector<double> rewards(n);
    for (double& r : rewards) r = 3.0 * rng.uniform();
    double mu = 0;
    for (double r : rewards) mu += r;
    mu /= double(n);
    double var = 0;
    for (double r : rewards) var += (r - mu) * (r - mu);
    double sd = std::sqrt(var / double(n));

    auto adv = grpo::group_advantages(rewards, eps_std);
    double am = 0;
    for (double a : adv) am += a;
    am /= double(n);
    expect(std::fabs(am) < 1e-12, "advantage mean drifted from zero");
    if (sd > eps_std) {
      double av = 0;
      for (double a : adv) av += (a - am) * (a - am);
      av /= double(n);
      expect(std::fabs(av - 1.0) < 1e-9, "advantage variance drifted from one");
    }
    if (!g_notes.empty()) return;
  }

  // the three fixed-point examples of the clip rule
  expect_near(grpo::clipped_objective({1, 1, 1}, {0.5, -1.0, 2.0}, 0.2), 0.5, 1e-12,
              "objective at ratio 1");
  expect_near(grpo::clipped_objective({1.5}, {1.0}, 0.2), 1.2, 1e-12,
              "positive advantage clipped at the ceiling");
  expect_near(grpo::clipped_objective({0.5}, {-1.0}, 0.2), -0.8, 1e-12,
              "negative advantage clipped at the floor");

  // on-policy (all ratios 1) the surrogate's finite-difference gradient must
  // equal the plain policy-gradient estimator
  grpo::Prompt prompt = tiny_prompt(21);
  policy::ReasonerPolicy pol(policy::PolicyConfig{}, 5);
  policy::ReasonerPolicy snap = pol.clone();
  Rng rr(42);
  const int G = 6;
  std::vector<policy::PolicySample> samples;
  std::vector<double> rewards;
  for (int i = 0; i < G; ++i) {
    samples.push_back(snap.sample(prompt.features, prompt.gt.grid, rr));
    rewards.push_back(
        reward::total_reward(samples.back().output.raw, prompt.gt, reward::RewardConfig{}).total);
  }
  std::vector<double> adv = grpo::group_advantages(rewards, 1e-8);
  double spread = 0;
  for (double a : adv) spread += std::fabs(a);
  expect(spread > 0.1, "sampled group is degenerate; comparison would be vacuous");

  const double eps_clip = 0.2;
  auto surrogate = [&]() {
    Tensor lg = pol.logits(prompt.features);
    std::vector<Tensor> terms;
    for (int i = 0; i < G; ++i) {
      Tensor lp = pol.logprob_from_logits(lg, samples[size_t(i)].blocks.changed);
      Tensor ratio = tensor::exp(tensor::add_scalar(lp, -samples[size_t(i)].logprob));
      Tensor unclipped = tensor::mul_scalar(ratio, adv[size_t(i)]);
      Tensor clipped = tensor::mul_scalar(
          tensor::clamp(ratio, 1.0 - eps_clip, 1.0 + eps_clip), adv[size_t(i)]);
      terms.push_back(tensor::minimum(unclipped, clipped));
    }
    return tensor::mean(tensor::concat(terms, 0));
  };

  // vanilla estimator gradient via autodiff
  {
    Tensor lg = pol.logits(prompt.features);
    std::vector<Tensor> terms;
    for (int i = 0; i < G; ++i)
      terms.push_back(tensor::mul_scalar(
          pol.logprob_from_logits(lg, samples[size_t(i)].blocks.changed), adv[size_t(i)]));
    tensor::backward(tensor::mean(tensor::concat(terms, 0)));
  }
  std::vector<std::vector<double>> g_pg;
  for (tensor::Parameter* p : pol.params()) g_pg.push_back(p->t->grad);

  const double h = 1e-5;
  double worst = 0;
  auto params = pol.params();
  for (size_t k = 0; k < params.size(); ++k) {
    std::vector<double>& v = params[k]->t->values;
    for (size_t j = 0; j < v.size(); ++j) {
      double keep = v[j];
      v[j] = keep + h;
      double up = surrogate()->values[0];
      v[j] = keep - h;
      double dn = surrogate()->values[0];
      v[j] = keep;
      worst = std::max(worst, rel_err((up - dn) / (2 * h), g_pg[k][j]));
    }
  }
  expect(worst < 1e-4,
         "finite-difference surrogate gradient off by " + std::to_string(worst));
}

// ---------------------------------------------------------------------------
// 4. single-prompt bandit convergence at stock settings
void check_bandit() {
  grpo::Prompt p = tiny_prompt(5);
  expect(!p.gt.changed.empty() && p.gt.changed.size() < 4,
         "bandit scene should have a nontrivial target");
  policy::ReasonerPolicy pol(policy::PolicyConfig{}, 7);
  grpo::GrpoConfig cfg;  // stock: 200 steps, groups of 8
  grpo::TrainResult res = grpo::grpo_train(pol, {p}, reward::RewardConfig{}, cfg);

  double best = 0;
  for (const auto& st : res.curve) best = std::max(best, st.mean_reward);
  expect(best >= 2.9, "group-mean reward peaked at " + std::to_string(best));
  expect(res.curve.back().mean_reward >= 2.9,
         "final group-mean reward " + std::to_string(res.curve.back().mean_reward));
  expect(pol.greedy_decode(p.features, p.gt.grid).changed == p.gt.changed,
         "greedy decode does not reproduce the target set");
}

// ---------------------------------------------------------------------------
// 5. loss values and gradients
void check_losses() {
  metrics::LossConfig lc;  // fg weight 9

  Tensor p_half = tensor::leaf({1}, {0.5});
  expect_near(metrics::weighted_bce(p_half, tensor::leaf({1}, {0.0}), lc)->values[0],
              -std::log(0.5), 1e-9, "bce, background pixel at p=0.5");
  expect_near(metrics::weighted_bce(p_half, tensor::leaf({1}, {1.0}), lc)->values[0],
              -9.0 * std::log(0.5), 1e-9, "bce, weighted foreground pixel at p=0.5");

  std::vector<double> ones(100, 1.0), zeros(100, 0.0);
  expect_near(metrics::dice_loss(tensor::leaf({100}, ones), tensor::leaf({100}, zeros), lc)
                  ->values[0],
              1.0 - lc.dice_eps / (100.0 + lc.dice_eps), 1e-9, "dice, all-wrong prediction");

  // combined loss gradient vs central differences on random 4x4 instances
  Rng rng(606);
  for (int inst = 0; inst < 5; ++inst) {
    std::vector<double> z(16), t(16);
    for (double& v : z) v = 4.0 * (rng.uniform() - 0.5);
    for (double& v : t) v = rng.uniform() < 0.5 ? 0.0 : 1.0;
    Tensor T = tensor::leaf({4, 4}, t);

    Tensor zt = tensor::leaf({4, 4}, z);
    tensor::backward(metrics::cd_loss(tensor::sigmoid(zt), T, lc));
    std::vector<double> grad = zt->grad;

    const double h = 1e-5;
    double worst = 0;
    for (size_t j = 0; j < z.size(); ++j) {
      auto eval = [&](double vj) {
        std::vector<double> zz = z;
        zz[j] = vj;
        return metrics::cd_loss(tensor::sigmoid(tensor::leaf({4, 4}, zz)), T, lc)->values[0];
      };
      double fd = (eval(z[j] + h) - eval(z[j] - h)) / (2 * h);
      worst = std::max(worst, rel_err(fd, grad[j]));
    }
    expect(worst < 1e-4, "cd_loss gradient off by " + std::to_string(worst));
  }

  // dice stays a proper [0,1] loss for arbitrary inputs
  for (int t2 = 0; t2 < 300; ++t2) {
    int n = 1 + int(rng.uniform_int(0, 63));
    std::vector<double> p(n), q(n);
    for (double& v : p) v = rng.uniform();
    for (double& v : q) v = rng.uniform() < 0.5 ? 0.0 : 1.0;
    double d = metrics::dice_loss(tensor::leaf({n}, p), tensor::leaf({n}, q), lc)->values[0];
    expect(d >= 0.0 && d <= 1.0, "dice left [0,1]: " + std::to_string(d));
    if (!g_notes.empty()) return;
  }
}

// ---------------------------------------------------------------------------
// 6. confusion oracle and the F1/IoU identity
void check_metrics() {
  Rng rng(717);
  for (int t = 0; t < 1000; ++t) {
    grid::ChangeMask a = grid::ChangeMask::zeros(8, 8), b = grid::ChangeMask::zeros(8, 8);
    double da = rng.uniform(), db = rng.uniform();
    if (t > 3) {  // first trials pin the degenerate corners
      for (auto& v : a.values) v = rng.uniform() < da ? 1 : 0;
      for (auto& v : b.values) v = rng.uniform() < db ? 1 : 0;
    } else if (t == 1) {
      a.values.assign(a.values.size(), 1);
    } else if (t == 2) {
      b.values.assign(b.values.size(), 1);
    } else if (t == 3) {
      a.values.assign(a.values.size(), 1);
      b.values.assign(b.values.size(), 1);
    }

    metrics::ConfusionMatrix cm = metrics::confusion(a, b);
    oracles::PixelCounts ref = oracles::count_pixels(a, b);
    if (cm.tp != ref.tp || cm.fp != ref.fp || cm.fn != ref.fn || cm.tn != ref.tn) {
      g_notes.push_back("confusion disagrees with the per-pixel count on trial " +
                        std::to_string(t));
      return;
    }
    metrics::Metrics m = metrics::metrics(cm);
    expect(std::fabs(m.f1 - 2.0 * m.iou / (1.0 + m.iou)) < 1e-12,
           "f1 and iou fell out of step on trial " + std::to_string(t));
    if (!g_notes.empty()) return;
  }
}

// ---------------------------------------------------------------------------
// 7. guidance at alpha=0 is the unguided network; mask pyramid stays aligned
void check_guidance_identity() {
  scene::GenConfig gen;
  gen.h = 32;
  gen.w = 32;
  gen.seed = 2027;
  scene::ScenePair pair = scene::generate(gen);
  grid::GridSpec g{8, 8, 32, 32};
  grid::BlockLabelSet blocks = grid::block_labels_from_mask(pair.gt, g);
  expect(!blocks.changed.empty(), "identity scene should contain change");
  grid::ChangeMask coarse = grid::coarse_mask_from_blocks(blocks);

  mgd::MGDConfig mc;
  mc.channels = {8, 16};
  mc.window = 2;
  mc.input_h = 32;
  mc.input_w = 32;
  mgd::MgdModel guided(mc, 55);
  mc.guidance = false;
  mgd::MgdModel plain(mc, 55);

  guided.force_alpha_zero();
  Tensor a = guided.forward(pair.t1, pair.t2, coarse);
  Tensor b = plain.forward(pair.t1, pair.t2, coarse);
  expect(a->values == b->values, "alpha=0 output differs from the unguided network");

  // a block-resolution pyramid level must be exactly the block bitmap
  Rng rng(818);
  grid::GridSpec g64;  // 8x8 over 64x64: level 3 of the pyramid is 8x8
  for (int t = 0; t < 50; ++t) {
    std::set<int> s = random_blocks(rng, 64);
    grid::ChangeMask cm = grid::coarse_mask_from_blocks(grid::BlockLabelSet{g64, s});
    std::vector<grid::ChangeMask> pyr = mgd::mask_pyramid(cm, 4);
    const grid::ChangeMask& level = pyr[3];
    if (level.h != 8 || level.w != 8) {
      g_notes.push_back("pyramid level 3 is not 8x8");
      return;
    }
    for (int r = 0; r < 8; ++r)
      for (int c = 0; c < 8; ++c)
        if ((level.at(r, c) != 0) != (s.count(r * 8 + c) > 0)) {
          g_notes.push_back("pyramid level misaligned at block " + std::to_string(r * 8 + c));
          return;
        }
  }
}

// ---------------------------------------------------------------------------
// 8. the whole pipeline at stock settings, held out scenes
struct ChainArtifacts {
  pipeline::PipelineConfig cfg;
  std::string held_manifest;
  bool ok = false;
};
ChainArtifacts g_chain;

void check_pipeline_chain() {
  pipeline::PipelineConfig cfg;
  cfg.paths.data_dir = "acceptance_run/data";
  cfg.paths.checkpoints_dir = "acceptance_run/ckpt";
  cfg.paths.reports_dir = "acceptance_run/reports";

  std::clock_t c0 = std::clock();
  pipeline::cmd_gen_data(cfg, 200, cfg.paths.data_dir + "/train");
  pipeline::cmd_gen_data(cfg, 50, cfg.paths.data_dir + "/held", 10000);
  std::string train_manifest = cfg.paths.data_dir + "/train/manifest.json";
  pipeline::cmd_sft(cfg, train_manifest);
  // 30 passes over 200 prompts at 8 prompts per step
  pipeline::cmd_grpo(cfg, train_manifest, pipeline::default_policy_sft_ckpt(cfg), "", "", 750);
  pipeline::cmd_train_decoder(cfg, train_manifest);
  pipeline::cmd_infer(cfg, cfg.paths.data_dir + "/held/manifest.json",
                      pipeline::default_policy_grpo_ckpt(cfg), pipeline::default_decoder_ckpt(cfg),
                      "acceptance_run/pred");
  nlohmann::json ev =
      pipeline::cmd_eval(cfg, cfg.paths.data_dir + "/held/manifest.json", "acceptance_run/pred",
                         cfg.paths.reports_dir + "/eval_held.json");
  double cpu_min = double(std::clock() - c0) / CLOCKS_PER_SEC / 60.0;

  double iou = ev["aggregate"]["iou"].get<double>();
  expect(cpu_min < 30.0, "chain took " + std::to_string(cpu_min) + " cpu-minutes");
  expect(iou >= 0.70, "held-out iou " + std::to_string(iou));
  std::printf("      chain: %.1f cpu-min, held-out iou %.4f\n", cpu_min, iou);

  g_chain.cfg = cfg;
  g_chain.held_manifest = cfg.paths.data_dir + "/held/manifest.json";
  g_chain.ok = g_notes.empty();
}

// ---------------------------------------------------------------------------
// 9. five-seed ablations: guidance on/off, rl on/off
void check_ablations() {
  double sum_guided = 0, sum_plain = 0, sum_sft = 0, sum_rl = 0;
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    scene::GenConfig gen;  // smaller scenes keep the 5x sweep affordable
    gen.h = 32;
    gen.w = 32;
    gen.seed = 9000 + seed * 17;
    grid::GridSpec g{8, 8, 32, 32};
    std::string dir = "acceptance_ablate/s" + std::to_string(seed);
    scene::Manifest train = scene::generate_dataset(gen, g, 60, dir + "/train");
    scene::GenConfig gen_h = gen;
    gen_h.seed = gen.seed + 100000;
    scene::Manifest held = scene::generate_dataset(gen_h, g, 24, dir + "/held");

    // decoder with and without guidance, same init, same data, oracle masks
    metrics::LossConfig lc;
    auto decoder_iou = [&](bool guide) {
      mgd::MGDConfig mc;
      mc.channels = {8, 16};
      mc.window = 2;
      mc.input_h = 32;
      mc.input_w = 32;
      mc.guidance = guide;
      mgd::MgdModel model(mc, 70 + seed);
      mgd::train_decoder(model, train, mgd::CoarseSource::oracle, nullptr, 12, 2e-3, lc,
                         80 + seed);
      metrics::ConfusionMatrix cm;
      for (const auto& e : held.scenes) {
        io::ImageRGB t1 = io::read_ppm(held.resolve(e.t1));
        io::ImageRGB t2 = io::read_ppm(held.resolve(e.t2));
        grid::ChangeMask gt = io::read_pgm(held.resolve(e.gt));
        grid::ChangeMask coarse = grid::coarse_mask_from_blocks(grid::parse_runs(e.gt_runs, g));
        cm += metrics::confusion(model.predict(t1, t2, coarse), gt);
      }
      return metrics::metrics(cm).iou;
    };
    double iou_guided = decoder_iou(true), iou_plain = decoder_iou(false);

    // block recall of the greedy decode, before and after rl
    auto micro_recall = [&](policy::ReasonerPolicy& pol) {
      long tp = 0, fn = 0;
      for (const auto& e : held.scenes) {
        io::ImageRGB t1 = io::read_ppm(held.resolve(e.t1));
        io::ImageRGB t2 = io::read_ppm(held.resolve(e.t2));
        grid::BlockLabelSet gt = grid::parse_runs(e.gt_runs, g);
        grid::BlockLabelSet pr = pol.greedy_decode(policy::featurize(t1, t2, g), g);
        for (int b : gt.changed) (pr.changed.count(b) ? tp : fn)++;
      }
      return tp + fn == 0 ? 1.0 : double(tp) / double(tp + fn);
    };
    policy::ReasonerPolicy pol(policy::PolicyConfig{}, 40 + seed);
    auto items = policy::load_sft_items(train);
    policy::sft_train(pol, items, 4, 0.01, 50 + seed);
    double recall_sft = micro_recall(pol);
    std::vector<grpo::Prompt> prompts;
    for (auto& it : items) prompts.push_back({it.features, it.gt});
    grpo::GrpoConfig gc;
    gc.steps = 300;
    gc.prompts_per_step = 4;
    gc.seed = 60 + seed;
    grpo::grpo_train(pol, prompts, reward::RewardConfig{}, gc);
    double recall_rl = micro_recall(pol);

    sum_guided += iou_guided;
    sum_plain += iou_plain;
    sum_sft += recall_sft;
    sum_rl += recall_rl;
  }
  std::printf("      5-seed means: iou %.4f guided vs %.4f plain; recall %.4f rl vs %.4f sft\n",
              sum_guided / 5, sum_plain / 5, sum_rl / 5, sum_sft / 5);
  expect(sum_guided >= sum_plain,
         "guidance lowered mean iou: " + std::to_string(sum_guided / 5) + " vs " +
             std::to_string(sum_plain / 5));
  expect(sum_rl >= sum_sft, "rl lowered mean recall: " + std::to_string(sum_rl / 5) + " vs " +
                                std::to_string(sum_sft / 5));
}

// ---------------------------------------------------------------------------
// 10. no semantic change + worst-case perturbation through the trained chain
void check_pseudo_change() {
  if (!g_chain.ok) {
    g_notes.push_back("skipped: the pipeline chain did not complete");
    return;
  }
  pipeline::PipelineConfig cfg = g_chain.cfg;
  cfg.gen.change_rate = 0.0;
  cfg.gen.perturb.extreme = true;
  cfg.gen.seed = 555;
  pipeline::cmd_gen_data(cfg, 20, "acceptance_run/data/rob");
  pipeline::cmd_infer(cfg, "acceptance_run/data/rob/manifest.json",
                      pipeline::default_policy_grpo_ckpt(cfg), pipeline::default_decoder_ckpt(cfg),
                      "acceptance_run/pred_rob");
  nlohmann::json ev = pipeline::cmd_eval(cfg, "acceptance_run/data/rob/manifest.json",
                                         "acceptance_run/pred_rob",
                                         cfg.paths.reports_dir + "/eval_rob.json");
  auto px = ev["aggregate"]["pixels"];
  double fp = px["fp"].get<double>();
  double total = fp + px["tp"].get<double>() + px["fn"].get<double>() + px["tn"].get<double>();
  double rate = fp / total;
  std::printf("      false-positive pixel rate %.2f%%\n", 100.0 * rate);
  expect(rate <= 0.05, "false-positive rate " + std::to_string(100.0 * rate) + "%");
}

}  // namespace

int main() {
  struct Item {
    const char* name;
    std::function<void()> fn;
  };
  const std::vector<Item> items = {
      {"run-string codec roundtrip identity", check_codec},
      {"reward matches the enumeration oracle", check_reward},
      {"group advantages and clipped objective", check_grpo_math},
      {"bandit convergence at stock settings", check_bandit},
      {"loss values and gradients", check_losses},
      {"confusion oracle and f1/iou identity", check_metrics},
      {"guidance identity and mask alignment", check_guidance_identity},
      {"end-to-end pipeline on held-out scenes", check_pipeline_chain},
      {"five-seed guidance and rl ablations", check_ablations},
      {"pseudo-change suppression", check_pseudo_change},
  };

  int failed = 0;
  for (size_t i = 0; i < items.size(); ++i) {
    g_notes.clear();
    auto t0 = std::chrono::steady_clock::now();
    try {
      items[i].fn();
    } catch (const std::exception& e) {
      g_notes.push_back(std::string("unhandled exception: ") + e.what());
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("[%2zu] %-42s %s  (%.1fs)\n", i + 1, items[i].name,
                g_notes.empty() ? "PASS" : "FAIL", secs);
    for (const std::string& n : g_notes) std::printf("      %s\n", n.c_str());
    if (!g_notes.empty()) ++failed;
    std::fflush(stdout);
  }
  if (failed) std::printf("%d of %zu acceptance checks failed\n", failed, items.size());
  else std::printf("all %zu acceptance checks passed\n", items.size());
  return failed == 0 ? 0 : 1;
}
