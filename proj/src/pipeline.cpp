#include "cdkit/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "cdkit/errors.hpp"

namespace fs = std::filesystem;

namespace cdkit::pipeline {

using nlohmann::json;

// ---------------------------------------------------------------- config

void PolicySection::validate() const {
  net.validate();
  if (sft_epochs < 0) throw ConfigError("policy.sft_epochs must be >= 0");
  if (sft_lr < 0) throw ConfigError("policy.sft_lr must be >= 0");
}

void MgdSection::validate() const {
  net.validate();
  if (epochs < 0) throw ConfigError("mgd.epochs must be >= 0");
  if (lr < 0) throw ConfigError("mgd.lr must be >= 0");
}

grid::GridSpec PipelineConfig::grid() const {
  grid::GridSpec g{grid_rows, grid_cols, gen.h, gen.w};
  g.validate();
  return g;
}

void PipelineConfig::validate() const {
  grid();
  gen.validate();
  reward.validate();
  policy.validate();
  grpo.validate();
  mgd.validate();
  loss.validate();
  if (paths.data_dir.empty() || paths.checkpoints_dir.empty() || paths.reports_dir.empty())
    throw ConfigError("paths must be non-empty");
  std::set<std::string> distinct{paths.data_dir, paths.checkpoints_dir, paths.reports_dir};
  if (distinct.size() != 3) throw ConfigError("paths.{data,checkpoints,reports}_dir must differ");
}

json PipelineConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["grid"] = {{"rows", grid_rows}, {"cols", grid_cols}};
  json kinds = json::array();
  for (auto k : gen.kinds) kinds.push_back(scene::to_string(k));
  j["gen"] = {{"h", gen.h},
              {"w", gen.w},
              {"n_objects_min", gen.n_objects_min},
              {"n_objects_max", gen.n_objects_max},
              {"change_rate", gen.change_rate},
              {"kinds", kinds},
              {"snap", gen.snap},
              {"seed", gen.seed},
              {"perturb",
               {{"brightness", gen.perturb.brightness},
                {"tint", gen.perturb.tint},
                {"noise_sigma", gen.perturb.noise_sigma},
                {"extreme", gen.perturb.extreme},
                {"extreme_rate", gen.perturb.extreme_rate}}}};
  json tiers = json::array();
  for (auto& [t, b] : reward.bonus_tiers) tiers.push_back(json::array({t, b}));
  j["reward"] = {{"beta", reward.beta}, {"bonus_tiers", tiers}};
  j["policy"] = {{"hidden", policy.net.hidden},
                 {"temperature", policy.net.temperature},
                 {"sft_epochs", policy.sft_epochs},
                 {"sft_lr", policy.sft_lr}};
  j["grpo"] = {{"group_size", grpo.group_size},
               {"eps_std", grpo.eps_std},
               {"eps_clip", grpo.eps_clip},
               {"updates_per_group", grpo.updates_per_group},
               {"kl_coef", grpo.kl_coef},
               {"lr", grpo.lr},
               {"steps", grpo.steps},
               {"prompts_per_step", grpo.prompts_per_step},
               {"seed", grpo.seed}};
  j["mgd"] = {{"channels", mgd.net.channels},
              {"window", mgd.net.window},
              {"alpha_init", mgd.net.alpha_init},
              {"epochs", mgd.epochs},
              {"lr", mgd.lr}};
  j["loss"] = {{"fg_weight", loss.fg_weight},
               {"dice_eps", loss.dice_eps},
               {"prob_clamp", loss.prob_clamp}};
  j["paths"] = {{"data_dir", paths.data_dir},
                {"checkpoints_dir", paths.checkpoints_dir},
                {"reports_dir", paths.reports_dir}};
  return j;
}

namespace {

void check_keys(const json& j, const std::string& section,
                const std::set<std::string>& allowed) {
  if (!j.is_object())
    throw ConfigError("config section '" + section + "' must be an object");
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k))
      throw ConfigError("unknown config field '" + (section.empty() ? k : section + "." + k) +
                        "'");
}

template <typename T>
void get_field(const json& j, const std::string& section, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    j.at(key).get_to(out);
  } catch (const json::exception& e) {
    throw ConfigError("config field '" + (section.empty() ? std::string(key) : section + "." + key) +
                      "': " + e.what());
  }
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const json& j) {
  PipelineConfig c;
  check_keys(j, "", {"seed", "grid", "gen", "reward", "policy", "grpo", "mgd", "loss", "paths"});
  get_field(j, "", "seed", c.seed);
  if (j.contains("grid")) {
    const json& g = j.at("grid");
    check_keys(g, "grid", {"rows", "cols"});
    get_field(g, "grid", "rows", c.grid_rows);
    get_field(g, "grid", "cols", c.grid_cols);
  }
  if (j.contains("gen")) {
    const json& g = j.at("gen");
    check_keys(g, "gen",
               {"h", "w", "n_objects_min", "n_objects_max", "change_rate", "kinds", "snap",
                "seed", "perturb"});
    get_field(g, "gen", "h", c.gen.h);
    get_field(g, "gen", "w", c.gen.w);
    get_field(g, "gen", "n_objects_min", c.gen.n_objects_min);
    get_field(g, "gen", "n_objects_max", c.gen.n_objects_max);
    get_field(g, "gen", "change_rate", c.gen.change_rate);
    get_field(g, "gen", "snap", c.gen.snap);
    get_field(g, "gen", "seed", c.gen.seed);
    if (g.contains("kinds")) {
      std::vector<std::string> names;
      get_field(g, "gen", "kinds", names);
      c.gen.kinds.clear();
      for (const auto& n : names) c.gen.kinds.push_back(scene::change_kind_from_string(n));
    }
    if (g.contains("perturb")) {
      const json& p = g.at("perturb");
      check_keys(p, "gen.perturb", {"brightness", "tint", "noise_sigma", "extreme", "extreme_rate"});
      get_field(p, "gen.perturb", "brightness", c.gen.perturb.brightness);
      get_field(p, "gen.perturb", "tint", c.gen.perturb.tint);
      get_field(p, "gen.perturb", "noise_sigma", c.gen.perturb.noise_sigma);
      get_field(p, "gen.perturb", "extreme", c.gen.perturb.extreme);
      get_field(p, "gen.perturb", "extreme_rate", c.gen.perturb.extreme_rate);
    }
  }
  if (j.contains("reward")) {
    const json& r = j.at("reward");
    check_keys(r, "reward", {"beta", "bonus_tiers"});
    get_field(r, "reward", "beta", c.reward.beta);
    if (r.contains("bonus_tiers")) {
      std::vector<std::vector<double>> tiers;
      get_field(r, "reward", "bonus_tiers", tiers);
      c.reward.bonus_tiers.clear();
      for (const auto& t : tiers) {
        if (t.size() != 2)
          throw ConfigError("config field 'reward.bonus_tiers': each tier is [threshold,bonus]");
        c.reward.bonus_tiers.emplace_back(t[0], t[1]);
      }
    }
  }
  if (j.contains("policy")) {
    const json& p = j.at("policy");
    check_keys(p, "policy", {"hidden", "temperature", "sft_epochs", "sft_lr"});
    get_field(p, "policy", "hidden", c.policy.net.hidden);
    get_field(p, "policy", "temperature", c.policy.net.temperature);
    get_field(p, "policy", "sft_epochs", c.policy.sft_epochs);
    get_field(p, "policy", "sft_lr", c.policy.sft_lr);
  }
  if (j.contains("grpo")) {
    const json& g = j.at("grpo");
    check_keys(g, "grpo",
               {"group_size", "eps_std", "eps_clip", "updates_per_group", "kl_coef", "lr",
                "steps", "prompts_per_step", "seed"});
    get_field(g, "grpo", "group_size", c.grpo.group_size);
    get_field(g, "grpo", "eps_std", c.grpo.eps_std);
    get_field(g, "grpo", "eps_clip", c.grpo.eps_clip);
    get_field(g, "grpo", "updates_per_group", c.grpo.updates_per_group);
    get_field(g, "grpo", "kl_coef", c.grpo.kl_coef);
    get_field(g, "grpo", "lr", c.grpo.lr);
    get_field(g, "grpo", "steps", c.grpo.steps);
    get_field(g, "grpo", "prompts_per_step", c.grpo.prompts_per_step);
    get_field(g, "grpo", "seed", c.grpo.seed);
  }
  if (j.contains("mgd")) {
    const json& m = j.at("mgd");
    check_keys(m, "mgd", {"channels", "window", "alpha_init", "epochs", "lr"});
    get_field(m, "mgd", "channels", c.mgd.net.channels);
    get_field(m, "mgd", "window", c.mgd.net.window);
    get_field(m, "mgd", "alpha_init", c.mgd.net.alpha_init);
    get_field(m, "mgd", "epochs", c.mgd.epochs);
    get_field(m, "mgd", "lr", c.mgd.lr);
  }
  if (j.contains("loss")) {
    const json& l = j.at("loss");
    check_keys(l, "loss", {"fg_weight", "dice_eps", "prob_clamp"});
    get_field(l, "loss", "fg_weight", c.loss.fg_weight);
    get_field(l, "loss", "dice_eps", c.loss.dice_eps);
    get_field(l, "loss", "prob_clamp", c.loss.prob_clamp);
  }
  if (j.contains("paths")) {
    const json& p = j.at("paths");
    check_keys(p, "paths", {"data_dir", "checkpoints_dir", "reports_dir"});
    get_field(p, "paths", "data_dir", c.paths.data_dir);
    get_field(p, "paths", "checkpoints_dir", c.paths.checkpoints_dir);
    get_field(p, "paths", "reports_dir", c.paths.reports_dir);
  }
  // decoder input size always follows the generator
  c.mgd.net.input_h = c.gen.h;
  c.mgd.net.input_w = c.gen.w;
  c.validate();
  return c;
}

PipelineConfig load_config(const std::string& path) {
  if (path.empty()) {
    PipelineConfig c;
    c.mgd.net.input_h = c.gen.h;
    c.mgd.net.input_w = c.gen.w;
    c.validate();
    return c;
  }
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  }
  return PipelineConfig::from_json(j);
}

uint64_t fnv1a64(const void* data, size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  uint64_t h = 0xcbf29ce484222325ull;
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string file_checksum(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path + " for checksumming");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(bytes.data(), bytes.size())));
  return buf;
}

std::string config_hash(const PipelineConfig& cfg) {
  std::string canon = cfg.to_json().dump();  // object keys are sorted
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(canon.data(), canon.size())));
  return buf;
}

// ---------------------------------------------------------------- run manifests

namespace {

class RunScope {
 public:
  RunScope(const PipelineConfig& cfg, std::string command)
      : cfg_(cfg), command_(std::move(command)), start_(std::chrono::steady_clock::now()) {}

  void input(const std::string& path) { inputs_.push_back(path); }
  void output(const std::string& path) { outputs_.push_back(path); }

  template <typename F>
  auto run(F&& body) {
    try {
      if constexpr (std::is_void_v<decltype(body())>) {
        body();
        write("ok", "");
      } else {
        auto result = body();
        write("ok", "");
        return result;
      }
    } catch (const std::exception& e) {
      write("error", e.what());
      throw;
    }
  }

 private:
  void write(const std::string& status, const std::string& error) {
    json j;
    j["command"] = command_;
    j["config_hash"] = config_hash(cfg_);
    j["seed"] = cfg_.seed;
    j["inputs"] = inputs_;
    j["outputs"] = json::array();
    for (const auto& p : outputs_) {
      std::string sum;
      try {
        sum = file_checksum(p);
      } catch (const std::exception&) {
        sum = "unavailable";
      }
      j["outputs"].push_back({{"path", p}, {"checksum", sum}});
    }
    j["wall_time_s"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    j["status"] = status;
    j["error"] = error;
    std::error_code ec;
    fs::create_directories(cfg_.paths.reports_dir, ec);
    std::ofstream out(cfg_.paths.reports_dir + "/run_" + command_ + ".json");
    if (out) out << j.dump(2) << "\n";
    // a failing manifest write must not mask the command's own outcome
  }

  const PipelineConfig& cfg_;
  std::string command_;
  std::chrono::steady_clock::time_point start_;
  std::vector<std::string> inputs_;
  std::vector<std::string> outputs_;
};

void ensure_parent_dir(const std::string& path) {
  fs::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(p.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + p.parent_path().string());
  }
}

std::string pred_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%04d_pred.pgm", index);
  return buf;
}

std::string basename_of(const std::string& path) { return fs::path(path).filename().string(); }

json metrics_json(const metrics::Metrics& m) {
  return {{"precision", m.precision},
          {"recall", m.recall},
          {"f1", m.f1},
          {"iou", m.iou},
          {"oa", m.oa}};
}

json metrics_percent_json(const metrics::Metrics& m) {
  return {{"precision", 100.0 * m.precision},
          {"recall", 100.0 * m.recall},
          {"f1", 100.0 * m.f1},
          {"iou", 100.0 * m.iou},
          {"oa", 100.0 * m.oa}};
}

}  // namespace

std::string default_policy_sft_ckpt(const PipelineConfig& cfg) {
  return cfg.paths.checkpoints_dir + "/policy_sft.ckpt";
}
std::string default_policy_grpo_ckpt(const PipelineConfig& cfg) {
  return cfg.paths.checkpoints_dir + "/policy_grpo.ckpt";
}
std::string default_decoder_ckpt(const PipelineConfig& cfg) {
  return cfg.paths.checkpoints_dir + "/decoder.ckpt";
}

// ---------------------------------------------------------------- commands

scene::Manifest cmd_gen_data(const PipelineConfig& cfg, int n, const std::string& out_dir,
                             uint64_t seed_offset) {
  cfg.validate();
  RunScope scope(cfg, "gen-data");
  return scope.run([&] {
    scene::GenConfig g = cfg.gen;
    g.seed += seed_offset;
    std::string dir = out_dir.empty() ? cfg.paths.data_dir : out_dir;
    scene::Manifest m = scene::generate_dataset(g, cfg.grid(), n, dir);
    scope.output(dir + "/manifest.json");
    for (const auto& e : m.scenes) {
      scope.output(m.resolve(e.t1));
      scope.output(m.resolve(e.t2));
      scope.output(m.resolve(e.gt));
    }
    return m;
  });
}

std::string cmd_encode(const PipelineConfig& cfg, const std::string& mask_path) {
  grid::ChangeMask mask = io::read_pgm(mask_path);
  grid::GridSpec g{cfg.grid_rows, cfg.grid_cols, mask.h, mask.w};
  g.validate();
  return grid::serialize_runs(grid::block_labels_from_mask(mask, g));
}

void cmd_decode(const PipelineConfig& cfg, const std::string& runs, const std::string& out_path) {
  cfg.validate();
  RunScope scope(cfg, "decode");
  scope.run([&] {
    grid::BlockLabelSet blocks = grid::parse_runs(runs, cfg.grid());
    ensure_parent_dir(out_path);
    io::write_pgm(out_path, grid::coarse_mask_from_blocks(blocks));
    scope.output(out_path);
  });
}

nlohmann::json cmd_score(const PipelineConfig& cfg, const std::string& pred_jsonl,
                         const std::string& manifest_path, const std::string& out_report) {
  cfg.validate();
  RunScope scope(cfg, "score");
  scope.input(pred_jsonl);
  scope.input(manifest_path);
  return scope.run([&] {
    scene::Manifest m = scene::load_manifest(manifest_path);
    std::ifstream in(pred_jsonl);
    if (!in) throw IoError("cannot open " + pred_jsonl);
    json per_line = json::array();
    double sum_total = 0, sum_format = 0, sum_recall = 0;
    int count = 0;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      json rec;
      try {
        rec = json::parse(line);
      } catch (const json::exception& e) {
        throw IoError(pred_jsonl + ":" + std::to_string(lineno) + ": bad JSON: " + e.what());
      }
      int index;
      std::string raw;
      try {
        index = rec.at("index").get<int>();
        raw = rec.at("raw").get<std::string>();
      } catch (const json::exception& e) {
        throw IoError(pred_jsonl + ":" + std::to_string(lineno) + ": " + e.what());
      }
      if (index < 0 || size_t(index) >= m.scenes.size())
        throw IoError(pred_jsonl + ":" + std::to_string(lineno) + ": scene index " +
                      std::to_string(index) + " out of range");
      grid::BlockLabelSet gt = grid::parse_runs(m.scenes[size_t(index)].gt_runs, m.grid);
      reward::RewardBreakdown rb = reward::total_reward(raw, gt, cfg.reward);
      per_line.push_back({{"index", index},
                          {"format", rb.format},
                          {"precision", rb.precision},
                          {"recall", rb.recall},
                          {"accuracy", rb.accuracy},
                          {"bonus", rb.bonus},
                          {"total", rb.total}});
      sum_total += rb.total;
      sum_format += rb.format;
      sum_recall += rb.recall;
      ++count;
    }
    json report;
    report["per_line"] = per_line;
    report["aggregate"] = {{"count", count},
                           {"mean_total", count ? sum_total / count : 0.0},
                           {"mean_format", count ? sum_format / count : 0.0},
                           {"mean_recall", count ? sum_recall / count : 0.0}};
    std::string out = out_report.empty() ? cfg.paths.reports_dir + "/score.json" : out_report;
    ensure_parent_dir(out);
    std::ofstream rep(out);
    if (!rep) throw IoError("cannot open " + out + " for writing");
    rep << report.dump(2) << "\n";
    scope.output(out);
    return report;
  });
}

void cmd_sft(const PipelineConfig& cfg, const std::string& manifest_path,
             const std::string& out_ckpt) {
  cfg.validate();
  RunScope scope(cfg, "sft");
  scope.input(manifest_path);
  scope.run([&] {
    scene::Manifest m = scene::load_manifest(manifest_path);
    std::vector<policy::SftItem> items = policy::load_sft_items(m);
    policy::ReasonerPolicy pol(cfg.policy.net, cfg.seed);
    policy::sft_train(pol, items, cfg.policy.sft_epochs, cfg.policy.sft_lr, cfg.seed);
    std::string out = out_ckpt.empty() ? default_policy_sft_ckpt(cfg) : out_ckpt;
    ensure_parent_dir(out);
    pol.save(out);
    scope.output(out);
  });
}

void cmd_grpo(const PipelineConfig& cfg, const std::string& manifest_path,
              const std::string& init_ckpt, const std::string& out_ckpt,
              const std::string& log_path, int steps_override) {
  cfg.validate();
  RunScope scope(cfg, "grpo");
  scope.input(manifest_path);
  scope.run([&] {
    std::string init = init_ckpt.empty() ? default_policy_sft_ckpt(cfg) : init_ckpt;
    scope.input(init);
    policy::ReasonerPolicy pol = policy::ReasonerPolicy::load(init);
    scene::Manifest m = scene::load_manifest(manifest_path);
    std::vector<policy::SftItem> items = policy::load_sft_items(m);
    std::vector<grpo::Prompt> prompts;
    prompts.reserve(items.size());
    for (auto& it : items) prompts.push_back({std::move(it.features), std::move(it.gt)});
    grpo::GrpoConfig gcfg = cfg.grpo;
    if (steps_override >= 0) gcfg.steps = steps_override;
    std::string log = log_path.empty() ? cfg.paths.reports_dir + "/grpo_log.jsonl" : log_path;
    ensure_parent_dir(log);
    grpo::grpo_train(pol, prompts, cfg.reward, gcfg, log);
    std::string out = out_ckpt.empty() ? default_policy_grpo_ckpt(cfg) : out_ckpt;
    ensure_parent_dir(out);
    pol.save(out);
    scope.output(out);
    scope.output(log);
  });
}

void cmd_train_decoder(const PipelineConfig& cfg, const std::string& manifest_path,
                       const std::string& out_ckpt, const std::string& coarse,
                       const std::string& policy_ckpt, bool guidance) {
  cfg.validate();
  RunScope scope(cfg, "train-decoder");
  scope.input(manifest_path);
  scope.run([&] {
    mgd::CoarseSource src = mgd::coarse_source_from_string(coarse);
    scene::Manifest m = scene::load_manifest(manifest_path);
    mgd::MGDConfig net = cfg.mgd.net;
    net.guidance = guidance;
    mgd::MgdModel model(net, cfg.seed);
    policy::ReasonerPolicy pol(cfg.policy.net, cfg.seed);
    const policy::ReasonerPolicy* polp = nullptr;
    if (src == mgd::CoarseSource::reasoner) {
      std::string pc = policy_ckpt.empty() ? default_policy_grpo_ckpt(cfg) : policy_ckpt;
      scope.input(pc);
      pol = policy::ReasonerPolicy::load(pc);
      polp = &pol;
    }
    mgd::train_decoder(model, m, src, polp, cfg.mgd.epochs, cfg.mgd.lr, cfg.loss, cfg.seed);
    std::string out = out_ckpt.empty() ? default_decoder_ckpt(cfg) : out_ckpt;
    ensure_parent_dir(out);
    model.save(out);
    scope.output(out);
  });
}

void cmd_infer(const PipelineConfig& cfg, const std::string& manifest_path,
               const std::string& policy_ckpt, const std::string& decoder_ckpt,
               const std::string& out_dir, const std::string& coarse) {
  cfg.validate();
  RunScope scope(cfg, "infer");
  scope.input(manifest_path);
  scope.run([&] {
    mgd::CoarseSource src = mgd::coarse_source_from_string(coarse);
    scene::Manifest m = scene::load_manifest(manifest_path);
    std::string dc = decoder_ckpt.empty() ? default_decoder_ckpt(cfg) : decoder_ckpt;
    scope.input(dc);
    mgd::MgdModel model = mgd::MgdModel::load(dc);
    policy::ReasonerPolicy pol(cfg.policy.net, cfg.seed);
    bool use_policy = src == mgd::CoarseSource::reasoner;
    if (use_policy) {
      std::string pc = policy_ckpt.empty() ? default_policy_grpo_ckpt(cfg) : policy_ckpt;
      scope.input(pc);
      pol = policy::ReasonerPolicy::load(pc);
    }
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create directory " + out_dir);

    json sidecar;
    sidecar["threshold"] = 0.5;
    sidecar["alphas"] = model.alphas();
    sidecar["scenes"] = json::array();
    std::ofstream raw;  // reasoner transcripts, scoreable by `score`
    if (use_policy) {
      raw.open(out_dir + "/raw.jsonl");
      if (!raw) throw IoError("cannot open " + out_dir + "/raw.jsonl for writing");
    }
    for (size_t i = 0; i < m.scenes.size(); ++i) {
      const auto& e = m.scenes[i];
      io::ImageRGB t1 = io::read_ppm(m.resolve(e.t1));
      io::ImageRGB t2 = io::read_ppm(m.resolve(e.t2));
      grid::BlockLabelSet blocks;
      if (use_policy) {
        policy::BlockFeatures f = policy::featurize(t1, t2, m.grid);
        blocks = pol.greedy_decode(f, m.grid);
        grid::StructuredOutput so = policy::render_structured(pol.block_probs(f), blocks);
        raw << json{{"index", i}, {"raw", so.raw}}.dump() << "\n";
      } else {
        blocks = grid::parse_runs(e.gt_runs, m.grid);
      }
      grid::ChangeMask pred = model.predict(t1, t2, grid::coarse_mask_from_blocks(blocks));
      std::string path = out_dir + "/" + pred_name(int(i));
      io::write_pgm(path, pred);
      scope.output(path);
      sidecar["scenes"].push_back(pred_name(int(i)));
    }
    if (raw.is_open()) {
      raw.close();
      scope.output(out_dir + "/raw.jsonl");
    }
    std::ofstream side(out_dir + "/predictions.json");
    if (!side) throw IoError("cannot open " + out_dir + "/predictions.json for writing");
    side << sidecar.dump(2) << "\n";
    scope.output(out_dir + "/predictions.json");
  });
}

nlohmann::json cmd_eval(const PipelineConfig& cfg, const std::string& manifest_path,
                        const std::string& pred_dir, const std::string& out_report) {
  cfg.validate();
  RunScope scope(cfg, "eval");
  scope.input(manifest_path);
  scope.input(pred_dir);
  return scope.run([&] {
    scene::Manifest m = scene::load_manifest(manifest_path);
    metrics::ConfusionMatrix agg;
    json per_scene = json::array();
    for (size_t i = 0; i < m.scenes.size(); ++i) {
      const auto& e = m.scenes[i];
      grid::ChangeMask gt = io::read_pgm(m.resolve(e.gt));
      std::string pred_path = pred_dir + "/" + pred_name(int(i));
      if (!fs::exists(pred_path)) {
        std::string fallback = pred_dir + "/" + basename_of(e.gt);
        if (fs::exists(fallback))
          pred_path = fallback;
        else
          throw MissingArtifactError("no prediction for scene " + std::to_string(i) + " in " +
                                     pred_dir);
      }
      grid::ChangeMask pred = io::read_pgm(pred_path);
      metrics::ConfusionMatrix cm = metrics::confusion(pred, gt);
      agg += cm;
      json row = metrics_json(metrics::metrics(cm));
      row["scene"] = int(i);
      per_scene.push_back(row);
    }
    if (m.scenes.empty()) throw ConfigError("eval: manifest has no scenes");
    metrics::Metrics am = metrics::metrics(agg);
    json report;
    report["per_scene"] = per_scene;
    report["aggregate"] = metrics_json(am);
    report["aggregate"]["percent"] = metrics_percent_json(am);
    report["aggregate"]["pixels"] = {{"tp", agg.tp}, {"fp", agg.fp}, {"fn", agg.fn},
                                     {"tn", agg.tn}};
    std::string out = out_report.empty() ? cfg.paths.reports_dir + "/eval.json" : out_report;
    ensure_parent_dir(out);
    std::ofstream rep(out);
    if (!rep) throw IoError("cannot open " + out + " for writing");
    rep << report.dump(2) << "\n";
    scope.output(out);
    return report;
  });
}

}  // namespace cdkit::pipeline
