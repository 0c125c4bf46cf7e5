// cdkit command line: dataset generation, coarse codec, reward scoring, and
// the train/infer/eval stages. Thin shims over cdkit::pipeline.
#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "cdkit/errors.hpp"
#include "cdkit/pipeline.hpp"

using namespace cdkit;

namespace {

// "8x8" / "16x16" -> (rows, cols)
std::pair<int, int> parse_grid_arg(const std::string& s) {
  size_t x = s.find('x');
  if (x == std::string::npos || x == 0 || x + 1 == s.size())
    throw ConfigError("--grid expects ROWSxCOLS, got '" + s + "'");
  try {
    size_t pos1 = 0, pos2 = 0;
    int rows = std::stoi(s.substr(0, x), &pos1);
    int cols = std::stoi(s.substr(x + 1), &pos2);
    if (pos1 != x || pos2 != s.size() - x - 1) throw std::invalid_argument(s);
    return {rows, cols};
  } catch (const std::exception&) {
    throw ConfigError("--grid expects ROWSxCOLS, got '" + s + "'");
  }
}

int dispatch(int argc, char** argv) {
  CLI::App app{"change-detection toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  if (const char* env = std::getenv("CDKIT_CONFIG")) config_path = env;
  app.add_option("--config", config_path, "JSON config file (env: CDKIT_CONFIG)");
  std::string grid_arg;
  app.add_option("--grid", grid_arg, "grid override, e.g. 8x8 or 16x16");
  int threads = 1;
  app.add_option("--threads", threads, "worker threads (current build runs single-threaded)");

  auto* gen = app.add_subcommand("gen-data", "generate a bi-temporal dataset");
  int gen_n = 100;
  std::string gen_out;
  uint64_t gen_seed_offset = 0;
  gen->add_option("--n", gen_n, "number of scenes");
  gen->add_option("--out", gen_out, "output directory (default: paths.data_dir)");
  gen->add_option("--seed-offset", gen_seed_offset, "added to gen.seed, for disjoint splits");

  auto* enc = app.add_subcommand("encode", "binary mask -> changed-block run string");
  std::string enc_mask;
  enc->add_option("--mask", enc_mask, "PGM mask to encode")->required();

  auto* dec = app.add_subcommand("decode", "run string -> block-resolution mask");
  std::string dec_runs, dec_out;
  dec->add_option("--runs", dec_runs, "run string, e.g. '0-2,5' or 'none'")->required();
  dec->add_option("--out", dec_out, "output PGM path")->required();

  auto* score = app.add_subcommand("score", "reward-score structured outputs");
  std::string score_pred, score_manifest, score_out;
  score->add_option("--pred", score_pred, "JSONL with {index, raw} per line")->required();
  score->add_option("--manifest", score_manifest, "dataset manifest.json")->required();
  score->add_option("--out", score_out, "report path (default: reports/score.json)");

  auto* sft = app.add_subcommand("sft", "supervised warm-start of the block reasoner");
  std::string sft_manifest, sft_out;
  sft->add_option("--manifest", sft_manifest, "training manifest.json")->required();
  sft->add_option("--out", sft_out, "checkpoint path (default: checkpoints/policy_sft.ckpt)");

  auto* grpo_cmd = app.add_subcommand("grpo", "group-relative policy optimization");
  std::string grpo_manifest, grpo_init, grpo_out, grpo_log;
  int grpo_steps = -1;
  grpo_cmd->add_option("--manifest", grpo_manifest, "training manifest.json")->required();
  grpo_cmd->add_option("--init", grpo_init, "starting checkpoint (default: the sft one)");
  grpo_cmd->add_option("--out", grpo_out, "checkpoint path (default: checkpoints/policy_grpo.ckpt)");
  grpo_cmd->add_option("--log", grpo_log, "JSONL step log (default: reports/grpo_log.jsonl)");
  grpo_cmd->add_option("--steps", grpo_steps, "override grpo.steps from the config");

  auto* td = app.add_subcommand("train-decoder", "train the mask-guided pixel decoder");
  std::string td_manifest, td_out, td_coarse = "oracle", td_policy;
  bool td_no_guidance = false;
  td->add_option("--manifest", td_manifest, "training manifest.json")->required();
  td->add_option("--out", td_out, "checkpoint path (default: checkpoints/decoder.ckpt)");
  td->add_option("--coarse", td_coarse, "coarse mask source: oracle|reasoner");
  td->add_option("--policy", td_policy, "reasoner checkpoint when --coarse reasoner");
  td->add_flag("--no-guidance", td_no_guidance, "train with mask guidance disabled");

  auto* infer = app.add_subcommand("infer", "predict change masks for a dataset");
  std::string in_manifest, in_policy, in_decoder, in_out, in_coarse = "reasoner";
  infer->add_option("--manifest", in_manifest, "dataset manifest.json")->required();
  infer->add_option("--policy", in_policy, "reasoner checkpoint (default: the grpo one)");
  infer->add_option("--decoder", in_decoder, "decoder checkpoint (default: checkpoints/decoder.ckpt)");
  infer->add_option("--out", in_out, "prediction directory")->required();
  infer->add_option("--coarse", in_coarse, "coarse mask source: oracle|reasoner");

  auto* eval = app.add_subcommand("eval", "pixel metrics of predictions vs ground truth");
  std::string ev_manifest, ev_pred, ev_out;
  eval->add_option("--manifest", ev_manifest, "dataset manifest.json")->required();
  eval->add_option("--pred", ev_pred, "directory with predicted masks")->required();
  eval->add_option("--out", ev_out, "report path (default: reports/eval.json)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (threads < 1) throw ConfigError("--threads must be >= 1");

  pipeline::PipelineConfig cfg = pipeline::load_config(config_path);
  if (!grid_arg.empty()) {
    auto [rows, cols] = parse_grid_arg(grid_arg);
    cfg.grid_rows = rows;
    cfg.grid_cols = cols;
    cfg.validate();
  }

  if (gen->parsed()) {
    scene::Manifest m = pipeline::cmd_gen_data(cfg, gen_n, gen_out, gen_seed_offset);
    std::cout << "wrote " << m.scenes.size() << " scenes to " << m.dir << "\n";
  } else if (enc->parsed()) {
    std::cout << pipeline::cmd_encode(cfg, enc_mask) << "\n";
  } else if (dec->parsed()) {
    pipeline::cmd_decode(cfg, dec_runs, dec_out);
    std::cout << "wrote " << dec_out << "\n";
  } else if (score->parsed()) {
    nlohmann::json rep = pipeline::cmd_score(cfg, score_pred, score_manifest, score_out);
    std::cout << rep["aggregate"].dump(2) << "\n";
  } else if (sft->parsed()) {
    pipeline::cmd_sft(cfg, sft_manifest, sft_out);
    std::cout << "saved " << (sft_out.empty() ? pipeline::default_policy_sft_ckpt(cfg) : sft_out)
              << "\n";
  } else if (grpo_cmd->parsed()) {
    pipeline::cmd_grpo(cfg, grpo_manifest, grpo_init, grpo_out, grpo_log, grpo_steps);
    std::cout << "saved "
              << (grpo_out.empty() ? pipeline::default_policy_grpo_ckpt(cfg) : grpo_out) << "\n";
  } else if (td->parsed()) {
    pipeline::cmd_train_decoder(cfg, td_manifest, td_out, td_coarse, td_policy, !td_no_guidance);
    std::cout << "saved " << (td_out.empty() ? pipeline::default_decoder_ckpt(cfg) : td_out)
              << "\n";
  } else if (infer->parsed()) {
    pipeline::cmd_infer(cfg, in_manifest, in_policy, in_decoder, in_out, in_coarse);
    std::cout << "wrote predictions to " << in_out << "\n";
  } else if (eval->parsed()) {
    nlohmann::json rep = pipeline::cmd_eval(cfg, ev_manifest, ev_pred, ev_out);
    std::cout << rep["aggregate"].dump(2) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return dispatch(argc, argv);
  } catch (const MissingArtifactError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const grid::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const grid::FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
