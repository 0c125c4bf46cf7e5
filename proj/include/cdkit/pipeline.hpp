#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "cdkit/grid.hpp"
#include "cdkit/grpo.hpp"
#include "cdkit/metrics.hpp"
#include "cdkit/mgd.hpp"
#include "cdkit/policy.hpp"
#include "cdkit/reward.hpp"
#include "cdkit/scene.hpp"
#include "json.hpp"

namespace cdkit::pipeline {

struct PolicySection {
  policy::PolicyConfig net;  // hidden, temperature
  int sft_epochs = 50;
  double sft_lr = 0.01;
  void validate() const;
};

struct MgdSection {
  mgd::MGDConfig net;  // input dims are synced from gen.h/gen.w
  int epochs = 8;
  double lr = 2e-3;
  void validate() const;
};

struct Paths {
  std::string data_dir = "data";
  std::string checkpoints_dir = "checkpoints";
  std::string reports_dir = "reports";
};

struct PipelineConfig {
  int grid_rows = 8;
  int grid_cols = 8;
  scene::GenConfig gen;
  reward::RewardConfig reward;
  PolicySection policy;
  grpo::GrpoConfig grpo;
  MgdSection mgd;
  metrics::LossConfig loss;
  Paths paths;
  uint64_t seed = 42;

  grid::GridSpec grid() const;
  void validate() const;
  nlohmann::json to_json() const;
  // Rejects unknown keys and reports bad fields by dotted path.
  static PipelineConfig from_json(const nlohmann::json& j);
};

// Empty path -> defaults. Otherwise parse + validate the file.
PipelineConfig load_config(const std::string& path);

uint64_t fnv1a64(const void* data, size_t n);
std::string file_checksum(const std::string& path);  // fnv1a64 as 16 hex chars
// Hash of the canonical (key-sorted) JSON encoding; stable across field order.
std::string config_hash(const PipelineConfig& cfg);

// ---- stage commands (the CLI and the python module are thin shims over
// these). Every artifact-producing command writes reports_dir/run_<cmd>.json,
// also on failure with the error recorded.

scene::Manifest cmd_gen_data(const PipelineConfig& cfg, int n, const std::string& out_dir,
                             uint64_t seed_offset = 0);

// Grid rows/cols from config; image dims from the mask itself.
std::string cmd_encode(const PipelineConfig& cfg, const std::string& mask_path);
void cmd_decode(const PipelineConfig& cfg, const std::string& runs, const std::string& out_path);

// pred_jsonl: one {"index": i, "raw": "<think>..."} object per line.
nlohmann::json cmd_score(const PipelineConfig& cfg, const std::string& pred_jsonl,
                         const std::string& manifest_path, const std::string& out_report = "");

void cmd_sft(const PipelineConfig& cfg, const std::string& manifest_path,
             const std::string& out_ckpt = "");

void cmd_grpo(const PipelineConfig& cfg, const std::string& manifest_path,
              const std::string& init_ckpt, const std::string& out_ckpt = "",
              const std::string& log_path = "", int steps_override = -1);

void cmd_train_decoder(const PipelineConfig& cfg, const std::string& manifest_path,
                       const std::string& out_ckpt = "", const std::string& coarse = "oracle",
                       const std::string& policy_ckpt = "", bool guidance = true);

void cmd_infer(const PipelineConfig& cfg, const std::string& manifest_path,
               const std::string& policy_ckpt, const std::string& decoder_ckpt,
               const std::string& out_dir, const std::string& coarse = "reasoner");

nlohmann::json cmd_eval(const PipelineConfig& cfg, const std::string& manifest_path,
                        const std::string& pred_dir, const std::string& out_report = "");

// default artifact locations
std::string default_policy_sft_ckpt(const PipelineConfig& cfg);
std::string default_policy_grpo_ckpt(const PipelineConfig& cfg);
std::string default_decoder_ckpt(const PipelineConfig& cfg);

}  // namespace cdkit::pipeline
