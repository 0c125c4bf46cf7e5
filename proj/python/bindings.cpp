// Python module: thin wrappers over the pipeline stage commands plus the
// block codec and reward scorer for quick experimentation.
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cdkit/errors.hpp"
#include "cdkit/pipeline.hpp"
#include "cdkit/reward.hpp"

namespace py = pybind11;
using namespace cdkit;

namespace {

pipeline::PipelineConfig cfg_from(const std::string& config_path) {
  return pipeline::load_config(config_path);
}

// nlohmann::json -> native python objects, via the stdlib json module
py::object to_py(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

grid::GridSpec grid_for_blocks(int rows, int cols) {
  // the codec only cares about block indices; pick matching pixel dims
  grid::GridSpec g{rows, cols, rows * 8, cols * 8};
  g.validate();
  return g;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "change-detection toolkit core";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<MissingArtifactError>(m, "MissingArtifactError", PyExc_FileNotFoundError);
  py::register_exception<grid::ParseError>(m, "RunParseError", PyExc_ValueError);
  py::register_exception<grid::FormatError>(m, "FormatError", PyExc_ValueError);

  m.def(
      "parse_runs",
      [](const std::string& text, int rows, int cols, bool strict) {
        grid::BlockLabelSet s = grid::parse_runs(text, grid_for_blocks(rows, cols), strict);
        return std::vector<int>(s.changed.begin(), s.changed.end());
      },
      py::arg("text"), py::arg("rows") = 8, py::arg("cols") = 8, py::arg("strict") = false,
      "Parse a changed-block run string into sorted block indices.");

  m.def(
      "serialize_runs",
      [](const std::vector<int>& blocks, int rows, int cols) {
        grid::BlockLabelSet s{grid_for_blocks(rows, cols), {blocks.begin(), blocks.end()}};
        s.validate();
        return grid::serialize_runs(s);
      },
      py::arg("blocks"), py::arg("rows") = 8, py::arg("cols") = 8,
      "Canonical run string for a set of block indices.");

  m.def(
      "reward",
      [](const std::string& raw, const std::string& gt_runs, int rows, int cols) {
        grid::GridSpec g = grid_for_blocks(rows, cols);
        grid::BlockLabelSet gt = grid::parse_runs(gt_runs, g);
        reward::RewardConfig rcfg;
        reward::RewardBreakdown b = reward::total_reward(raw, gt, rcfg);
        py::dict d;
        d["format"] = b.format;
        d["precision"] = b.precision;
        d["recall"] = b.recall;
        d["accuracy"] = b.accuracy;
        d["bonus"] = b.bonus;
        d["total"] = b.total;
        return d;
      },
      py::arg("raw"), py::arg("gt_runs"), py::arg("rows") = 8, py::arg("cols") = 8,
      "Score one structured output against ground-truth runs (default reward settings).");

  m.def(
      "gen_data",
      [](int n, const std::string& out_dir, const std::string& config, uint64_t seed_offset) {
        scene::Manifest man = pipeline::cmd_gen_data(cfg_from(config), n, out_dir, seed_offset);
        py::dict d;
        d["dir"] = man.dir;
        d["n_scenes"] = man.scenes.size();
        d["manifest"] = man.dir + "/manifest.json";
        return d;
      },
      py::arg("n"), py::arg("out_dir") = "", py::arg("config") = "", py::arg("seed_offset") = 0);

  m.def(
      "encode",
      [](const std::string& mask_path, const std::string& config) {
        return pipeline::cmd_encode(cfg_from(config), mask_path);
      },
      py::arg("mask_path"), py::arg("config") = "");

  m.def(
      "decode",
      [](const std::string& runs, const std::string& out_path, const std::string& config) {
        pipeline::cmd_decode(cfg_from(config), runs, out_path);
      },
      py::arg("runs"), py::arg("out_path"), py::arg("config") = "");

  m.def(
      "score",
      [](const std::string& pred_jsonl, const std::string& manifest, const std::string& config,
         const std::string& out) {
        return to_py(pipeline::cmd_score(cfg_from(config), pred_jsonl, manifest, out));
      },
      py::arg("pred_jsonl"), py::arg("manifest"), py::arg("config") = "", py::arg("out") = "");

  m.def(
      "sft",
      [](const std::string& manifest, const std::string& config, const std::string& out) {
        pipeline::cmd_sft(cfg_from(config), manifest, out);
      },
      py::arg("manifest"), py::arg("config") = "", py::arg("out") = "");

  m.def(
      "grpo",
      [](const std::string& manifest, const std::string& config, const std::string& init,
         const std::string& out, const std::string& log, int steps) {
        pipeline::cmd_grpo(cfg_from(config), manifest, init, out, log, steps);
      },
      py::arg("manifest"), py::arg("config") = "", py::arg("init") = "", py::arg("out") = "",
      py::arg("log") = "", py::arg("steps") = -1);

  m.def(
      "train_decoder",
      [](const std::string& manifest, const std::string& config, const std::string& out,
         const std::string& coarse, const std::string& policy, bool guidance) {
        pipeline::cmd_train_decoder(cfg_from(config), manifest, out, coarse, policy, guidance);
      },
      py::arg("manifest"), py::arg("config") = "", py::arg("out") = "",
      py::arg("coarse") = "oracle", py::arg("policy") = "", py::arg("guidance") = true);

  m.def(
      "infer",
      [](const std::string& manifest, const std::string& out_dir, const std::string& config,
         const std::string& policy, const std::string& decoder, const std::string& coarse) {
        pipeline::cmd_infer(cfg_from(config), manifest, policy, decoder, out_dir, coarse);
      },
      py::arg("manifest"), py::arg("out_dir"), py::arg("config") = "", py::arg("policy") = "",
      py::arg("decoder") = "", py::arg("coarse") = "reasoner");

  m.def(
      "evaluate",
      [](const std::string& manifest, const std::string& pred_dir, const std::string& config,
         const std::string& out) {
        return to_py(pipeline::cmd_eval(cfg_from(config), manifest, pred_dir, out));
      },
      py::arg("manifest"), py::arg("pred_dir"), py::arg("config") = "", py::arg("out") = "");

  m.def(
      "config_defaults",
      [](const std::string& config) { return to_py(cfg_from(config).to_json()); },
      py::arg("config") = "", "Fully resolved config as a dict (path '' -> built-in defaults).");
}
