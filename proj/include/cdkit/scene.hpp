#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "cdkit/grid.hpp"
#include "cdkit/pnm.hpp"

namespace cdkit::scene {

// Semantic object-level edits between the two timestamps.
enum class ChangeKind { add, remove, resize };

ChangeKind change_kind_from_string(const std::string& s);
std::string to_string(ChangeKind k);

// Frame-level nuisance perturbations. These never touch ground truth: masks
// are derived from the pre-perturbation semantic layers.
struct PerturbConfig {
  double brightness = 0.05;   // global delta per frame, drawn from U[-b, b]
  double tint = 0.04;         // per-channel delta, drawn from U[-t, t]
  double noise_sigma = 0.012; // per-pixel gaussian noise
  bool extreme = false;       // worst case: +max on t1, -max on t2
  // Fraction of scene pairs drawn at the worst-case corner instead of
  // uniformly. Keeps strong frame-level shifts represented in training data so
  // downstream models learn to ignore them; the draw never touches gt.
  double extreme_rate = 0.25;
};

struct GenConfig {
  int h = 64;
  int w = 64;
  int n_objects_min = 3;
  int n_objects_max = 6;
  double change_rate = 0.5;  // fraction of objects mutated between frames
  std::vector<ChangeKind> kinds = {ChangeKind::add, ChangeKind::remove, ChangeKind::resize};
  PerturbConfig perturb;
  int snap = 4;  // rectangle corners land on this pixel grid
  uint64_t seed = 1234;

  void validate() const;
};

struct ScenePair {
  io::ImageRGB t1;
  io::ImageRGB t2;
  grid::ChangeMask gt;
  uint64_t seed = 0;
};

// Deterministic: same cfg -> bit-identical pair. gt depends only on the
// semantic draws, never on perturb settings.
ScenePair generate(const GenConfig& cfg);

struct SceneEntry {
  std::string t1;  // paths relative to the manifest directory
  std::string t2;
  std::string gt;
  uint64_t seed = 0;
  std::string gt_runs;  // changed-block run string on the dataset grid
};

struct Manifest {
  grid::GridSpec grid;
  std::vector<SceneEntry> scenes;
  std::string dir;  // directory the manifest lives in (not serialized)

  std::string resolve(const std::string& rel) const;
};

// Writes scene_%04d_{t1,t2}.ppm + _gt.pgm per scene plus manifest.json into
// out_dir. Scene i uses seed cfg.seed + i.
Manifest generate_dataset(const GenConfig& cfg, const grid::GridSpec& grid, int n,
                          const std::string& out_dir);

void save_manifest(const Manifest& m, const std::string& path);
Manifest load_manifest(const std::string& path);

}  // namespace cdkit::scene
