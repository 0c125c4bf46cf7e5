#include "cdkit/scene.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "cdkit/errors.hpp"
#include "cdkit/rng.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace cdkit::scene {

namespace {

// Stream salts: semantic content, texture jitter and perturbations must never
// share a stream, otherwise toggling perturb settings would shift the object
// draws and break the gt-invariance contract.
constexpr uint64_t kSaltSemantic = 0x5ce7e5e3;
constexpr uint64_t kSaltTexture = 0x7e87a3e1;
constexpr uint64_t kSaltPerturb = 0x9e3779b9;
constexpr uint64_t kSaltRegime = 0x2545f491;

struct Rect {
  int x0, y0, x1, y1;  // half-open
  bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
};

struct Obj {
  Rect r1, r2;       // footprint per frame (equal unless resized)
  double color[3];   // flat base color
  int uid;           // keys the texture jitter
  bool in_t1, in_t2;
};

// Deterministic per-pixel texture in [-amp, amp], keyed so a surviving object
// renders bit-identically in both frames.
double jitter(uint64_t tex_seed, int x, int y, int uid, int c) {
  uint64_t h = mix_seed(mix_seed(mix_seed(mix_seed(tex_seed, uint64_t(x)), uint64_t(y)),
                                 uint64_t(uid)),
                        uint64_t(c));
  constexpr double amp = 0.02;
  return ((h >> 11) * 0x1.0p-53 - 0.5) * 2.0 * amp;
}

using Raster = std::vector<double>;  // h*w*3 in [0,1]

Raster render_semantic(const GenConfig& cfg, const std::vector<Obj>& objs, bool second,
                       uint64_t tex_seed, const double bg[3]) {
  Raster out(size_t(cfg.h) * cfg.w * 3);
  for (int y = 0; y < cfg.h; ++y)
    for (int x = 0; x < cfg.w; ++x)
      for (int c = 0; c < 3; ++c)
        out[(size_t(y) * cfg.w + x) * 3 + c] = bg[c] + jitter(tex_seed, x, y, 0, c);
  for (const Obj& o : objs) {
    if (second ? !o.in_t2 : !o.in_t1) continue;
    const Rect& r = second ? o.r2 : o.r1;
    for (int y = r.y0; y < r.y1; ++y)
      for (int x = r.x0; x < r.x1; ++x)
        for (int c = 0; c < 3; ++c)
          out[(size_t(y) * cfg.w + x) * 3 + c] = o.color[c] + jitter(tex_seed, x, y, o.uid, c);
  }
  return out;
}

io::ImageRGB perturb_and_quantize(const Raster& sem, const GenConfig& cfg, Rng& rng,
                                  bool second, bool extreme) {
  const PerturbConfig& p = cfg.perturb;
  double db, tint[3];
  if (extreme) {
    // Worst case inside the configured ranges: the frames are pushed in
    // opposite directions.
    double s = second ? -1.0 : 1.0;
    db = s * p.brightness;
    for (double& t : tint) t = s * p.tint;
  } else {
    db = rng.uniform(-p.brightness, p.brightness);
    for (double& t : tint) t = rng.uniform(-p.tint, p.tint);
  }
  io::ImageRGB img = io::ImageRGB::zeros(cfg.h, cfg.w);
  for (size_t i = 0; i < sem.size(); ++i) {
    double v = sem[i] + db + tint[i % 3];
    if (p.noise_sigma > 0) v += rng.normal(0.0, p.noise_sigma);
    v = std::clamp(v, 0.0, 1.0);
    img.data[i] = uint8_t(std::lround(v * 255.0));
  }
  return img;
}

}  // namespace

ChangeKind change_kind_from_string(const std::string& s) {
  if (s == "add") return ChangeKind::add;
  if (s == "remove") return ChangeKind::remove;
  if (s == "resize") return ChangeKind::resize;
  throw ConfigError("unknown change kind '" + s + "'");
}

std::string to_string(ChangeKind k) {
  switch (k) {
    case ChangeKind::add: return "add";
    case ChangeKind::remove: return "remove";
    case ChangeKind::resize: return "resize";
  }
  return "?";
}

void GenConfig::validate() const {
  if (h < 16 || w < 16) throw ConfigError("gen.h/gen.w too small (min 16)");
  if (h % 8 != 0 || w % 8 != 0) throw ConfigError("gen.h and gen.w must be divisible by 8");
  if (n_objects_min < 0 || n_objects_max < n_objects_min)
    throw ConfigError("gen.n_objects range invalid");
  if (change_rate < 0.0 || change_rate > 1.0) throw ConfigError("gen.change_rate must be in [0,1]");
  if (kinds.empty()) throw ConfigError("gen.kinds must not be empty");
  if (perturb.brightness < 0 || perturb.tint < 0 || perturb.noise_sigma < 0)
    throw ConfigError("gen.perturb magnitudes must be >= 0");
  if (perturb.extreme_rate < 0.0 || perturb.extreme_rate > 1.0)
    throw ConfigError("gen.perturb.extreme_rate must be in [0,1]");
  if (snap < 1 || snap * 2 > std::min(h, w)) throw ConfigError("gen.snap out of range");
}

ScenePair generate(const GenConfig& cfg) {
  cfg.validate();
  Rng sem(mix_seed(cfg.seed, kSaltSemantic));
  Rng per(mix_seed(cfg.seed, kSaltPerturb));
  uint64_t tex_seed = mix_seed(cfg.seed, kSaltTexture);

  double bg[3];
  for (double& c : bg) c = sem.uniform(0.10, 0.35);

  int n = sem.uniform_int(cfg.n_objects_min, cfg.n_objects_max);
  std::vector<Obj> objs;
  objs.reserve(size_t(n));
  const int snap = cfg.snap;
  auto draw_rect = [&](Rng& r) {
    int max_wu = std::min(6, (cfg.w / 2) / snap);
    int max_hu = std::min(6, (cfg.h / 2) / snap);
    int wu = r.uniform_int(std::min(3, max_wu), max_wu);
    int hu = r.uniform_int(std::min(3, max_hu), max_hu);
    int ow = wu * snap, oh = hu * snap;
    int x0 = snap * r.uniform_int(0, (cfg.w - ow) / snap);
    int y0 = snap * r.uniform_int(0, (cfg.h - oh) / snap);
    return Rect{x0, y0, x0 + ow, y0 + oh};
  };
  for (int i = 0; i < n; ++i) {
    Obj o;
    o.uid = i + 1;
    o.r1 = o.r2 = draw_rect(sem);
    for (double& c : o.color) c = sem.uniform(0.55, 0.95);
    o.in_t1 = o.in_t2 = true;
    if (sem.bernoulli(cfg.change_rate)) {
      ChangeKind k = cfg.kinds[size_t(sem.uniform_int(0, int(cfg.kinds.size()) - 1))];
      switch (k) {
        case ChangeKind::add: o.in_t1 = false; break;
        case ChangeKind::remove: o.in_t2 = false; break;
        case ChangeKind::resize: {
          // grow/shrink each dim by whole snap units; guaranteed to differ
          Rect r = o.r1;
          for (int attempt = 0; attempt < 8; ++attempt) {
            int dw = snap * sem.uniform_int(-2, 2);
            int dh = snap * sem.uniform_int(-2, 2);
            int nw = std::clamp(r.x1 - r.x0 + dw, snap, cfg.w - r.x0);
            int nh = std::clamp(r.y1 - r.y0 + dh, snap, cfg.h - r.y0);
            o.r2 = Rect{r.x0, r.y0, r.x0 + nw, r.y0 + nh};
            if (nw != r.x1 - r.x0 || nh != r.y1 - r.y0) break;
          }
          if (o.r2.x1 == o.r1.x1 && o.r2.y1 == o.r1.y1) {
            // stubborn draws: force a shrink (or grow at minimum size)
            int ow = o.r1.x1 - o.r1.x0;
            int nw = ow > snap ? ow - snap : ow + snap;
            o.r2 = Rect{o.r1.x0, o.r1.y0, std::min(o.r1.x0 + nw, cfg.w), o.r1.y1};
          }
          break;
        }
      }
    }
    objs.push_back(o);
  }

  Raster sem1 = render_semantic(cfg, objs, false, tex_seed, bg);
  Raster sem2 = render_semantic(cfg, objs, true, tex_seed, bg);

  ScenePair pair;
  pair.seed = cfg.seed;
  pair.gt = grid::ChangeMask::zeros(cfg.h, cfg.w);
  for (size_t i = 0; i < pair.gt.values.size(); ++i) {
    const size_t b = i * 3;
    pair.gt.values[i] =
        (sem1[b] != sem2[b] || sem1[b + 1] != sem2[b + 1] || sem1[b + 2] != sem2[b + 2]) ? 1 : 0;
  }
  // The regime draw lives on its own stream: flipping a scene to the extreme
  // corner must not shift the brightness/tint/noise draws of other scenes.
  bool extreme = cfg.perturb.extreme ||
                 Rng(mix_seed(cfg.seed, kSaltRegime)).bernoulli(cfg.perturb.extreme_rate);
  pair.t1 = perturb_and_quantize(sem1, cfg, per, false, extreme);
  pair.t2 = perturb_and_quantize(sem2, cfg, per, true, extreme);
  return pair;
}

std::string Manifest::resolve(const std::string& rel) const {
  if (rel.empty() || rel.front() == '/' || dir.empty()) return rel;
  return dir + "/" + rel;
}

Manifest generate_dataset(const GenConfig& cfg, const grid::GridSpec& grid, int n,
                          const std::string& out_dir) {
  cfg.validate();
  grid.validate();
  if (grid.image_h != cfg.h || grid.image_w != cfg.w)
    throw ConfigError("grid image dims do not match gen.h/gen.w");
  if (n < 0) throw ConfigError("scene count must be >= 0");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create directory " + out_dir + ": " + ec.message());

  Manifest m;
  m.grid = grid;
  m.dir = out_dir;
  char name[64];
  for (int i = 0; i < n; ++i) {
    GenConfig scfg = cfg;
    scfg.seed = cfg.seed + uint64_t(i);
    ScenePair pair = generate(scfg);
    SceneEntry e;
    e.seed = scfg.seed;
    std::snprintf(name, sizeof name, "scene_%04d_t1.ppm", i);
    e.t1 = name;
    std::snprintf(name, sizeof name, "scene_%04d_t2.ppm", i);
    e.t2 = name;
    std::snprintf(name, sizeof name, "scene_%04d_gt.pgm", i);
    e.gt = name;
    io::write_ppm(m.resolve(e.t1), pair.t1);
    io::write_ppm(m.resolve(e.t2), pair.t2);
    io::write_pgm(m.resolve(e.gt), pair.gt);
    e.gt_runs = grid::serialize_runs(grid::block_labels_from_mask(pair.gt, grid));
    m.scenes.push_back(std::move(e));
  }
  save_manifest(m, out_dir + "/manifest.json");
  return m;
}

void save_manifest(const Manifest& m, const std::string& path) {
  nlohmann::json j;
  j["grid"] = {{"rows", m.grid.rows},
               {"cols", m.grid.cols},
               {"image_h", m.grid.image_h},
               {"image_w", m.grid.image_w}};
  j["scenes"] = nlohmann::json::array();
  for (const SceneEntry& e : m.scenes)
    j["scenes"].push_back({{"t1", e.t1},
                           {"t2", e.t2},
                           {"gt", e.gt},
                           {"seed", e.seed},
                           {"gt_runs", e.gt_runs}});
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << j.dump(2) << "\n";
  if (!out) throw IoError("short write to " + path);
}

Manifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad manifest " + path + ": " + e.what());
  }
  Manifest m;
  try {
    m.grid.rows = j.at("grid").at("rows").get<int>();
    m.grid.cols = j.at("grid").at("cols").get<int>();
    m.grid.image_h = j.at("grid").at("image_h").get<int>();
    m.grid.image_w = j.at("grid").at("image_w").get<int>();
    for (const auto& je : j.at("scenes")) {
      SceneEntry e;
      e.t1 = je.at("t1").get<std::string>();
      e.t2 = je.at("t2").get<std::string>();
      e.gt = je.at("gt").get<std::string>();
      e.seed = je.at("seed").get<uint64_t>();
      e.gt_runs = je.at("gt_runs").get<std::string>();
      m.scenes.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad manifest " + path + ": " + e.what());
  }
  m.grid.validate();
  fs::path p(path);
  m.dir = p.has_parent_path() ? p.parent_path().string() : std::string(".");
  return m;
}

}  // namespace cdkit::scene
