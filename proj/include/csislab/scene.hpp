#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "csislab/common.hpp"
#include "csislab/geometry.hpp"
#include "csislab/image.hpp"
#include "csislab/image_io.hpp"
#include "csislab/parallel.hpp"
#include "csislab/procedural.hpp"
#include "csislab/rng.hpp"
#include "csislab/transforms.hpp"

namespace csislab {

// ==========================================================================
// Scenes

enum class ConditionKind { Base, Lighting, Layout };

/// Environmental variant of a scene: "base", "lighting-<i>" or "layout-<i>".
struct SceneCondition {
  ConditionKind kind = ConditionKind::Base;
  int index = 0;

  std::string label() const {
    switch (kind) {
      case ConditionKind::Base: return "base";
      case ConditionKind::Lighting: return "lighting-" + std::to_string(index);
      case ConditionKind::Layout: return "layout-" + std::to_string(index);
    }
    return "?";
  }

  static SceneCondition parse(std::string_view s) {
    if (s == "base") return {};
    auto dash = s.rfind('-');
    require(dash != std::string_view::npos, ErrorCode::InvalidArgument, "bad condition '" + std::string(s) + "'");
    const auto head = s.substr(0, dash);
    const int idx = std::stoi(std::string(s.substr(dash + 1)));
    if (head == "lighting") return {ConditionKind::Lighting, idx};
    if (head == "layout") return {ConditionKind::Layout, idx};
    throw Error(ErrorCode::InvalidArgument, "bad condition '" + std::string(s) + "'");
  }

  friend bool operator==(const SceneCondition&, const SceneCondition&) = default;
};

/// Capture model. Views are perspective crops of a procedural world with
/// per-shot camera and exposure jitter around a few popular vantage points.
struct SceneConfig {
  int view_width = 256;
  int view_height = 192;
  int world_width = 768;
  int world_height = 512;
  int vantage_points = 4;
  double window_frac = 0.55;     // view window width as a fraction of the world
  double shift_sigma = 0.05;     // camera translation, fraction of the window
  double zoom_sigma = 0.05;
  double roll_sigma_deg = 2.0;
  double tilt_frac = 0.03;       // corner jitter, fraction of the window
  double gain_jitter = 0.10;
  double noise_sigma = 0.01;
};

struct SceneDataset {
  std::vector<LumaImage> reference;  // attacker-side captures
  std::vector<LumaImage> user;       // evaluation captures
  std::string condition;
  std::uint64_t seed = 0;
};

namespace detail {

struct SceneObject {
  int shape = 0;  // 0 rect, 1 ellipse, 2 framed picture
  double cx, cy, hw, hh, angle, value;
  std::uint64_t texture_seed;
};

struct Vantage {
  double cx, cy, zoom, weight;
};

}  // namespace detail

/// Procedural world for one scene under one condition.
class SceneWorld {
 public:
  SceneWorld(std::uint64_t base_seed, SceneCondition condition, SceneConfig cfg = {})
      : cfg_(cfg), base_seed_(base_seed), condition_(condition), canvas_(cfg.world_width, cfg.world_height) {
    Rng rng = make_rng(base_seed, "scene-layout");
    const double W = cfg.world_width, H = cfg.world_height;
    floor_line_ = uniform(rng, 0.6, 0.75) * H;
    wall_value_ = uniform(rng, 0.35, 0.65);
    floor_value_ = uniform(rng, 0.2, 0.5);
    const int n_objects = 10 + static_cast<int>(uniform_index(rng, 8));
    for (int i = 0; i < n_objects; ++i) {
      detail::SceneObject o;
      o.shape = static_cast<int>(uniform_index(rng, 3));
      o.cx = uniform(rng, 0.05, 0.95) * W;
      o.cy = uniform(rng, 0.1, 0.9) * H;
      o.hw = uniform(rng, 0.03, 0.12) * W;
      o.hh = uniform(rng, 0.04, 0.16) * H;
      o.angle = o.shape == 2 ? 0.0 : uniform(rng, -0.4, 0.4);
      o.value = uniform(rng, 0.05, 0.95);
      o.texture_seed = rng();
      objects_.push_back(o);
    }
    for (int v = 0; v < cfg.vantage_points; ++v) {
      detail::Vantage vp;
      vp.cx = uniform(rng, 0.35, 0.65) * W;
      vp.cy = uniform(rng, 0.4, 0.6) * H;
      vp.zoom = uniform(rng, 0.85, 1.15);
      vp.weight = uniform(rng, 0.5, 2.0);
      vantages_.push_back(vp);
    }
    if (condition.kind == ConditionKind::Layout && condition.index != 0) rearrange();
    render();
  }

  const LumaImage& canvas() const noexcept { return canvas_; }
  const SceneConfig& config() const noexcept { return cfg_; }

  /// One capture; `seed` fully determines viewpoint, exposure and noise.
  LumaImage capture(std::uint64_t seed) const {
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    double total = 0.0;
    for (const auto& v : vantages_) total += v.weight;
    double pick = uniform01(rng) * total;
    const detail::Vantage* vp = &vantages_.back();
    for (const auto& v : vantages_) {
      if (pick < v.weight) {
        vp = &v;
        break;
      }
      pick -= v.weight;
    }
    const double aspect = static_cast<double>(cfg_.view_height) / cfg_.view_width;
    const double ww = cfg_.window_frac * cfg_.world_width * vp->zoom * std::exp(cfg_.zoom_sigma * normal(rng));
    const double wh = ww * aspect;
    const double cx = vp->cx + cfg_.shift_sigma * ww * normal(rng);
    const double cy = vp->cy + cfg_.shift_sigma * wh * normal(rng);
    const double roll = cfg_.roll_sigma_deg * normal(rng) * std::numbers::pi / 180.0;
    const double c = std::cos(roll), s = std::sin(roll);
    std::array<std::pair<double, double>, 4> world_corners;
    const std::array<std::pair<double, double>, 4> unit{{{-0.5, -0.5}, {0.5, -0.5}, {0.5, 0.5}, {-0.5, 0.5}}};
    for (std::size_t i = 0; i < 4; ++i) {
      const double u = unit[i].first * ww + cfg_.tilt_frac * ww * normal(rng);
      const double v = unit[i].second * wh + cfg_.tilt_frac * wh * normal(rng);
      world_corners[i] = {cx + u * c - v * s, cy + u * s + v * c};
    }
    const double vw = cfg_.view_width - 1.0, vh = cfg_.view_height - 1.0;
    const std::array<std::pair<double, double>, 4> view_corners{{{0, 0}, {vw, 0}, {vw, vh}, {0, vh}}};
    const Mat3 view_to_world = homography_from_points(view_corners, world_corners);

    const double gain = 1.0 + cfg_.gain_jitter * (2.0 * uniform01(rng) - 1.0);
    const double tilt_light = 0.05 * normal(rng);
    LumaImage out(cfg_.view_width, cfg_.view_height);
    for (int y = 0; y < out.height; ++y) {
      for (int x = 0; x < out.width; ++x) {
        const auto [wx, wy] = view_to_world.apply(x, y);
        const double shade = gain * (1.0 + tilt_light * (x / vw - 0.5));
        const double v = sample_bilinear(canvas_, wx, wy) * shade + cfg_.noise_sigma * normal(rng);
        out.at(x, y) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
    return out;
  }

 private:
  void rearrange() {
    Rng rng = make_rng(base_seed_, "scene-rearrange", static_cast<std::uint64_t>(condition_.index));
    for (auto& o : objects_) {
      if (uniform01(rng) < 0.6) {
        o.cx += uniform(rng, -0.15, 0.15) * cfg_.world_width;
        o.cy += uniform(rng, -0.08, 0.08) * cfg_.world_height;
      }
    }
  }

  double illumination(double x, double y) const {
    if (condition_.kind != ConditionKind::Lighting || condition_.index == 0) return 1.0;
    Rng rng = make_rng(base_seed_, "scene-lighting", static_cast<std::uint64_t>(condition_.index));
    const double angle = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double strength = uniform(rng, 0.6, 0.9);
    const double sx = uniform(rng, 0.2, 0.8) * cfg_.world_width, sy = uniform(rng, 0.2, 0.6) * cfg_.world_height;
    const double sr = uniform(rng, 0.15, 0.3) * cfg_.world_width;
    const double t = ((x / cfg_.world_width - 0.5) * std::cos(angle) + (y / cfg_.world_height - 0.5) * std::sin(angle));
    const double spot = std::exp(-((x - sx) * (x - sx) + (y - sy) * (y - sy)) / (2 * sr * sr));
    // Hard-edged shadow cast across part of the room.
    const double nx = std::cos(angle + 1.3), ny = std::sin(angle + 1.3);
    const double d = (x - sx) * nx + (y - sy) * ny;
    const double shadow = 1.0 - 0.5 / (1.0 + std::exp(-d / 6.0));
    return std::max(0.1, (1.0 + strength * 2.0 * t + 0.8 * spot - 0.3) * shadow);
  }

  void render() {
    using namespace procedural;
    const ValueNoise wall_tex(derive_seed(base_seed_, "wall-texture"));
    const ValueNoise floor_tex(derive_seed(base_seed_, "floor-texture"));
    for (int y = 0; y < canvas_.height; ++y) {
      for (int x = 0; x < canvas_.width; ++x) {
        double v;
        if (y < floor_line_) {
          v = wall_value_ + 0.12 * wall_tex(x / 40.0, y / 40.0, 4);
        } else {
          const double stripe = std::sin((x + 0.4 * (y - floor_line_)) / 11.0) * 0.06;
          v = floor_value_ + stripe + 0.1 * floor_tex(x / 25.0, y / 25.0, 3);
        }
        canvas_.at(x, y) = static_cast<float>(v);
      }
    }
    for (const auto& o : objects_) {
      const ValueNoise tex(o.texture_seed);
      switch (o.shape) {
        case 0: fill_rect(canvas_, o.cx, o.cy, o.hw, o.hh, o.angle, o.value, &tex, 0.15); break;
        case 1: fill_ellipse(canvas_, o.cx, o.cy, o.hw, o.hh, o.angle, o.value, &tex, 0.15); break;
        default:
          fill_rect(canvas_, o.cx, o.cy, o.hw, o.hh, 0.0, 0.1 + 0.2 * o.value);
          fill_rect(canvas_, o.cx, o.cy, o.hw * 0.85, o.hh * 0.85, 0.0, o.value, &tex, 0.35);
          break;
      }
    }
    for (int y = 0; y < canvas_.height; ++y)
      for (int x = 0; x < canvas_.width; ++x) {
        canvas_.at(x, y) = static_cast<float>(std::clamp(canvas_.at(x, y) * illumination(x, y), 0.0, 1.0));
      }
  }

  SceneConfig cfg_;
  std::uint64_t base_seed_;
  SceneCondition condition_;
  LumaImage canvas_;
  double floor_line_ = 0, wall_value_ = 0, floor_value_ = 0;
  std::vector<detail::SceneObject> objects_;
  std::vector<detail::Vantage> vantages_;
};

/// Reference and user captures of one scene under one condition. The two
/// sides draw from independent seed streams. `capture_seed` (default: the
/// base seed) varies the captures while keeping the world fixed.
inline SceneDataset synth_scene(std::uint64_t base_seed, const SceneCondition& condition, std::size_t n_reference,
                                std::size_t n_user, const SceneConfig& cfg = {}, unsigned workers = 1,
                                std::optional<std::uint64_t> capture_seed = std::nullopt) {
  require(n_reference >= 1 && n_user >= 1, ErrorCode::InvalidArgument, "scene counts must be at least 1");
  const SceneWorld world(base_seed, condition, cfg);
  SceneDataset ds;
  ds.condition = condition.label();
  ds.seed = base_seed;
  ds.reference.resize(n_reference);
  ds.user.resize(n_user);
  const std::string tag = condition.label();
  const std::uint64_t cs = capture_seed.value_or(base_seed);
  parallel_for(n_reference, workers, [&](std::size_t i) {
    ds.reference[i] = world.capture(derive_seed(cs, "reference/" + tag, i));
  });
  parallel_for(n_user, workers, [&](std::size_t i) {
    ds.user[i] = world.capture(derive_seed(cs, "user/" + tag, i));
  });
  return ds;
}

// ==========================================================================
// Image corpora

enum class CorpusRole { IllicitStandin, Benign, DeliveryPool };

inline std::string_view to_string(CorpusRole r) {
  switch (r) {
    case CorpusRole::IllicitStandin: return "illicit-standin";
    case CorpusRole::Benign: return "benign";
    case CorpusRole::DeliveryPool: return "delivery-pool";
  }
  return "?";
}

inline CorpusRole parse_corpus_role(std::string_view s) {
  if (s == "illicit-standin" || s == "illicit") return CorpusRole::IllicitStandin;
  if (s == "benign") return CorpusRole::Benign;
  if (s == "delivery-pool" || s == "pool") return CorpusRole::DeliveryPool;
  throw Error(ErrorCode::InvalidArgument, "unknown corpus role '" + std::string(s) + "'");
}

struct CorpusSpec {
  CorpusRole role = CorpusRole::Benign;
  std::size_t count = 0;
  std::uint64_t seed = 0;
  int width = 128;
  int height = 128;
};

namespace detail {

// Stand-in for an "animal" photograph: a furry quadruped on a natural
// background.
inline LumaImage draw_animal(Rng& rng, int w, int h) {
  using namespace procedural;
  LumaImage img(w, h);
  fill_gradient(img, uniform(rng, 0.2, 0.8), uniform(rng, 0.2, 0.8), uniform(rng, 0, 2 * std::numbers::pi));
  add_noise_texture(img, ValueNoise(rng()), w / uniform(rng, 3.0, 8.0), 0.18);
  const ValueNoise fur(rng());
  const double s = uniform(rng, 0.25, 0.4) * w;
  const double cx = uniform(rng, 0.35, 0.65) * w, cy = uniform(rng, 0.45, 0.65) * h;
  const double body = uniform(rng, 0.05, 0.95);
  const double dir = uniform01(rng) < 0.5 ? -1.0 : 1.0;
  const double lw = std::max(2.0, s * 0.12);
  for (int leg = 0; leg < 4; ++leg) {
    const double lx = cx + (-0.7 + 0.45 * leg) * s;
    draw_line(img, lx, cy, lx + uniform(rng, -0.2, 0.2) * s, cy + uniform(rng, 0.7, 1.0) * s, lw, body * 0.8);
  }
  fill_ellipse(img, cx, cy, s, s * uniform(rng, 0.45, 0.6), uniform(rng, -0.2, 0.2), body, &fur, 0.2);
  fill_ellipse(img, cx + dir * s * 1.05, cy - s * 0.45, s * 0.38, s * 0.32, 0.0, body * 0.9 + 0.05, &fur, 0.2);
  draw_line(img, cx - dir * s, cy - 0.1 * s, cx - dir * s * 1.5, cy - uniform(rng, 0.2, 0.6) * s, lw * 0.7, body);
  fill_ellipse(img, cx + dir * s * 1.2, cy - s * 0.55, s * 0.05, s * 0.05, 0.0, 1.0 - body);
  img.clamp01();
  return img;
}

inline LumaImage draw_everyday(Rng& rng, int w, int h) {
  using namespace procedural;
  LumaImage img(w, h);
  fill_gradient(img, uniform(rng, 0.1, 0.9), uniform(rng, 0.1, 0.9), uniform(rng, 0, 2 * std::numbers::pi));
  add_noise_texture(img, ValueNoise(rng()), w / uniform(rng, 2.0, 10.0), uniform(rng, 0.05, 0.25));
  const int shapes = 4 + static_cast<int>(uniform_index(rng, 12));
  for (int i = 0; i < shapes; ++i) {
    const double x = uniform01(rng) * w, y = uniform01(rng) * h;
    const double a = uniform(rng, 0.04, 0.3) * w, b = uniform(rng, 0.04, 0.3) * h;
    const double v = uniform01(rng), angle = uniform(rng, -1.0, 1.0);
    switch (uniform_index(rng, 3)) {
      case 0: fill_rect(img, x, y, a, b, angle, v); break;
      case 1: fill_ellipse(img, x, y, a, b, angle, v); break;
      default: draw_line(img, x, y, x + 2 * a, y + 2 * b, uniform(rng, 1.0, 0.05 * w), v); break;
    }
  }
  img.clamp01();
  return img;
}

}  // namespace detail

/// Image `index` of a synthetic corpus; independent of the other indices.
inline LumaImage synth_corpus_image(const CorpusSpec& spec, std::size_t index) {
  Rng rng = make_rng(spec.seed, std::string("corpus/") + std::string(to_string(spec.role)), index);
  if (spec.role == CorpusRole::Benign) return detail::draw_everyday(rng, spec.width, spec.height);
  return detail::draw_animal(rng, spec.width, spec.height);
}

inline std::vector<LumaImage> synth_corpus(const CorpusSpec& spec, unsigned workers = 1) {
  std::vector<LumaImage> out(spec.count);
  parallel_for(spec.count, workers, [&](std::size_t i) { out[i] = synth_corpus_image(spec, i); });
  return out;
}

/// Foreground occluder standing in for a person in the frame.
inline LumaImage synth_person(std::uint64_t seed, int w = 128, int h = 128) {
  using namespace procedural;
  Rng rng = make_rng(seed, "person");
  LumaImage img(w, h);
  fill_gradient(img, uniform(rng, 0.2, 0.5), uniform(rng, 0.2, 0.5), 1.2);
  const ValueNoise cloth(rng());
  const double shirt = uniform(rng, 0.1, 0.9);
  fill_rect(img, w * 0.5, h * 0.72, w * 0.42, h * 0.35, 0.0, shirt, &cloth, 0.2);
  fill_ellipse(img, w * 0.5, h * 0.24, w * 0.17, h * 0.2, 0.0, uniform(rng, 0.5, 0.8));
  fill_ellipse(img, w * 0.5, h * 0.1, w * 0.17, h * 0.09, 0.0, uniform(rng, 0.05, 0.3));
  draw_line(img, w * 0.1, h * 0.5, w * 0.05, h * 0.98, w * 0.1, shirt * 0.8);
  draw_line(img, w * 0.9, h * 0.5, w * 0.95, h * 0.98, w * 0.1, shirt * 0.8);
  img.clamp01();
  return img;
}

// ==========================================================================
// Directory corpora and manifests

enum class DecodePolicy { Fail, Skip };

struct CorpusLoadReport {
  std::vector<std::filesystem::path> loaded;
  std::vector<std::pair<std::filesystem::path, std::string>> failures;
};

inline bool is_image_path(const std::filesystem::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

/// Loads the first `spec.count` images of a directory in lexicographic
/// filename order (count 0 loads everything).
inline std::vector<LumaImage> load_corpus(const std::filesystem::path& dir, const CorpusSpec& spec,
                                          DecodePolicy policy = DecodePolicy::Skip,
                                          CorpusLoadReport* report = nullptr) {
  require(std::filesystem::is_directory(dir), ErrorCode::IoError, "not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && is_image_path(entry.path())) files.push_back(entry.path());
  std::sort(files.begin(), files.end(),
            [](const auto& a, const auto& b) { return a.filename().string() < b.filename().string(); });
  std::vector<LumaImage> out;
  for (const auto& f : files) {
    if (spec.count > 0 && out.size() == spec.count) break;
    try {
      out.push_back(load_luma(f));
      if (report) report->loaded.push_back(f);
    } catch (const Error& e) {
      if (policy == DecodePolicy::Fail) throw;
      if (report) report->failures.emplace_back(f, e.what());
    }
  }
  require(spec.count == 0 ? !out.empty() : out.size() == spec.count, ErrorCode::InsufficientImages,
          dir.string() + " holds " + std::to_string(out.size()) + " decodable images, need " +
              std::to_string(std::max<std::size_t>(spec.count, 1)));
  return out;
}

struct ManifestRecord {
  std::string path;
  std::string role;
  std::string condition;
  std::string split;

  friend bool operator==(const ManifestRecord&, const ManifestRecord&) = default;
};

/// One JSON object per line: {"path","role","condition","split"}.
inline void write_manifest(const std::filesystem::path& file, const std::vector<ManifestRecord>& records) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file);
  require(out.good(), ErrorCode::IoError, "cannot write " + file.string());
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["path"] = r.path;
    j["role"] = r.role;
    j["condition"] = r.condition;
    j["split"] = r.split;
    out << j.dump() << '\n';
  }
}

inline std::vector<ManifestRecord> read_manifest(const std::filesystem::path& file) {
  std::ifstream in(file);
  require(in.good(), ErrorCode::IoError, "cannot read " + file.string());
  std::vector<ManifestRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    out.push_back({j.at("path"), j.at("role"), j.value("condition", ""), j.value("split", "")});
  }
  return out;
}

}  // namespace csislab
