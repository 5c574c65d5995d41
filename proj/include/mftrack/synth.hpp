// Synthetic scenario generator: ground-truthed constant-velocity objects
// rendered as textured rectangles, with configurable misses and occlusion
// windows. Deterministic for a fixed seed.
#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mftrack/core.hpp"
#include "mftrack/detection.hpp"
#include "mftrack/evaluation.hpp"
#include "mftrack/features.hpp"
#include "mftrack/io.hpp"

namespace mft {

// Counter-based generator (splitmix64); identical sequences across
// platforms for identical seeds.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }  // [0,1)
  double uniform(double a, double b) { return a + (b - a) * uniform(); }
  int uniform_int(int n) { return int(next_u64() % std::uint64_t(n)); }
  double normal() {
    const double u1 = std::max(uniform(), 1e-300);
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

 private:
  std::uint64_t state_;
};

inline std::uint64_t hash_mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a * 0x9E3779B97F4A7C15ull + b;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

struct OcclusionWindow {
  int object_a = 0;
  int object_b = 0;
  int from_frame = 0;
  int to_frame = 0;  // inclusive
};

struct ScenarioSpec {
  int n_objects = 3;
  int n_frames = 100;
  int image_width = 320;
  int image_height = 240;
  double sigma_motion = 0.3;   // per-frame positional jitter (pixels)
  double miss_rate = 0.0;      // probability a detection is dropped
  double world_scale = 0.05;   // meters per pixel for the flat world mapping
  bool render = false;         // write full frames/masks instead of embedded features
  std::uint64_t seed = 1;
  std::vector<OcclusionWindow> occlusions;
};

struct SynthResult {
  std::vector<DetectionRecord> detections;
  std::vector<GroundTruthTrack> ground_truth;
  std::vector<ImageRGB> frames;   // only when spec.render
  std::vector<ImageGray> masks;   // only when spec.render
};

namespace detail {

struct SynthObject {
  int id = 0;
  int width = 0;
  int height = 0;
  double x = 0.0, y = 0.0;    // center
  double vx = 0.0, vy = 0.0;  // pixels per frame
  std::array<std::uint8_t, 3> base_color{};
  std::uint64_t texture_seed = 0;
};

inline std::array<std::uint8_t, 3> palette_color(int index, int count) {
  // Evenly spaced hues, full saturation.
  const double h = 6.0 * double(index) / double(std::max(count, 1));
  const double c = 200.0, m = 40.0;
  const double x = c * (1.0 - std::fabs(std::fmod(h, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  switch (int(h) % 6) {
    case 0: r = c; g = x; break;
    case 1: r = x; g = c; break;
    case 2: g = c; b = x; break;
    case 3: g = x; b = c; break;
    case 4: r = x; b = c; break;
    default: r = c; b = x; break;
  }
  return {std::uint8_t(r + m), std::uint8_t(g + m), std::uint8_t(b + m)};
}

// Striped, hash-noised texture keyed on object-local coordinates, so an
// object looks the same in every frame apart from mild per-frame noise.
inline std::array<std::uint8_t, 3> texture_color(const SynthObject& o, int lx, int ly, int frame) {
  const double stripe = ((lx / 3 + ly / 5) % 2 == 0) ? 0.80 : 1.20;
  const std::uint64_t h = hash_mix(o.texture_seed, std::uint64_t(ly) * 1315423911ull + std::uint64_t(lx));
  const std::uint64_t f = hash_mix(h, std::uint64_t(frame));
  std::array<std::uint8_t, 3> out{};
  for (int c = 0; c < 3; ++c) {
    const double tex = double((h >> (8 * c)) & 0x3F) - 32.0;      // static texture noise
    const double flick = double((f >> (8 * c)) & 0x07) - 3.5;     // per-frame noise
    const double v = double(o.base_color[std::size_t(c)]) * stripe + tex + flick;
    out[std::size_t(c)] = std::uint8_t(std::clamp(v, 0.0, 255.0));
  }
  return out;
}

inline bool inside_ellipse(int lx, int ly, int w, int h) {
  const double nx = (lx + 0.5 - w / 2.0) / (w / 2.0);
  const double ny = (ly + 0.5 - h / 2.0) / (h / 2.0);
  return nx * nx + ny * ny <= 1.0;
}

inline RegionPixels render_patch(const SynthObject& o, int frame) {
  RegionPixels r;
  r.width = o.width;
  r.height = o.height;
  r.rgb.resize(std::size_t(3 * o.width * o.height));
  r.mask.resize(std::size_t(o.width * o.height));
  for (int ly = 0; ly < o.height; ++ly)
    for (int lx = 0; lx < o.width; ++lx) {
      const std::size_t i = std::size_t(ly * o.width + lx);
      const bool fg = inside_ellipse(lx, ly, o.width, o.height);
      r.mask[i] = fg ? 1 : 0;
      std::array<std::uint8_t, 3> col;
      if (fg) {
        col = texture_color(o, lx, ly, frame);
      } else {
        const std::uint64_t h = hash_mix(o.texture_seed ^ 0xABCDull, i ^ std::uint64_t(frame) << 20);
        const std::uint8_t g = std::uint8_t(90 + (h & 0x1F));
        col = {g, g, g};
      }
      for (int c = 0; c < 3; ++c) r.rgb[3 * i + std::size_t(c)] = col[std::size_t(c)];
    }
  return r;
}

}  // namespace detail

// Generates ground truth and detections; when `spec.render` is set, full
// frames and masks are produced and the detection records reference them,
// otherwise each record embeds its extracted appearance payload.
inline SynthResult synth_generate(const ScenarioSpec& spec, const TrackerConfig& cfg = {}) {
  if (spec.n_objects < 0 || spec.n_frames < 0)
    throw std::invalid_argument("synth_generate: counts must be non-negative");
  if (spec.miss_rate < 0.0 || spec.miss_rate > 1.0)
    throw std::invalid_argument("synth_generate: miss_rate must be in [0,1]");

  Rng rng(spec.seed);
  std::vector<detail::SynthObject> objects;
  for (int i = 0; i < spec.n_objects; ++i) {
    detail::SynthObject o;
    o.id = i + 1;
    o.width = 18 + rng.uniform_int(8);
    o.height = 36 + rng.uniform_int(12);
    // One horizontal lane per object keeps scenarios well separated unless
    // an occlusion window overrides positions.
    o.y = (double(i) + 0.5) * double(spec.image_height) / double(std::max(spec.n_objects, 1));
    o.x = rng.uniform(o.width, double(spec.image_width) - o.width);
    o.vx = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.8, 2.0);
    o.vy = 0.0;
    o.base_color = detail::palette_color(i, spec.n_objects);
    o.texture_seed = hash_mix(spec.seed, 0x5EED00ull + std::uint64_t(i));
    objects.push_back(o);
  }

  SynthResult out;
  out.ground_truth.resize(std::size_t(spec.n_objects));
  for (int i = 0; i < spec.n_objects; ++i) out.ground_truth[std::size_t(i)].id = i + 1;

  for (int frame = 0; frame < spec.n_frames; ++frame) {
    // Advance and jitter true positions. RNG order is fixed: per object,
    // jitter x, jitter y, then the miss draw.
    std::vector<Vec2> centers(objects.size());
    std::vector<bool> missed(objects.size(), false);
    for (std::size_t i = 0; i < objects.size(); ++i) {
      auto& o = objects[i];
      if (frame > 0) {
        o.x += o.vx;
        o.y += o.vy;
        const double margin = double(o.width);
        if (o.x < margin || o.x > spec.image_width - margin) o.vx = -o.vx;
        o.x = std::clamp(o.x, margin, double(spec.image_width) - margin);
      }
      centers[i] = {o.x + spec.sigma_motion * rng.normal(), o.y + spec.sigma_motion * rng.normal()};
      missed[i] = rng.uniform() < spec.miss_rate;
    }
    for (const auto& occ : spec.occlusions) {
      if (frame < occ.from_frame || frame > occ.to_frame) continue;
      if (occ.object_a < 1 || occ.object_a > int(objects.size()) || occ.object_b < 1 ||
          occ.object_b > int(objects.size()))
        continue;
      const auto& a = objects[std::size_t(occ.object_a - 1)];
      centers[std::size_t(occ.object_b - 1)] = {centers[std::size_t(occ.object_a - 1)].x + a.width / 4.0,
                                                centers[std::size_t(occ.object_a - 1)].y};
    }

    ImageRGB frame_img;
    ImageGray mask_img;
    if (spec.render) {
      frame_img.width = spec.image_width;
      frame_img.height = spec.image_height;
      frame_img.data.resize(std::size_t(3 * spec.image_width * spec.image_height));
      mask_img.width = spec.image_width;
      mask_img.height = spec.image_height;
      mask_img.data.assign(std::size_t(spec.image_width * spec.image_height), 0);
      for (int y = 0; y < spec.image_height; ++y)
        for (int x = 0; x < spec.image_width; ++x) {
          const std::uint64_t h =
              hash_mix(spec.seed ^ 0xB06ull, (std::uint64_t(frame) << 40) ^ (std::uint64_t(y) << 20) ^ std::uint64_t(x));
          const std::uint8_t g = std::uint8_t(90 + (h & 0x1F));
          const std::size_t i = std::size_t(y * spec.image_width + x);
          frame_img.data[3 * i] = frame_img.data[3 * i + 1] = frame_img.data[3 * i + 2] = g;
        }
    }

    for (std::size_t i = 0; i < objects.size(); ++i) {
      const auto& o = objects[i];
      const BBox2D bbox(centers[i].x - o.width / 2.0, centers[i].y - o.height / 2.0, o.width, o.height);
      const WorldPoint3 world{centers[i].x * spec.world_scale, centers[i].y * spec.world_scale, 0.0};
      out.ground_truth[i].boxes.push_back({frame, bbox, world});

      const RegionPixels patch = detail::render_patch(o, frame);
      if (spec.render) {
        const int px = int(std::lround(bbox.x));
        const int py = int(std::lround(bbox.y));
        for (int ly = 0; ly < patch.height; ++ly)
          for (int lx = 0; lx < patch.width; ++lx) {
            const int x = px + lx, y = py + ly;
            if (x < 0 || y < 0 || x >= spec.image_width || y >= spec.image_height) continue;
            if (!patch.fg(lx, ly)) continue;
            const std::size_t dst = std::size_t(y * spec.image_width + x);
            for (int c = 0; c < 3; ++c)
              frame_img.data[3 * dst + std::size_t(c)] = patch.rgb[std::size_t(3 * (ly * patch.width + lx) + c)];
            mask_img.data[dst] = 255;
          }
      }

      if (missed[i]) continue;
      DetectionRecord rec;
      rec.frame = frame;
      rec.bbox = bbox;
      rec.world = world;
      if (spec.render) {
        char fbuf[64], mbuf[64];
        std::snprintf(fbuf, sizeof fbuf, "frames/frame_%05d.ppm", frame);
        std::snprintf(mbuf, sizeof mbuf, "masks/mask_%05d.pgm", frame);
        rec.frame_image = fbuf;
        rec.mask_image = mbuf;
      } else {
        rec.features = extract_appearance(patch, cfg, {bbox.x, bbox.y});
      }
      out.detections.push_back(std::move(rec));
    }

    if (spec.render) {
      out.frames.push_back(std::move(frame_img));
      out.masks.push_back(std::move(mask_img));
    }
  }
  return out;
}

// Scenario spec as key-value text; `occlusion = a b from to` may repeat.
inline ScenarioSpec parse_scenario_spec_stream(std::istream& in, const std::string& path) {
  ScenarioSpec s;
  for (const auto& kv : detail::parse_kv_text(in, path)) {
    const std::string where = path + ":" + std::to_string(kv.lineno);
    try {
      if (kv.key == "n_objects") s.n_objects = std::stoi(kv.value);
      else if (kv.key == "n_frames") s.n_frames = std::stoi(kv.value);
      else if (kv.key == "image_width") s.image_width = std::stoi(kv.value);
      else if (kv.key == "image_height") s.image_height = std::stoi(kv.value);
      else if (kv.key == "sigma_motion") s.sigma_motion = std::stod(kv.value);
      else if (kv.key == "miss_rate") s.miss_rate = std::stod(kv.value);
      else if (kv.key == "world_scale") s.world_scale = std::stod(kv.value);
      else if (kv.key == "render") s.render = detail::parse_bool(kv.value, where);
      else if (kv.key == "seed") s.seed = std::stoull(kv.value);
      else if (kv.key == "occlusion") {
        OcclusionWindow w;
        std::istringstream iss(kv.value);
        if (!(iss >> w.object_a >> w.object_b >> w.from_frame >> w.to_frame))
          throw ParseError(where + ": occlusion needs 'a b from to'");
        s.occlusions.push_back(w);
      } else {
        throw ParseError(where + ": unknown scenario key '" + kv.key + "'");
      }
    } catch (const std::invalid_argument&) {
      throw ParseError(where + ": bad value '" + kv.value + "' for key '" + kv.key + "'");
    }
  }
  return s;
}

inline ScenarioSpec parse_scenario_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("parse_scenario_spec: cannot open " + path);
  return parse_scenario_spec_stream(in, path);
}

// Writes detections, ground truth, and (when rendered) frames and masks
// under `out_dir`.
inline void write_scenario(const SynthResult& result, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  write_detections(result.detections, (out_dir / "detections.jsonl").string());
  write_ground_truth(result.ground_truth, (out_dir / "groundtruth.jsonl").string());
  if (!result.frames.empty()) {
    std::filesystem::create_directories(out_dir / "frames");
    std::filesystem::create_directories(out_dir / "masks");
    for (std::size_t f = 0; f < result.frames.size(); ++f) {
      char fbuf[64], mbuf[64];
      std::snprintf(fbuf, sizeof fbuf, "frame_%05d.ppm", int(f));
      std::snprintf(mbuf, sizeof mbuf, "mask_%05d.pgm", int(f));
      write_ppm(result.frames[f], (out_dir / "frames" / fbuf).string());
      write_pgm(result.masks[f], (out_dir / "masks" / mbuf).string());
    }
  }
}

}  // namespace mft
