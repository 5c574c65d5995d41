// Shared domain types: geometry, feature ids, weights and the tracker
// configuration ledger.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mft {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

inline double distance(const Vec2& a, const Vec2& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

// Axis-aligned 2D box, top-left corner plus extent. Extent must be positive.
struct BBox2D {
  double x = 0.0;
  double y = 0.0;
  double w = 1.0;
  double h = 1.0;

  BBox2D() = default;
  BBox2D(double x_, double y_, double w_, double h_) : x(x_), y(y_), w(w_), h(h_) {
    if (!(w > 0.0) || !(h > 0.0))
      throw std::invalid_argument("BBox2D: width and height must be positive");
  }
};

inline Vec2 bbox_center(const BBox2D& b) { return {b.x + b.w / 2.0, b.y + b.h / 2.0}; }

inline double bbox_iou(const BBox2D& a, const BBox2D& b) {
  const double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
  const double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
  const double inter = ix * iy;
  const double uni = a.w * a.h + b.w * b.h - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

// Scene coordinates in meters.
struct WorldPoint3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

inline double distance(const WorldPoint3& a, const WorldPoint3& b) {
  const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

// The eight link-similarity features, in their canonical order.
enum class FeatureId : int {
  Disp3D = 0,
  Disp2D = 1,
  ShapeRatio = 2,
  Area2D = 3,
  ColorHist = 4,
  Hog = 5,
  ColorCov = 6,
  DomColor = 7,
};

inline constexpr int kFeatureCount = 8;

inline constexpr std::array<FeatureId, kFeatureCount> kAllFeatures = {
    FeatureId::Disp3D,   FeatureId::Disp2D, FeatureId::ShapeRatio, FeatureId::Area2D,
    FeatureId::ColorHist, FeatureId::Hog,   FeatureId::ColorCov,   FeatureId::DomColor,
};

inline std::string_view feature_name(FeatureId id) {
  switch (id) {
    case FeatureId::Disp3D: return "disp3d";
    case FeatureId::Disp2D: return "disp2d";
    case FeatureId::ShapeRatio: return "shape_ratio";
    case FeatureId::Area2D: return "area2d";
    case FeatureId::ColorHist: return "color_hist";
    case FeatureId::Hog: return "hog";
    case FeatureId::ColorCov: return "color_cov";
    case FeatureId::DomColor: return "dom_color";
  }
  throw std::invalid_argument("feature_name: bad FeatureId");
}

inline std::optional<FeatureId> feature_from_name(std::string_view name) {
  for (FeatureId id : kAllFeatures)
    if (feature_name(id) == name) return id;
  return std::nullopt;
}

// Per-feature combination weights. Valid when all entries are non-negative
// and at least one is positive.
struct FeatureWeights {
  std::array<double, kFeatureCount> w{};

  double& operator[](FeatureId id) { return w[static_cast<int>(id)]; }
  double operator[](FeatureId id) const { return w[static_cast<int>(id)]; }

  double total() const {
    double s = 0.0;
    for (double v : w) s += v;
    return s;
  }

  bool valid() const {
    bool any = false;
    for (double v : w) {
      if (!(v >= 0.0) || !std::isfinite(v)) return false;
      if (v > 0.0) any = true;
    }
    return any;
  }

  FeatureWeights normalized() const {
    FeatureWeights out = *this;
    const double s = total();
    if (s > 0.0)
      for (double& v : out.w) v /= s;
    return out;
  }

  static FeatureWeights uniform() {
    FeatureWeights fw;
    fw.w.fill(1.0 / kFeatureCount);
    return fw;
  }
};

// Identifies one detection: frame index plus index within that frame.
// Total order gives deterministic tie-breaking everywhere downstream.
struct ObjectKey {
  int frame = 0;
  int index = 0;

  friend auto operator<=>(const ObjectKey&, const ObjectKey&) = default;
};

struct ObjectKeyHash {
  std::size_t operator()(const ObjectKey& k) const {
    return std::hash<std::uint64_t>{}((std::uint64_t(std::uint32_t(k.frame)) << 32) |
                                      std::uint32_t(k.index));
  }
};

// The full threshold ledger. Every knob the pipeline reads lives here so a
// run is reproducible from one config file.
struct TrackerConfig {
  int t2_window = 10;           // temporal window / termination patience (frames)
  double th1_link = 0.5;        // minimum link similarity for an edge
  double th4_beta_cap = 0.5;    // maximum long-term weight
  int th5_min_frames = 5;       // minimum trajectory length (frames)
  double th6_min_extent = 0.5;  // minimum spatial extent, meters (3D trajectories)
  double th6_min_extent_px = 15.0;  // minimum spatial extent, pixels (2D-only trajectories)
  double d_max_3d = 2.0;        // maximal 3D displacement per frame (meters)
  double d_max_2d = 50.0;       // maximal 2D displacement per frame (pixels)
  double d_cov_max = 15.0;      // covariance distance considered fully dissimilar
  int hist_bins = 8;            // histogram bins per color channel
  int q_window = 20;            // long-term statistics window (objects)
  int pyramid_levels = 2;       // deepest spatial pyramid level
  double sigma_floor = 1e-3;    // lower bound for Gaussian sigmas
  int dominant_color_max = 8;   // maximum dominant colors per region
  double dcd_color_threshold = 25.0;  // RGB distance for dominant colors to be "close"
  int point_stride = 4;         // interest-point sampling stride (pixels)
  bool use_gaussian_pdf = false;      // full PDF instead of peak-normalized Gaussian scores
  bool pyramid_equal_weights = false; // equal per-level pyramid weights (ablation)
  double iou_threshold = 0.5;         // evaluation box-match threshold
  double coverage_fraction = 0.5;     // evaluation TP coverage fraction
};

// Returns one entry per violated invariant, naming the offending field.
inline std::vector<std::string> validate_config(const TrackerConfig& c) {
  std::vector<std::string> bad;
  auto check = [&bad](bool ok, const char* field) {
    if (!ok) bad.emplace_back(field);
  };
  check(c.t2_window >= 1, "t2_window");
  check(c.th1_link >= 0.0 && c.th1_link <= 1.0, "th1_link");
  check(c.th4_beta_cap >= 0.0 && c.th4_beta_cap <= 1.0, "th4_beta_cap");
  check(c.th5_min_frames >= 0, "th5_min_frames");
  check(c.th6_min_extent >= 0.0, "th6_min_extent");
  check(c.th6_min_extent_px >= 0.0, "th6_min_extent_px");
  check(c.d_max_3d > 0.0, "d_max_3d");
  check(c.d_max_2d > 0.0, "d_max_2d");
  check(c.d_cov_max > 0.0, "d_cov_max");
  check(c.hist_bins >= 1 && c.hist_bins <= 256, "hist_bins");
  check(c.q_window >= 1, "q_window");
  check(c.pyramid_levels >= 0, "pyramid_levels");
  check(c.sigma_floor > 0.0, "sigma_floor");
  check(c.dominant_color_max >= 1, "dominant_color_max");
  check(c.dcd_color_threshold >= 0.0, "dcd_color_threshold");
  check(c.point_stride >= 1, "point_stride");
  check(c.iou_threshold > 0.0 && c.iou_threshold <= 1.0, "iou_threshold");
  check(c.coverage_fraction > 0.0 && c.coverage_fraction <= 1.0, "coverage_fraction");
  return bad;
}

// Peak-normalized Gaussian consistency score; the full PDF variant is kept
// for fidelity experiments and may exceed 1 for small sigma.
inline double gaussian_score(double value, double mean, double sigma, bool use_pdf) {
  const double z = (value - mean) / sigma;
  const double g = std::exp(-0.5 * z * z);
  if (!use_pdf) return g;
  return g / std::sqrt(2.0 * M_PI * sigma * sigma);
}

}  // namespace mft
