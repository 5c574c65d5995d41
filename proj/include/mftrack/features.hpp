// Appearance extraction: color histogram, covariance pyramid, dominant
// colors and grid-sampled interest points with gradient descriptors.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <vector>

#include "mftrack/core.hpp"

namespace mft {

// Rectangular pixel region with a foreground mask (moving pixels).
struct RegionPixels {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;   // 3 * width * height, row-major, RGB interleaved
  std::vector<std::uint8_t> mask;  // width * height, nonzero = foreground

  bool valid() const {
    return width >= 1 && height >= 1 && rgb.size() == std::size_t(3 * width * height) &&
           mask.size() == std::size_t(width * height);
  }
  std::uint8_t channel(int x, int y, int c) const {
    return rgb[std::size_t(3 * (y * width + x) + c)];
  }
  bool fg(int x, int y) const { return mask[std::size_t(y * width + x)] != 0; }
  int foreground_count() const {
    int n = 0;
    for (std::uint8_t m : mask) n += (m != 0);
    return n;
  }
};

// Per-channel normalized color histogram; all-zero when the region had no
// foreground pixels.
struct ColorHistogram {
  int bins_per_channel = 0;
  std::vector<double> values;  // 3 * bins, channel-major

  bool present() const { return bins_per_channel > 0 && !values.empty(); }
  bool all_zero() const {
    for (double v : values)
      if (v != 0.0) return false;
    return true;
  }
};

using CovarianceMatrix = Eigen::MatrixXd;

inline constexpr int kCovarianceDim = 11;

struct DominantColor {
  std::array<double, 3> rgb{};
  double fraction = 0.0;
};

// Compact color summary {(c_i, p_i)} with fractions summing to 1.
struct DominantColorSet {
  std::vector<DominantColor> colors;
};

// Recursive 2^i x 2^i partition; absent cells had no usable foreground.
template <typename Cell>
struct Pyramid {
  std::vector<std::vector<std::optional<Cell>>> levels;

  bool present() const { return !levels.empty(); }
  int depth() const { return static_cast<int>(levels.size()) - 1; }
};

using CovariancePyramid = Pyramid<CovarianceMatrix>;
using DominantColorPyramid = Pyramid<DominantColorSet>;

struct InterestPoint {
  Vec2 position;                   // pixels; frame coordinates once attached to a detection
  std::vector<double> descriptor;  // L2-normalized gradient histogram, or all-zero
};

struct Appearance {
  ColorHistogram histogram;
  CovariancePyramid cov_pyramid;
  DominantColorPyramid dcd_pyramid;
  std::vector<InterestPoint> points;
  int point_count = 0;  // total interest points detected on the object
};

// ---------------------------------------------------------------------------
// Color histogram
// ---------------------------------------------------------------------------

inline ColorHistogram compute_color_histogram(const RegionPixels& r, int bins) {
  if (bins < 1 || bins > 256) throw std::invalid_argument("compute_color_histogram: bins must be in 1..256");
  ColorHistogram h;
  h.bins_per_channel = bins;
  h.values.assign(std::size_t(3 * bins), 0.0);
  int n = 0;
  for (int y = 0; y < r.height; ++y)
    for (int x = 0; x < r.width; ++x) {
      if (!r.fg(x, y)) continue;
      ++n;
      for (int c = 0; c < 3; ++c) {
        const int bin = int(r.channel(x, y, c)) * bins / 256;
        h.values[std::size_t(c * bins + bin)] += 1.0;
      }
    }
  if (n > 0)
    for (double& v : h.values) v /= n;
  return h;
}

// ---------------------------------------------------------------------------
// Color covariance
// ---------------------------------------------------------------------------

namespace detail {

// Central differences, one-sided at the borders.
inline void channel_gradient(const RegionPixels& r, int c, std::vector<double>& gx,
                             std::vector<double>& gy) {
  const int w = r.width, h = r.height;
  gx.assign(std::size_t(w * h), 0.0);
  gy.assign(std::size_t(w * h), 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int x0 = std::max(0, x - 1), x1 = std::min(w - 1, x + 1);
      const int y0 = std::max(0, y - 1), y1 = std::min(h - 1, y + 1);
      const double sx = x1 > x0 ? double(x1 - x0) : 1.0;
      const double sy = y1 > y0 ? double(y1 - y0) : 1.0;
      gx[std::size_t(y * w + x)] = (double(r.channel(x1, y, c)) - double(r.channel(x0, y, c))) / sx;
      gy[std::size_t(y * w + x)] = (double(r.channel(x, y1, c)) - double(r.channel(x, y0, c))) / sy;
    }
}

// 11-entry descriptor per pixel: position, color, and per-channel gradient
// magnitude/orientation. Positions are region-relative.
struct DescriptorField {
  std::vector<std::array<double, kCovarianceDim>> samples;  // foreground pixels only

  static DescriptorField build(const RegionPixels& r) {
    DescriptorField f;
    std::array<std::vector<double>, 3> gx, gy;
    for (int c = 0; c < 3; ++c) channel_gradient(r, c, gx[c], gy[c]);
    for (int y = 0; y < r.height; ++y)
      for (int x = 0; x < r.width; ++x) {
        if (!r.fg(x, y)) continue;
        std::array<double, kCovarianceDim> s{};
        s[0] = x;
        s[1] = y;
        for (int c = 0; c < 3; ++c) {
          const double dx = gx[c][std::size_t(y * r.width + x)];
          const double dy = gy[c][std::size_t(y * r.width + x)];
          s[std::size_t(2 + c)] = r.channel(x, y, c);
          s[std::size_t(5 + 2 * c)] = std::hypot(dx, dy);
          s[std::size_t(6 + 2 * c)] = (dx != 0.0 || dy != 0.0) ? std::atan2(dy, dx) : 0.0;
        }
        f.samples.push_back(s);
      }
    return f;
  }
};

inline std::optional<CovarianceMatrix> covariance_of(const std::vector<std::array<double, kCovarianceDim>>& samples) {
  const std::size_t n = samples.size();
  if (n < 2) return std::nullopt;
  Eigen::Matrix<double, kCovarianceDim, 1> mean = Eigen::Matrix<double, kCovarianceDim, 1>::Zero();
  Eigen::Matrix<double, kCovarianceDim, kCovarianceDim> acc =
      Eigen::Matrix<double, kCovarianceDim, kCovarianceDim>::Zero();
  for (const auto& s : samples) {
    Eigen::Map<const Eigen::Matrix<double, kCovarianceDim, 1>> v(s.data());
    mean += v;
    acc += v * v.transpose();
  }
  mean /= double(n);
  CovarianceMatrix cov = (acc - double(n) * mean * mean.transpose()) / double(n - 1);
  cov = ((cov + cov.transpose()) / 2.0).eval();
  return cov;
}

}  // namespace detail

// Sample covariance of the 11-descriptor field over foreground pixels.
inline CovarianceMatrix compute_covariance(const RegionPixels& r) {
  auto field = detail::DescriptorField::build(r);
  auto cov = detail::covariance_of(field.samples);
  if (!cov) throw std::domain_error("compute_covariance: fewer than 2 foreground pixels");
  return *cov;
}

// ---------------------------------------------------------------------------
// Spatial pyramid
// ---------------------------------------------------------------------------

namespace detail {

struct CellRect {
  int x0, y0, x1, y1;  // half-open
};

// Base-size tiling; remainder pixels land in the last row/column cells.
inline CellRect pyramid_cell(int width, int height, int grid, int row, int col) {
  const int bw = width / grid, bh = height / grid;
  CellRect c;
  c.x0 = col * bw;
  c.y0 = row * bh;
  c.x1 = (col == grid - 1) ? width : (col + 1) * bw;
  c.y1 = (row == grid - 1) ? height : (row + 1) * bh;
  return c;
}

inline RegionPixels crop_region(const RegionPixels& r, const CellRect& c) {
  RegionPixels out;
  out.width = c.x1 - c.x0;
  out.height = c.y1 - c.y0;
  out.rgb.resize(std::size_t(3 * out.width * out.height));
  out.mask.resize(std::size_t(out.width * out.height));
  for (int y = c.y0; y < c.y1; ++y)
    for (int x = c.x0; x < c.x1; ++x) {
      const std::size_t src = std::size_t(y * r.width + x);
      const std::size_t dst = std::size_t((y - c.y0) * out.width + (x - c.x0));
      out.mask[dst] = r.mask[src];
      for (int ch = 0; ch < 3; ++ch) out.rgb[3 * dst + ch] = r.rgb[3 * src + ch];
    }
  return out;
}

}  // namespace detail

inline int feasible_pyramid_depth(const RegionPixels& r, int levels) {
  int depth = 0;
  while (depth < levels && (2 << depth) <= std::min(r.width, r.height)) ++depth;
  return depth;
}

// Tiles the region into 2^i x 2^i cells per level and applies the extractor;
// cells the extractor rejects are stored absent. Levels past what the region
// can hold are dropped.
template <typename Cell, typename Extractor>
Pyramid<Cell> build_pyramid(const RegionPixels& r, int levels, Extractor extractor) {
  if (levels < 0) throw std::invalid_argument("build_pyramid: levels must be >= 0");
  Pyramid<Cell> p;
  const int depth = feasible_pyramid_depth(r, levels);
  for (int i = 0; i <= depth; ++i) {
    const int grid = 1 << i;
    std::vector<std::optional<Cell>> cells;
    cells.reserve(std::size_t(grid * grid));
    for (int row = 0; row < grid; ++row)
      for (int col = 0; col < grid; ++col) {
        const auto rect = detail::pyramid_cell(r.width, r.height, grid, row, col);
        cells.push_back(extractor(detail::crop_region(r, rect)));
      }
    p.levels.push_back(std::move(cells));
  }
  return p;
}

// ---------------------------------------------------------------------------
// Dominant colors
// ---------------------------------------------------------------------------

namespace detail {

inline double color_dist2(const std::array<double, 3>& a, const std::array<double, 3>& b) {
  const double d0 = a[0] - b[0], d1 = a[1] - b[1], d2 = a[2] - b[2];
  return d0 * d0 + d1 * d1 + d2 * d2;
}

}  // namespace detail

struct DominantColorQuantization {
  DominantColorSet set;
  std::vector<double> distortion_history;  // mean squared distance after each split
};

// Binary-splitting generalized Lloyd quantization. Splits the cluster with
// the highest distortion contribution along its principal color axis, keeping
// the parent centroid as one child so distortion never increases.
inline DominantColorQuantization dominant_color_quantize(const RegionPixels& r, int a_max) {
  if (a_max < 1) throw std::invalid_argument("dominant_color_quantize: a_max must be >= 1");
  std::vector<std::array<double, 3>> px;
  for (int y = 0; y < r.height; ++y)
    for (int x = 0; x < r.width; ++x)
      if (r.fg(x, y))
        px.push_back({double(r.channel(x, y, 0)), double(r.channel(x, y, 1)), double(r.channel(x, y, 2))});
  if (px.empty()) throw std::domain_error("dominant_color_quantize: region has no foreground pixels");

  const std::size_t n = px.size();
  std::vector<std::array<double, 3>> centers;
  std::vector<int> assign(n, 0);
  {
    std::array<double, 3> mean{};
    for (const auto& p : px)
      for (int c = 0; c < 3; ++c) mean[std::size_t(c)] += p[std::size_t(c)];
    for (int c = 0; c < 3; ++c) mean[std::size_t(c)] /= double(n);
    centers.push_back(mean);
  }

  auto reassign = [&]() {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double bd = detail::color_dist2(px[i], centers[0]);
      for (std::size_t k = 1; k < centers.size(); ++k) {
        const double d = detail::color_dist2(px[i], centers[std::size_t(k)]);
        if (d < bd) {
          bd = d;
          best = int(k);
        }
      }
      if (assign[i] != best) {
        assign[i] = best;
        changed = true;
      }
    }
    return changed;
  };
  auto update_centers = [&]() {
    std::vector<std::array<double, 3>> sum(centers.size(), {0.0, 0.0, 0.0});
    std::vector<std::size_t> cnt(centers.size(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      for (int c = 0; c < 3; ++c) sum[std::size_t(assign[i])][std::size_t(c)] += px[i][std::size_t(c)];
      ++cnt[std::size_t(assign[i])];
    }
    for (std::size_t k = 0; k < centers.size(); ++k)
      if (cnt[k] > 0)
        for (int c = 0; c < 3; ++c) centers[k][std::size_t(c)] = sum[k][std::size_t(c)] / double(cnt[k]);
  };
  auto mean_distortion = [&]() {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += detail::color_dist2(px[i], centers[std::size_t(assign[i])]);
    return s / double(n);
  };

  constexpr double kStopDistortion = 1.0;  // mean squared RGB units
  constexpr int kLloydIters = 16;

  DominantColorQuantization out;
  out.distortion_history.push_back(mean_distortion());

  while (int(centers.size()) < a_max && out.distortion_history.back() > kStopDistortion) {
    // Distortion contribution and pixel count per cluster.
    std::vector<double> contrib(centers.size(), 0.0);
    for (std::size_t i = 0; i < n; ++i)
      contrib[std::size_t(assign[i])] += detail::color_dist2(px[i], centers[std::size_t(assign[i])]);
    int worst = -1;
    for (std::size_t k = 0; k < centers.size(); ++k) {
      if (contrib[k] <= 0.0) continue;
      if (worst < 0 || contrib[k] > contrib[std::size_t(worst)] ||
          (contrib[k] == contrib[std::size_t(worst)] && centers[k] < centers[std::size_t(worst)]))
        worst = int(k);
    }
    if (worst < 0) break;

    // Principal color axis of the worst cluster.
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    Eigen::Vector3d mu = Eigen::Vector3d::Zero();
    std::size_t cnt = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (assign[i] != worst) continue;
      Eigen::Vector3d v(px[i][0], px[i][1], px[i][2]);
      mu += v;
      cov += v * v.transpose();
      ++cnt;
    }
    mu /= double(cnt);
    cov = cov / double(cnt) - mu * mu.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
    const double lmax = es.eigenvalues()(2);
    if (!(lmax > 0.0)) break;
    Eigen::Vector3d axis = es.eigenvectors().col(2);
    for (int c = 0; c < 3; ++c) {  // deterministic orientation
      if (axis(c) > 0.0) break;
      if (axis(c) < 0.0) {
        axis = -axis;
        break;
      }
    }
    const Eigen::Vector3d child = mu + std::sqrt(lmax) * axis;
    centers.push_back({child(0), child(1), child(2)});

    for (int it = 0; it < kLloydIters; ++it) {
      const bool changed = reassign();
      update_centers();
      if (!changed && it > 0) break;
    }
    out.distortion_history.push_back(mean_distortion());
  }

  std::vector<std::size_t> cnt(centers.size(), 0);
  for (std::size_t i = 0; i < n; ++i) ++cnt[std::size_t(assign[i])];
  for (std::size_t k = 0; k < centers.size(); ++k) {
    if (cnt[k] == 0) continue;
    out.set.colors.push_back({centers[k], double(cnt[k]) / double(n)});
  }
  std::sort(out.set.colors.begin(), out.set.colors.end(), [](const DominantColor& a, const DominantColor& b) {
    if (a.fraction != b.fraction) return a.fraction > b.fraction;
    return a.rgb < b.rgb;
  });
  return out;
}

inline DominantColorSet extract_dominant_colors(const RegionPixels& r, int a_max) {
  return dominant_color_quantize(r, a_max).set;
}

// ---------------------------------------------------------------------------
// Interest points
// ---------------------------------------------------------------------------

inline constexpr int kDescriptorCells = 4;
inline constexpr int kDescriptorCellSize = 4;
inline constexpr int kDescriptorBins = 8;
inline constexpr int kDescriptorDim = kDescriptorCells * kDescriptorCells * kDescriptorBins;

// 4x4 cells of 4px around p, 8 orientation bins each, L2-normalized.
// Returns nullopt when p has no room for central differences.
inline std::optional<std::vector<double>> compute_point_descriptor(const RegionPixels& r, Vec2 p) {
  const int cx = int(std::lround(p.x));
  const int cy = int(std::lround(p.y));
  if (cx < 1 || cy < 1 || cx > r.width - 2 || cy > r.height - 2) return std::nullopt;

  auto luma = [&r](int x, int y) {
    return (double(r.channel(x, y, 0)) + double(r.channel(x, y, 1)) + double(r.channel(x, y, 2))) / 3.0;
  };
  std::vector<double> desc(std::size_t(kDescriptorDim), 0.0);
  const int half = kDescriptorCells * kDescriptorCellSize / 2;
  for (int dy = -half; dy < half; ++dy)
    for (int dx = -half; dx < half; ++dx) {
      // Clamp samples into the interior so gradients stay well defined.
      const int x = std::clamp(cx + dx, 1, r.width - 2);
      const int y = std::clamp(cy + dy, 1, r.height - 2);
      const double gx = (luma(x + 1, y) - luma(x - 1, y)) / 2.0;
      const double gy = (luma(x, y + 1) - luma(x, y - 1)) / 2.0;
      const double mag = std::hypot(gx, gy);
      if (mag <= 0.0) continue;
      const double ang = std::atan2(gy, gx);  // (-pi, pi]
      int bin = int((ang + M_PI) / (2.0 * M_PI) * kDescriptorBins);
      bin = std::clamp(bin, 0, kDescriptorBins - 1);
      const int cellx = (dx + half) / kDescriptorCellSize;
      const int celly = (dy + half) / kDescriptorCellSize;
      desc[std::size_t((celly * kDescriptorCells + cellx) * kDescriptorBins + bin)] += mag;
    }
  double norm = 0.0;
  for (double v : desc) norm += v * v;
  if (norm > 0.0) {
    norm = std::sqrt(norm);
    for (double& v : desc) v /= norm;
  }
  return desc;
}

// Regular grid restricted to the foreground mask; points whose descriptor
// window has no gradient margin are skipped.
inline std::vector<InterestPoint> sample_interest_points(const RegionPixels& r, int stride) {
  if (stride < 1) throw std::invalid_argument("sample_interest_points: stride must be >= 1");
  std::vector<InterestPoint> pts;
  for (int y = stride / 2; y < r.height; y += stride)
    for (int x = stride / 2; x < r.width; x += stride) {
      if (!r.fg(x, y)) continue;
      auto desc = compute_point_descriptor(r, {double(x), double(y)});
      if (!desc) continue;
      pts.push_back({{double(x), double(y)}, std::move(*desc)});
    }
  return pts;
}

// ---------------------------------------------------------------------------
// Full appearance payload
// ---------------------------------------------------------------------------

// `origin` shifts interest points into frame coordinates (bbox top-left).
inline Appearance extract_appearance(const RegionPixels& r, const TrackerConfig& cfg,
                                     Vec2 origin = {0.0, 0.0}) {
  Appearance a;
  a.histogram = compute_color_histogram(r, cfg.hist_bins);
  a.cov_pyramid = build_pyramid<CovarianceMatrix>(r, cfg.pyramid_levels, [](const RegionPixels& cell) {
    return detail::covariance_of(detail::DescriptorField::build(cell).samples);
  });
  a.dcd_pyramid =
      build_pyramid<DominantColorSet>(r, cfg.pyramid_levels, [&cfg](const RegionPixels& cell) -> std::optional<DominantColorSet> {
        if (cell.foreground_count() == 0) return std::nullopt;
        return extract_dominant_colors(cell, cfg.dominant_color_max);
      });
  a.points = sample_interest_points(r, cfg.point_stride);
  for (auto& p : a.points) {
    p.position.x += origin.x;
    p.position.y += origin.y;
  }
  a.point_count = static_cast<int>(a.points.size());
  return a;
}

}  // namespace mft
