// The eight link-similarity features and their weighted combination.
#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "mftrack/core.hpp"
#include "mftrack/detection.hpp"
#include "mftrack/point_tracking.hpp"

namespace mft {

// Per-feature similarity values for one object pair. Unavailable features
// (missing data, or skipped because their weight is zero) are excluded from
// any combination.
struct SimilarityVector {
  std::array<double, kFeatureCount> values{};
  std::array<bool, kFeatureCount> available{};

  double value(FeatureId id) const { return values[std::size_t(static_cast<int>(id))]; }
  bool has(FeatureId id) const { return available[std::size_t(static_cast<int>(id))]; }
  void set(FeatureId id, double v) {
    values[std::size_t(static_cast<int>(id))] = v;
    available[std::size_t(static_cast<int>(id))] = true;
  }
  void set(FeatureId id, const std::optional<double>& v) {
    if (v) set(id, *v);
  }
};

using FeatureMask = std::array<bool, kFeatureCount>;

inline constexpr FeatureMask kAllFeaturesMask = {true, true, true, true, true, true, true, true};

inline FeatureMask positive_weight_mask(const FeatureWeights& w) {
  FeatureMask m{};
  for (int k = 0; k < kFeatureCount; ++k) m[std::size_t(k)] = w.w[std::size_t(k)] > 0.0;
  return m;
}

// ---------------------------------------------------------------------------
// Displacement similarities
// ---------------------------------------------------------------------------

inline std::optional<double> ls1_disp3d(const DetectedObject& a, const DetectedObject& b,
                                        const TrackerConfig& cfg) {
  if (!a.world || !b.world) return std::nullopt;
  const int n = std::abs(a.frame() - b.frame());
  if (n < 1) return std::nullopt;
  const double d = distance(*a.world, *b.world);
  return std::max(0.0, 1.0 - d / (cfg.d_max_3d * n));
}

inline std::optional<double> ls2_disp2d(const DetectedObject& a, const DetectedObject& b,
                                        const TrackerConfig& cfg) {
  const int n = std::abs(a.frame() - b.frame());
  if (n < 1) return std::nullopt;
  const double d = distance(bbox_center(a.bbox), bbox_center(b.bbox));
  return std::max(0.0, 1.0 - d / (cfg.d_max_2d * n));
}

// ---------------------------------------------------------------------------
// Size similarities
// ---------------------------------------------------------------------------

inline double ls3_shape_ratio(const DetectedObject& a, const DetectedObject& b) {
  const double ra = a.bbox.w / a.bbox.h;
  const double rb = b.bbox.w / b.bbox.h;
  return std::min(ra, rb) / std::max(ra, rb);
}

inline double ls4_area(const DetectedObject& a, const DetectedObject& b) {
  const double aa = a.bbox.w * a.bbox.h;
  const double ab = b.bbox.w * b.bbox.h;
  return std::min(aa, ab) / std::max(aa, ab);
}

// ---------------------------------------------------------------------------
// Color histogram similarity
// ---------------------------------------------------------------------------

inline std::optional<double> ls5_histogram(const DetectedObject& a, const DetectedObject& b) {
  const ColorHistogram& ha = a.appearance.histogram;
  const ColorHistogram& hb = b.appearance.histogram;
  if (!ha.present() || !hb.present()) return std::nullopt;
  if (ha.bins_per_channel != hb.bins_per_channel)
    throw std::invalid_argument("ls5_histogram: histogram bin counts differ");
  if (ha.all_zero() || hb.all_zero()) return std::nullopt;
  double s = 0.0;
  for (std::size_t k = 0; k < ha.values.size(); ++k) s += std::min(ha.values[k], hb.values[k]);
  return s / 3.0;
}

// ---------------------------------------------------------------------------
// Covariance distance & spatial pyramid
// ---------------------------------------------------------------------------

namespace detail {

// Adds the positive-definite guard only when the factorization actually
// needs it, so well-conditioned inputs keep exact eigenvalue ratios.
inline Eigen::MatrixXd ensure_spd(const Eigen::MatrixXd& c, double eps = 1e-6) {
  Eigen::LLT<Eigen::MatrixXd> llt(c);
  if (llt.info() == Eigen::Success) return c;
  return c + eps * Eigen::MatrixXd::Identity(c.rows(), c.cols());
}

}  // namespace detail

// log-generalized-eigenvalue distance between two covariance matrices.
inline double forstner_distance(const CovarianceMatrix& ci, const CovarianceMatrix& cj) {
  if (ci.rows() != ci.cols() || cj.rows() != cj.cols() || ci.rows() != cj.rows())
    throw std::invalid_argument("forstner_distance: dimension mismatch");
  const Eigen::MatrixXd a = detail::ensure_spd((ci + ci.transpose()) / 2.0);
  const Eigen::MatrixXd b = detail::ensure_spd((cj + cj.transpose()) / 2.0);
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(a, b, Eigen::EigenvaluesOnly | Eigen::Ax_lBx);
  if (es.info() != Eigen::Success)
    throw std::domain_error("forstner_distance: generalized eigensolve failed");
  double s = 0.0;
  for (Eigen::Index k = 0; k < es.eigenvalues().size(); ++k) {
    const double lambda = es.eigenvalues()(k);
    if (!(lambda > 0.0))
      throw std::domain_error("forstner_distance: input not positive definite after regularization");
    const double l = std::log(lambda);
    s += l * l;
  }
  return std::sqrt(s);
}

// Spatial pyramid distance. Per level, cell distances of co-located present
// pairs are sorted and only the best half kept (occlusion tolerance); level
// means are blended with weights favoring finer levels unless equal
// weighting is requested.
template <typename Cell, typename DistFn>
std::optional<double> pyramid_distance(const Pyramid<Cell>& a, const Pyramid<Cell>& b, DistFn cell_distance,
                                       bool equal_level_weights = false) {
  if (!a.present() || !b.present()) return std::nullopt;
  const int depth = std::min(a.depth(), b.depth());
  struct LevelVal {
    int level;
    double dist;
  };
  std::vector<LevelVal> levels;
  for (int i = 0; i <= depth; ++i) {
    const auto& ca = a.levels[std::size_t(i)];
    const auto& cb = b.levels[std::size_t(i)];
    std::vector<double> d;
    for (std::size_t c = 0; c < ca.size(); ++c)
      if (ca[c] && cb[c]) d.push_back(cell_distance(*ca[c], *cb[c]));
    if (d.empty()) continue;
    std::sort(d.begin(), d.end());
    const std::size_t keep = (d.size() + 1) / 2;
    double mean = 0.0;
    for (std::size_t k = 0; k < keep; ++k) mean += d[k];
    mean /= double(keep);
    levels.push_back({i, mean});
  }
  if (levels.empty()) return std::nullopt;
  double wsum = 0.0, acc = 0.0;
  for (const auto& lv : levels) {
    const double w = equal_level_weights ? 1.0 : std::pow(2.0, double(lv.level - depth));
    wsum += w;
    acc += w * lv.dist;
  }
  return acc / wsum;
}

inline std::optional<double> ls7_covariance(const DetectedObject& a, const DetectedObject& b,
                                            const TrackerConfig& cfg) {
  const auto d = pyramid_distance(a.appearance.cov_pyramid, b.appearance.cov_pyramid, forstner_distance,
                                  cfg.pyramid_equal_weights);
  if (!d) return std::nullopt;
  return std::max(0.0, 1.0 - *d / cfg.d_cov_max);
}

// ---------------------------------------------------------------------------
// Dominant color similarity
// ---------------------------------------------------------------------------

// Quadratic dominant-color dissimilarity in [0,1]. Cross terms count only
// color pairs closer than the config threshold.
inline double dcd_distance(const DominantColorSet& f1, const DominantColorSet& f2, const TrackerConfig& cfg) {
  constexpr double kMaxRgbDistance = 441.67295593006370984949;  // sqrt(3) * 255
  double d2 = 0.0;
  for (const auto& c : f1.colors) d2 += c.fraction * c.fraction;
  for (const auto& c : f2.colors) d2 += c.fraction * c.fraction;
  for (const auto& p : f1.colors)
    for (const auto& q : f2.colors) {
      const double dist = std::sqrt(detail::color_dist2(p.rgb, q.rgb));
      if (dist > cfg.dcd_color_threshold) continue;
      const double a = 1.0 - dist / kMaxRgbDistance;
      d2 -= 2.0 * a * p.fraction * q.fraction;
    }
  return std::clamp(std::sqrt(std::max(0.0, d2)), 0.0, 1.0);
}

inline std::optional<double> ls8_dominant_color(const DetectedObject& a, const DetectedObject& b,
                                                const TrackerConfig& cfg) {
  const auto d = pyramid_distance(
      a.appearance.dcd_pyramid, b.appearance.dcd_pyramid,
      [&cfg](const DominantColorSet& x, const DominantColorSet& y) { return dcd_distance(x, y, cfg); },
      cfg.pyramid_equal_weights);
  if (!d) return std::nullopt;
  return 1.0 - *d;
}

// ---------------------------------------------------------------------------
// Combination
// ---------------------------------------------------------------------------

// Computes the masked features for one pair. The point-trajectory store may
// be null, in which case the point feature sees no shared trajectories.
inline SimilarityVector similarity_vector(const DetectedObject& a, const DetectedObject& b,
                                          const TrackerConfig& cfg, const PointTrackStore* points = nullptr,
                                          const FeatureMask& mask = kAllFeaturesMask) {
  SimilarityVector sv;
  auto want = [&mask](FeatureId id) { return mask[std::size_t(static_cast<int>(id))]; };
  if (want(FeatureId::Disp3D)) sv.set(FeatureId::Disp3D, ls1_disp3d(a, b, cfg));
  if (want(FeatureId::Disp2D)) sv.set(FeatureId::Disp2D, ls2_disp2d(a, b, cfg));
  if (want(FeatureId::ShapeRatio)) sv.set(FeatureId::ShapeRatio, ls3_shape_ratio(a, b));
  if (want(FeatureId::Area2D)) sv.set(FeatureId::Area2D, ls4_area(a, b));
  if (want(FeatureId::ColorHist)) sv.set(FeatureId::ColorHist, ls5_histogram(a, b));
  if (want(FeatureId::Hog)) sv.set(FeatureId::Hog, ls6_hog(a, b, points, cfg));
  if (want(FeatureId::ColorCov)) sv.set(FeatureId::ColorCov, ls7_covariance(a, b, cfg));
  if (want(FeatureId::DomColor)) sv.set(FeatureId::DomColor, ls8_dominant_color(a, b, cfg));
  return sv;
}

struct LinkScore {
  double score = 0.0;
  SimilarityVector sim;
};

// Weighted mean over the available positive-weight features.
inline std::optional<double> combine_similarity(const SimilarityVector& sv, const FeatureWeights& w) {
  double num = 0.0, den = 0.0;
  for (int k = 0; k < kFeatureCount; ++k) {
    if (!sv.available[std::size_t(k)] || w.w[std::size_t(k)] <= 0.0) continue;
    num += w.w[std::size_t(k)] * sv.values[std::size_t(k)];
    den += w.w[std::size_t(k)];
  }
  if (den <= 0.0) return std::nullopt;
  return num / den;
}

// Link similarity between two detections; nullopt when no weighted feature
// is available for the pair.
inline std::optional<LinkScore> link_similarity(const DetectedObject& a, const DetectedObject& b,
                                                const FeatureWeights& weights, const TrackerConfig& cfg,
                                                const PointTrackStore* points = nullptr) {
  if (!weights.valid()) throw std::invalid_argument("link_similarity: invalid feature weights");
  const SimilarityVector sv = similarity_vector(a, b, cfg, points, positive_weight_mask(weights));
  const auto score = combine_similarity(sv, weights);
  if (!score) return std::nullopt;
  return LinkScore{*score, sv};
}

}  // namespace mft
