// Interest-point tracking across frames: descriptor matching, trajectory
// coherence scoring, and the point-based object link similarity.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "mftrack/core.hpp"
#include "mftrack/detection.hpp"

namespace mft {

struct TrackedPoint {
  int frame = 0;
  Vec2 position;
  std::vector<double> descriptor;
  ObjectKey owner;
};

// Ordered chain of matched points; frames strictly increasing.
struct PointTrajectory {
  std::vector<TrackedPoint> points;

  int size() const { return static_cast<int>(points.size()); }
  const TrackedPoint& back() const { return points.back(); }
};

struct CoherenceScore {
  double s_dist = 1.0;
  double s_dir = 1.0;
  double s_desc = 1.0;
  double s = 1.0;  // mean of the three
};

namespace detail {

inline double descriptor_distance(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = std::min(a.size(), b.size());
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  for (std::size_t i = n; i < a.size(); ++i) s += a[i] * a[i];
  for (std::size_t i = n; i < b.size(); ++i) s += b[i] * b[i];
  return std::sqrt(s);
}

// Cosine similarity; pairs involving an all-zero descriptor carry no
// change evidence and count as fully similar.
inline double descriptor_similarity(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  const std::size_t n = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  for (std::size_t i = n; i < a.size(); ++i) na += a[i] * a[i];
  for (std::size_t i = n; i < b.size(); ++i) nb += b[i] * b[i];
  if (na <= 0.0 || nb <= 0.0) return 1.0;
  return dot / std::sqrt(na * nb);
}

struct MatchCandidate {
  double dist;
  int i, j;
};

// Sorted-greedy matching: repeatedly takes the globally closest remaining
// pair, which is mutual-nearest among what is left.
inline std::vector<std::pair<int, int>> greedy_match(const std::vector<MatchCandidate>& cands, int n_prev,
                                                     int n_cur) {
  std::vector<MatchCandidate> sorted = cands;
  std::sort(sorted.begin(), sorted.end(), [](const MatchCandidate& a, const MatchCandidate& b) {
    if (a.dist != b.dist) return a.dist < b.dist;
    if (a.i != b.i) return a.i < b.i;
    return a.j < b.j;
  });
  std::vector<bool> used_prev(std::size_t(n_prev), false), used_cur(std::size_t(n_cur), false);
  std::vector<std::pair<int, int>> out;
  for (const auto& c : sorted) {
    if (used_prev[std::size_t(c.i)] || used_cur[std::size_t(c.j)]) continue;
    used_prev[std::size_t(c.i)] = true;
    used_cur[std::size_t(c.j)] = true;
    out.emplace_back(c.i, c.j);
  }
  return out;
}

}  // namespace detail

// Greedy mutual-nearest descriptor matching among pairs within `radius`.
inline std::vector<std::pair<int, int>> match_points(const std::vector<InterestPoint>& prev,
                                                     const std::vector<InterestPoint>& cur, double radius) {
  if (!(radius > 0.0)) throw std::invalid_argument("match_points: radius must be positive");
  std::vector<detail::MatchCandidate> cands;
  for (int i = 0; i < int(prev.size()); ++i)
    for (int j = 0; j < int(cur.size()); ++j) {
      if (distance(prev[std::size_t(i)].position, cur[std::size_t(j)].position) > radius) continue;
      cands.push_back({detail::descriptor_distance(prev[std::size_t(i)].descriptor, cur[std::size_t(j)].descriptor), i, j});
    }
  return detail::greedy_match(cands, int(prev.size()), int(cur.size()));
}

namespace detail {

inline constexpr int kMinCoherenceLength = 4;  // shorter tracks carry no evidence

struct SeqStats {
  double mean = 0.0;
  double stddev = 0.0;
};

inline SeqStats seq_stats(const std::vector<double>& v) {
  SeqStats s;
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= double(v.size());
  if (v.size() >= 2) {
    double acc = 0.0;
    for (double x : v) acc += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(acc / double(v.size() - 1));
  }
  return s;
}

inline double coherence_from_sequence(const std::vector<double>& seq, const TrackerConfig& cfg) {
  if (seq.empty()) return 1.0;
  const SeqStats st = seq_stats(seq);
  const double sigma = std::max(st.stddev, cfg.sigma_floor);
  return gaussian_score(seq.back(), st.mean, sigma, cfg.use_gaussian_pdf);
}

inline std::vector<double> step_distances(std::span<const TrackedPoint> pts) {
  std::vector<double> d;
  for (std::size_t i = 1; i < pts.size(); ++i) d.push_back(distance(pts[i - 1].position, pts[i].position));
  return d;
}

// Step directions; zero-displacement steps keep the previous direction.
inline std::vector<double> step_directions(std::span<const TrackedPoint> pts) {
  std::vector<double> dirs;
  double last = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const double dx = pts[i].position.x - pts[i - 1].position.x;
    const double dy = pts[i].position.y - pts[i - 1].position.y;
    if (dx != 0.0 || dy != 0.0) last = std::atan2(dy, dx);
    dirs.push_back(last);
  }
  return dirs;
}

inline double wrap_angle(double a) {
  while (a > M_PI) a -= 2.0 * M_PI;
  while (a <= -M_PI) a += 2.0 * M_PI;
  return a;
}

}  // namespace detail

// Frame-to-frame distance coherence of the last point of the chain.
inline double coherence_dist(std::span<const TrackedPoint> pts, const TrackerConfig& cfg) {
  if (pts.size() < 2) throw std::invalid_argument("coherence_dist: trajectory needs at least 2 points");
  if (int(pts.size()) < detail::kMinCoherenceLength) return 1.0;
  return detail::coherence_from_sequence(detail::step_distances(pts), cfg);
}

// Direction coherence over wrapped direction changes.
inline double coherence_dir(std::span<const TrackedPoint> pts, const TrackerConfig& cfg) {
  if (pts.size() < 2) throw std::invalid_argument("coherence_dir: trajectory needs at least 2 points");
  if (int(pts.size()) < detail::kMinCoherenceLength) return 1.0;
  const auto dirs = detail::step_directions(pts);
  std::vector<double> diffs;
  for (std::size_t i = 1; i < dirs.size(); ++i) diffs.push_back(detail::wrap_angle(dirs[i] - dirs[i - 1]));
  return detail::coherence_from_sequence(diffs, cfg);
}

// Descriptor coherence over consecutive cosine similarities.
inline double coherence_desc(std::span<const TrackedPoint> pts, const TrackerConfig& cfg) {
  if (pts.size() < 2) throw std::invalid_argument("coherence_desc: trajectory needs at least 2 points");
  if (int(pts.size()) < detail::kMinCoherenceLength) return 1.0;
  std::vector<double> sims;
  for (std::size_t i = 1; i < pts.size(); ++i)
    sims.push_back(detail::descriptor_similarity(pts[i - 1].descriptor, pts[i].descriptor));
  return detail::coherence_from_sequence(sims, cfg);
}

inline double coherence_dist(const PointTrajectory& t, const TrackerConfig& cfg) {
  return coherence_dist(std::span<const TrackedPoint>(t.points), cfg);
}
inline double coherence_dir(const PointTrajectory& t, const TrackerConfig& cfg) {
  return coherence_dir(std::span<const TrackedPoint>(t.points), cfg);
}
inline double coherence_desc(const PointTrajectory& t, const TrackerConfig& cfg) {
  return coherence_desc(std::span<const TrackedPoint>(t.points), cfg);
}

inline CoherenceScore coherence_score(std::span<const TrackedPoint> pts, const TrackerConfig& cfg) {
  CoherenceScore c;
  c.s_dist = coherence_dist(pts, cfg);
  c.s_dir = coherence_dir(pts, cfg);
  c.s_desc = coherence_desc(pts, cfg);
  c.s = (c.s_dist + c.s_dir + c.s_desc) / 3.0;
  return c;
}

// Open point trajectories over the active temporal window. One writer
// advances it frame by frame; queries see the state as of the last advance.
class PointTrackStore {
 public:
  // Matches each new frame's points against open trajectories, nearest frame
  // gap first, with the per-frame displacement bound scaled by the gap.
  void advance(int frame, const std::vector<const DetectedObject*>& objects, const TrackerConfig& cfg) {
    if (frame <= last_frame_ && last_frame_ != std::numeric_limits<int>::min())
      throw std::invalid_argument("PointTrackStore::advance: frames must be strictly increasing");
    last_frame_ = frame;

    std::vector<TrackedPoint> fresh;
    for (const DetectedObject* obj : objects)
      for (const InterestPoint& p : obj->appearance.points)
        fresh.push_back({frame, p.position, p.descriptor, obj->key});

    std::vector<bool> taken(fresh.size(), false);
    for (int gap = 1; gap <= cfg.t2_window; ++gap) {
      const int want = frame - gap;
      std::vector<int> open_at;
      for (int ti : open_)
        if (trajectories_[std::size_t(ti)].back().frame == want) open_at.push_back(ti);
      if (open_at.empty()) continue;

      std::vector<detail::MatchCandidate> cands;
      const double radius = cfg.d_max_2d * gap;
      for (int a = 0; a < int(open_at.size()); ++a) {
        const TrackedPoint& tail = trajectories_[std::size_t(open_at[std::size_t(a)])].back();
        for (int b = 0; b < int(fresh.size()); ++b) {
          if (taken[std::size_t(b)]) continue;
          if (distance(tail.position, fresh[std::size_t(b)].position) > radius) continue;
          cands.push_back({detail::descriptor_distance(tail.descriptor, fresh[std::size_t(b)].descriptor), a, b});
        }
      }
      for (auto [a, b] : detail::greedy_match(cands, int(open_at.size()), int(fresh.size()))) {
        if (taken[std::size_t(b)]) continue;  // claimed at a closer gap
        taken[std::size_t(b)] = true;
        append_point(open_at[std::size_t(a)], fresh[std::size_t(b)]);
      }
    }

    for (std::size_t b = 0; b < fresh.size(); ++b) {
      if (taken[b]) continue;
      trajectories_.push_back({});
      append_point(int(trajectories_.size()) - 1, fresh[b]);
      open_.push_back(int(trajectories_.size()) - 1);
    }

    // Trajectories that fell out of the window can no longer be extended.
    std::erase_if(open_, [&](int ti) { return trajectories_[std::size_t(ti)].back().frame < frame - cfg.t2_window; });
  }

  const std::vector<PointTrajectory>& trajectories() const { return trajectories_; }

  // (trajectory index, point index) pairs for points owned by `key`.
  const std::vector<std::pair<int, int>>* through(const ObjectKey& key) const {
    auto it = by_object_.find(key);
    return it == by_object_.end() ? nullptr : &it->second;
  }

 private:
  void append_point(int traj, TrackedPoint p) {
    const ObjectKey owner = p.owner;
    trajectories_[std::size_t(traj)].points.push_back(std::move(p));
    by_object_[owner].emplace_back(traj, int(trajectories_[std::size_t(traj)].points.size()) - 1);
  }

  std::vector<PointTrajectory> trajectories_;
  std::vector<int> open_;
  std::unordered_map<ObjectKey, std::vector<std::pair<int, int>>, ObjectKeyHash> by_object_;
  int last_frame_ = std::numeric_limits<int>::min();
};

// Point-based link similarity: each trajectory passing through both objects
// contributes its coherence score at the point it owns on each side; the
// per-object sums are normalized by the objects' total point counts.
inline std::optional<double> ls6_hog(const DetectedObject& a, const DetectedObject& b,
                                     const PointTrackStore* store, const TrackerConfig& cfg) {
  const int ma = a.appearance.point_count;
  const int mb = b.appearance.point_count;
  if (ma <= 0 || mb <= 0) return std::nullopt;
  if (store == nullptr) return 0.0;

  const auto* through_a = store->through(a.key);
  const auto* through_b = store->through(b.key);
  if (through_a == nullptr || through_b == nullptr) return 0.0;

  std::unordered_map<int, int> b_index;  // trajectory -> point index on b
  for (const auto& [ti, pi] : *through_b) b_index.emplace(ti, pi);

  // Coherence of the chain prefix ending at point `pi`; a first point has
  // no step history and scores 1.
  auto prefix_score = [&](const std::vector<TrackedPoint>& pts, int pi) {
    if (pi < 1) return 1.0;
    return coherence_score(std::span<const TrackedPoint>(pts.data(), std::size_t(pi) + 1), cfg).s;
  };

  double sum_a = 0.0, sum_b = 0.0;
  for (const auto& [ti, pi] : *through_a) {
    auto it = b_index.find(ti);
    if (it == b_index.end()) continue;
    const auto& pts = store->trajectories()[std::size_t(ti)].points;
    sum_a += prefix_score(pts, pi);
    sum_b += prefix_score(pts, it->second);
  }
  const double ls = std::min(sum_a / ma, sum_b / mb);
  return std::clamp(ls, 0.0, 1.0);
}

}  // namespace mft
