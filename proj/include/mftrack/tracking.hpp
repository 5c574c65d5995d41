// The online tracker: temporal-window link graph, trajectories with
// long-term feature statistics, global-score link resolution and the
// trajectory noise filter.
#pragma once

#include <algorithm>
#include <deque>
#include <map>
#include <optional>
#include <unordered_map>
#include <vector>

#include "mftrack/core.hpp"
#include "mftrack/detection.hpp"
#include "mftrack/evaluation.hpp"
#include "mftrack/point_tracking.hpp"
#include "mftrack/similarity.hpp"

namespace mft {

// Candidate link between two detections in different frames.
struct LinkEdge {
  ObjectKey from;  // earlier object
  ObjectKey to;    // later object
  double score = 0.0;
  SimilarityVector sim;
};

// Weighted graph over the detections in the active temporal window.
class LinkGraph {
 public:
  void add_object(const DetectedObject& obj) { objects_.emplace(obj.key, obj); }

  void add_edge(LinkEdge e) { edges_.emplace(edge_key(e.from, e.to), std::move(e)); }

  const LinkEdge* edge(const ObjectKey& from, const ObjectKey& to) const {
    auto it = edges_.find(edge_key(from, to));
    return it == edges_.end() ? nullptr : &it->second;
  }

  const DetectedObject* object(const ObjectKey& key) const {
    auto it = objects_.find(key);
    return it == objects_.end() ? nullptr : &it->second;
  }

  // Drops objects older than `min_frame` and their edges.
  void prune(int min_frame) {
    std::erase_if(objects_, [min_frame](const auto& kv) { return kv.first.frame < min_frame; });
    std::erase_if(edges_, [min_frame](const auto& kv) { return kv.second.from.frame < min_frame; });
  }

  // Window objects in key order.
  std::vector<const DetectedObject*> window_objects() const {
    std::vector<const DetectedObject*> out;
    out.reserve(objects_.size());
    for (const auto& [key, obj] : objects_) out.push_back(&obj);
    return out;
  }

  std::size_t edge_count() const { return edges_.size(); }

 private:
  static std::pair<ObjectKey, ObjectKey> edge_key(const ObjectKey& a, const ObjectKey& b) { return {a, b}; }

  std::map<ObjectKey, DetectedObject> objects_;
  std::map<std::pair<ObjectKey, ObjectKey>, LinkEdge> edges_;
};

// Running mean / standard deviation over the last Q pushed values.
class RollingStats {
 public:
  void push(double v, int q) {
    values_.push_back(v);
    while (int(values_.size()) > q) values_.pop_front();
  }
  int count() const { return int(values_.size()); }
  double mean() const {
    double s = 0.0;
    for (double v : values_) s += v;
    return values_.empty() ? 0.0 : s / double(values_.size());
  }
  double stddev() const {
    if (values_.size() < 2) return 0.0;
    const double m = mean();
    double s = 0.0;
    for (double v : values_) s += (v - m) * (v - m);
    return std::sqrt(s / double(values_.size() - 1));
  }

 private:
  std::deque<double> values_;
};

struct TrajectoryEntry {
  ObjectKey key;
  BBox2D bbox;
  std::optional<WorldPoint3> world;
};

// Features whose long-term behavior is summarized by a Gaussian over the
// trajectory's recent link-similarity values.
inline constexpr std::array<FeatureId, 5> kLongTermGaussianFeatures = {
    FeatureId::ShapeRatio, FeatureId::Area2D, FeatureId::ColorHist, FeatureId::ColorCov,
    FeatureId::DomColor,
};

inline bool long_term_uses_gaussian(FeatureId k) {
  return std::find(kLongTermGaussianFeatures.begin(), kLongTermGaussianFeatures.end(), k) !=
         kLongTermGaussianFeatures.end();
}

// An ordered chain of official links plus per-feature recent statistics.
struct Trajectory {
  int track_id = 0;
  std::vector<TrajectoryEntry> chain;
  std::array<RollingStats, kFeatureCount> stats;  // used for the Gaussian features
  bool terminated = false;
  int frames_since_last_link = 0;

  const TrajectoryEntry& head() const { return chain.back(); }
  int first_frame() const { return chain.front().key.frame; }
  int last_frame() const { return chain.back().key.frame; }
  int length_frames() const { return last_frame() - first_frame() + 1; }
};

// Similarity of a new object to the recent history of a trajectory for one
// feature. Displacement and point features pass the link value through; the
// appearance features score the link value against the trajectory's rolling
// Gaussian, damped by a length factor until the history fills up.
inline double long_term_similarity(double link_value, const Trajectory& traj, FeatureId k,
                                   const TrackerConfig& cfg) {
  if (!long_term_uses_gaussian(k)) return link_value;
  const RollingStats& st = traj.stats[std::size_t(static_cast<int>(k))];
  if (st.count() < 2) return link_value;
  const double sigma = std::max(st.stddev(), cfg.sigma_floor);
  const double g = gaussian_score(link_value, st.mean(), sigma, cfg.use_gaussian_pdf);
  return g * std::min(double(traj.length_frames()) / double(cfg.q_window), 1.0);
}

// Blend of link and long-term similarity over the weighted available
// features; the long-term share grows with trajectory length up to the cap.
inline double global_score(const SimilarityVector& sim, const Trajectory& traj, const FeatureWeights& weights,
                           const TrackerConfig& cfg) {
  const double beta =
      std::min(double(traj.length_frames()) / double(cfg.q_window), cfg.th4_beta_cap);
  double num = 0.0, den = 0.0;
  for (int k = 0; k < kFeatureCount; ++k) {
    const double w = weights.w[std::size_t(k)];
    if (w <= 0.0 || !sim.available[std::size_t(k)]) continue;
    const double ls = sim.values[std::size_t(k)];
    const double lt = long_term_similarity(ls, traj, FeatureId(k), cfg);
    num += w * ((1.0 - beta) * ls + beta * lt);
    den += w;
  }
  return den > 0.0 ? num / den : 0.0;
}

struct TrackResult {
  std::vector<Trajectory> kept;
  std::vector<Trajectory> removed;
};

// Noise filter: drop trajectories that are too short in time or never move
// far enough. Spatial extent is measured in world meters when the whole
// chain carries world points, else in pixels on the box centers.
inline TrackResult filter_trajectories(std::vector<Trajectory> trajectories, const TrackerConfig& cfg) {
  TrackResult out;
  for (auto& t : trajectories) {
    bool remove = t.length_frames() < cfg.th5_min_frames;
    if (!remove) {
      const bool use_world =
          std::all_of(t.chain.begin(), t.chain.end(), [](const TrajectoryEntry& e) { return e.world.has_value(); });
      double d_max = 0.0;
      for (std::size_t i = 0; i < t.chain.size(); ++i)
        for (std::size_t j = i + 1; j < t.chain.size(); ++j) {
          const double d = use_world ? distance(*t.chain[i].world, *t.chain[j].world)
                                     : distance(bbox_center(t.chain[i].bbox), bbox_center(t.chain[j].bbox));
          d_max = std::max(d_max, d);
        }
      remove = d_max < (use_world ? cfg.th6_min_extent : cfg.th6_min_extent_px);
    }
    (remove ? out.removed : out.kept).push_back(std::move(t));
  }
  return out;
}

// Frame-by-frame tracker. Feed frames in increasing order, then finish().
class Tracker {
 public:
  Tracker(FeatureWeights weights, TrackerConfig cfg) : weights_(std::move(weights)), cfg_(std::move(cfg)) {
    if (!weights_.valid()) throw std::invalid_argument("Tracker: invalid feature weights");
    if (auto bad = validate_config(cfg_); !bad.empty())
      throw std::invalid_argument("Tracker: invalid config field " + bad.front());
  }

  void process_frame(int frame, const std::vector<DetectedObject>& detections) {
    if (has_frame_ && frame <= current_frame_)
      throw std::invalid_argument("Tracker: frames must arrive in increasing order");
    has_frame_ = true;
    current_frame_ = frame;

    std::vector<const DetectedObject*> sorted;
    sorted.reserve(detections.size());
    for (const auto& d : detections) {
      if (d.key.frame != frame) throw std::invalid_argument("Tracker: detection frame mismatch");
      sorted.push_back(&d);
    }
    std::sort(sorted.begin(), sorted.end(),
              [](const DetectedObject* a, const DetectedObject* b) { return a->key < b->key; });

    points_.advance(frame, sorted, cfg_);
    const auto delta = build_links(sorted);
    determine_trajectories(sorted, delta);
    graph_.prune(frame - cfg_.t2_window);
  }

  // Terminates everything still live and applies the noise filter.
  TrackResult finish() {
    for (auto& t : trajectories_) t.terminated = true;
    return filter_trajectories(std::move(trajectories_), cfg_);
  }

  const std::vector<Trajectory>& trajectories() const { return trajectories_; }
  const LinkGraph& graph() const { return graph_; }
  const PointTrackStore& points() const { return points_; }

 private:
  // Evaluates candidate links from every window object to each new
  // detection; an edge is kept when the link similarity reaches the
  // threshold.
  std::vector<LinkEdge> build_links(const std::vector<const DetectedObject*>& news) {
    std::vector<LinkEdge> delta;
    const auto window = graph_.window_objects();
    for (const DetectedObject* nu : news) {
      for (const DetectedObject* old : window) {
        if (old->key.frame >= nu->key.frame) continue;
        if (nu->key.frame - old->key.frame > cfg_.t2_window) continue;
        auto link = link_similarity(*old, *nu, weights_, cfg_, &points_);
        if (!link || link->score < cfg_.th1_link) continue;
        LinkEdge e{old->key, nu->key, link->score, std::move(link->sim)};
        delta.push_back(e);
        graph_.add_edge(std::move(e));
      }
      graph_.add_object(*nu);
    }
    return delta;
  }

  // Resolves official links for the current frame by descending global
  // score; each detection takes at most one trajectory and vice versa.
  void determine_trajectories(const std::vector<const DetectedObject*>& news,
                              const std::vector<LinkEdge>& delta) {
    std::unordered_map<ObjectKey, std::vector<const LinkEdge*>, ObjectKeyHash> edges_to;
    for (const auto& e : delta) edges_to[e.to].push_back(&e);

    struct Candidate {
      double gs;
      ObjectKey det;
      int traj_index;
      const LinkEdge* edge;
    };
    std::vector<Candidate> cands;
    std::unordered_map<ObjectKey, int, ObjectKeyHash> head_to_traj;
    for (int ti = 0; ti < int(trajectories_.size()); ++ti) {
      const Trajectory& t = trajectories_[std::size_t(ti)];
      if (!t.terminated) head_to_traj[t.head().key] = ti;
    }

    for (const DetectedObject* nu : news) {
      auto eit = edges_to.find(nu->key);
      if (eit == edges_to.end()) continue;
      for (const LinkEdge* e : eit->second) {
        auto hit = head_to_traj.find(e->from);
        if (hit == head_to_traj.end()) continue;
        cands.push_back({global_score(e->sim, trajectories_[std::size_t(hit->second)], weights_, cfg_),
                         nu->key, hit->second, e});
      }
    }

    std::sort(cands.begin(), cands.end(), [this](const Candidate& a, const Candidate& b) {
      if (a.gs != b.gs) return a.gs > b.gs;
      if (a.det != b.det) return a.det < b.det;
      return trajectories_[std::size_t(a.traj_index)].track_id < trajectories_[std::size_t(b.traj_index)].track_id;
    });

    std::unordered_map<ObjectKey, bool, ObjectKeyHash> det_claimed;
    std::vector<bool> traj_claimed(trajectories_.size(), false);
    for (const auto& c : cands) {
      if (det_claimed[c.det] || traj_claimed[std::size_t(c.traj_index)]) continue;
      det_claimed[c.det] = true;
      traj_claimed[std::size_t(c.traj_index)] = true;
      extend(trajectories_[std::size_t(c.traj_index)], *c.edge);
    }

    for (const DetectedObject* nu : news) {
      if (det_claimed[nu->key]) continue;
      Trajectory t;
      t.track_id = next_track_id_++;
      t.chain.push_back({nu->key, nu->bbox, nu->world});
      trajectories_.push_back(std::move(t));
    }

    // Silence bookkeeping and termination for everything not extended now.
    for (auto& t : trajectories_) {
      if (t.terminated) continue;
      if (t.head().key.frame == current_frame_) {
        t.frames_since_last_link = 0;
        continue;
      }
      t.frames_since_last_link = current_frame_ - t.head().key.frame;
      if (t.frames_since_last_link >= cfg_.t2_window) t.terminated = true;
    }
  }

  void extend(Trajectory& t, const LinkEdge& e) {
    const DetectedObject* obj = graph_.object(e.to);
    t.chain.push_back({e.to, obj->bbox, obj->world});
    for (FeatureId k : kLongTermGaussianFeatures)
      if (e.sim.has(k)) t.stats[std::size_t(static_cast<int>(k))].push(e.sim.value(k), cfg_.q_window);
  }

  FeatureWeights weights_;
  TrackerConfig cfg_;
  LinkGraph graph_;
  PointTrackStore points_;
  std::vector<Trajectory> trajectories_;
  int next_track_id_ = 1;
  int current_frame_ = 0;
  bool has_frame_ = false;
};

// Batch driver over per-frame detection lists.
inline TrackResult track(const std::map<int, std::vector<DetectedObject>>& frames, const FeatureWeights& weights,
                         const TrackerConfig& cfg) {
  Tracker tracker(weights, cfg);
  for (const auto& [frame, dets] : frames) tracker.process_frame(frame, dets);
  return tracker.finish();
}

// Kept trajectories as per-frame box series, ordered by track id.
inline std::vector<BoxTrack> to_box_tracks(const std::vector<Trajectory>& trajectories) {
  std::vector<BoxTrack> out;
  for (const auto& t : trajectories) {
    BoxTrack bt;
    bt.id = t.track_id;
    for (const auto& e : t.chain) bt.boxes.push_back({e.key.frame, e.bbox, e.world});
    out.push_back(std::move(bt));
  }
  std::sort(out.begin(), out.end(), [](const BoxTrack& a, const BoxTrack& b) { return a.id < b.id; });
  return out;
}

}  // namespace mft
