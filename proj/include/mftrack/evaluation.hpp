// Tracking quality metrics against ground-truth tracks.
#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "mftrack/core.hpp"

namespace mft {

struct TimedBox {
  int frame = 0;
  BBox2D bbox;
  std::optional<WorldPoint3> world;
};

// A track as a per-frame box series; frames strictly increasing.
struct BoxTrack {
  int id = 0;
  std::vector<TimedBox> boxes;
};

using GroundTruthTrack = BoxTrack;

struct MetricReport {
  double m1 = 0.0;
  double m2 = 0.0;
  double m3 = 0.0;
  double m_bar = 0.0;
  int tp = 0;
  int fn = 0;
  int fp = 0;
};

// Greedy per-frame assignment by descending IoU; every box used at most
// once, pairs below the threshold stay unmatched.
inline std::vector<std::pair<int, int>> match_frame(const std::vector<BBox2D>& gt,
                                                    const std::vector<BBox2D>& tracked,
                                                    double iou_threshold) {
  if (!(iou_threshold > 0.0) || iou_threshold > 1.0)
    throw std::invalid_argument("match_frame: iou_threshold must be in (0,1]");
  struct Cand {
    double iou;
    int g, t;
  };
  std::vector<Cand> cands;
  for (int g = 0; g < int(gt.size()); ++g)
    for (int t = 0; t < int(tracked.size()); ++t) {
      const double iou = bbox_iou(gt[std::size_t(g)], tracked[std::size_t(t)]);
      if (iou >= iou_threshold) cands.push_back({iou, g, t});
    }
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    if (a.iou != b.iou) return a.iou > b.iou;
    if (a.g != b.g) return a.g < b.g;
    return a.t < b.t;
  });
  std::vector<bool> ug(gt.size(), false), ut(tracked.size(), false);
  std::vector<std::pair<int, int>> out;
  for (const auto& c : cands) {
    if (ug[std::size_t(c.g)] || ut[std::size_t(c.t)]) continue;
    ug[std::size_t(c.g)] = true;
    ut[std::size_t(c.t)] = true;
    out.emplace_back(c.g, c.t);
  }
  return out;
}

namespace detail {

// Frame-by-frame association rollup shared by all metrics.
struct Association {
  // (gt index, track index) -> frames matched together
  std::map<std::pair<int, int>, int> pair_frames;
  std::vector<int> gt_lifetime;       // frames per gt track
  std::vector<int> gt_matched;        // frames where the gt matched any track
  std::vector<int> track_lifetime;    // frames per output track
  std::vector<int> track_matched;     // frames where the track matched any gt
};

inline Association associate(const std::vector<GroundTruthTrack>& gt, const std::vector<BoxTrack>& tracks,
                             const TrackerConfig& cfg) {
  Association as;
  as.gt_lifetime.resize(gt.size());
  as.gt_matched.assign(gt.size(), 0);
  as.track_lifetime.resize(tracks.size());
  as.track_matched.assign(tracks.size(), 0);

  std::map<int, std::vector<std::pair<int, BBox2D>>> gt_by_frame, trk_by_frame;
  for (int g = 0; g < int(gt.size()); ++g) {
    as.gt_lifetime[std::size_t(g)] = int(gt[std::size_t(g)].boxes.size());
    for (const auto& tb : gt[std::size_t(g)].boxes) gt_by_frame[tb.frame].emplace_back(g, tb.bbox);
  }
  for (int t = 0; t < int(tracks.size()); ++t) {
    as.track_lifetime[std::size_t(t)] = int(tracks[std::size_t(t)].boxes.size());
    for (const auto& tb : tracks[std::size_t(t)].boxes) trk_by_frame[tb.frame].emplace_back(t, tb.bbox);
  }

  for (const auto& [frame, gts] : gt_by_frame) {
    auto it = trk_by_frame.find(frame);
    if (it == trk_by_frame.end()) continue;
    std::vector<BBox2D> gb, tb;
    for (const auto& [idx, box] : gts) gb.push_back(box);
    for (const auto& [idx, box] : it->second) tb.push_back(box);
    for (const auto& [g, t] : match_frame(gb, tb, cfg.iou_threshold)) {
      const int gi = gts[std::size_t(g)].first;
      const int ti = it->second[std::size_t(t)].first;
      ++as.pair_frames[{gi, ti}];
      ++as.gt_matched[std::size_t(gi)];
      ++as.track_matched[std::size_t(ti)];
    }
  }
  return as;
}

}  // namespace detail

// Fraction of time reference objects are tracked, averaged over references.
inline double metric_m1(const std::vector<GroundTruthTrack>& gt, const std::vector<BoxTrack>& tracks,
                        const TrackerConfig& cfg) {
  if (gt.empty()) throw std::invalid_argument("metric_m1: no ground-truth tracks");
  const auto as = detail::associate(gt, tracks, cfg);
  double s = 0.0;
  for (std::size_t g = 0; g < gt.size(); ++g)
    if (as.gt_lifetime[g] > 0) s += double(as.gt_matched[g]) / double(as.gt_lifetime[g]);
  return s / double(gt.size());
}

// Inverse of track fragmentation per reference object.
inline double metric_m2(const std::vector<GroundTruthTrack>& gt, const std::vector<BoxTrack>& tracks,
                        const TrackerConfig& cfg) {
  if (gt.empty()) throw std::invalid_argument("metric_m2: no ground-truth tracks");
  const auto as = detail::associate(gt, tracks, cfg);
  std::vector<std::set<int>> partners(gt.size());
  for (const auto& [pair, frames] : as.pair_frames)
    if (frames > 0) partners[std::size_t(pair.first)].insert(pair.second);
  double s = 0.0;
  for (const auto& p : partners)
    if (!p.empty()) s += 1.0 / double(p.size());
  return s / double(gt.size());
}

// Inverse of reference-id mixing per output track; tracks that never match
// anything are counted by FP, not here.
inline double metric_m3(const std::vector<GroundTruthTrack>& gt, const std::vector<BoxTrack>& tracks,
                        const TrackerConfig& cfg) {
  if (tracks.empty()) throw std::invalid_argument("metric_m3: no output tracks");
  const auto as = detail::associate(gt, tracks, cfg);
  std::vector<std::set<int>> partners(tracks.size());
  for (const auto& [pair, frames] : as.pair_frames)
    if (frames > 0) partners[std::size_t(pair.second)].insert(pair.first);
  double s = 0.0;
  int counted = 0;
  for (const auto& p : partners) {
    if (p.empty()) continue;
    s += 1.0 / double(p.size());
    ++counted;
  }
  return counted > 0 ? s / double(counted) : 0.0;
}

inline double m_bar(double m1, double m2, double m3) { return (m1 + m2 + m3) / 3.0; }

// TP: reference tracks covered by a track whose dominant reference they are.
// FN: the remaining references. FP: tracks with most frames unmatched.
inline std::tuple<int, int, int> count_tp_fn_fp(const std::vector<GroundTruthTrack>& gt,
                                                const std::vector<BoxTrack>& tracks,
                                                const TrackerConfig& cfg) {
  const auto as = detail::associate(gt, tracks, cfg);

  // Dominant reference per output track (most shared frames; map order
  // leaves ties with the lower reference index).
  std::vector<int> dominant(tracks.size(), -1);
  std::vector<int> dominant_frames(tracks.size(), 0);
  for (const auto& [pair, frames] : as.pair_frames) {
    const auto [g, t] = pair;
    if (frames > dominant_frames[std::size_t(t)]) {
      dominant[std::size_t(t)] = g;
      dominant_frames[std::size_t(t)] = frames;
    }
  }

  int tp = 0;
  for (int g = 0; g < int(gt.size()); ++g) {
    bool covered = false;
    for (int t = 0; t < int(tracks.size()) && !covered; ++t) {
      auto it = as.pair_frames.find({g, t});
      if (it == as.pair_frames.end()) continue;
      covered = dominant[std::size_t(t)] == g &&
                double(it->second) >= cfg.coverage_fraction * double(as.gt_lifetime[std::size_t(g)]);
    }
    tp += covered;
  }

  int fp = 0;
  for (int t = 0; t < int(tracks.size()); ++t)
    if (2 * as.track_matched[std::size_t(t)] < as.track_lifetime[std::size_t(t)]) ++fp;

  return {tp, int(gt.size()) - tp, fp};
}

inline MetricReport evaluate_tracking(const std::vector<GroundTruthTrack>& gt,
                                      const std::vector<BoxTrack>& tracks, const TrackerConfig& cfg) {
  MetricReport r;
  r.m1 = metric_m1(gt, tracks, cfg);
  r.m2 = metric_m2(gt, tracks, cfg);
  r.m3 = metric_m3(gt, tracks, cfg);
  r.m_bar = m_bar(r.m1, r.m2, r.m3);
  std::tie(r.tp, r.fn, r.fp) = count_tp_fn_fp(gt, tracks, cfg);
  return r;
}

inline std::string metric_report_text(const MetricReport& r) {
  std::ostringstream os;
  char line[128];
  std::snprintf(line, sizeof line, "M1    %.4f\nM2    %.4f\nM3    %.4f\nM_bar %.4f\n", r.m1, r.m2, r.m3,
                r.m_bar);
  os << line;
  os << "TP    " << r.tp << "\nFN    " << r.fn << "\nFP    " << r.fp << "\n";
  return os.str();
}

// Machine-readable key=value form.
inline std::string metric_report_kv(const MetricReport& r) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "m1=%.6f\nm2=%.6f\nm3=%.6f\nm_bar=%.6f\n", r.m1, r.m2, r.m3, r.m_bar);
  os << line << "tp=" << r.tp << "\nfn=" << r.fn << "\nfp=" << r.fp << "\n";
  return os.str();
}

}  // namespace mft
