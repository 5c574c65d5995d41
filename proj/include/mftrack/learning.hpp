// Offline boosting over labeled consecutive-frame object pairs, producing
// the per-context feature weights.
#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <vector>

#include "mftrack/core.hpp"
#include "mftrack/evaluation.hpp"
#include "mftrack/similarity.hpp"

namespace mft {

struct TrainingPair {
  SimilarityVector sim;
  int label = 0;  // +1 same object, -1 different
};

struct BoostState {
  std::vector<double> sample_weights;                 // sums to 1
  int round = 0;                                      // completed rounds
  std::vector<std::pair<FeatureId, double>> chosen;   // (feature, alpha) per kept round
};

enum class BoostStop { ZeroTrainingError, NonSeparable, MaxRounds };

struct BoostRound {
  int round = 0;
  FeatureId feature = FeatureId::Disp3D;
  double eps = 0.0;
  double alpha = 0.0;
  double loss_bound = 1.0;   // product of per-round normalizers
  double train_error = 0.0;  // strong classifier, unweighted
};

struct BoostReport {
  std::vector<BoostRound> rounds;
  BoostStop stop = BoostStop::MaxRounds;
  bool non_separable = false;
  FeatureWeights weights;
};

// Threshold rule on one feature; an unavailable feature never votes "same".
inline int weak_classify(FeatureId k, const TrainingPair& pair, double th1) {
  if (!pair.sim.has(k)) return -1;
  return pair.sim.value(k) >= th1 ? +1 : -1;
}

// Weight mass of the samples the feature misclassifies.
inline double weighted_loss(FeatureId k, const std::vector<TrainingPair>& pairs,
                            const std::vector<double>& d, double th1) {
  double eps = 0.0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const int h = weak_classify(k, pairs[i], th1);
    eps += d[i] * std::max(0, -pairs[i].label * h);
  }
  return eps;
}

inline double boost_alpha(double eps) {
  constexpr double kEpsMin = 1e-10;  // keeps alpha finite on perfect rounds
  eps = std::max(eps, kEpsMin);
  if (eps >= 0.5) throw std::invalid_argument("boost_alpha: eps must be below 0.5");
  return 0.5 * std::log((1.0 - eps) / eps);
}

inline BoostState init_boost_state(std::size_t n) {
  BoostState s;
  s.sample_weights.assign(n, 1.0 / double(n));
  return s;
}

// One reweighting step: misclassified samples gain mass, the rest lose it,
// then everything renormalizes to sum 1.
inline void update_sample_weights(BoostState& state, const std::vector<int>& predictions, double alpha,
                                  const std::vector<TrainingPair>& pairs) {
  double norm = 0.0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    state.sample_weights[i] *= std::exp(-alpha * pairs[i].label * predictions[i]);
    norm += state.sample_weights[i];
  }
  for (double& w : state.sample_weights) w /= norm;
  ++state.round;
}

// Round loop: pick the feature with the lowest weighted loss (ties by
// feature order), accumulate its vote weight, reweight samples. Stops on
// zero training error, a loss at or above chance, or the round cap.
inline BoostReport run_adaboost(const std::vector<TrainingPair>& pairs, const TrackerConfig& cfg,
                                int max_rounds = 64) {
  if (pairs.empty()) throw std::invalid_argument("run_adaboost: no training pairs");
  bool pos = false, neg = false;
  for (const auto& p : pairs) {
    if (p.label == +1) pos = true;
    else if (p.label == -1) neg = true;
    else throw std::invalid_argument("run_adaboost: labels must be +1 or -1");
  }
  if (!pos || !neg) throw std::invalid_argument("run_adaboost: both labels must be present");

  const std::size_t n = pairs.size();
  std::array<std::vector<int>, kFeatureCount> h;
  for (FeatureId k : kAllFeatures) {
    auto& col = h[std::size_t(static_cast<int>(k))];
    col.resize(n);
    for (std::size_t i = 0; i < n; ++i) col[i] = weak_classify(k, pairs[i], cfg.th1_link);
  }

  BoostState state = init_boost_state(n);
  std::vector<double> score(n, 0.0);  // strong classifier margin
  BoostReport report;
  report.stop = BoostStop::MaxRounds;
  double bound = 1.0;

  for (int z = 1; z <= max_rounds; ++z) {
    int best = -1;
    double best_eps = 0.0;
    for (int k = 0; k < kFeatureCount; ++k) {
      double eps = 0.0;
      for (std::size_t i = 0; i < n; ++i) eps += state.sample_weights[i] * std::max(0, -pairs[i].label * h[std::size_t(k)][i]);
      if (best < 0 || eps < best_eps) {
        best = k;
        best_eps = eps;
      }
    }
    if (best_eps >= 0.5) {
      report.stop = BoostStop::NonSeparable;
      break;
    }
    const double alpha = boost_alpha(best_eps);
    state.chosen.emplace_back(FeatureId(best), alpha);
    update_sample_weights(state, h[std::size_t(best)], alpha, pairs);
    bound *= 2.0 * std::sqrt(std::max(best_eps, 1e-10) * (1.0 - best_eps));

    int wrong = 0;
    for (std::size_t i = 0; i < n; ++i) {
      score[i] += alpha * h[std::size_t(best)][i];
      wrong += ((score[i] >= 0.0 ? +1 : -1) != pairs[i].label);
    }
    const double train_error = double(wrong) / double(n);
    report.rounds.push_back({z, FeatureId(best), best_eps, alpha, bound, train_error});
    if (wrong == 0) {
      report.stop = BoostStop::ZeroTrainingError;
      break;
    }
  }

  double total = 0.0;
  for (const auto& [k, alpha] : state.chosen) {
    report.weights[k] += alpha;
    total += alpha;
  }
  if (total > 0.0) {
    for (double& w : report.weights.w) w /= total;
  } else {
    // Nothing beat chance in the first round: fall back to uniform weights.
    report.weights = FeatureWeights::uniform();
  }
  report.non_separable = report.stop == BoostStop::NonSeparable ||
                         (report.stop == BoostStop::MaxRounds && !report.rounds.empty() &&
                          report.rounds.back().train_error >= 0.4);
  return report;
}

inline std::string boost_report_text(const BoostReport& r) {
  std::ostringstream os;
  os << "round  feature      eps       alpha     train_error\n";
  for (const auto& rd : r.rounds) {
    char line[160];
    std::snprintf(line, sizeof line, "%-6d %-12s %-9.5f %-9.5f %-9.5f\n", rd.round,
                  std::string(feature_name(rd.feature)).c_str(), rd.eps, rd.alpha, rd.train_error);
    os << line;
  }
  switch (r.stop) {
    case BoostStop::ZeroTrainingError: os << "stop: zero training error\n"; break;
    case BoostStop::NonSeparable: os << "stop: no feature beats chance\n"; break;
    case BoostStop::MaxRounds: os << "stop: round limit\n"; break;
  }
  if (r.non_separable) os << "warning: context not separable with these features\n";
  os << "weights:\n";
  for (FeatureId k : kAllFeatures) {
    char line[96];
    std::snprintf(line, sizeof line, "  %-12s %.6f\n", std::string(feature_name(k)).c_str(), r.weights[k]);
    os << line;
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Pair labeling
// ---------------------------------------------------------------------------

// Builds labeled pairs from detections and ground-truth tracks: detections
// get identities by per-frame box matching, then every cross pair between
// consecutive frames becomes a sample. Pairs with an unidentified side are
// dropped.
inline std::vector<TrainingPair> label_pairs(const std::vector<GroundTruthTrack>& gt,
                                             const std::vector<DetectedObject>& detections,
                                             const TrackerConfig& cfg) {
  std::map<int, std::vector<const DetectedObject*>> by_frame;
  for (const auto& d : detections) by_frame[d.frame()].push_back(&d);
  for (auto& [frame, objs] : by_frame)
    std::sort(objs.begin(), objs.end(),
              [](const DetectedObject* a, const DetectedObject* b) { return a->key < b->key; });

  std::map<int, std::vector<BBox2D>> gt_by_frame_boxes;
  std::map<int, std::vector<int>> gt_by_frame_ids;
  for (const auto& track : gt)
    for (const auto& tb : track.boxes) {
      gt_by_frame_boxes[tb.frame].push_back(tb.bbox);
      gt_by_frame_ids[tb.frame].push_back(track.id);
    }

  // Identity per detection via per-frame matching.
  std::unordered_map<ObjectKey, int, ObjectKeyHash> identity;
  for (const auto& [frame, objs] : by_frame) {
    auto itb = gt_by_frame_boxes.find(frame);
    if (itb == gt_by_frame_boxes.end()) continue;
    std::vector<BBox2D> det_boxes;
    det_boxes.reserve(objs.size());
    for (const auto* o : objs) det_boxes.push_back(o->bbox);
    for (const auto& [g, t] : match_frame(itb->second, det_boxes, cfg.iou_threshold))
      identity[objs[std::size_t(t)]->key] = gt_by_frame_ids[frame][std::size_t(g)];
  }

  // Point trajectories advance over the whole sequence so the point feature
  // sees the same state it would when tracking.
  PointTrackStore store;
  std::vector<TrainingPair> out;
  for (auto it = by_frame.begin(); it != by_frame.end(); ++it) {
    store.advance(it->first, it->second, cfg);
    auto prev = by_frame.find(it->first - 1);
    if (prev == by_frame.end()) continue;
    for (const DetectedObject* a : prev->second)
      for (const DetectedObject* b : it->second) {
        auto ia = identity.find(a->key);
        auto ib = identity.find(b->key);
        if (ia == identity.end() || ib == identity.end()) continue;
        TrainingPair tp;
        tp.sim = similarity_vector(*a, *b, cfg, &store);
        tp.label = ia->second == ib->second ? +1 : -1;
        out.push_back(std::move(tp));
      }
  }
  return out;
}

}  // namespace mft
