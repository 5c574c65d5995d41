// File formats: line-delimited JSON record files for detections, tracks and
// ground truth; key-value text for config and weights; binary PPM/PGM
// images for frames and masks.
#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "mftrack/core.hpp"
#include "mftrack/detection.hpp"
#include "mftrack/evaluation.hpp"
#include "mftrack/features.hpp"

namespace mft {

using json = nlohmann::json;

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Images
// ---------------------------------------------------------------------------

struct ImageRGB {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;  // 3 * width * height
};

struct ImageGray {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;  // width * height
};

namespace detail {

inline int read_pnm_token(std::istream& in, const std::string& path) {
  // Skips whitespace and '#' comments between header tokens.
  for (;;) {
    int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
      continue;
    }
    if (std::isspace(c)) {
      in.get();
      continue;
    }
    break;
  }
  int v = 0;
  if (!(in >> v)) throw ParseError(path + ": malformed PNM header");
  return v;
}

}  // namespace detail

inline void write_ppm(const ImageRGB& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_ppm: cannot open " + path);
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data.data()), std::streamsize(img.data.size()));
}

inline ImageRGB read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_ppm: cannot open " + path);
  std::string magic;
  in >> magic;
  if (magic != "P6") throw ParseError(path + ": not a P6 PPM file");
  ImageRGB img;
  img.width = detail::read_pnm_token(in, path);
  img.height = detail::read_pnm_token(in, path);
  const int maxval = detail::read_pnm_token(in, path);
  if (maxval != 255) throw ParseError(path + ": only maxval 255 supported");
  in.get();  // single whitespace after header
  img.data.resize(std::size_t(3 * img.width * img.height));
  in.read(reinterpret_cast<char*>(img.data.data()), std::streamsize(img.data.size()));
  if (in.gcount() != std::streamsize(img.data.size())) throw ParseError(path + ": truncated pixel data");
  return img;
}

inline void write_pgm(const ImageGray& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_pgm: cannot open " + path);
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data.data()), std::streamsize(img.data.size()));
}

inline ImageGray read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_pgm: cannot open " + path);
  std::string magic;
  in >> magic;
  if (magic != "P5") throw ParseError(path + ": not a P5 PGM file");
  ImageGray img;
  img.width = detail::read_pnm_token(in, path);
  img.height = detail::read_pnm_token(in, path);
  const int maxval = detail::read_pnm_token(in, path);
  if (maxval != 255) throw ParseError(path + ": only maxval 255 supported");
  in.get();
  img.data.resize(std::size_t(img.width * img.height));
  in.read(reinterpret_cast<char*>(img.data.data()), std::streamsize(img.data.size()));
  if (in.gcount() != std::streamsize(img.data.size())) throw ParseError(path + ": truncated pixel data");
  return img;
}

// Crops the bbox (clamped to the image) into a region; a missing mask means
// all-foreground.
inline RegionPixels crop_region(const ImageRGB& frame, const ImageGray* mask, const BBox2D& bbox) {
  const int x0 = std::clamp(int(std::lround(bbox.x)), 0, frame.width - 1);
  const int y0 = std::clamp(int(std::lround(bbox.y)), 0, frame.height - 1);
  const int x1 = std::clamp(int(std::lround(bbox.x + bbox.w)), x0 + 1, frame.width);
  const int y1 = std::clamp(int(std::lround(bbox.y + bbox.h)), y0 + 1, frame.height);
  RegionPixels r;
  r.width = x1 - x0;
  r.height = y1 - y0;
  r.rgb.resize(std::size_t(3 * r.width * r.height));
  r.mask.resize(std::size_t(r.width * r.height));
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) {
      const std::size_t dst = std::size_t((y - y0) * r.width + (x - x0));
      for (int c = 0; c < 3; ++c)
        r.rgb[3 * dst + std::size_t(c)] = frame.data[std::size_t(3 * (y * frame.width + x) + c)];
      r.mask[dst] = mask ? (mask->data[std::size_t(y * frame.width + x)] >= 128 ? 1 : 0) : 1;
    }
  return r;
}

// ---------------------------------------------------------------------------
// Appearance payload (JSON)
// ---------------------------------------------------------------------------

namespace detail {

inline json covariance_to_json(const CovarianceMatrix& c) {
  // Upper triangle, row-major.
  json v = json::array();
  for (Eigen::Index i = 0; i < c.rows(); ++i)
    for (Eigen::Index j = i; j < c.cols(); ++j) v.push_back(c(i, j));
  return json{{"dim", c.rows()}, {"upper", std::move(v)}};
}

inline CovarianceMatrix covariance_from_json(const json& j) {
  const int dim = j.at("dim").get<int>();
  const auto& v = j.at("upper");
  CovarianceMatrix c(dim, dim);
  std::size_t idx = 0;
  for (int i = 0; i < dim; ++i)
    for (int jj = i; jj < dim; ++jj) {
      const double x = v.at(idx++).get<double>();
      c(i, jj) = x;
      c(jj, i) = x;
    }
  return c;
}

template <typename Cell, typename ToJson>
json pyramid_to_json(const Pyramid<Cell>& p, ToJson cell_to_json) {
  json levels = json::array();
  for (const auto& level : p.levels) {
    json cells = json::array();
    for (const auto& cell : level) {
      if (cell)
        cells.push_back(cell_to_json(*cell));
      else
        cells.push_back(nullptr);
    }
    levels.push_back(std::move(cells));
  }
  return levels;
}

template <typename Cell, typename FromJson>
Pyramid<Cell> pyramid_from_json(const json& j, FromJson cell_from_json) {
  Pyramid<Cell> p;
  for (const auto& level : j) {
    std::vector<std::optional<Cell>> cells;
    for (const auto& cell : level) {
      if (cell.is_null())
        cells.push_back(std::nullopt);
      else
        cells.push_back(cell_from_json(cell));
    }
    p.levels.push_back(std::move(cells));
  }
  return p;
}

inline json dcd_to_json(const DominantColorSet& s) {
  json colors = json::array();
  for (const auto& c : s.colors) colors.push_back(json::array({c.rgb[0], c.rgb[1], c.rgb[2], c.fraction}));
  return colors;
}

inline DominantColorSet dcd_from_json(const json& j) {
  DominantColorSet s;
  for (const auto& c : j)
    s.colors.push_back({{c.at(0).get<double>(), c.at(1).get<double>(), c.at(2).get<double>()}, c.at(3).get<double>()});
  return s;
}

}  // namespace detail

inline json appearance_to_json(const Appearance& a) {
  json j;
  if (a.histogram.present())
    j["hist"] = json{{"bins", a.histogram.bins_per_channel}, {"values", a.histogram.values}};
  if (a.cov_pyramid.present()) j["cov"] = detail::pyramid_to_json(a.cov_pyramid, detail::covariance_to_json);
  if (a.dcd_pyramid.present()) j["dcd"] = detail::pyramid_to_json(a.dcd_pyramid, detail::dcd_to_json);
  if (!a.points.empty()) {
    json pts = json::array();
    for (const auto& p : a.points) pts.push_back(json::array({p.position.x, p.position.y, p.descriptor}));
    j["points"] = std::move(pts);
  }
  j["point_count"] = a.point_count;
  return j;
}

inline Appearance appearance_from_json(const json& j) {
  Appearance a;
  if (j.contains("hist")) {
    a.histogram.bins_per_channel = j["hist"].at("bins").get<int>();
    a.histogram.values = j["hist"].at("values").get<std::vector<double>>();
  }
  if (j.contains("cov"))
    a.cov_pyramid = detail::pyramid_from_json<CovarianceMatrix>(j["cov"], detail::covariance_from_json);
  if (j.contains("dcd"))
    a.dcd_pyramid = detail::pyramid_from_json<DominantColorSet>(j["dcd"], detail::dcd_from_json);
  if (j.contains("points"))
    for (const auto& p : j["points"])
      a.points.push_back({{p.at(0).get<double>(), p.at(1).get<double>()}, p.at(2).get<std::vector<double>>()});
  a.point_count = j.value("point_count", int(a.points.size()));
  return a;
}

// ---------------------------------------------------------------------------
// Detection records
// ---------------------------------------------------------------------------

// One detection as read from or written to a record file.
struct DetectionRecord {
  int frame = 0;
  BBox2D bbox;
  std::optional<WorldPoint3> world;
  std::optional<Appearance> features;
  std::optional<std::string> frame_image;
  std::optional<std::string> mask_image;
};

struct DetectionFile {
  std::vector<DetectionRecord> records;  // sorted by frame
  std::vector<std::string> warnings;
};

inline json detection_record_to_json(const DetectionRecord& r) {
  json j;
  j["frame"] = r.frame;
  j["bbox"] = json::array({r.bbox.x, r.bbox.y, r.bbox.w, r.bbox.h});
  if (r.world) j["world"] = json::array({r.world->x, r.world->y, r.world->z});
  if (r.features) j["features"] = appearance_to_json(*r.features);
  if (r.frame_image) j["frame_image"] = *r.frame_image;
  if (r.mask_image) j["mask_image"] = *r.mask_image;
  return j;
}

inline DetectionRecord detection_record_from_json(const json& j, const std::string& where) {
  DetectionRecord r;
  if (!j.contains("frame")) throw ParseError(where + ": missing field 'frame'");
  r.frame = j["frame"].get<int>();
  if (r.frame < 0) throw ParseError(where + ": frame must be >= 0");
  if (!j.contains("bbox")) throw ParseError(where + ": missing field 'bbox'");
  const auto& b = j["bbox"];
  if (!b.is_array() || b.size() != 4) throw ParseError(where + ": bbox must be [x,y,w,h]");
  try {
    r.bbox = BBox2D(b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>());
  } catch (const std::invalid_argument& e) {
    throw ParseError(where + ": " + e.what());
  }
  if (j.contains("world")) {
    const auto& w = j["world"];
    if (!w.is_array() || w.size() != 3) throw ParseError(where + ": world must be [X,Y,Z]");
    r.world = WorldPoint3{w[0].get<double>(), w[1].get<double>(), w[2].get<double>()};
    if (!r.world->finite()) throw ParseError(where + ": world coordinates must be finite");
  }
  if (j.contains("features")) r.features = appearance_from_json(j["features"]);
  if (j.contains("frame_image")) r.frame_image = j["frame_image"].get<std::string>();
  if (j.contains("mask_image")) r.mask_image = j["mask_image"].get<std::string>();
  return r;
}

inline void write_detections(const std::vector<DetectionRecord>& records, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_detections: cannot open " + path);
  for (const auto& r : records) out << detection_record_to_json(r).dump() << "\n";
}

inline DetectionFile parse_detections(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("parse_detections: cannot open " + path);
  DetectionFile out;
  std::string line;
  int lineno = 0;
  bool monotone = true;
  int last_frame = -1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(where + ": invalid JSON: " + e.what());
    }
    try {
      out.records.push_back(detection_record_from_json(j, where));
    } catch (const json::exception& e) {
      throw ParseError(where + ": " + e.what());
    }
    if (out.records.back().frame < last_frame) monotone = false;
    last_frame = out.records.back().frame;
  }
  if (!monotone) {
    out.warnings.push_back(path + ": records were not sorted by frame; sorted on load");
    std::stable_sort(out.records.begin(), out.records.end(),
                     [](const DetectionRecord& a, const DetectionRecord& b) { return a.frame < b.frame; });
  }
  return out;
}

// Materializes detections with per-frame indices. Appearance comes from the
// record payload when present, else from referenced images, else stays
// empty (geometry-only tracking).
inline std::vector<DetectedObject> load_objects(const std::vector<DetectionRecord>& records,
                                                const std::filesystem::path& base_dir,
                                                const TrackerConfig& cfg) {
  std::vector<DetectedObject> out;
  std::map<int, int> next_index;
  std::map<std::string, ImageRGB> frame_cache;
  std::map<std::string, ImageGray> mask_cache;
  for (const auto& r : records) {
    DetectedObject obj;
    obj.key = {r.frame, next_index[r.frame]++};
    obj.bbox = r.bbox;
    obj.world = r.world;
    if (r.features) {
      obj.appearance = *r.features;
    } else if (r.frame_image) {
      const std::string fpath = (base_dir / *r.frame_image).string();
      auto fit = frame_cache.find(fpath);
      if (fit == frame_cache.end()) fit = frame_cache.emplace(fpath, read_ppm(fpath)).first;
      const ImageGray* mask = nullptr;
      if (r.mask_image) {
        const std::string mpath = (base_dir / *r.mask_image).string();
        auto mit = mask_cache.find(mpath);
        if (mit == mask_cache.end()) mit = mask_cache.emplace(mpath, read_pgm(mpath)).first;
        mask = &mit->second;
      }
      const RegionPixels region = crop_region(fit->second, mask, r.bbox);
      obj.appearance = extract_appearance(region, cfg, {r.bbox.x, r.bbox.y});
    }
    out.push_back(std::move(obj));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Track / ground-truth records
// ---------------------------------------------------------------------------

inline void write_box_tracks(const std::vector<BoxTrack>& tracks, const std::string& path,
                             const char* id_field) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(std::string("write tracks: cannot open ") + path);
  std::vector<const BoxTrack*> sorted;
  for (const auto& t : tracks) sorted.push_back(&t);
  std::sort(sorted.begin(), sorted.end(), [](const BoxTrack* a, const BoxTrack* b) { return a->id < b->id; });
  for (const BoxTrack* t : sorted) {
    for (const auto& tb : t->boxes) {
      json j;
      j[id_field] = t->id;
      j["frame"] = tb.frame;
      j["bbox"] = json::array({tb.bbox.x, tb.bbox.y, tb.bbox.w, tb.bbox.h});
      if (tb.world) j["world"] = json::array({tb.world->x, tb.world->y, tb.world->z});
      out << j.dump() << "\n";
    }
  }
}

inline std::vector<BoxTrack> parse_box_tracks(const std::string& path, const char* id_field) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(std::string("parse tracks: cannot open ") + path);
  std::map<int, BoxTrack> by_id;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(where + ": invalid JSON: " + e.what());
    }
    if (!j.contains(id_field)) throw ParseError(where + ": missing field '" + id_field + "'");
    if (!j.contains("frame")) throw ParseError(where + ": missing field 'frame'");
    if (!j.contains("bbox")) throw ParseError(where + ": missing field 'bbox'");
    const int id = j[id_field].get<int>();
    TimedBox tb;
    tb.frame = j["frame"].get<int>();
    const auto& b = j["bbox"];
    if (!b.is_array() || b.size() != 4) throw ParseError(where + ": bbox must be [x,y,w,h]");
    try {
      tb.bbox = BBox2D(b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>());
    } catch (const std::invalid_argument& e) {
      throw ParseError(where + ": " + e.what());
    }
    if (j.contains("world")) {
      const auto& w = j["world"];
      tb.world = WorldPoint3{w.at(0).get<double>(), w.at(1).get<double>(), w.at(2).get<double>()};
    }
    auto& track = by_id[id];
    track.id = id;
    track.boxes.push_back(tb);
  }
  std::vector<BoxTrack> out;
  for (auto& [id, t] : by_id) {
    std::sort(t.boxes.begin(), t.boxes.end(), [](const TimedBox& a, const TimedBox& b) { return a.frame < b.frame; });
    out.push_back(std::move(t));
  }
  return out;
}

inline void write_trajectories(const std::vector<BoxTrack>& tracks, const std::string& path) {
  write_box_tracks(tracks, path, "track_id");
}
inline std::vector<BoxTrack> parse_trajectories(const std::string& path) {
  return parse_box_tracks(path, "track_id");
}
inline void write_ground_truth(const std::vector<GroundTruthTrack>& tracks, const std::string& path) {
  write_box_tracks(tracks, path, "gt_id");
}
inline std::vector<GroundTruthTrack> parse_ground_truth(const std::string& path) {
  return parse_box_tracks(path, "gt_id");
}

// ---------------------------------------------------------------------------
// Key-value text: config and weights
// ---------------------------------------------------------------------------

namespace detail {

struct KvLine {
  std::string key;
  std::string value;
  int lineno;
};

inline std::vector<KvLine> parse_kv_text(std::istream& in, const std::string& path) {
  std::vector<KvLine> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError(path + ":" + std::to_string(lineno) + ": expected 'key = value'");
    out.push_back({trim(line.substr(0, eq)), trim(line.substr(eq + 1)), lineno});
  }
  return out;
}

inline bool parse_bool(const std::string& v, const std::string& where) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ParseError(where + ": expected boolean, got '" + v + "'");
}

}  // namespace detail

// Key-value config; unknown keys are rejected, missing keys keep defaults,
// and the result must satisfy every config invariant.
inline TrackerConfig parse_config_stream(std::istream& in, const std::string& path) {
  TrackerConfig c;
  for (const auto& kv : detail::parse_kv_text(in, path)) {
    const std::string where = path + ":" + std::to_string(kv.lineno);
    try {
      if (kv.key == "t2_window") c.t2_window = std::stoi(kv.value);
      else if (kv.key == "th1_link") c.th1_link = std::stod(kv.value);
      else if (kv.key == "th4_beta_cap") c.th4_beta_cap = std::stod(kv.value);
      else if (kv.key == "th5_min_frames") c.th5_min_frames = std::stoi(kv.value);
      else if (kv.key == "th6_min_extent") c.th6_min_extent = std::stod(kv.value);
      else if (kv.key == "th6_min_extent_px") c.th6_min_extent_px = std::stod(kv.value);
      else if (kv.key == "d_max_3d") c.d_max_3d = std::stod(kv.value);
      else if (kv.key == "d_max_2d") c.d_max_2d = std::stod(kv.value);
      else if (kv.key == "d_cov_max") c.d_cov_max = std::stod(kv.value);
      else if (kv.key == "hist_bins") c.hist_bins = std::stoi(kv.value);
      else if (kv.key == "q_window") c.q_window = std::stoi(kv.value);
      else if (kv.key == "pyramid_levels") c.pyramid_levels = std::stoi(kv.value);
      else if (kv.key == "sigma_floor") c.sigma_floor = std::stod(kv.value);
      else if (kv.key == "dominant_color_max") c.dominant_color_max = std::stoi(kv.value);
      else if (kv.key == "dcd_color_threshold") c.dcd_color_threshold = std::stod(kv.value);
      else if (kv.key == "point_stride") c.point_stride = std::stoi(kv.value);
      else if (kv.key == "use_gaussian_pdf") c.use_gaussian_pdf = detail::parse_bool(kv.value, where);
      else if (kv.key == "pyramid_equal_weights") c.pyramid_equal_weights = detail::parse_bool(kv.value, where);
      else if (kv.key == "iou_threshold") c.iou_threshold = std::stod(kv.value);
      else if (kv.key == "coverage_fraction") c.coverage_fraction = std::stod(kv.value);
      else throw ParseError(where + ": unknown config key '" + kv.key + "'");
    } catch (const std::invalid_argument&) {
      throw ParseError(where + ": bad value '" + kv.value + "' for key '" + kv.key + "'");
    }
  }
  if (const auto bad = validate_config(c); !bad.empty()) {
    std::string msg = path + ": invalid config values for:";
    for (const auto& f : bad) msg += " " + f;
    throw ParseError(msg);
  }
  return c;
}

inline TrackerConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("parse_config: cannot open " + path);
  return parse_config_stream(in, path);
}

inline void write_weights(const FeatureWeights& w, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_weights: cannot open " + path);
  char line[96];
  for (FeatureId k : kAllFeatures) {
    std::snprintf(line, sizeof line, "%s = %.17g\n", std::string(feature_name(k)).c_str(), w[k]);
    out << line;
  }
}

inline FeatureWeights parse_weights(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("parse_weights: cannot open " + path);
  FeatureWeights w;
  for (const auto& kv : detail::parse_kv_text(in, path)) {
    const std::string where = path + ":" + std::to_string(kv.lineno);
    const auto id = feature_from_name(kv.key);
    if (!id) throw ParseError(where + ": unknown feature '" + kv.key + "'");
    try {
      w[*id] = std::stod(kv.value);
    } catch (const std::invalid_argument&) {
      throw ParseError(where + ": bad value '" + kv.value + "'");
    }
  }
  if (!w.valid())
    throw ParseError(path + ": weights must be non-negative with at least one positive entry");
  return w;
}

}  // namespace mft
