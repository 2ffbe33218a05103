#include "xloc/map_store.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <numeric>

#include "io_util.hpp"

namespace xloc {

namespace fs = std::filesystem;
using io::json;

// ---------------------------------------------------------------------------
// JSON helpers shared with the other formats.

namespace io {

json read_json(const fs::path& path, ErrorCategory on_error) {
  std::ifstream in(path);
  if (!in) fail(on_error, "cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(on_error, path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& doc) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCategory::kIo, "cannot write " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) fail(ErrorCategory::kIo, "short write to " + path.string());
}

json to_json(const Pose& pose) {
  const auto& q = pose.rotation.quaternion();
  return json{{"qw", q.w()}, {"qx", q.x()}, {"qy", q.y()}, {"qz", q.z()},
              {"tx", pose.translation.x()}, {"ty", pose.translation.y()},
              {"tz", pose.translation.z()}};
}

Pose pose_from_json(const json& j) {
  constexpr auto kCat = ErrorCategory::kSchema;
  const Eigen::Quaterniond q(get_field<double>(j, "qw", kCat), get_field<double>(j, "qx", kCat),
                             get_field<double>(j, "qy", kCat), get_field<double>(j, "qz", kCat));
  // Stored quaternions are unit norm already; keep their bits untouched so
  // load(save(p)) reproduces p exactly.
  const double n = q.norm();
  const Rotation R = std::abs(n - 1.0) < 1e-12 ? Rotation::from_unit_quaternion(q) : Rotation(q);
  return Pose{R, Vec3(get_field<double>(j, "tx", kCat), get_field<double>(j, "ty", kCat),
                      get_field<double>(j, "tz", kCat))};
}

json to_json(const CameraIntrinsics& K) {
  return json{{"fx", K.fx}, {"fy", K.fy}, {"cx", K.cx}, {"cy", K.cy},
              {"width", K.width}, {"height", K.height}};
}

CameraIntrinsics intrinsics_from_json(const json& j) {
  constexpr auto kCat = ErrorCategory::kSchema;
  CameraIntrinsics K{get_field<double>(j, "fx", kCat), get_field<double>(j, "fy", kCat),
                     get_field<double>(j, "cx", kCat), get_field<double>(j, "cy", kCat),
                     get_field<int>(j, "width", kCat), get_field<int>(j, "height", kCat)};
  try {
    K.validate();
  } catch (const Error& e) {
    fail(ErrorCategory::kSchema, e.what());
  }
  return K;
}

}  // namespace io

// ---------------------------------------------------------------------------

void validate_features(const std::string& frame_id, const CameraIntrinsics& K,
                       const ImageFeatures& features, const std::optional<DepthMap>& depth) {
  const auto bad = [&](const std::string& what) {
    fail(ErrorCategory::kSchema, "frame '" + frame_id + "': " + what);
  };
  for (const Keypoint& kp : features.keypoints) {
    if (!std::isfinite(kp.u) || !std::isfinite(kp.v) || !K.contains(kp.pixel())) {
      bad("keypoint outside image bounds");
    }
  }
  if (static_cast<std::size_t>(features.descriptors.rows()) != features.keypoints.size()) {
    bad("descriptor rows do not match keypoint count");
  }
  if (features.global.size() > 0) {
    const double n = features.global.cast<double>().norm();
    if (std::abs(n - 1.0) > 1e-6) bad("global descriptor is not unit norm");
  }
  if (depth && (depth->width != K.width || depth->height != K.height)) {
    bad("depth raster size does not match intrinsics");
  }
}

// ---------------------------------------------------------------------------
// MapDatabase

MapDatabase::MapDatabase(std::vector<MapFrame> frames, std::vector<Landmark> landmarks)
    : frames_(std::move(frames)), landmarks_(std::move(landmarks)) {
  index_.reserve(frames_.size());
  observations_.resize(frames_.size());
  for (std::size_t i = 0; i < frames_.size(); ++i) {
    if (!index_.emplace(frames_[i].frame_id, i).second) {
      fail(ErrorCategory::kInvalidArgument, "duplicate frame_id '" + frames_[i].frame_id + "'");
    }
    observations_[i].assign(frames_[i].features.keypoints.size(), -1);
  }
  for (std::size_t l = 0; l < landmarks_.size(); ++l) {
    const Landmark& lm = landmarks_[l];
    if (lm.track.size() < 2) {
      fail(ErrorCategory::kCorruptStore, "landmark " + std::to_string(l) + " has a track shorter than 2");
    }
    for (const TrackElement& te : lm.track) {
      const auto it = index_.find(te.frame_id);
      if (it == index_.end() || te.keypoint_index < 0 ||
          static_cast<std::size_t>(te.keypoint_index) >= observations_[it->second].size()) {
        fail(ErrorCategory::kCorruptStore,
             "landmark " + std::to_string(l) + " references a missing frame or keypoint");
      }
      int& slot = observations_[it->second][static_cast<std::size_t>(te.keypoint_index)];
      if (slot != -1) {
        fail(ErrorCategory::kCorruptStore, "keypoint observes more than one landmark");
      }
      slot = static_cast<int>(l);
    }
  }
}

std::optional<std::size_t> MapDatabase::frame_index(const std::string& frame_id) const {
  const auto it = index_.find(frame_id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const MapFrame& MapDatabase::frame(const std::string& frame_id) const {
  const auto idx = frame_index(frame_id);
  if (!idx) fail(ErrorCategory::kNotFound, "unknown frame '" + frame_id + "'");
  return frames_[*idx];
}

int MapDatabase::landmark_of(std::size_t frame_index, int keypoint_index) const {
  const auto& obs = observations_.at(frame_index);
  if (keypoint_index < 0 || static_cast<std::size_t>(keypoint_index) >= obs.size()) return -1;
  return obs[static_cast<std::size_t>(keypoint_index)];
}

std::size_t MapDatabase::num_observed_keypoints(std::size_t frame_index) const {
  const auto& obs = observations_.at(frame_index);
  return static_cast<std::size_t>(std::count_if(obs.begin(), obs.end(), [](int l) { return l >= 0; }));
}

std::string MapDatabase::dominant_device() const {
  std::vector<std::pair<std::string, int>> counts;
  for (const MapFrame& f : frames_) {
    auto it = std::find_if(counts.begin(), counts.end(), [&](const auto& c) { return c.first == f.device; });
    if (it == counts.end()) {
      counts.emplace_back(f.device, 1);
    } else {
      ++it->second;
    }
  }
  std::string best;
  int best_count = 0;
  for (const auto& [device, count] : counts) {
    if (count > best_count) {
      best = device;
      best_count = count;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Map building

namespace {

class TrackBuilder {
 public:
  explicit TrackBuilder(const std::vector<std::size_t>& offsets, std::size_t total)
      : offsets_(offsets), parent_(total), frames_(total) {
    std::iota(parent_.begin(), parent_.end(), 0);
    for (std::size_t f = 0; f + 1 < offsets_.size(); ++f) {
      for (std::size_t k = offsets_[f]; k < offsets_[f + 1]; ++k) frames_[k] = {f};
    }
  }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  // Joins two keypoints unless their tracks already share a frame.
  bool unite(std::size_t a, std::size_t b) {
    std::size_t ra = find(a);
    std::size_t rb = find(b);
    if (ra == rb) return true;
    const auto& fa = frames_[ra];
    const auto& fb = frames_[rb];
    std::vector<std::size_t> merged;
    merged.reserve(fa.size() + fb.size());
    std::set_union(fa.begin(), fa.end(), fb.begin(), fb.end(), std::back_inserter(merged));
    if (merged.size() != fa.size() + fb.size()) return false;
    if (rb < ra) std::swap(ra, rb);
    parent_[rb] = ra;
    frames_[ra] = std::move(merged);
    frames_[rb].clear();
    return true;
  }

 private:
  const std::vector<std::size_t>& offsets_;
  std::vector<std::size_t> parent_;
  std::vector<std::vector<std::size_t>> frames_;
};

struct Observation {
  std::size_t frame;
  int keypoint;
};

double reprojection_error(const MapFrame& f, int kp, const Point3& X, bool* ok) {
  const auto px = project(f.intrinsics, f.pose, X);
  if (!px) {
    *ok = false;
    return 0.0;
  }
  return (*px - f.features.keypoints[static_cast<std::size_t>(kp)].pixel()).norm();
}

}  // namespace

MapDatabase build_map(std::vector<MapFrame> frames, const std::vector<PairMatches>& pair_matches,
                      const MapBuildOptions& opts) {
  // Validates ids before any work.
  MapDatabase skeleton(frames, {});

  std::vector<std::size_t> offsets(frames.size() + 1, 0);
  for (std::size_t f = 0; f < frames.size(); ++f) {
    offsets[f + 1] = offsets[f] + frames[f].features.keypoints.size();
  }
  TrackBuilder tracks(offsets, offsets.back());

  for (const PairMatches& pm : pair_matches) {
    const auto ia = skeleton.frame_index(pm.frame_a);
    const auto ib = skeleton.frame_index(pm.frame_b);
    if (!ia || !ib) fail(ErrorCategory::kNotFound, "match edge references an unknown frame");
    if (*ia == *ib) continue;
    const auto na = frames[*ia].features.keypoints.size();
    const auto nb = frames[*ib].features.keypoints.size();
    for (const Match& m : pm.matches.matches) {
      if (m.query_idx < 0 || m.map_idx < 0 || static_cast<std::size_t>(m.query_idx) >= na ||
          static_cast<std::size_t>(m.map_idx) >= nb) {
        fail(ErrorCategory::kInvalidArgument, "match index out of range");
      }
      tracks.unite(offsets[*ia] + static_cast<std::size_t>(m.query_idx),
                   offsets[*ib] + static_cast<std::size_t>(m.map_idx));
    }
  }

  // Group keypoints by root; map iteration order keeps landmark ids stable.
  std::map<std::size_t, std::vector<Observation>> groups;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    for (std::size_t k = offsets[f]; k < offsets[f + 1]; ++k) {
      groups[tracks.find(k)].push_back({f, static_cast<int>(k - offsets[f])});
    }
  }

  const TriangulationOptions tri_opts{opts.min_triangulation_angle_deg};
  std::vector<Landmark> landmarks;
  for (auto& [root, obs] : groups) {
    if (obs.size() < 2) continue;
    // Drop the worst observation while any exceeds the gate.
    while (obs.size() >= 2) {
      std::vector<View> views;
      views.reserve(obs.size());
      for (const Observation& o : obs) {
        const MapFrame& f = frames[o.frame];
        views.push_back({f.intrinsics, f.pose, f.features.keypoints[static_cast<std::size_t>(o.keypoint)].pixel()});
      }
      const auto X = triangulate_views(views, tri_opts);
      if (!X) break;

      double sum = 0.0;
      double worst = -1.0;
      std::size_t worst_idx = 0;
      bool in_front = true;
      for (std::size_t i = 0; i < obs.size(); ++i) {
        const double e = reprojection_error(frames[obs[i].frame], obs[i].keypoint, *X, &in_front);
        sum += e;
        if (e > worst) {
          worst = e;
          worst_idx = i;
        }
      }
      if (!in_front) break;
      if (worst <= opts.max_reprojection_error_px) {
        Landmark lm;
        lm.point = *X;
        lm.mean_reprojection_error = sum / static_cast<double>(obs.size());
        for (const Observation& o : obs) lm.track.push_back({frames[o.frame].frame_id, o.keypoint});
        landmarks.push_back(std::move(lm));
        break;
      }
      obs.erase(obs.begin() + static_cast<std::ptrdiff_t>(worst_idx));
    }
  }

  return MapDatabase(std::move(frames), std::move(landmarks));
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

constexpr auto kCorrupt = ErrorCategory::kCorruptStore;

std::string frame_stem(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frames/%06zu", i);
  return buf;
}

}  // namespace

std::string frame_depth_file(std::size_t frame_index) { return frame_stem(frame_index) + ".d32"; }

namespace {

json write_frame_arrays(const fs::path& dir, std::size_t i, const std::string& frame_id,
                        const std::string& device, const CameraIntrinsics& K,
                        const ImageFeatures& feat, const std::optional<DepthMap>& depth) {
  const std::string stem = frame_stem(i);
  const std::size_t n = feat.keypoints.size();
  std::vector<float> kp;
  kp.reserve(n * 3);
  for (const Keypoint& k : feat.keypoints) {
    kp.push_back(k.u);
    kp.push_back(k.v);
    kp.push_back(k.score);
  }
  io::write_array<float>(dir / (stem + ".kp.f32"), kp);
  io::write_array<float>(dir / (stem + ".desc.f32"),
                         std::span<const float>(feat.descriptors.data(), static_cast<std::size_t>(feat.descriptors.size())));
  io::write_array<float>(dir / (stem + ".global.f32"),
                         std::span<const float>(feat.global.data(), static_cast<std::size_t>(feat.global.size())));
  json j{{"frame_id", frame_id},
         {"device", device},
         {"intrinsics", io::to_json(K)},
         {"num_keypoints", n},
         {"descriptor_dim", feat.descriptors.cols()},
         {"global_dim", feat.global.size()},
         {"keypoints", stem + ".kp.f32"},
         {"descriptors", stem + ".desc.f32"},
         {"global", stem + ".global.f32"},
         {"depth", nullptr}};
  if (depth) {
    io::write_array<float>(dir / frame_depth_file(i), depth->values);
    j["depth"] = json{{"file", frame_depth_file(i)}, {"width", depth->width}, {"height", depth->height}};
  }
  return j;
}

struct LoadedFrame {
  std::string frame_id;
  std::string device;
  CameraIntrinsics K;
  ImageFeatures features;
  std::optional<DepthMap> depth;
};

LoadedFrame read_frame_arrays(const fs::path& dir, const json& j) {
  LoadedFrame f;
  f.frame_id = io::get_field<std::string>(j, "frame_id", kCorrupt);
  f.device = io::get_field<std::string>(j, "device", kCorrupt);
  if (!j.contains("intrinsics")) fail(kCorrupt, "frame without intrinsics");
  try {
    f.K = io::intrinsics_from_json(j.at("intrinsics"));
  } catch (const Error& e) {
    fail(kCorrupt, e.what());
  }
  const auto n = io::get_field<std::size_t>(j, "num_keypoints", kCorrupt);
  const auto d = io::get_field<std::size_t>(j, "descriptor_dim", kCorrupt);
  const auto g = io::get_field<std::size_t>(j, "global_dim", kCorrupt);

  const auto kp = io::read_array<float>(dir / io::get_field<std::string>(j, "keypoints", kCorrupt), n * 3);
  f.features.keypoints.resize(n);
  for (std::size_t i = 0; i < n; ++i) f.features.keypoints[i] = {kp[3 * i], kp[3 * i + 1], kp[3 * i + 2]};

  const auto desc = io::read_array<float>(dir / io::get_field<std::string>(j, "descriptors", kCorrupt), n * d);
  f.features.descriptors = Eigen::Map<const DescriptorMatrix>(desc.data(), static_cast<Eigen::Index>(n),
                                                              static_cast<Eigen::Index>(d));
  const auto glob = io::read_array<float>(dir / io::get_field<std::string>(j, "global", kCorrupt), g);
  f.features.global = Eigen::Map<const GlobalDescriptor>(glob.data(), static_cast<Eigen::Index>(g));

  if (j.contains("depth") && !j.at("depth").is_null()) {
    const json& dj = j.at("depth");
    const int w = io::get_field<int>(dj, "width", kCorrupt);
    const int h = io::get_field<int>(dj, "height", kCorrupt);
    if (w < 0 || h < 0) fail(kCorrupt, "negative depth size");
    DepthMap depth;
    depth.width = w;
    depth.height = h;
    depth.values = io::read_array<float>(dir / io::get_field<std::string>(dj, "file", kCorrupt),
                                         static_cast<std::size_t>(w) * static_cast<std::size_t>(h));
    f.depth = std::move(depth);
  }
  try {
    validate_features(f.frame_id, f.K, f.features, f.depth);
  } catch (const Error& e) {
    fail(kCorrupt, e.what());
  }
  return f;
}

json read_manifest(const fs::path& dir, const char* expected_kind) {
  const fs::path path = dir / "manifest.json";
  if (!fs::exists(path)) fail(kCorrupt, "missing manifest " + path.string());
  json m = io::read_json(path, kCorrupt);
  if (!m.is_object() || !m.contains("format_version") || !m.at("format_version").is_number_integer()) {
    fail(kCorrupt, "manifest lacks an integer format_version");
  }
  const int version = m.at("format_version").get<int>();
  if (version != kStoreFormatVersion) {
    fail(ErrorCategory::kVersionMismatch,
         "unsupported format_version " + std::to_string(version) + " (expected " +
             std::to_string(kStoreFormatVersion) + ")");
  }
  if (io::get_field<std::string>(m, "kind", kCorrupt) != expected_kind) {
    fail(kCorrupt, std::string("manifest kind is not '") + expected_kind + "'");
  }
  if (!m.contains("frames") || !m.at("frames").is_array()) fail(kCorrupt, "manifest lacks frames");
  return m;
}

void prepare_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir / "frames", ec);
  if (ec) fail(ErrorCategory::kIo, "cannot create " + (dir / "frames").string());
}

}  // namespace

void save_map(const MapDatabase& db, const fs::path& dir) {
  prepare_dir(dir);
  json frames = json::array();
  for (std::size_t i = 0; i < db.frames().size(); ++i) {
    const MapFrame& f = db.frames()[i];
    json j = write_frame_arrays(dir, i, f.frame_id, f.device, f.intrinsics, f.features, f.depth);
    j["pose"] = io::to_json(f.pose);
    frames.push_back(std::move(j));
  }
  json landmarks = json::array();
  for (const Landmark& lm : db.landmarks()) {
    json track = json::array();
    for (const TrackElement& te : lm.track) track.push_back(json::array({te.frame_id, te.keypoint_index}));
    landmarks.push_back(json{{"point", {lm.point.x(), lm.point.y(), lm.point.z()}},
                             {"track", std::move(track)},
                             {"mean_reprojection_error", lm.mean_reprojection_error}});
  }
  io::write_json(dir / "landmarks.json", json{{"landmarks", std::move(landmarks)}});
  io::write_json(dir / "manifest.json",
                 json{{"format_version", kStoreFormatVersion},
                      {"kind", "map"},
                      {"pose_convention", "camera_from_world"},
                      {"landmarks", "landmarks.json"},
                      {"frames", std::move(frames)}});
}

MapDatabase load_map(const fs::path& dir) {
  const json m = read_manifest(dir, "map");
  std::vector<MapFrame> frames;
  frames.reserve(m.at("frames").size());
  for (const json& j : m.at("frames")) {
    LoadedFrame lf = read_frame_arrays(dir, j);
    if (!j.contains("pose")) fail(kCorrupt, "map frame without pose");
    Pose pose;
    try {
      pose = io::pose_from_json(j.at("pose"));
    } catch (const Error& e) {
      fail(kCorrupt, e.what());
    }
    frames.push_back(MapFrame{std::move(lf.frame_id), std::move(lf.device), lf.K, pose,
                              std::move(lf.features), std::move(lf.depth)});
  }

  std::vector<Landmark> landmarks;
  if (m.contains("landmarks") && !m.at("landmarks").is_null()) {
    const fs::path lpath = dir / io::get_field<std::string>(m, "landmarks", kCorrupt);
    if (!fs::exists(lpath)) fail(kCorrupt, "missing landmark file " + lpath.string());
    const json lj = io::read_json(lpath, kCorrupt);
    if (!lj.contains("landmarks") || !lj.at("landmarks").is_array()) fail(kCorrupt, "malformed landmark file");
    for (const json& l : lj.at("landmarks")) {
      Landmark lm;
      const auto p = io::get_field<std::vector<double>>(l, "point", kCorrupt);
      if (p.size() != 3) fail(kCorrupt, "landmark point must have 3 coordinates");
      lm.point = Point3(p[0], p[1], p[2]);
      lm.mean_reprojection_error = io::get_field<double>(l, "mean_reprojection_error", kCorrupt);
      const auto track = io::get_field<std::vector<std::pair<std::string, int>>>(l, "track", kCorrupt);
      for (const auto& [fid, kp] : track) lm.track.push_back({fid, kp});
      landmarks.push_back(std::move(lm));
    }
  }
  MapDatabase db(std::move(frames), std::move(landmarks));
  db.set_source_dir(dir);
  return db;
}

void save_queries(const std::vector<QueryFrame>& queries, const fs::path& dir) {
  prepare_dir(dir);
  json frames = json::array();
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const QueryFrame& q = queries[i];
    frames.push_back(write_frame_arrays(dir, i, q.frame_id, q.device, q.intrinsics, q.features, q.depth));
  }
  io::write_json(dir / "manifest.json", json{{"format_version", kStoreFormatVersion},
                                             {"kind", "queries"},
                                             {"frames", std::move(frames)}});
}

std::vector<QueryFrame> load_queries(const fs::path& dir) {
  const json m = read_manifest(dir, "queries");
  std::vector<QueryFrame> out;
  out.reserve(m.at("frames").size());
  for (const json& j : m.at("frames")) {
    LoadedFrame lf = read_frame_arrays(dir, j);
    out.push_back(QueryFrame{std::move(lf.frame_id), std::move(lf.device), lf.K, std::move(lf.features),
                             std::move(lf.depth)});
  }
  return out;
}

}  // namespace xloc
