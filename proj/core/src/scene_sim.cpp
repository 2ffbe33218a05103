#include "xloc/scene_sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "xloc/config.hpp"
#include "xloc/errors.hpp"
#include "xloc/eval.hpp"
#include "xloc/map_store.hpp"

namespace xloc {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return std::mt19937_64(splitmix64(seed ^ splitmix64(a * 0x100000001B3ULL + b)));
}

struct DeviceModel {
  Eigen::VectorXd offset;
  Eigen::VectorXd gains;
};

struct Observation {
  ImageFeatures features;
  std::optional<DepthMap> depth;
  FrameTruth truth;
};

Eigen::VectorXd gaussian_vector(std::mt19937_64& rng, int dim, double sigma) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v[i] = sigma * n(rng);
  return v;
}

Eigen::VectorXd unit_vector(std::mt19937_64& rng, int dim) {
  Eigen::VectorXd v = gaussian_vector(rng, dim, 1.0);
  const double n = v.norm();
  if (n == 0.0) {
    v.setZero();
    v[0] = 1.0;
    return v;
  }
  return v / n;
}

Rotation look_rotation(const Vec3& forward) {
  const Vec3 z = forward.normalized();
  Vec3 x = Vec3(0.0, 0.0, -1.0).cross(z);
  if (x.norm() < 1e-9) x = Vec3::UnitX();
  x.normalize();
  const Vec3 y = z.cross(x);
  Mat3 R;
  R.row(0) = x;
  R.row(1) = y;
  R.row(2) = z;
  return Rotation::from_matrix(R);
}

// Camera center and viewing direction at trajectory parameter s in [0, 1).
std::pair<Vec3, Vec3> trajectory_point(const SceneConfig& cfg, const SimDevice& dev, double s) {
  const Vec3& e = cfg.extent;
  if (cfg.trajectory == Trajectory::kOrbit) {
    const double r = 0.6 * std::max(e.x(), e.y());
    const double th = 2.0 * std::numbers::pi * s;
    const Vec3 c(r * std::cos(th), r * std::sin(th), dev.height_m);
    return {c, Vec3(0.0, 0.0, 0.5 * e.z()) - c};
  }
  const Vec3 c(-0.5 * e.x() + 0.7 * e.x() * s, 0.0, dev.height_m);
  return {c, Vec3::UnitX()};
}

Pose jittered_pose(const Vec3& center, const Vec3& forward, const Vec3& dc, double yaw_deg, double pitch_deg) {
  const Rotation base = look_rotation(forward);
  const Rotation yaw = Rotation::from_axis_angle_deg(Vec3::UnitY(), yaw_deg);
  const Rotation pitch = Rotation::from_axis_angle_deg(Vec3::UnitX(), pitch_deg);
  return Pose::from_center(pitch * yaw * base, center + dc);
}

Observation observe(const SyntheticScene& scene, const std::vector<double>& saliency, const SimDevice& dev,
                    const DeviceModel& model, const Pose& pose, const std::string& frame_id,
                    std::mt19937_64& rng) {
  const SceneConfig& cfg = scene.config;
  const CameraIntrinsics& K = dev.intrinsics;
  const int dim = cfg.descriptor_dim;

  struct Visible {
    int id;
    Pixel px;
    double z;
  };
  std::vector<Visible> visible;
  for (std::size_t i = 0; i < scene.points.size(); ++i) {
    const Vec3 xc = pose.apply(scene.points[i]);
    if (xc.z() < cfg.min_range_m || xc.z() > cfg.max_range_m) continue;
    const auto px = project(K, pose, scene.points[i]);
    if (!px || !K.contains(*px)) continue;
    visible.push_back({static_cast<int>(i), *px, xc.z()});
  }
  if (visible.size() < cfg.min_visible_points) {
    std::ostringstream os;
    os << "frame '" << frame_id << "' sees " << visible.size() << " points, fewer than min_visible_points = "
       << cfg.min_visible_points << "; enlarge num_points or max_range_m, or move the trajectory";
    fail(ErrorCategory::kInvalidArgument, os.str());
  }

  // Detector: salient points win, with per-view jitter in the response.
  std::normal_distribution<double> response_noise(0.0, 0.25);
  std::vector<std::pair<double, int>> ranked;
  ranked.reserve(visible.size());
  for (std::size_t k = 0; k < visible.size(); ++k) {
    ranked.emplace_back(saliency[static_cast<std::size_t>(visible[k].id)] + response_noise(rng), static_cast<int>(k));
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  ranked.resize(std::min(ranked.size(), cfg.max_keypoints));

  const auto n_in = ranked.size();
  const auto n_out = static_cast<std::size_t>(std::lround(cfg.outlier_rate * static_cast<double>(n_in)));
  std::normal_distribution<double> std_normal(0.0, 1.0);
  const double desc_sigma = cfg.descriptor_noise / std::sqrt(static_cast<double>(dim));
  auto clamp_px = [&](double v, int size) { return std::clamp(v, 0.0, size - 1.0); };

  std::vector<Keypoint> kps;
  std::vector<Eigen::VectorXd> descs;
  std::vector<int> ids;
  for (const auto& [score, k] : ranked) {
    const Visible& v = visible[static_cast<std::size_t>(k)];
    const double u = clamp_px(v.px.x() + cfg.keypoint_noise_px * std_normal(rng), K.width);
    const double w = clamp_px(v.px.y() + cfg.keypoint_noise_px * std_normal(rng), K.height);
    kps.push_back({static_cast<float>(u), static_cast<float>(w), static_cast<float>(std::clamp(score, 0.0, 1.0))});
    const Eigen::VectorXd latent = scene.latents.row(v.id).cast<double>().transpose();
    descs.push_back(model.gains.cwiseProduct(latent) + model.offset + gaussian_vector(rng, dim, desc_sigma));
    ids.push_back(v.id);
  }
  std::uniform_real_distribution<double> uu(0.0, K.width - 1.0);
  std::uniform_real_distribution<double> vv(0.0, K.height - 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t i = 0; i < n_out; ++i) {
    const double u = uu(rng);
    const double w = vv(rng);
    kps.push_back({static_cast<float>(u), static_cast<float>(w), static_cast<float>(unit(rng))});
    descs.push_back(model.gains.cwiseProduct(unit_vector(rng, dim)) + model.offset +
                    gaussian_vector(rng, dim, desc_sigma));
    ids.push_back(-1);
  }

  std::vector<std::size_t> perm(kps.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), rng);

  Observation obs;
  obs.features.keypoints.resize(perm.size());
  obs.features.descriptors.resize(static_cast<Eigen::Index>(perm.size()), dim);
  obs.truth.point_ids.resize(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    obs.features.keypoints[i] = kps[perm[i]];
    obs.features.descriptors.row(static_cast<Eigen::Index>(i)) = descs[perm[i]].cast<float>().transpose();
    obs.truth.point_ids[i] = ids[perm[i]];
  }

  Eigen::VectorXd pooled = Eigen::VectorXd::Zero(dim);
  for (const Visible& v : visible) pooled += scene.latents.row(v.id).cast<double>().transpose();
  pooled.normalize();
  pooled += gaussian_vector(rng, dim, cfg.global_noise / std::sqrt(static_cast<double>(dim)));
  Eigen::VectorXf g = pooled.normalized().cast<float>();
  obs.features.global = g / g.norm();

  if (dev.has_depth) {
    DepthMap depth(K.width, K.height, 0.0F);
    for (const Visible& v : visible) {
      const int col = static_cast<int>(std::lround(v.px.x()));
      const int row = static_cast<int>(std::lround(v.px.y()));
      float& d = depth.at(col, row);
      if (d == 0.0F || v.z < d) d = static_cast<float>(v.z);
    }

    std::uniform_real_distribution<double> salt(0.0, 2.0 * cfg.max_range_m);
    for (float& d : depth.values) {
      if (d == 0.0F) continue;
      const double noisy = d + cfg.depth_noise_m * std_normal(rng);
      d = unit(rng) < cfg.depth_salt_rate ? static_cast<float>(salt(rng)) : static_cast<float>(noisy);
    }
    obs.depth = std::move(depth);
  }
  return obs;
}

std::string frame_name(const std::string& tag, char kind, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "-%c%04zu", kind, i);
  return tag + buf;
}

}  // namespace

std::string_view to_string(Trajectory t) { return t == Trajectory::kOrbit ? "orbit" : "corridor"; }

Trajectory trajectory_from_string(std::string_view name) {
  if (name == "orbit") return Trajectory::kOrbit;
  if (name == "corridor") return Trajectory::kCorridor;
  fail(ErrorCategory::kSchema, "unknown trajectory '" + std::string(name) + "'");
}

void SceneConfig::validate() const {
  auto bad = [](const std::string& msg) { fail(ErrorCategory::kInvalidArgument, "scene: " + msg); };
  if (num_points < 1 || frames_per_device < 1 || queries_per_device < 1 || max_keypoints < 1 ||
      min_visible_points < 1) {
    bad("counts must be >= 1");
  }
  if (descriptor_dim < 1) bad("descriptor_dim must be >= 1");
  if (!(extent.minCoeff() > 0.0)) bad("extent must be positive");
  if (devices.empty()) bad("at least one device is required");
  for (std::size_t i = 0; i < devices.size(); ++i) {
    if (devices[i].tag.empty()) bad("device tag is empty");
    devices[i].intrinsics.validate();
    for (std::size_t j = 0; j < i; ++j) {
      if (devices[j].tag == devices[i].tag) bad("duplicate device tag '" + devices[i].tag + "'");
    }
    if (!(devices[i].gap_offset >= 0.0 && devices[i].gap_scale >= 0.0)) bad("domain gap must be >= 0");
  }
  for (double r : {outlier_rate, depth_salt_rate}) {
    if (!(r >= 0.0 && r <= 1.0)) bad("rates must lie in [0, 1]");
  }
  for (double s : {keypoint_noise_px, descriptor_noise, global_noise, depth_noise_m, query_jitter_m, query_jitter_deg}) {
    if (!(s >= 0.0)) bad("noise levels must be >= 0");
  }
  if (!(min_range_m > 0.0 && min_range_m < max_range_m)) bad("need 0 < min_range_m < max_range_m");
}

SceneConfig default_scene_config() {
  SceneConfig cfg;
  cfg.devices = {SimDevice{"ios", make_intrinsics(260.0, 260.0, 160.0, 120.0, 320, 240), true, 1.5, 0.0, 0.0}};
  return cfg;
}

SceneConfig cross_device_scene_config() {
  SceneConfig cfg;
  cfg.name = "cross";
  cfg.frames_per_device = 40;
  cfg.queries_per_device = 20;
  cfg.descriptor_noise = 0.15;
  cfg.devices = {
      SimDevice{"ios", make_intrinsics(260.0, 260.0, 160.0, 120.0, 320, 240), true, 1.5, 0.0, 0.0},
      SimDevice{"hl", make_intrinsics(230.0, 230.0, 144.0, 108.0, 288, 216), true, 1.7, 0.6, 0.9},
      SimDevice{"spot", make_intrinsics(280.0, 280.0, 176.0, 132.0, 352, 264), false, 0.7, 0.8, 1.1},
  };
  return cfg;
}

SyntheticScene generate_scene(const SceneConfig& cfg) {
  cfg.validate();
  SyntheticScene scene;
  scene.config = cfg;
  const int dim = cfg.descriptor_dim;

  auto rng = stream(cfg.seed, 0);
  std::uniform_real_distribution<double> ux(-0.5 * cfg.extent.x(), 0.5 * cfg.extent.x());
  std::uniform_real_distribution<double> uy(-0.5 * cfg.extent.y(), 0.5 * cfg.extent.y());
  std::uniform_real_distribution<double> uz(0.0, cfg.extent.z());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  scene.points.reserve(cfg.num_points);
  scene.latents.resize(static_cast<Eigen::Index>(cfg.num_points), dim);
  std::vector<double> saliency(cfg.num_points);
  for (std::size_t i = 0; i < cfg.num_points; ++i) {
    const double x = ux(rng);
    const double y = uy(rng);
    const double z = uz(rng);
    scene.points.emplace_back(x, y, z);
    scene.latents.row(static_cast<Eigen::Index>(i)) = unit_vector(rng, dim).cast<float>().transpose();
    saliency[i] = unit(rng);
  }

  for (std::size_t d = 0; d < cfg.devices.size(); ++d) {
    const SimDevice& dev = cfg.devices[d];
    auto drng = stream(cfg.seed, 1, d);
    DeviceModel model;
    model.offset = unit_vector(drng, dim) * dev.gap_offset;
    model.gains = Eigen::VectorXd::Ones(dim) + gaussian_vector(drng, dim, dev.gap_scale);

    SyntheticDevice out;
    out.tag = dev.tag;
    const double phase = static_cast<double>(d) / static_cast<double>(cfg.devices.size());
    for (std::size_t i = 0; i < cfg.frames_per_device; ++i) {
      auto frng = stream(cfg.seed, 2 + 2 * d, i);
      std::normal_distribution<double> small(0.0, 2.0);
      const double s = (static_cast<double>(i) + phase) / static_cast<double>(cfg.frames_per_device);
      const auto [c, fwd] = trajectory_point(cfg, dev, s);
      const double yaw = small(frng);
      const double pitch = small(frng);
      const Pose pose = jittered_pose(c, fwd, Vec3::Zero(), yaw, pitch);
      MapFrame f;
      f.frame_id = frame_name(dev.tag, 'm', i);
      f.device = dev.tag;
      f.intrinsics = dev.intrinsics;
      f.pose = pose;
      Observation obs = observe(scene, saliency, dev, model, pose, f.frame_id, frng);
      f.features = std::move(obs.features);
      f.depth = std::move(obs.depth);
      scene.truth.emplace(f.frame_id, std::move(obs.truth));
      out.map_frames.push_back(std::move(f));
    }
    for (std::size_t i = 0; i < cfg.queries_per_device; ++i) {
      auto qrng = stream(cfg.seed, 3 + 2 * d, i);
      std::normal_distribution<double> n01(0.0, 1.0);
      const auto jm = [&](auto& g) { return cfg.query_jitter_m * n01(g); };
      const auto jd = [&](auto& g) { return cfg.query_jitter_deg * n01(g); };
      const double s = unit(qrng);
      const auto [c, fwd] = trajectory_point(cfg, dev, s);
      const Vec3 dc(jm(qrng), jm(qrng), 0.2 * jm(qrng));
      const double yaw = jd(qrng);
      const double pitch = 0.5 * jd(qrng);
      const Pose pose = jittered_pose(c, fwd, dc, yaw, pitch);
      QueryFrame q;
      q.frame_id = frame_name(dev.tag, 'q', i);
      q.device = dev.tag;
      q.intrinsics = dev.intrinsics;
      Observation obs = observe(scene, saliency, dev, model, pose, q.frame_id, qrng);
      q.features = std::move(obs.features);
      q.depth = std::move(obs.depth);
      scene.truth.emplace(q.frame_id, std::move(obs.truth));
      scene.query_poses.emplace(q.frame_id, pose);
      out.queries.push_back(std::move(q));
    }
    scene.devices.push_back(std::move(out));
  }
  return scene;
}

void export_scene(const SyntheticScene& scene, const std::filesystem::path& dir) {
  std::vector<QueryFrame> queries;
  for (const SyntheticDevice& d : scene.devices) {
    save_map(MapDatabase(d.map_frames, {}), dir / "maps" / d.tag);
    queries.insert(queries.end(), d.queries.begin(), d.queries.end());
  }
  save_queries(queries, dir / "queries");
  save_ground_truth(scene.query_poses, dir / "gt_poses.json");
  write_text_file(dir / "scene.json", scene_config_to_json(scene.config));
}

}  // namespace xloc
