#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "xloc/frame.hpp"
#include "xloc/geometry.hpp"

namespace xloc {

enum class Trajectory { kOrbit, kCorridor };

std::string_view to_string(Trajectory t);
Trajectory trajectory_from_string(std::string_view name);

struct SimDevice {
  std::string tag;
  CameraIntrinsics intrinsics;
  bool has_depth = true;
  double height_m = 1.5;  // camera height above the floor
  // Domain gap: a fixed random descriptor offset of this norm plus
  // per-dimension gains drawn around 1 with this spread.
  double gap_offset = 0.0;
  double gap_scale = 0.0;
  bool operator==(const SimDevice&) const = default;
};

struct SceneConfig {
  std::string name = "sim";
  std::size_t num_points = 1500;
  Vec3 extent{30.0, 30.0, 6.0};  // box, x/y centered on the origin, z from 0
  std::vector<SimDevice> devices;
  std::size_t frames_per_device = 24;
  std::size_t queries_per_device = 8;
  Trajectory trajectory = Trajectory::kOrbit;
  int descriptor_dim = 32;
  std::size_t max_keypoints = 400;
  double keypoint_noise_px = 0.5;
  double descriptor_noise = 0.1;   // expected norm of the per-observation noise
  double outlier_rate = 0.1;       // outlier keypoints per inlier keypoint
  double global_noise = 0.05;
  double depth_noise_m = 0.01;
  double depth_salt_rate = 0.01;
  double query_jitter_m = 0.5;
  double query_jitter_deg = 5.0;
  double min_range_m = 0.5;
  double max_range_m = 40.0;
  std::size_t min_visible_points = 30;
  std::uint64_t seed = 0;

  // Throws kInvalidArgument.
  void validate() const;
};

// One device at 320 x 240 with depth.
SceneConfig default_scene_config();
// Three devices ("ios", "hl", "spot") with distinct intrinsics, heights and
// domain gaps; "spot" carries no depth.
SceneConfig cross_device_scene_config();

// Ground truth for one generated frame: the world point behind each keypoint
// (-1 for injected outliers).
struct FrameTruth {
  std::vector<int> point_ids;
};

struct SyntheticDevice {
  std::string tag;
  std::vector<MapFrame> map_frames;
  std::vector<QueryFrame> queries;
};

struct SyntheticScene {
  SceneConfig config;
  std::vector<Point3> points;
  DescriptorMatrix latents;  // one unit row per point
  std::vector<SyntheticDevice> devices;
  std::map<std::string, Pose> query_poses;
  std::map<std::string, FrameTruth> truth;  // every map frame and query
};

// Deterministic for a given config. Throws kInvalidArgument with a diagnosis
// when a frame sees fewer than min_visible_points points.
SyntheticScene generate_scene(const SceneConfig& cfg);

// Writes <dir>/maps/<device>/ (frames only, no landmarks), <dir>/queries/
// (all devices), <dir>/gt_poses.json and <dir>/scene.json (the config).
void export_scene(const SyntheticScene& scene, const std::filesystem::path& dir);

}  // namespace xloc
