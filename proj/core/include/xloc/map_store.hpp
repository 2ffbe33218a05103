#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "xloc/frame.hpp"
#include "xloc/geometry.hpp"
#include "xloc/matching.hpp"

namespace xloc {

inline constexpr int kStoreFormatVersion = 1;

struct TrackElement {
  std::string frame_id;
  int keypoint_index = -1;
  bool operator==(const TrackElement&) const = default;
};

struct Landmark {
  Point3 point = Point3::Zero();
  std::vector<TrackElement> track;
  double mean_reprojection_error = 0.0;
};

struct PairMatches {
  std::string frame_a;
  std::string frame_b;
  // Match::query_idx indexes frame_a keypoints, Match::map_idx frame_b.
  MatchSet matches;
};

struct MapBuildOptions {
  double max_reprojection_error_px = 4.0;
  double min_triangulation_angle_deg = 1.5;
};

// Posed frames plus triangulated landmarks. Immutable once built or loaded;
// concurrent readers are safe.
class MapDatabase {
 public:
  MapDatabase() = default;
  // Validates frames and landmarks; throws kInvalidArgument for duplicate
  // frame ids and kCorruptStore for tracks that do not resolve.
  MapDatabase(std::vector<MapFrame> frames, std::vector<Landmark> landmarks);

  const std::vector<MapFrame>& frames() const { return frames_; }
  const std::vector<Landmark>& landmarks() const { return landmarks_; }
  std::size_t num_frames() const { return frames_.size(); }

  // Index into frames(), or std::nullopt for an unknown id.
  std::optional<std::size_t> frame_index(const std::string& frame_id) const;
  // Throws kNotFound for an unknown id.
  const MapFrame& frame(const std::string& frame_id) const;

  // Landmark observed by a keypoint, or -1.
  int landmark_of(std::size_t frame_index, int keypoint_index) const;
  std::size_t num_observed_keypoints(std::size_t frame_index) const;

  // Most frequent device tag among frames (first seen wins ties); empty for an
  // empty map.
  std::string dominant_device() const;

  // Directory the database was loaded from, if any. Used to hand depth file
  // references to external localizers.
  const std::optional<std::filesystem::path>& source_dir() const { return source_dir_; }
  void set_source_dir(std::filesystem::path dir) { source_dir_ = std::move(dir); }

 private:
  std::vector<MapFrame> frames_;
  std::vector<Landmark> landmarks_;
  std::unordered_map<std::string, std::size_t> index_;
  // Per frame, keypoint -> landmark id (-1 when unobserved).
  std::vector<std::vector<int>> observations_;
  std::optional<std::filesystem::path> source_dir_;
};

// Merges matched keypoints into tracks (union-find over match edges; an edge
// that would put two keypoints of one frame in a track is rejected), then
// triangulates every track seen by >= 2 frames. A landmark is kept iff its
// mean reprojection error is within the gate, its triangulation angle passes
// and it lies in front of every observing camera.
MapDatabase build_map(std::vector<MapFrame> frames, const std::vector<PairMatches>& pair_matches,
                      const MapBuildOptions& opts = {});

// Map directory: manifest.json, landmarks.json, and per-frame little-endian
// float32 arrays (*.f32) and depth rasters (*.d32). See README for the layout.
void save_map(const MapDatabase& db, const std::filesystem::path& dir);
// Throws kVersionMismatch, kCorruptStore or kTruncatedArray.
MapDatabase load_map(const std::filesystem::path& dir);

// Depth raster of the frame at `frame_index`, relative to a store written by
// save_map or save_queries.
std::string frame_depth_file(std::size_t frame_index);

// Query directory: same manifest layout, frames carry no pose.
void save_queries(const std::vector<QueryFrame>& queries, const std::filesystem::path& dir);
std::vector<QueryFrame> load_queries(const std::filesystem::path& dir);

}  // namespace xloc
