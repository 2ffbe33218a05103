#pragma once

#include <span>
#include <string>
#include <vector>

#include "xloc/frame.hpp"
#include "xloc/geometry.hpp"

namespace xloc {

class MapDatabase;

struct Match {
  int query_idx = -1;
  int map_idx = -1;
  float confidence = 0.0F;
  std::string source;
  bool operator==(const Match&) const = default;
};

struct MatchSet {
  std::string query_id;
  std::string map_id;
  std::vector<Match> matches;
  bool operator==(const MatchSet&) const = default;
};

inline constexpr double kDefaultRatio = 0.9;
inline constexpr double kDefaultDedupRadiusPx = 3.0;
inline constexpr const char* kFusedSource = "fused";

// Mutual nearest neighbours under L2 that also pass the ratio test
// d1 < ratio * d2 (d2 is the second-nearest distance; a lone candidate
// always passes). confidence = clamp(1 - d1 / d2, 0, 1).
std::vector<Match> match_mutual_nn(const DescriptorMatrix& desc_a, const DescriptorMatrix& desc_b,
                                   double ratio = kDefaultRatio, const std::string& source = "mnn");

// Min-max rescales confidences to [0, 1] separately for every source tag in
// the set. A source whose confidences are all equal maps to 1.
MatchSet normalize_confidences(MatchSet ms);

// Confidence-weighted union of several match sets for one query/map pair.
//
// Two matches are duplicates when their query keypoints and their map
// keypoints both lie within dedup_radius pixels. Duplicates (closed
// transitively) form a group whose representative is its highest-confidence
// member; the group's confidence is the noisy-or 1 - prod(1 - c_s) over the
// best confidence of each contributing source. The result is then made
// one-to-one on both sides greedily by descending confidence, ties broken by
// (query_idx, map_idx). Output matches carry the source tag "fused".
//
// Throws kInvalidArgument when the sets disagree on the frame pair or an index
// is out of range.
MatchSet fuse_matches(std::span<const MatchSet> sets, std::span<const Keypoint> query_keypoints,
                      std::span<const Keypoint> map_keypoints,
                      double dedup_radius = kDefaultDedupRadiusPx);

// One 2D-3D correspondence for absolute pose estimation.
struct Correspondence2D3D {
  Pixel pixel = Pixel::Zero();
  Point3 point = Point3::Zero();
  double weight = 1.0;
  int query_idx = -1;
  int landmark_id = -1;
};

// Lifts each match whose map keypoint observes a landmark into a 2D-3D
// correspondence weighted by the match confidence. At most one
// correspondence per query keypoint. Throws kNotFound for an unknown map
// frame.
std::vector<Correspondence2D3D> lift_to_2d3d(const MatchSet& ms, const MapDatabase& db,
                                             std::span<const Keypoint> query_keypoints);

// Pools correspondences lifted from several map frames: one per query
// keypoint, keeping the highest weight (ties: lower landmark id). Output is
// sorted by query keypoint index.
std::vector<Correspondence2D3D> pool_correspondences(std::vector<Correspondence2D3D> all);

}  // namespace xloc
