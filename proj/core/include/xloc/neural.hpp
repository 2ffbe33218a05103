#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xloc/frame.hpp"
#include "xloc/geometry.hpp"

namespace xloc {

struct DepthFilterConfig {
  double min_depth = 0.1;  // meters
  double max_depth = 30.0;
  double mad_k = 5.0;

  void validate() const;
};

// Depth of one candidate re-expressed in the query camera frame.
struct ConditionedDepth {
  std::vector<Point3> points;
  // Share of originally valid pixels that filtering removed.
  double filtered_fraction = 0.0;
};

struct CandidateView {
  std::string frame_id;
  CameraIntrinsics intrinsics;
  Pose pose;  // camera-from-world
  std::optional<ConditionedDepth> depth;
  // Location of the raw depth raster on disk, when the map came from a store.
  std::string depth_ref;
};

struct QueryView {
  std::string frame_id;
  CameraIntrinsics intrinsics;
  std::optional<DepthMap> depth;
  std::string depth_ref;
};

struct LocalizationContext {
  QueryView query;
  std::vector<CandidateView> candidates;
};

struct NeuralPoseEstimate {
  Pose pose;
  double confidence = 0.0;
  bool valid = false;
  std::string error;  // set when an implementation reports a failure
};

// The feed-forward metric localizer seen by the pipeline. Implementations must
// be deterministic for identical (ctx, seed) and safe to call concurrently.
// Throws kPrecondition for an empty candidate list and kTransport when the
// backing implementation is unreachable.
class NeuralLocalizer {
 public:
  virtual ~NeuralLocalizer() = default;
  virtual NeuralPoseEstimate localize(const LocalizationContext& ctx, std::uint64_t seed) = 0;
};

struct OracleNoise {
  double rot_sigma_deg = 0.0;
  double trans_sigma_m = 0.0;
  // Noise grows as (1 + alpha * mean distance to candidate centers).
  double alpha_per_m = 0.0;
  // Invalid when even the nearest candidate is farther than this.
  double fail_beyond_m = 1e9;
  // Extra rotation noise proportional to the mean filtered depth fraction.
  double depth_rot_gain = 0.0;
};

// Ground-truth pose perturbed by Gaussian rotation noise about a uniformly
// random axis and Gaussian camera-center noise, both scaled by
// (1 + alpha * mean candidate distance). Exactly the ground truth when both
// sigmas are zero.
NeuralPoseEstimate oracle_localize(const LocalizationContext& ctx, const Pose& gt, const OracleNoise& noise,
                                   std::uint64_t seed);

// Test double standing in for the network: looks up each query's ground truth.
class OracleLocalizer final : public NeuralLocalizer {
 public:
  OracleLocalizer(std::map<std::string, Pose> ground_truth, OracleNoise noise);
  NeuralPoseEstimate localize(const LocalizationContext& ctx, std::uint64_t seed) override;

 private:
  std::map<std::string, Pose> gt_;
  OracleNoise noise_;
};

// Invalidates pixels that are non-positive, non-finite, outside
// [min_depth, max_depth], or farther than mad_k * MAD from the median of the
// remaining valid depths. The MAD gate is repeated until no pixel changes, so
// the filter is idempotent. Surviving pixels keep their exact values.
DepthMap filter_depth(const DepthMap& depth, const DepthFilterConfig& cfg = {});

// filter_depth then transform_depth_to_query for every candidate with depth;
// candidates without depth get std::nullopt.
std::vector<std::optional<ConditionedDepth>> condition_depth(std::span<const MapFrame* const> candidates,
                                                             const Pose& query_pose,
                                                             const DepthFilterConfig& cfg = {});

}  // namespace xloc
