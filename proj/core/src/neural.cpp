#include "xloc/neural.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "xloc/errors.hpp"

namespace xloc {

void DepthFilterConfig::validate() const {
  if (!(min_depth > 0.0 && min_depth < max_depth)) {
    fail(ErrorCategory::kInvalidArgument, "depth filter needs 0 < min_depth < max_depth");
  }
  if (!(mad_k > 0.0)) fail(ErrorCategory::kInvalidArgument, "depth filter mad_k must be positive");
}

NeuralPoseEstimate oracle_localize(const LocalizationContext& ctx, const Pose& gt, const OracleNoise& noise,
                                   std::uint64_t seed) {
  if (ctx.candidates.empty()) fail(ErrorCategory::kPrecondition, "localization context has no candidates");

  const Vec3 c_gt = gt.center();
  double sum = 0.0;
  double nearest = std::numeric_limits<double>::infinity();
  double filtered = 0.0;
  int with_depth = 0;
  for (const CandidateView& c : ctx.candidates) {
    const double d = (c.pose.center() - c_gt).norm();
    sum += d;
    nearest = std::min(nearest, d);
    if (c.depth) {
      filtered += c.depth->filtered_fraction;
      ++with_depth;
    }
  }
  const double mean_dist = sum / static_cast<double>(ctx.candidates.size());

  NeuralPoseEstimate est;
  if (nearest > noise.fail_beyond_m) {
    est.valid = false;
    est.error = "no candidate within reach";
    return est;
  }

  const double growth = 1.0 + noise.alpha_per_m * mean_dist;
  const double depth_mult = 1.0 + noise.depth_rot_gain * (with_depth > 0 ? filtered / with_depth : 0.0);
  const double rot_sigma = noise.rot_sigma_deg * growth * depth_mult;
  const double trans_sigma = noise.trans_sigma_m * growth;

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  est.pose = gt;
  if (rot_sigma > 0.0 || trans_sigma > 0.0) {
    Rotation R = gt.rotation;
    if (rot_sigma > 0.0) {
      Vec3 axis(normal(rng), normal(rng), normal(rng));
      if (axis.norm() == 0.0) axis = Vec3::UnitZ();
      R = Rotation::from_axis_angle_deg(axis, rot_sigma * normal(rng)) * gt.rotation;
    }
    Vec3 center = c_gt;
    if (trans_sigma > 0.0) center += trans_sigma * Vec3(normal(rng), normal(rng), normal(rng));
    est.pose = Pose::from_center(R, center);
  }
  est.confidence = 1.0 / growth;
  est.valid = true;
  return est;
}

OracleLocalizer::OracleLocalizer(std::map<std::string, Pose> ground_truth, OracleNoise noise)
    : gt_(std::move(ground_truth)), noise_(noise) {}

NeuralPoseEstimate OracleLocalizer::localize(const LocalizationContext& ctx, std::uint64_t seed) {
  const auto it = gt_.find(ctx.query.frame_id);
  if (it == gt_.end()) {
    fail(ErrorCategory::kNotFound, "oracle has no ground truth for query '" + ctx.query.frame_id + "'");
  }
  return oracle_localize(ctx, it->second, noise_, seed);
}

namespace {

double median_of(std::vector<double> v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

}  // namespace

DepthMap filter_depth(const DepthMap& depth, const DepthFilterConfig& cfg) {
  cfg.validate();
  DepthMap out = depth;
  constexpr float kInvalid = 0.0F;
  for (float& v : out.values) {
    if (!DepthMap::is_valid(v) || v < cfg.min_depth || v > cfg.max_depth) v = kInvalid;
  }

  std::vector<double> valid;
  for (;;) {
    valid.clear();
    for (float v : out.values) {
      if (DepthMap::is_valid(v)) valid.push_back(v);
    }
    if (valid.empty()) break;
    const double med = median_of(valid);
    for (double& v : valid) v = std::abs(v - med);
    const double limit = cfg.mad_k * median_of(valid);
    bool changed = false;
    for (float& v : out.values) {
      if (DepthMap::is_valid(v) && std::abs(v - med) > limit) {
        v = kInvalid;
        changed = true;
      }
    }
    if (!changed) break;
  }
  return out;
}

std::vector<std::optional<ConditionedDepth>> condition_depth(std::span<const MapFrame* const> candidates,
                                                             const Pose& query_pose,
                                                             const DepthFilterConfig& cfg) {
  std::vector<std::optional<ConditionedDepth>> out;
  out.reserve(candidates.size());
  for (const MapFrame* f : candidates) {
    if (!f->depth) {
      out.emplace_back(std::nullopt);
      continue;
    }
    const DepthMap filtered = filter_depth(*f->depth, cfg);
    const std::size_t before = f->depth->valid_count();
    const std::size_t after = filtered.valid_count();
    ConditionedDepth cd;
    cd.points = transform_depth_to_query(filtered, f->intrinsics, f->pose, query_pose);
    cd.filtered_fraction = before > 0 ? static_cast<double>(before - after) / static_cast<double>(before) : 0.0;
    out.emplace_back(std::move(cd));
  }
  return out;
}

}  // namespace xloc
