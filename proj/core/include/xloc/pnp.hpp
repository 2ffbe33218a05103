#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "xloc/geometry.hpp"
#include "xloc/matching.hpp"

namespace xloc {

struct RansacConfig {
  double reproj_threshold = 12.0;  // pixels
  double confidence = 0.9999;
  int max_iterations = 10000;
  int min_inliers_success = 4;
  std::uint64_t rng_seed = 0;

  // Throws kInvalidArgument when a field is out of range.
  void validate() const;
};

struct PnPResult {
  Pose pose;
  std::vector<char> inlier_mask;
  int num_inliers = 0;
  double mean_inlier_reproj_error = 0.0;
  bool converged = false;
  int iterations = 0;
};

enum class PnPFailure { kInsufficientCorrespondences, kNoModel };

struct PnPOutcome {
  std::optional<PnPResult> result;
  std::optional<PnPFailure> failure;

  bool ok() const { return result.has_value(); }
};

std::string_view to_string(PnPFailure f);

// Minimal absolute pose from exactly three correspondences (Grunert's
// quartic). Returns up to four poses that reproject all three points; poses
// placing a point behind the camera are dropped. Throws kDegenerate for
// collinear or coincident world points, kInvalidArgument unless exactly three
// correspondences are given.
std::vector<Pose> solve_p3p(std::span<const Correspondence2D3D> corrs, const CameraIntrinsics& K);

// LO-RANSAC over P3P samples scored by inlier count. Each new best model is
// locally refined on its inliers and rescored; the iteration bound adapts to
// the inlier ratio. The winner is refined once more on its inlier set.
// Deterministic for a fixed cfg.rng_seed.
PnPOutcome ransac_pnp(std::span<const Correspondence2D3D> corrs, const CameraIntrinsics& K,
                      const RansacConfig& cfg = {});

struct RefineOptions {
  int max_iterations = 100;
  double min_step_norm = 1e-10;
  double max_damping = 1e12;
};

struct RefineResult {
  Pose pose;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Weighted Gauss-Newton with Levenberg damping on
//   sum_i w_i * |project(K, T, X_i) - x_i|^2.
// Rotation is updated on the manifold, R <- exp(dw) R, t <- t + dt. Only
// cost-decreasing steps are accepted, so final_cost <= initial_cost. If no
// step can decrease the cost before damping saturates, the initial pose is
// returned with converged = false.
RefineResult refine_pose(std::span<const Correspondence2D3D> inliers, const CameraIntrinsics& K,
                         const Pose& initial, const RefineOptions& opts = {});

// Stacked residuals (2N, projected minus observed) and their Jacobian (2N x 6)
// with respect to the increment (dw, dt) of the update above, evaluated at 0.
// Points behind the camera get zero rows. `jacobian` may be null.
void reprojection_residuals(std::span<const Correspondence2D3D> corrs, const CameraIntrinsics& K,
                            const Pose& pose, Eigen::VectorXd* residuals,
                            Eigen::Matrix<double, Eigen::Dynamic, 6>* jacobian);

// Applies the manifold update used by refine_pose.
Pose apply_increment(const Pose& pose, const Eigen::Matrix<double, 6, 1>& delta);

}  // namespace xloc
