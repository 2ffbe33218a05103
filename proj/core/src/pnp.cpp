#include "xloc/pnp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Cholesky>

#include "p3p_internal.hpp"
#include "xloc/errors.hpp"

namespace xloc {

namespace {

constexpr double kMinDepth = 1e-6;

Mat3 skew(const Vec3& v) {
  Mat3 S;
  S << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return S;
}

double weighted_cost(std::span<const Correspondence2D3D> corrs, const CameraIntrinsics& K, const Pose& pose) {
  double cost = 0.0;
  for (const Correspondence2D3D& c : corrs) {
    const Vec3 x = pose.apply(c.point);
    if (x.z() <= kMinDepth) return std::numeric_limits<double>::infinity();
    const double du = K.fx * x.x() / x.z() + K.cx - c.pixel.x();
    const double dv = K.fy * x.y() / x.z() + K.cy - c.pixel.y();
    cost += c.weight * (du * du + dv * dv);
  }
  return cost;
}

// Squared reprojection error, or +inf behind the camera.
double squared_error(const Correspondence2D3D& c, const CameraIntrinsics& K, const Pose& pose) {
  const Vec3 x = pose.apply(c.point);
  if (x.z() <= kMinDepth) return std::numeric_limits<double>::infinity();
  const double du = K.fx * x.x() / x.z() + K.cx - c.pixel.x();
  const double dv = K.fy * x.y() / x.z() + K.cy - c.pixel.y();
  return du * du + dv * dv;
}

int count_inliers(std::span<const Correspondence2D3D> corrs, const CameraIntrinsics& K, const Pose& pose,
                  double thr2, std::vector<char>* mask) {
  int n = 0;
  if (mask) mask->assign(corrs.size(), 0);
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    if (squared_error(corrs[i], K, pose) <= thr2) {
      ++n;
      if (mask) (*mask)[i] = 1;
    }
  }
  return n;
}

std::vector<Correspondence2D3D> select(std::span<const Correspondence2D3D> corrs, const std::vector<char>& mask) {
  std::vector<Correspondence2D3D> out;
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    if (mask[i]) out.push_back(corrs[i]);
  }
  return out;
}

int adaptive_bound(double inlier_ratio, double confidence, int cap) {
  if (inlier_ratio >= 1.0) return 1;
  const double p_good = std::pow(inlier_ratio, 3.0);
  if (p_good <= 0.0) return cap;
  const double denom = std::log(1.0 - p_good);
  if (!(denom < 0.0)) return cap;
  const double k = std::ceil(std::log(1.0 - confidence) / denom);
  if (!std::isfinite(k) || k > cap) return cap;
  return std::max(1, static_cast<int>(k));
}

}  // namespace

void RansacConfig::validate() const {
  if (!(reproj_threshold > 0.0)) fail(ErrorCategory::kInvalidArgument, "reproj_threshold must be positive");
  if (!(confidence > 0.0 && confidence < 1.0)) {
    fail(ErrorCategory::kInvalidArgument, "confidence must lie in (0, 1)");
  }
  if (max_iterations < 1) fail(ErrorCategory::kInvalidArgument, "max_iterations must be >= 1");
  if (min_inliers_success < 0) fail(ErrorCategory::kInvalidArgument, "min_inliers_success must be >= 0");
}

std::string_view to_string(PnPFailure f) {
  switch (f) {
    case PnPFailure::kInsufficientCorrespondences: return "insufficient_correspondences";
    case PnPFailure::kNoModel: return "no_model";
  }
  return "unknown";
}

void reprojection_residuals(std::span<const Correspondence2D3D> corrs, const CameraIntrinsics& K,
                            const Pose& pose, Eigen::VectorXd* residuals,
                            Eigen::Matrix<double, Eigen::Dynamic, 6>* jacobian) {
  const auto n = static_cast<Eigen::Index>(corrs.size());
  residuals->setZero(2 * n);
  if (jacobian != nullptr) jacobian->setZero(2 * n, 6);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Correspondence2D3D& c = corrs[static_cast<std::size_t>(i)];
    const Vec3 rx = pose.rotation * c.point;
    const Vec3 x = rx + pose.translation;
    if (x.z() <= kMinDepth) continue;
    const double iz = 1.0 / x.z();
    (*residuals)(2 * i) = K.fx * x.x() * iz + K.cx - c.pixel.x();
    (*residuals)(2 * i + 1) = K.fy * x.y() * iz + K.cy - c.pixel.y();
    if (jacobian == nullptr) continue;

    Eigen::Matrix<double, 2, 3> dproj;
    dproj << K.fx * iz, 0.0, -K.fx * x.x() * iz * iz, 0.0, K.fy * iz, -K.fy * x.y() * iz * iz;
    jacobian->block<2, 3>(2 * i, 0) = dproj * (-skew(rx));
    jacobian->block<2, 3>(2 * i, 3) = dproj;
  }
}

Pose apply_increment(const Pose& pose, const Eigen::Matrix<double, 6, 1>& delta) {
  return Pose{Rotation::from_rotation_vector(delta.head<3>()) * pose.rotation, pose.translation + delta.tail<3>()};
}

RefineResult refine_pose(std::span<const Correspondence2D3D> inliers, const CameraIntrinsics& K,
                         const Pose& initial, const RefineOptions& opts) {
  RefineResult res;
  res.pose = initial;
  res.initial_cost = weighted_cost(inliers, K, initial);
  res.final_cost = res.initial_cost;
  if (!std::isfinite(res.initial_cost) || inliers.empty()) return res;

  Eigen::VectorXd r;
  Eigen::Matrix<double, Eigen::Dynamic, 6> J;
  double lambda = 1e-4;
  for (res.iterations = 0; res.iterations < opts.max_iterations; ++res.iterations) {
    reprojection_residuals(inliers, K, res.pose, &r, &J);
    Eigen::Matrix<double, 6, 6> H = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> g = Eigen::Matrix<double, 6, 1>::Zero();
    for (std::size_t i = 0; i < inliers.size(); ++i) {
      const auto row = static_cast<Eigen::Index>(2 * i);
      const auto Ji = J.middleRows<2>(row);
      const double w = inliers[i].weight;
      H.noalias() += w * Ji.transpose() * Ji;
      g.noalias() += w * Ji.transpose() * r.segment<2>(row);
    }

    bool accepted = false;
    while (!accepted) {
      Eigen::Matrix<double, 6, 6> A = H;
      for (int d = 0; d < 6; ++d) A(d, d) += lambda * std::max(H(d, d), 1e-12);
      const Eigen::Matrix<double, 6, 1> delta = -A.ldlt().solve(g);
      if (!delta.allFinite() || delta.norm() < opts.min_step_norm) {
        res.converged = delta.allFinite();
        return res;
      }
      const Pose candidate = apply_increment(res.pose, delta);
      const double cost = weighted_cost(inliers, K, candidate);
      if (cost < res.final_cost) {
        res.pose = candidate;
        res.final_cost = cost;
        lambda = std::max(lambda * 0.1, 1e-12);
        accepted = true;
      } else {
        lambda *= 10.0;
        if (lambda > opts.max_damping) {
          res.converged = false;
          return res;
        }
      }
    }
  }
  res.converged = true;
  return res;
}

PnPOutcome ransac_pnp(std::span<const Correspondence2D3D> corrs, const CameraIntrinsics& K,
                      const RansacConfig& cfg) {
  cfg.validate();
  PnPOutcome outcome;
  const std::size_t n = corrs.size();
  if (n < 4) {
    outcome.failure = PnPFailure::kInsufficientCorrespondences;
    return outcome;
  }

  std::vector<Vec3> bearings(n);
  for (std::size_t i = 0; i < n; ++i) bearings[i] = detail::bearing(K, corrs[i].pixel);

  const double thr2 = cfg.reproj_threshold * cfg.reproj_threshold;
  std::mt19937_64 rng(cfg.rng_seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);

  Pose best_pose;
  int best_count = 0;
  int bound = cfg.max_iterations;
  std::vector<Pose> candidates;
  std::vector<char> mask;
  int it = 0;
  for (; it < bound; ++it) {
    std::array<std::size_t, 3> s{};
    s[0] = pick(rng);
    do s[1] = pick(rng); while (s[1] == s[0]);
    do s[2] = pick(rng); while (s[2] == s[0] || s[2] == s[1]);

    const std::array<Vec3, 3> X = {corrs[s[0]].point, corrs[s[1]].point, corrs[s[2]].point};
    if (detail::is_degenerate_triplet(X)) continue;
    const std::array<Vec3, 3> f = {bearings[s[0]], bearings[s[1]], bearings[s[2]]};
    detail::p3p_candidates(f, X, &candidates);

    for (const Pose& pose : candidates) {
      const int count = count_inliers(corrs, K, pose, thr2, &mask);
      if (count <= best_count) continue;
      best_pose = pose;
      best_count = count;
      if (count >= 4) {
        const auto inl = select(corrs, mask);
        const RefineResult lo = refine_pose(inl, K, pose);
        const int lo_count = count_inliers(corrs, K, lo.pose, thr2, nullptr);
        if (lo_count >= best_count) {
          best_pose = lo.pose;
          best_count = lo_count;
        }
      }
      bound = std::min(bound, adaptive_bound(static_cast<double>(best_count) / static_cast<double>(n),
                                             cfg.confidence, cfg.max_iterations));
    }
  }

  if (best_count < std::max(cfg.min_inliers_success, 1)) {
    outcome.failure = PnPFailure::kNoModel;
    return outcome;
  }

  PnPResult result;
  result.pose = best_pose;
  result.iterations = it;
  count_inliers(corrs, K, best_pose, thr2, &mask);
  // Final refinement on the best inlier set, rescored until the set settles.
  // The refined pose is kept even when a borderline correspondence drops out.
  int count = best_count;
  for (int round = 0; round < 4 && count >= 4; ++round) {
    const RefineResult ref = refine_pose(select(corrs, mask), K, result.pose);
    std::vector<char> new_mask;
    const int new_count = count_inliers(corrs, K, ref.pose, thr2, &new_mask);
    result.converged = ref.converged;
    const bool same = new_mask == mask;
    result.pose = ref.pose;
    mask = std::move(new_mask);
    count = new_count;
    if (same) break;
  }

  result.inlier_mask = mask;
  result.num_inliers = count;
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (mask[i]) sum += std::sqrt(squared_error(corrs[i], K, result.pose));
  }
  result.mean_inlier_reproj_error = count > 0 ? sum / count : 0.0;
  if (count < cfg.min_inliers_success) {
    outcome.failure = PnPFailure::kNoModel;
    return outcome;
  }
  outcome.result = std::move(result);
  return outcome;
}

}  // namespace xloc
