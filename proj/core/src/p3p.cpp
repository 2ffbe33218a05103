#include <algorithm>
#include <array>
#include <cmath>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "p3p_internal.hpp"
#include "xloc/errors.hpp"
#include "xloc/pnp.hpp"

namespace xloc {

namespace detail {

namespace {

// Real roots of sum_i c[i] v^(n-i), highest degree first, polished by Newton.
std::vector<double> real_roots(std::array<double, 5> c) {
  double scale = 0.0;
  for (double v : c) scale = std::max(scale, std::abs(v));
  if (!(scale > 0.0)) return {};
  for (double& v : c) v /= scale;

  std::size_t lead = 0;
  while (lead < 4 && std::abs(c[lead]) < 1e-12) ++lead;
  const int degree = static_cast<int>(4 - lead);
  if (degree < 1) return {};

  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(degree, degree);
  for (int i = 0; i < degree; ++i) companion(0, i) = -c[lead + 1 + static_cast<std::size_t>(i)] / c[lead];
  for (int i = 1; i < degree; ++i) companion(i, i - 1) = 1.0;
  const Eigen::EigenSolver<Eigen::MatrixXd> es(companion, false);

  const auto eval = [&](double v, double* deriv) {
    double p = 0.0;
    double dp = 0.0;
    for (std::size_t i = lead; i < 5; ++i) {
      dp = dp * v + p;
      p = p * v + c[i];
    }
    *deriv = dp;
    return p;
  };

  std::vector<double> roots;
  for (int i = 0; i < degree; ++i) {
    const std::complex<double> z = es.eigenvalues()(i);
    if (std::abs(z.imag()) > 1e-5 * (1.0 + std::abs(z.real()))) continue;
    double v = z.real();
    for (int it = 0; it < 8; ++it) {
      double dp = 0.0;
      const double p = eval(v, &dp);
      if (dp == 0.0) break;
      const double step = p / dp;
      v -= step;
      if (std::abs(step) < 1e-15 * (1.0 + std::abs(v))) break;
    }
    roots.push_back(v);
  }
  return roots;
}

// R, t with P_i = R X_i + t for three non-collinear point pairs.
bool absolute_orientation(const std::array<Vec3, 3>& X, const std::array<Vec3, 3>& P, Pose* out) {
  const Vec3 cx = (X[0] + X[1] + X[2]) / 3.0;
  const Vec3 cp = (P[0] + P[1] + P[2]) / 3.0;
  Mat3 H = Mat3::Zero();
  for (int i = 0; i < 3; ++i) H += (X[static_cast<std::size_t>(i)] - cx) * (P[static_cast<std::size_t>(i)] - cp).transpose();
  const Eigen::JacobiSVD<Mat3> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 D = Mat3::Identity();
  D(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  const Mat3 R = svd.matrixV() * D * svd.matrixU().transpose();
  if (!R.allFinite()) return false;
  const Rotation rot = Rotation::from_matrix(R);
  *out = Pose{rot, cp - rot * cx};
  return true;
}

}  // namespace

bool is_degenerate_triplet(const std::array<Vec3, 3>& X) {
  const Vec3 a = X[1] - X[0];
  const Vec3 b = X[2] - X[0];
  const double scale = std::max({a.squaredNorm(), b.squaredNorm(), (X[2] - X[1]).squaredNorm()});
  if (!(scale > 0.0)) return true;
  return a.cross(b).norm() <= 1e-10 * scale;
}

Vec3 bearing(const CameraIntrinsics& K, const Pixel& p) {
  return Vec3((p.x() - K.cx) / K.fx, (p.y() - K.cy) / K.fy, 1.0).normalized();
}

void p3p_candidates(const std::array<Vec3, 3>& f, const std::array<Vec3, 3>& X, std::vector<Pose>* out) {
  out->clear();
  const double a2 = (X[1] - X[2]).squaredNorm();
  const double b2 = (X[0] - X[2]).squaredNorm();
  const double c2 = (X[0] - X[1]).squaredNorm();
  const double cos_a = f[1].dot(f[2]);
  const double cos_b = f[0].dot(f[2]);
  const double cos_g = f[0].dot(f[1]);

  // Grunert: with s2 = u s1 and s3 = v s1, eliminating u leaves a quartic in v.
  const double amc = (a2 - c2) / b2;
  const double apc = (a2 + c2) / b2;
  const std::array<double, 5> coeffs = {
      (amc - 1.0) * (amc - 1.0) - 4.0 * c2 / b2 * cos_a * cos_a,
      4.0 * (amc * (1.0 - amc) * cos_b - (1.0 - apc) * cos_a * cos_g + 2.0 * c2 / b2 * cos_a * cos_a * cos_b),
      2.0 * (amc * amc - 1.0 + 2.0 * amc * amc * cos_b * cos_b + 2.0 * (b2 - c2) / b2 * cos_a * cos_a -
             4.0 * apc * cos_a * cos_b * cos_g + 2.0 * (b2 - a2) / b2 * cos_g * cos_g),
      4.0 * (-amc * (1.0 + amc) * cos_b + 2.0 * a2 / b2 * cos_g * cos_g * cos_b - (1.0 - apc) * cos_a * cos_g),
      (1.0 + amc) * (1.0 + amc) - 4.0 * a2 / b2 * cos_g * cos_g,
  };

  for (const double v : real_roots(coeffs)) {
    if (!(v > 0.0)) continue;
    const double denom = 1.0 + v * v - 2.0 * v * cos_b;
    if (!(denom > 0.0)) continue;
    const double s1 = std::sqrt(b2 / denom);
    const double s3 = v * s1;

    // s2 from |X1 - X2|: s2^2 - 2 s1 cos_g s2 + s1^2 - c^2 = 0; the right
    // branch is the one that also satisfies |X2 - X3|.
    double disc = s1 * s1 * cos_g * cos_g - s1 * s1 + c2;
    if (disc < 0.0) {
      if (disc < -1e-8 * c2) continue;
      disc = 0.0;
    }
    const double sq = std::sqrt(disc);
    for (const double s2 : {s1 * cos_g + sq, s1 * cos_g - sq}) {
      if (!(s2 > 0.0)) continue;
      const double resid = std::abs(s2 * s2 + s3 * s3 - 2.0 * s2 * s3 * cos_a - a2) / a2;
      if (resid > 1e-5) continue;
      const std::array<Vec3, 3> P = {s1 * f[0], s2 * f[1], s3 * f[2]};
      Pose pose;
      if (!absolute_orientation(X, P, &pose)) continue;
      bool in_front = true;
      for (const Vec3& x : X) in_front = in_front && pose.apply(x).z() > 1e-6;
      if (!in_front) continue;
      const bool duplicate = std::any_of(out->begin(), out->end(), [&](const Pose& q) {
        return rotation_angle_deg(q.rotation, pose.rotation) < 1e-7 &&
               (q.translation - pose.translation).norm() < 1e-9 * (1.0 + pose.translation.norm());
      });
      if (!duplicate) out->push_back(pose);
      if (sq == 0.0) break;
    }
  }
  if (out->size() > 4) out->resize(4);
}

}  // namespace detail

std::vector<Pose> solve_p3p(std::span<const Correspondence2D3D> corrs, const CameraIntrinsics& K) {
  if (corrs.size() != 3) {
    fail(ErrorCategory::kInvalidArgument, "P3P needs exactly three correspondences");
  }
  const std::array<Vec3, 3> X = {corrs[0].point, corrs[1].point, corrs[2].point};
  if (detail::is_degenerate_triplet(X)) {
    fail(ErrorCategory::kDegenerate, "P3P world points are collinear or coincident");
  }
  const std::array<Vec3, 3> f = {detail::bearing(K, corrs[0].pixel), detail::bearing(K, corrs[1].pixel),
                                 detail::bearing(K, corrs[2].pixel)};
  std::vector<Pose> poses;
  detail::p3p_candidates(f, X, &poses);
  return poses;
}

}  // namespace xloc
