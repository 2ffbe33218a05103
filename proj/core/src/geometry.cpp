#include "xloc/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/SVD>

#include "xloc/errors.hpp"

namespace xloc {

namespace {

constexpr double kDegPerRad = 180.0 / std::numbers::pi;
constexpr double kMinCameraDepth = 1e-6;

Eigen::Quaterniond normalized_or_throw(const Eigen::Quaterniond& q) {
  const double n = q.norm();
  if (!(n > 0.0) || !std::isfinite(n)) {
    fail(ErrorCategory::kInvalidArgument, "quaternion must be finite and non-zero");
  }
  return Eigen::Quaterniond(q.w() / n, q.x() / n, q.y() / n, q.z() / n);
}

}  // namespace

Rotation::Rotation(const Eigen::Quaterniond& q) : q_(normalized_or_throw(q)) {}

Rotation::Rotation(double w, double x, double y, double z)
    : Rotation(Eigen::Quaterniond(w, x, y, z)) {}

Rotation Rotation::from_unit_quaternion(const Eigen::Quaterniond& q) {
  if (!(std::abs(q.norm() - 1.0) < 1e-12)) {
    fail(ErrorCategory::kInvalidArgument, "quaternion is not unit norm");
  }
  Rotation r;
  r.q_ = q;
  return r;
}

Rotation Rotation::from_matrix(const Mat3& R) { return Rotation(Eigen::Quaterniond(R)); }

Rotation Rotation::from_rotation_vector(const Vec3& omega) {
  const double theta = omega.norm();
  if (theta < 1e-12) {
    // First-order expansion; exact to double precision at this magnitude.
    return Rotation(1.0, 0.5 * omega.x(), 0.5 * omega.y(), 0.5 * omega.z());
  }
  const Vec3 axis = omega / theta;
  const double s = std::sin(0.5 * theta);
  return Rotation(std::cos(0.5 * theta), s * axis.x(), s * axis.y(), s * axis.z());
}

Rotation Rotation::from_axis_angle_deg(const Vec3& axis, double angle_deg) {
  const double n = axis.norm();
  if (!(n > 0.0)) fail(ErrorCategory::kInvalidArgument, "rotation axis must be non-zero");
  return from_rotation_vector(axis / n * (angle_deg / kDegPerRad));
}

Vec3 Rotation::rotation_vector() const {
  const Rotation c = canonical();
  const Vec3 v(c.q_.x(), c.q_.y(), c.q_.z());
  const double s = v.norm();
  if (s < 1e-12) return 2.0 * v;
  const double theta = 2.0 * std::atan2(s, c.q_.w());
  return v / s * theta;
}

Rotation Rotation::inverse() const { return Rotation(q_.conjugate()); }

Rotation Rotation::operator*(const Rotation& other) const { return Rotation(q_ * other.q_); }

Rotation Rotation::canonical() const {
  const double c[4] = {q_.w(), q_.x(), q_.y(), q_.z()};
  for (double v : c) {
    if (v > 0.0) return *this;
    if (v < 0.0) return Rotation(-q_.w(), -q_.x(), -q_.y(), -q_.z());
  }
  return *this;
}

bool same_rotation(const Rotation& a, const Rotation& b, double tol_deg) {
  return rotation_angle_deg(a, b) <= tol_deg;
}

Pose Pose::from_center(const Rotation& R, const Vec3& center) {
  return Pose{R, -(R * center)};
}

Vec3 Pose::center() const { return -(rotation.inverse() * translation); }

Eigen::Matrix<double, 3, 4> Pose::matrix() const {
  Eigen::Matrix<double, 3, 4> P;
  P.leftCols<3>() = rotation.matrix();
  P.col(3) = translation;
  return P;
}

Pose compose(const Pose& a, const Pose& b) {
  return Pose{a.rotation * b.rotation, a.rotation * b.translation + a.translation};
}

Pose inverse(const Pose& p) {
  const Rotation Rinv = p.rotation.inverse();
  return Pose{Rinv, -(Rinv * p.translation)};
}

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    fail(ErrorCategory::kInvalidArgument, "focal lengths must be positive");
  }
  if (width <= 0 || height <= 0) {
    fail(ErrorCategory::kInvalidArgument, "image size must be positive");
  }
  if (!(cx > 0.0 && cx < width) || !(cy > 0.0 && cy < height)) {
    fail(ErrorCategory::kInvalidArgument, "principal point must lie inside the image");
  }
}

bool CameraIntrinsics::contains(const Pixel& p) const {
  return p.x() >= 0.0 && p.y() >= 0.0 && p.x() <= width - 1.0 && p.y() <= height - 1.0;
}

Mat3 CameraIntrinsics::matrix() const {
  Mat3 K;
  K << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return K;
}

CameraIntrinsics make_intrinsics(double fx, double fy, double cx, double cy, int width, int height) {
  CameraIntrinsics K{fx, fy, cx, cy, width, height};
  K.validate();
  return K;
}

DepthMap::DepthMap(int w, int h, float fill)
    : width(w), height(h), values(static_cast<std::size_t>(w) * h, fill) {
  if (w < 0 || h < 0) fail(ErrorCategory::kInvalidArgument, "depth map size must be non-negative");
}

std::size_t DepthMap::valid_count() const {
  return static_cast<std::size_t>(std::count_if(values.begin(), values.end(), is_valid));
}

std::optional<Pixel> project(const CameraIntrinsics& K, const Pose& T, const Point3& X_world) {
  const Vec3 x = T.apply(X_world);
  if (x.z() <= kMinCameraDepth) return std::nullopt;
  return Pixel(K.fx * x.x() / x.z() + K.cx, K.fy * x.y() / x.z() + K.cy);
}

Point3 backproject(const CameraIntrinsics& K, const Pixel& p, double depth) {
  if (!(depth > 0.0) || !std::isfinite(depth)) {
    fail(ErrorCategory::kInvalidDepth, "backprojection depth must be positive and finite");
  }
  return Point3((p.x() - K.cx) / K.fx * depth, (p.y() - K.cy) / K.fy * depth, depth);
}

std::vector<Point3> transform_depth_to_query(const DepthMap& depth, const CameraIntrinsics& K_src,
                                             const Pose& T_src, const Pose& T_query) {
  const Pose query_from_src = compose(T_query, inverse(T_src));
  std::vector<Point3> cloud;
  cloud.reserve(depth.valid_count());
  for (int row = 0; row < depth.height; ++row) {
    for (int col = 0; col < depth.width; ++col) {
      const float d = depth.at(col, row);
      if (!DepthMap::is_valid(d)) continue;
      cloud.push_back(query_from_src.apply(backproject(K_src, Pixel(col, row), d)));
    }
  }
  return cloud;
}

double triangulation_angle_deg(std::span<const Vec3> centers, const Point3& X) {
  double best = 0.0;
  for (std::size_t i = 0; i < centers.size(); ++i) {
    const Vec3 ri = centers[i] - X;
    for (std::size_t j = i + 1; j < centers.size(); ++j) {
      const Vec3 rj = centers[j] - X;
      const double angle = std::atan2(ri.cross(rj).norm(), ri.dot(rj));
      best = std::max(best, angle * kDegPerRad);
    }
  }
  return best;
}

std::optional<Point3> triangulate_views(std::span<const View> views,
                                        const TriangulationOptions& opts) {
  if (views.size() < 2) return std::nullopt;

  Eigen::MatrixXd A(2 * views.size(), 4);
  std::vector<Vec3> centers;
  centers.reserve(views.size());
  for (std::size_t i = 0; i < views.size(); ++i) {
    const View& v = views[i];
    const double xn = (v.pixel.x() - v.K.cx) / v.K.fx;
    const double yn = (v.pixel.y() - v.K.cy) / v.K.fy;
    const Eigen::Matrix<double, 3, 4> P = v.T.matrix();
    A.row(2 * i) = xn * P.row(2) - P.row(0);
    A.row(2 * i + 1) = yn * P.row(2) - P.row(1);
    centers.push_back(v.T.center());
  }

  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
  const Eigen::Vector4d Xh = svd.matrixV().col(3);
  if (std::abs(Xh(3)) < 1e-14 * Xh.head<3>().norm()) return std::nullopt;
  const Point3 X = Xh.head<3>() / Xh(3);
  if (!X.allFinite()) return std::nullopt;

  for (const View& v : views) {
    if (v.T.apply(X).z() <= kMinCameraDepth) return std::nullopt;
  }
  if (triangulation_angle_deg(centers, X) < opts.min_angle_deg) return std::nullopt;
  return X;
}

std::optional<Point3> triangulate(const CameraIntrinsics& K1, const Pose& T1, const Pixel& p1,
                                  const CameraIntrinsics& K2, const Pose& T2, const Pixel& p2,
                                  const TriangulationOptions& opts) {
  const View views[2] = {{K1, T1, p1}, {K2, T2, p2}};
  return triangulate_views(views, opts);
}

double rotation_angle_deg(const Rotation& a, const Rotation& b) {
  // Chord form of the quaternion angle: with b sign-aligned to a,
  // |a - b| = 2 sin(theta / 4) and |a + b| = 2 cos(theta / 4). Exact zero for
  // q against q and -q, full precision near 0 and 180.
  const Eigen::Vector4d qa = a.quaternion().coeffs();
  Eigen::Vector4d qb = b.quaternion().coeffs();
  if (qa.dot(qb) < 0.0) qb = -qb;
  return 4.0 * std::atan2((qa - qb).norm(), (qa + qb).norm()) * kDegPerRad;
}

}  // namespace xloc
