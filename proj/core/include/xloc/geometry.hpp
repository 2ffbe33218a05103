#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace xloc {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// A pixel location (u right, v down). Integer coordinates address pixel
// centers, so raster pixel (col, row) sits at (u, v) = (col, row).
using Pixel = Eigen::Vector2d;
// A 3D point. Which frame it lives in (world or camera) is carried by the
// operation that produced it.
using Point3 = Eigen::Vector3d;

// Unit quaternion rotation. Normalized on construction and after every
// product, so it never drifts off the unit sphere.
class Rotation {
 public:
  Rotation() = default;
  // Normalizes; throws kInvalidArgument for a zero or non-finite quaternion.
  explicit Rotation(const Eigen::Quaterniond& q);
  Rotation(double w, double x, double y, double z);

  static Rotation identity() { return Rotation(); }
  // Stores q verbatim. Throws kInvalidArgument unless |q| = 1 within 1e-12.
  static Rotation from_unit_quaternion(const Eigen::Quaterniond& q);
  static Rotation from_matrix(const Mat3& R);
  // Rotation vector (axis * angle, radians).
  static Rotation from_rotation_vector(const Vec3& omega);
  static Rotation from_axis_angle_deg(const Vec3& axis, double angle_deg);

  const Eigen::Quaterniond& quaternion() const { return q_; }
  Mat3 matrix() const { return q_.toRotationMatrix(); }
  Vec3 rotation_vector() const;
  Rotation inverse() const;
  Vec3 operator*(const Vec3& v) const { return q_ * v; }
  Rotation operator*(const Rotation& other) const;

  // Sign-canonical copy (w >= 0, first non-zero component positive on ties).
  Rotation canonical() const;

 private:
  Eigen::Quaterniond q_ = Eigen::Quaterniond::Identity();
};

// Compares as rotations: q and -q are the same rotation.
bool same_rotation(const Rotation& a, const Rotation& b, double tol_deg = 1e-9);

// Camera-from-world rigid transform: x_cam = R * x_world + t.
struct Pose {
  Rotation rotation;
  Vec3 translation = Vec3::Zero();

  static Pose identity() { return Pose{}; }
  // Pose whose camera center sits at `center` with world-to-camera rotation R.
  static Pose from_center(const Rotation& R, const Vec3& center);

  Vec3 apply(const Vec3& x) const { return rotation * x + translation; }
  // World position of the optical center, C = -R^T t.
  Vec3 center() const;
  Eigen::Matrix<double, 3, 4> matrix() const;
};

// x -> R_a (R_b x + t_b) + t_a
Pose compose(const Pose& a, const Pose& b);
Pose inverse(const Pose& p);

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.5;
  double cy = 0.5;
  int width = 1;
  int height = 1;

  // Throws kInvalidArgument unless fx, fy > 0 and the principal point lies
  // strictly inside the image.
  void validate() const;
  bool contains(const Pixel& p) const;
  Mat3 matrix() const;
  bool operator==(const CameraIntrinsics&) const = default;
};

CameraIntrinsics make_intrinsics(double fx, double fy, double cx, double cy, int width, int height);

// Row-major raster of metric depth. Non-positive or non-finite values mark
// invalid pixels.
struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<float> values;

  DepthMap() = default;
  DepthMap(int w, int h, float fill = 0.0F);

  float at(int col, int row) const { return values[static_cast<std::size_t>(row) * width + col]; }
  float& at(int col, int row) { return values[static_cast<std::size_t>(row) * width + col]; }
  static bool is_valid(float d) { return d > 0.0F && std::isfinite(d); }
  std::size_t valid_count() const;
  bool operator==(const DepthMap&) const = default;
};

// Projects a world point. std::nullopt when the camera-frame depth is at most
// 1e-6 m (behind or on the camera plane). The pixel is not bounds-checked.
std::optional<Pixel> project(const CameraIntrinsics& K, const Pose& T, const Point3& X_world);

// Lifts a pixel at metric depth d into the camera frame. Throws kInvalidDepth
// when d is not a positive finite number.
Point3 backproject(const CameraIntrinsics& K, const Pixel& p, double depth);

// Backprojects every valid pixel of a source-camera depth map and re-expresses
// it in the query camera frame via compose(T_query, inverse(T_src)).
// Invalid pixels are dropped; an all-invalid map yields an empty cloud.
std::vector<Point3> transform_depth_to_query(const DepthMap& depth, const CameraIntrinsics& K_src,
                                             const Pose& T_src, const Pose& T_query);

struct TriangulationOptions {
  double min_angle_deg = 1.5;
};

struct View {
  CameraIntrinsics K;
  Pose T;
  Pixel pixel;
};

// Largest pairwise angle between viewing rays meeting at X.
double triangulation_angle_deg(std::span<const Vec3> centers, const Point3& X);

// Linear (DLT) triangulation from any number >= 2 of views. std::nullopt when
// the maximal triangulation angle falls below the threshold or any view sees
// the point at non-positive depth.
std::optional<Point3> triangulate_views(std::span<const View> views,
                                        const TriangulationOptions& opts = {});

std::optional<Point3> triangulate(const CameraIntrinsics& K1, const Pose& T1, const Pixel& p1,
                                  const CameraIntrinsics& K2, const Pose& T2, const Pixel& p2,
                                  const TriangulationOptions& opts = {});

// Angle of the relative rotation Ra^T Rb, in degrees. Symmetric, zero iff the
// rotations coincide.
double rotation_angle_deg(const Rotation& a, const Rotation& b);

}  // namespace xloc
