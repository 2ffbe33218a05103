#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "xloc/geometry.hpp"

namespace xloc {

struct Keypoint {
  float u = 0.0F;
  float v = 0.0F;
  float score = 1.0F;

  Pixel pixel() const { return Pixel(u, v); }
  bool operator==(const Keypoint&) const = default;
};

// num_keypoints x descriptor_dim, one descriptor per row.
using DescriptorMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using GlobalDescriptor = Eigen::VectorXf;

struct ImageFeatures {
  std::vector<Keypoint> keypoints;
  DescriptorMatrix descriptors;
  GlobalDescriptor global;
};

// One posed, calibrated database image.
struct MapFrame {
  std::string frame_id;
  std::string device;
  CameraIntrinsics intrinsics;
  Pose pose;
  ImageFeatures features;
  std::optional<DepthMap> depth;
};

struct QueryFrame {
  std::string frame_id;
  std::string device;
  CameraIntrinsics intrinsics;
  ImageFeatures features;
  std::optional<DepthMap> depth;
};

// Throws kSchema when keypoints leave the image, descriptor rows disagree
// with the keypoint count, the global descriptor is not unit norm, or the
// depth raster does not match the intrinsics.
void validate_features(const std::string& frame_id, const CameraIntrinsics& K,
                       const ImageFeatures& features, const std::optional<DepthMap>& depth);

}  // namespace xloc
