#pragma once

// Files exchanged with the external model adapter.
//
// Feature directory: features.json +
//   <id>.kp.f32      N x 2 float32 (u, v pixels), little-endian, row-major
//   <id>.desc.f32    N x D float32
//   <id>.scores.f32  N float32
//   <id>.global.f32  Dg float32, unit norm
// Match directory: matches.json +
//   <k>.idx.i32      M x 2 int32 (query keypoint, map keypoint)
//   <k>.conf.f32     M float32 in [0, 1]
// Both manifests carry "format_version": 1 and a "kind" tag. File names are
// stored in the manifest, so only the manifest layout is fixed.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "xloc/frame.hpp"
#include "xloc/matching.hpp"

namespace xloc {

inline constexpr int kInterchangeFormatVersion = 1;

struct FeatureRecord {
  std::vector<Keypoint> keypoints;  // score taken from the scores array
  DescriptorMatrix descriptors;
  GlobalDescriptor global;
};

using FeatureFile = std::map<std::string, FeatureRecord>;

struct MatchRecord {
  std::string image0;  // query side
  std::string image1;  // map side
  std::string source;  // matcher tag
  std::vector<Match> matches;
};

// Loaders validate shapes, finiteness, unit-norm globals and confidence
// ranges; violations raise kSchema, missing files kCorruptStore, size
// mismatches kTruncatedArray, unknown versions kVersionMismatch.
void save_feature_file(const FeatureFile& features, const std::filesystem::path& dir);
FeatureFile load_feature_file(const std::filesystem::path& dir);

void save_match_file(const std::vector<MatchRecord>& records, const std::filesystem::path& dir);
std::vector<MatchRecord> load_match_file(const std::filesystem::path& dir);

// Groups match records by (image0, image1) into one MatchSet per source.
std::map<std::pair<std::string, std::string>, std::vector<MatchSet>> group_match_records(
    const std::vector<MatchRecord>& records);

}  // namespace xloc
