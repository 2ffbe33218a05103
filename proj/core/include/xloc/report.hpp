#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xloc/frame.hpp"
#include "xloc/pipeline.hpp"

namespace xloc {

inline constexpr int kReportFormatVersion = 1;

// One JSON object per line, keys sorted:
//   format_version, scene, query_id, query_device, map_device,
//   branch, selected_branch, final_pose (pose | null), failure (str | null),
//   retrieved [{frame_id, score}], num_correspondences,
//   pnp ({pose, num_inliers, mean_inlier_reproj_error, converged,
//         iterations} | null), pnp_failure (str | null),
//   neural_candidates [id], neural_first (estimate | null),
//   pruned_ids [id], neural_rerun (estimate | null)
// Estimates are {pose, confidence, valid, error}. Poses are camera-from-world
// {qw, qx, qy, qz, tx, ty, tz}.
struct ReportContext {
  std::string scene;
  std::string map_device;
};

std::string report_line(const HybridResult& result, const std::string& query_device, const ReportContext& ctx);

// `results` and `queries` are matched by query id.
void write_report(const std::filesystem::path& path, std::span<const HybridResult> results,
                  std::span<const QueryFrame> queries, const ReportContext& ctx);

struct ReportEntry {
  std::string scene;
  std::string query_id;
  std::string query_device;
  std::string map_device;
  Branch branch = Branch::kNone;
  std::optional<Pose> final_pose;
};

// Throws kSchema for a malformed line, kVersionMismatch for another version.
ReportEntry parse_report_line(const std::string& line);
std::vector<ReportEntry> read_report(const std::filesystem::path& path);

}  // namespace xloc
