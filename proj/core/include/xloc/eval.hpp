#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xloc/geometry.hpp"
#include "xloc/report.hpp"

namespace xloc {

struct PoseError {
  double trans_m = 0.0;  // camera-center distance
  double rot_deg = 0.0;
};

PoseError pose_error(const Pose& est, const Pose& gt);

struct EvalRecord {
  std::string query_id;
  std::string query_device;
  std::string map_device;
  std::optional<Pose> estimated;  // missing counts as a failure
  Pose ground_truth;
};

inline constexpr double kDefaultTransThresholdM = 0.5;
inline constexpr double kDefaultRotThresholdDeg = 5.0;

bool is_success(const EvalRecord& r, double t_thresh = kDefaultTransThresholdM,
                double r_thresh = kDefaultRotThresholdDeg);

// Fraction of records localized within both thresholds (inclusive);
// std::nullopt for an empty record set.
std::optional<double> recall_at(std::span<const EvalRecord> records, double t_thresh = kDefaultTransThresholdM,
                                double r_thresh = kDefaultRotThresholdDeg);

// Rows are query devices, columns map devices, both in one device order.
struct RecallMatrix {
  std::vector<std::string> devices;
  std::vector<std::vector<std::optional<double>>> cells;  // [query][map]
  std::vector<std::vector<std::size_t>> counts;

  std::optional<std::size_t> device_index(const std::string& tag) const;
  // Cell by tags; std::nullopt when undefined or either tag is unknown.
  std::optional<double> cell(const std::string& query_device, const std::string& map_device) const;
};

// Device order is first appearance over records (query tag, then map tag).
RecallMatrix device_pair_matrix(std::span<const EvalRecord> records, double t_thresh = kDefaultTransThresholdM,
                                double r_thresh = kDefaultRotThresholdDeg);

// Builds a matrix from known cell fractions (rows query, columns map).
RecallMatrix matrix_from_cells(std::vector<std::string> devices, std::vector<std::vector<std::optional<double>>> cells);

// Cell-wise mean over scenes (scenes where a cell is undefined are skipped),
// laid out in the first matrix's device order. Throws kInvalidArgument when
// the device sets differ or the list is empty.
RecallMatrix combine_matrices(std::span<const RecallMatrix> per_scene);

// Unweighted mean of the combined cells, as a percentage; undefined cells are
// skipped. std::nullopt when no cell is defined.
std::optional<double> overall_score(std::span<const RecallMatrix> per_scene);

// Aligned text table in percent with two decimals; "-" marks undefined cells.
std::string format_matrix(const RecallMatrix& m, const std::string& title);
std::string matrix_to_json(const RecallMatrix& m);

// Ground-truth file: {"format_version": 1, "pose_convention":
// "camera_from_world", "poses": {id: pose}}.
void save_ground_truth(const std::map<std::string, Pose>& poses, const std::filesystem::path& path);
std::map<std::string, Pose> load_ground_truth(const std::filesystem::path& path);

// Joins report entries with ground truth. Throws kNotFound for a query
// without ground truth.
std::map<std::string, std::vector<EvalRecord>> records_by_scene(std::span<const ReportEntry> entries,
                                                                const std::map<std::string, Pose>& gt);

}  // namespace xloc
