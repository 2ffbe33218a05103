#include "xloc/report.hpp"

#include <fstream>
#include <unordered_map>

#include "io_util.hpp"

namespace xloc {

using io::json;

namespace {

constexpr auto kSchema = ErrorCategory::kSchema;

json optional_string(const std::optional<std::string>& s) { return s ? json(*s) : json(nullptr); }

json estimate_json(const std::optional<NeuralPoseEstimate>& e) {
  if (!e) return nullptr;
  return json{{"pose", io::to_json(e->pose)},
              {"confidence", e->confidence},
              {"valid", e->valid},
              {"error", e->error}};
}

}  // namespace

std::string report_line(const HybridResult& r, const std::string& query_device, const ReportContext& ctx) {
  json retrieved = json::array();
  for (const ScoredFrame& s : r.retrieved) retrieved.push_back(json{{"frame_id", s.frame_id}, {"score", s.score}});
  json pnp = nullptr;
  if (r.pnp) {
    pnp = json{{"pose", io::to_json(r.pnp->pose)},
               {"num_inliers", r.pnp->num_inliers},
               {"mean_inlier_reproj_error", r.pnp->mean_inlier_reproj_error},
               {"converged", r.pnp->converged},
               {"iterations", r.pnp->iterations}};
  }
  const json j{{"format_version", kReportFormatVersion},
               {"scene", ctx.scene},
               {"query_id", r.query_id},
               {"query_device", query_device},
               {"map_device", ctx.map_device},
               {"branch", to_string(r.branch)},
               {"selected_branch", to_string(r.selected_branch)},
               {"final_pose", r.final_pose ? io::to_json(*r.final_pose) : json(nullptr)},
               {"failure", optional_string(r.failure)},
               {"retrieved", retrieved},
               {"num_correspondences", r.num_correspondences},
               {"pnp", pnp},
               {"pnp_failure", r.pnp_failure ? json(to_string(*r.pnp_failure)) : json(nullptr)},
               {"neural_candidates", r.neural_candidate_ids},
               {"neural_first", estimate_json(r.neural_first)},
               {"pruned_ids", r.pruned_ids},
               {"neural_rerun", estimate_json(r.neural_rerun)}};
  return j.dump();
}

void write_report(const std::filesystem::path& path, std::span<const HybridResult> results,
                  std::span<const QueryFrame> queries, const ReportContext& ctx) {
  std::unordered_map<std::string, const QueryFrame*> by_id;
  for (const QueryFrame& q : queries) by_id.emplace(q.frame_id, &q);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCategory::kIo, "cannot write " + path.string());
  for (const HybridResult& r : results) {
    const auto it = by_id.find(r.query_id);
    if (it == by_id.end()) fail(ErrorCategory::kNotFound, "result for unknown query '" + r.query_id + "'");
    out << report_line(r, it->second->device, ctx) << '\n';
  }
  if (!out) fail(ErrorCategory::kIo, "short write to " + path.string());
}

ReportEntry parse_report_line(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    fail(kSchema, std::string("malformed report line: ") + e.what());
  }
  if (io::get_field<int>(j, "format_version", kSchema) != kReportFormatVersion) {
    fail(ErrorCategory::kVersionMismatch, "unsupported report format_version");
  }
  ReportEntry e;
  e.scene = io::get_field<std::string>(j, "scene", kSchema);
  e.query_id = io::get_field<std::string>(j, "query_id", kSchema);
  e.query_device = io::get_field<std::string>(j, "query_device", kSchema);
  e.map_device = io::get_field<std::string>(j, "map_device", kSchema);
  e.branch = branch_from_string(io::get_field<std::string>(j, "branch", kSchema));
  if (!j.contains("final_pose")) fail(kSchema, "report line lacks final_pose");
  if (!j.at("final_pose").is_null()) e.final_pose = io::pose_from_json(j.at("final_pose"));
  return e;
}

std::vector<ReportEntry> read_report(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCategory::kNotFound, "cannot open report " + path.string());
  std::vector<ReportEntry> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(parse_report_line(line));
  }
  return out;
}

}  // namespace xloc
