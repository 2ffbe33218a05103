#include "xloc/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "io_util.hpp"

namespace xloc {

using io::json;

PoseError pose_error(const Pose& est, const Pose& gt) {
  return {(est.center() - gt.center()).norm(), rotation_angle_deg(est.rotation, gt.rotation)};
}

bool is_success(const EvalRecord& r, double t_thresh, double r_thresh) {
  if (!r.estimated) return false;
  const PoseError e = pose_error(*r.estimated, r.ground_truth);
  return e.trans_m <= t_thresh && e.rot_deg <= r_thresh;
}

std::optional<double> recall_at(std::span<const EvalRecord> records, double t_thresh, double r_thresh) {
  if (records.empty()) return std::nullopt;
  std::size_t ok = 0;
  for (const EvalRecord& r : records) ok += is_success(r, t_thresh, r_thresh) ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(records.size());
}

std::optional<std::size_t> RecallMatrix::device_index(const std::string& tag) const {
  const auto it = std::find(devices.begin(), devices.end(), tag);
  if (it == devices.end()) return std::nullopt;
  return static_cast<std::size_t>(it - devices.begin());
}

std::optional<double> RecallMatrix::cell(const std::string& query_device, const std::string& map_device) const {
  const auto q = device_index(query_device);
  const auto m = device_index(map_device);
  if (!q || !m) return std::nullopt;
  return cells[*q][*m];
}

RecallMatrix device_pair_matrix(std::span<const EvalRecord> records, double t_thresh, double r_thresh) {
  RecallMatrix m;
  auto add = [&m](const std::string& tag) {
    if (!m.device_index(tag)) m.devices.push_back(tag);
  };
  for (const EvalRecord& r : records) {
    add(r.query_device);
    add(r.map_device);
  }
  const std::size_t n = m.devices.size();
  std::vector<std::vector<std::size_t>> hits(n, std::vector<std::size_t>(n, 0));
  m.counts.assign(n, std::vector<std::size_t>(n, 0));
  for (const EvalRecord& r : records) {
    const std::size_t q = *m.device_index(r.query_device);
    const std::size_t c = *m.device_index(r.map_device);
    ++m.counts[q][c];
    if (is_success(r, t_thresh, r_thresh)) ++hits[q][c];
  }
  m.cells.assign(n, std::vector<std::optional<double>>(n));
  for (std::size_t q = 0; q < n; ++q) {
    for (std::size_t c = 0; c < n; ++c) {
      if (m.counts[q][c] > 0) m.cells[q][c] = static_cast<double>(hits[q][c]) / static_cast<double>(m.counts[q][c]);
    }
  }
  return m;
}

RecallMatrix matrix_from_cells(std::vector<std::string> devices, std::vector<std::vector<std::optional<double>>> cells) {
  const std::size_t n = devices.size();
  if (cells.size() != n) fail(ErrorCategory::kInvalidArgument, "matrix rows do not match the device list");
  for (const auto& row : cells) {
    if (row.size() != n) fail(ErrorCategory::kInvalidArgument, "matrix columns do not match the device list");
    for (const auto& c : row) {
      if (c && !(*c >= 0.0 && *c <= 1.0)) fail(ErrorCategory::kInvalidArgument, "recall cell outside [0, 1]");
    }
  }
  RecallMatrix m;
  m.devices = std::move(devices);
  m.cells = std::move(cells);
  m.counts.assign(n, std::vector<std::size_t>(n, 0));
  for (std::size_t q = 0; q < n; ++q) {
    for (std::size_t c = 0; c < n; ++c) m.counts[q][c] = m.cells[q][c] ? 1 : 0;
  }
  return m;
}

RecallMatrix combine_matrices(std::span<const RecallMatrix> per_scene) {
  if (per_scene.empty()) fail(ErrorCategory::kInvalidArgument, "no matrices to combine");
  const RecallMatrix& first = per_scene.front();
  auto sorted = [](std::vector<std::string> v) {
    std::sort(v.begin(), v.end());
    return v;
  };
  const auto key = sorted(first.devices);
  for (const RecallMatrix& m : per_scene) {
    if (sorted(m.devices) != key) fail(ErrorCategory::kInvalidArgument, "scenes cover different device sets");
  }

  const std::size_t n = first.devices.size();
  RecallMatrix out;
  out.devices = first.devices;
  out.cells.assign(n, std::vector<std::optional<double>>(n));
  out.counts.assign(n, std::vector<std::size_t>(n, 0));
  for (std::size_t q = 0; q < n; ++q) {
    for (std::size_t c = 0; c < n; ++c) {
      double sum = 0.0;
      std::size_t defined = 0;
      for (const RecallMatrix& m : per_scene) {
        const auto v = m.cell(out.devices[q], out.devices[c]);
        out.counts[q][c] += m.counts[*m.device_index(out.devices[q])][*m.device_index(out.devices[c])];
        if (v) {
          sum += *v;
          ++defined;
        }
      }
      if (defined > 0) out.cells[q][c] = sum / static_cast<double>(defined);
    }
  }
  return out;
}

std::optional<double> overall_score(std::span<const RecallMatrix> per_scene) {
  const RecallMatrix m = combine_matrices(per_scene);
  double sum = 0.0;
  std::size_t defined = 0;
  for (const auto& row : m.cells) {
    for (const auto& c : row) {
      if (c) {
        sum += *c;
        ++defined;
      }
    }
  }
  if (defined == 0) return std::nullopt;
  return 100.0 * sum / static_cast<double>(defined);
}

std::string format_matrix(const RecallMatrix& m, const std::string& title) {
  std::size_t w = 8;
  for (const std::string& d : m.devices) w = std::max(w, d.size() + 2);
  auto pad = [w](const std::string& s) { return s + std::string(w > s.size() ? w - s.size() : 1, ' '); };
  std::ostringstream os;
  os << title << "\n" << pad("query\\map");
  for (const std::string& d : m.devices) os << pad(d);
  os << "\n";
  for (std::size_t q = 0; q < m.devices.size(); ++q) {
    os << pad(m.devices[q]);
    for (std::size_t c = 0; c < m.devices.size(); ++c) {
      if (m.cells[q][c]) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.2f%%", 100.0 * *m.cells[q][c]);
        os << pad(buf);
      } else {
        os << pad("-");
      }
    }
    os << "\n";
  }
  return os.str();
}

std::string matrix_to_json(const RecallMatrix& m) {
  json cells = json::array();
  for (const auto& row : m.cells) {
    json r = json::array();
    for (const auto& c : row) r.push_back(c ? json(*c) : json(nullptr));
    cells.push_back(r);
  }
  return json{{"devices", m.devices}, {"cells", cells}, {"counts", m.counts}}.dump();
}

void save_ground_truth(const std::map<std::string, Pose>& poses, const std::filesystem::path& path) {
  json p = json::object();
  for (const auto& [id, pose] : poses) p[id] = io::to_json(pose);
  io::write_json(path, json{{"format_version", 1}, {"pose_convention", "camera_from_world"}, {"poses", p}});
}

std::map<std::string, Pose> load_ground_truth(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorCategory::kNotFound, "missing ground truth " + path.string());
  const json j = io::read_json(path, ErrorCategory::kSchema);
  if (io::get_field<int>(j, "format_version", ErrorCategory::kSchema) != 1) {
    fail(ErrorCategory::kVersionMismatch, "unsupported ground-truth format_version");
  }
  if (io::get_field<std::string>(j, "pose_convention", ErrorCategory::kSchema) != "camera_from_world") {
    fail(ErrorCategory::kSchema, "ground truth must use the camera_from_world convention");
  }
  if (!j.at("poses").is_object()) fail(ErrorCategory::kSchema, "ground-truth poses must be an object");
  std::map<std::string, Pose> out;
  for (const auto& [id, pose] : j.at("poses").items()) out.emplace(id, io::pose_from_json(pose));
  return out;
}

std::map<std::string, std::vector<EvalRecord>> records_by_scene(std::span<const ReportEntry> entries,
                                                                const std::map<std::string, Pose>& gt) {
  std::map<std::string, std::vector<EvalRecord>> out;
  for (const ReportEntry& e : entries) {
    const auto it = gt.find(e.query_id);
    if (it == gt.end()) fail(ErrorCategory::kNotFound, "no ground truth for query '" + e.query_id + "'");
    out[e.scene].push_back(EvalRecord{e.query_id, e.query_device, e.map_device, e.final_pose, it->second});
  }
  return out;
}

}  // namespace xloc
