#include "xloc/config.hpp"

#include <algorithm>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <type_traits>

#include "io_util.hpp"

namespace xloc {

using io::json;

namespace {

constexpr auto kSchema = ErrorCategory::kSchema;

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) fail(kSchema, "config section '" + where + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; });
    if (!known) fail(kSchema, "unknown config key '" + (where.empty() ? key : where + "." + key) + "'");
  }
}

std::string path_of(const std::string& where, const char* key) { return where.empty() ? key : where + "." + key; }

void read(const json& j, const char* key, double& out, const std::string& where) {
  if (!j.contains(key)) return;
  if (!j.at(key).is_number()) fail(kSchema, "config key '" + path_of(where, key) + "' must be a number");
  out = j.at(key).get<double>();
}

void read(const json& j, const char* key, bool& out, const std::string& where) {
  if (!j.contains(key)) return;
  if (!j.at(key).is_boolean()) fail(kSchema, "config key '" + path_of(where, key) + "' must be a boolean");
  out = j.at(key).get<bool>();
}

void read(const json& j, const char* key, std::string& out, const std::string& where) {
  if (!j.contains(key)) return;
  if (!j.at(key).is_string()) fail(kSchema, "config key '" + path_of(where, key) + "' must be a string");
  out = j.at(key).get<std::string>();
}

void read(const json& j, const char* key, int& out, const std::string& where) {
  if (!j.contains(key)) return;
  if (!j.at(key).is_number_integer()) fail(kSchema, "config key '" + path_of(where, key) + "' must be an integer");
  out = j.at(key).get<int>();
}

static_assert(std::is_same_v<std::uint64_t, std::size_t>, "seeds are read as std::size_t");

void read(const json& j, const char* key, std::size_t& out, const std::string& where) {
  if (!j.contains(key)) return;
  if (!j.at(key).is_number_unsigned()) {
    fail(kSchema, "config key '" + path_of(where, key) + "' must be a non-negative integer");
  }
  out = j.at(key).get<std::size_t>();
}

json scene_json(const SceneConfig& c, bool with_seed) {
  json devices = json::array();
  for (const SimDevice& d : c.devices) {
    devices.push_back(json{{"tag", d.tag},
                           {"intrinsics", io::to_json(d.intrinsics)},
                           {"has_depth", d.has_depth},
                           {"height_m", d.height_m},
                           {"gap_offset", d.gap_offset},
                           {"gap_scale", d.gap_scale}});
  }
  json j{{"name", c.name},
              {"num_points", c.num_points},
              {"extent", {c.extent.x(), c.extent.y(), c.extent.z()}},
              {"devices", devices},
              {"frames_per_device", c.frames_per_device},
              {"queries_per_device", c.queries_per_device},
              {"trajectory", to_string(c.trajectory)},
              {"descriptor_dim", c.descriptor_dim},
              {"max_keypoints", c.max_keypoints},
              {"keypoint_noise_px", c.keypoint_noise_px},
              {"descriptor_noise", c.descriptor_noise},
              {"outlier_rate", c.outlier_rate},
              {"global_noise", c.global_noise},
              {"depth_noise_m", c.depth_noise_m},
              {"depth_salt_rate", c.depth_salt_rate},
              {"query_jitter_m", c.query_jitter_m},
              {"query_jitter_deg", c.query_jitter_deg},
              {"min_range_m", c.min_range_m},
              {"max_range_m", c.max_range_m},
              {"min_visible_points", c.min_visible_points}};
  if (with_seed) j["seed"] = c.seed;
  return j;
}

void parse_scene(const json& j, SceneConfig& c, bool with_seed) {
  const std::string w = "scene";
  check_keys(j,
             {"name", "num_points", "extent", "devices", "frames_per_device", "queries_per_device", "trajectory",
              "descriptor_dim", "max_keypoints", "keypoint_noise_px", "descriptor_noise", "outlier_rate",
              "global_noise", "depth_noise_m", "depth_salt_rate", "query_jitter_m", "query_jitter_deg",
              "min_range_m", "max_range_m", "min_visible_points", "seed"},
             w);
  if (!with_seed && j.contains("seed")) fail(kSchema, "unknown config key 'scene.seed'; the run seed drives simulation");
  read(j, "name", c.name, w);
  read(j, "num_points", c.num_points, w);
  if (j.contains("extent")) {
    const json& e = j.at("extent");
    if (!e.is_array() || e.size() != 3 || !std::all_of(e.begin(), e.end(), [](const json& v) { return v.is_number(); })) {
      fail(kSchema, "config key 'scene.extent' must be an array of three numbers");
    }
    c.extent = Vec3(e[0].get<double>(), e[1].get<double>(), e[2].get<double>());
  }
  if (j.contains("devices")) {
    if (!j.at("devices").is_array()) fail(kSchema, "config key 'scene.devices' must be an array");
    c.devices.clear();
    for (const json& d : j.at("devices")) {
      const std::string dw = "scene.devices[]";
      check_keys(d, {"tag", "intrinsics", "has_depth", "height_m", "gap_offset", "gap_scale"}, dw);
      SimDevice dev;
      read(d, "tag", dev.tag, dw);
      if (!d.contains("intrinsics")) fail(kSchema, "config key 'scene.devices[].intrinsics' is required");
      dev.intrinsics = io::intrinsics_from_json(d.at("intrinsics"));
      read(d, "has_depth", dev.has_depth, dw);
      read(d, "height_m", dev.height_m, dw);
      read(d, "gap_offset", dev.gap_offset, dw);
      read(d, "gap_scale", dev.gap_scale, dw);
      c.devices.push_back(std::move(dev));
    }
  }
  read(j, "frames_per_device", c.frames_per_device, w);
  read(j, "queries_per_device", c.queries_per_device, w);
  if (j.contains("trajectory")) {
    std::string t;
    read(j, "trajectory", t, w);
    c.trajectory = trajectory_from_string(t);
  }
  read(j, "descriptor_dim", c.descriptor_dim, w);
  read(j, "max_keypoints", c.max_keypoints, w);
  read(j, "keypoint_noise_px", c.keypoint_noise_px, w);
  read(j, "descriptor_noise", c.descriptor_noise, w);
  read(j, "outlier_rate", c.outlier_rate, w);
  read(j, "global_noise", c.global_noise, w);
  read(j, "depth_noise_m", c.depth_noise_m, w);
  read(j, "depth_salt_rate", c.depth_salt_rate, w);
  read(j, "query_jitter_m", c.query_jitter_m, w);
  read(j, "query_jitter_deg", c.query_jitter_deg, w);
  read(j, "min_range_m", c.min_range_m, w);
  read(j, "max_range_m", c.max_range_m, w);
  read(j, "min_visible_points", c.min_visible_points, w);
  if (with_seed) read(j, "seed", c.seed, w);
}

std::string_view kind_name(MatcherKind k) { return k == MatcherKind::kMutualNN ? "mnn" : "import"; }

json pipeline_json(const PipelineConfig& p) {
  json sources = json::array();
  for (const MatcherSource& s : p.sources) {
    sources.push_back(json{{"tag", s.tag}, {"kind", kind_name(s.kind)}, {"ratio", s.ratio}});
  }
  return json{{"top_k", p.top_k},
              {"prune_radius", p.prune_radius},
              {"inlier_gate", p.inlier_gate},
              {"dedup_radius", p.dedup_radius},
              {"pre_neural_filter", p.pre_neural_filter},
              {"pre_filter_radius", p.pre_filter_radius},
              {"sources", sources},
              {"ransac", json{{"reproj_threshold", p.ransac.reproj_threshold},
                              {"confidence", p.ransac.confidence},
                              {"max_iterations", p.ransac.max_iterations},
                              {"min_inliers_success", p.ransac.min_inliers_success}}},
              {"depth_filter", json{{"min_depth", p.depth_filter.min_depth},
                                    {"max_depth", p.depth_filter.max_depth},
                                    {"mad_k", p.depth_filter.mad_k}}}};
}

void parse_pipeline(const json& j, PipelineConfig& p) {
  const std::string w = "pipeline";
  check_keys(j,
             {"top_k", "prune_radius", "inlier_gate", "dedup_radius", "pre_neural_filter", "pre_filter_radius",
              "sources", "ransac", "depth_filter"},
             w);
  read(j, "top_k", p.top_k, w);
  read(j, "prune_radius", p.prune_radius, w);
  read(j, "inlier_gate", p.inlier_gate, w);
  read(j, "dedup_radius", p.dedup_radius, w);
  read(j, "pre_neural_filter", p.pre_neural_filter, w);
  read(j, "pre_filter_radius", p.pre_filter_radius, w);
  if (j.contains("sources")) {
    if (!j.at("sources").is_array()) fail(kSchema, "config key 'pipeline.sources' must be an array");
    p.sources.clear();
    for (const json& s : j.at("sources")) {
      const std::string sw = "pipeline.sources[]";
      check_keys(s, {"tag", "kind", "ratio"}, sw);
      MatcherSource src;
      read(s, "tag", src.tag, sw);
      std::string kind = "mnn";
      read(s, "kind", kind, sw);
      if (kind == "mnn") {
        src.kind = MatcherKind::kMutualNN;
      } else if (kind == "import") {
        src.kind = MatcherKind::kImported;
      } else {
        fail(kSchema, "config key 'pipeline.sources[].kind' must be 'mnn' or 'import'");
      }
      read(s, "ratio", src.ratio, sw);
      p.sources.push_back(std::move(src));
    }
  }
  if (j.contains("ransac")) {
    const json& r = j.at("ransac");
    const std::string rw = "pipeline.ransac";
    check_keys(r, {"reproj_threshold", "confidence", "max_iterations", "min_inliers_success"}, rw);
    read(r, "reproj_threshold", p.ransac.reproj_threshold, rw);
    read(r, "confidence", p.ransac.confidence, rw);
    read(r, "max_iterations", p.ransac.max_iterations, rw);
    read(r, "min_inliers_success", p.ransac.min_inliers_success, rw);
  }
  if (j.contains("depth_filter")) {
    const json& d = j.at("depth_filter");
    const std::string dw = "pipeline.depth_filter";
    check_keys(d, {"min_depth", "max_depth", "mad_k"}, dw);
    read(d, "min_depth", p.depth_filter.min_depth, dw);
    read(d, "max_depth", p.depth_filter.max_depth, dw);
    read(d, "mad_k", p.depth_filter.mad_k, dw);
  }
}

json run_json(const RunConfig& c) {
  return json{{"seed", c.seed},
              {"workers", c.workers},
              {"scene", scene_json(c.scene, false)},
              {"mapping", json{{"pairs_per_frame", c.mapping.pairs_per_frame},
                               {"ratio", c.mapping.ratio},
                               {"dedup_radius", c.mapping.dedup_radius},
                               {"max_reprojection_error_px", c.mapping.build.max_reprojection_error_px},
                               {"min_triangulation_angle_deg", c.mapping.build.min_triangulation_angle_deg}}},
              {"pipeline", pipeline_json(c.pipeline)},
              {"oracle", json{{"rot_sigma_deg", c.oracle.rot_sigma_deg},
                              {"trans_sigma_m", c.oracle.trans_sigma_m},
                              {"alpha_per_m", c.oracle.alpha_per_m},
                              {"fail_beyond_m", c.oracle.fail_beyond_m},
                              {"depth_rot_gain", c.oracle.depth_rot_gain}}},
              {"eval", json{{"trans_threshold_m", c.eval.trans_m}, {"rot_threshold_deg", c.eval.rot_deg}}}};
}

json parse_text(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    fail(kSchema, std::string("malformed config: ") + e.what());
  }
}

}  // namespace

void RunConfig::validate() const {
  scene.validate();
  pipeline.validate();
  if (workers < 1) fail(ErrorCategory::kInvalidArgument, "workers must be >= 1");
  if (mapping.pairs_per_frame < 1) fail(ErrorCategory::kInvalidArgument, "mapping.pairs_per_frame must be >= 1");
  if (!(mapping.ratio > 0.0 && mapping.ratio <= 1.0)) fail(ErrorCategory::kInvalidArgument, "mapping.ratio must lie in (0, 1]");
  if (!(oracle.rot_sigma_deg >= 0.0 && oracle.trans_sigma_m >= 0.0 && oracle.alpha_per_m >= 0.0 &&
        oracle.depth_rot_gain >= 0.0 && oracle.fail_beyond_m > 0.0)) {
    fail(ErrorCategory::kInvalidArgument, "oracle noise parameters must be non-negative");
  }
  if (!(eval.trans_m >= 0.0 && eval.rot_deg >= 0.0)) fail(ErrorCategory::kInvalidArgument, "eval thresholds must be >= 0");
}

RunConfig run_config_from_json(const std::string& text, RunConfig c) {
  const json j = parse_text(text);
  check_keys(j, {"seed", "workers", "scene", "mapping", "pipeline", "oracle", "eval"}, "");
  read(j, "seed", c.seed, "");
  read(j, "workers", c.workers, "");
  if (j.contains("scene")) parse_scene(j.at("scene"), c.scene, false);
  if (j.contains("mapping")) {
    const json& m = j.at("mapping");
    const std::string w = "mapping";
    check_keys(m, {"pairs_per_frame", "ratio", "dedup_radius", "max_reprojection_error_px", "min_triangulation_angle_deg"}, w);
    read(m, "pairs_per_frame", c.mapping.pairs_per_frame, w);
    read(m, "ratio", c.mapping.ratio, w);
    read(m, "dedup_radius", c.mapping.dedup_radius, w);
    read(m, "max_reprojection_error_px", c.mapping.build.max_reprojection_error_px, w);
    read(m, "min_triangulation_angle_deg", c.mapping.build.min_triangulation_angle_deg, w);
  }
  if (j.contains("pipeline")) parse_pipeline(j.at("pipeline"), c.pipeline);
  if (j.contains("oracle")) {
    const json& o = j.at("oracle");
    const std::string w = "oracle";
    check_keys(o, {"rot_sigma_deg", "trans_sigma_m", "alpha_per_m", "fail_beyond_m", "depth_rot_gain"}, w);
    read(o, "rot_sigma_deg", c.oracle.rot_sigma_deg, w);
    read(o, "trans_sigma_m", c.oracle.trans_sigma_m, w);
    read(o, "alpha_per_m", c.oracle.alpha_per_m, w);
    read(o, "fail_beyond_m", c.oracle.fail_beyond_m, w);
    read(o, "depth_rot_gain", c.oracle.depth_rot_gain, w);
  }
  if (j.contains("eval")) {
    const json& e = j.at("eval");
    check_keys(e, {"trans_threshold_m", "rot_threshold_deg"}, "eval");
    read(e, "trans_threshold_m", c.eval.trans_m, "eval");
    read(e, "rot_threshold_deg", c.eval.rot_deg, "eval");
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCategory::kNotFound, "cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return run_config_from_json(ss.str(), std::move(base));
}

std::string run_config_to_json(const RunConfig& cfg) { return run_json(cfg).dump(2) + "\n"; }

std::string scene_config_to_json(const SceneConfig& cfg) { return scene_json(cfg, true).dump(2) + "\n"; }

SceneConfig scene_config_from_json(const std::string& text, SceneConfig base) {
  parse_scene(parse_text(text), base, true);
  return base;
}

void write_effective_config(const RunConfig& cfg, const std::filesystem::path& dir) {
  write_text_file(dir / "effective_config.json", run_config_to_json(cfg));
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCategory::kIo, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorCategory::kIo, "short write to " + path.string());
}

}  // namespace xloc
