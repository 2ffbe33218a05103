#include "cli.hpp"

#include <filesystem>
#include <functional>
#include <memory>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "xloc/adapter.hpp"
#include "xloc/config.hpp"
#include "xloc/eval.hpp"
#include "xloc/interchange.hpp"
#include "xloc/map_store.hpp"
#include "xloc/mapping.hpp"
#include "xloc/pipeline.hpp"
#include "xloc/report.hpp"
#include "xloc/retrieval.hpp"
#include "xloc/scene_sim.hpp"

namespace xloc::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Registers flags that override one RunConfig field each; the help text
// names the config key.
class Overrides {
 public:
  template <typename T>
  CLI::Option* bind(CLI::App* app, const std::string& flag, const std::string& key, const std::string& desc,
                    std::function<T&(RunConfig&)> field) {
    auto value = std::make_shared<T>();
    CLI::Option* opt = app->add_option(flag, *value, desc + " [config: " + key + "]");
    items_.emplace_back(opt, [value, field](RunConfig& c) { field(c) = *value; });
    return opt;
  }

  CLI::Option* flag(CLI::App* app, const std::string& flag, const std::string& key, const std::string& desc,
                    std::function<bool&(RunConfig&)> field) {
    auto value = std::make_shared<bool>(false);
    CLI::Option* opt = app->add_flag(flag, *value, desc + " [config: " + key + "]");
    items_.emplace_back(opt, [value, field](RunConfig& c) { field(c) = *value; });
    return opt;
  }

  void common(CLI::App* app) {
    app->add_option("--config", config_path_, "JSON run configuration; flags override it")->check(CLI::ExistingFile);
    bind<std::uint64_t>(app, "--seed", "seed", "Run seed", [](RunConfig& c) -> std::uint64_t& { return c.seed; });
    bind<std::size_t>(app, "--workers", "workers", "Query worker threads",
                      [](RunConfig& c) -> std::size_t& { return c.workers; });
  }

  // Defaults < config file < flags.
  RunConfig resolve(RunConfig cfg = {}) const {
    if (!config_path_.empty()) cfg = load_run_config(config_path_, std::move(cfg));
    for (const auto& [opt, apply] : items_) {
      if (opt->count() > 0) apply(cfg);
    }
    cfg.validate();
    return cfg;
  }

 private:
  std::string config_path_;
  std::vector<std::pair<CLI::Option*, std::function<void(RunConfig&)>>> items_;
};

void require_dir(const fs::path& p, const std::string& what) {
  if (!fs::is_directory(p)) fail(ErrorCategory::kNotFound, what + " " + p.string() + " does not exist");
}

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::is_regular_file(p)) fail(ErrorCategory::kNotFound, what + " " + p.string() + " does not exist");
}

std::vector<std::string> split_command(const std::string& cmd) {
  std::istringstream is(cmd);
  std::vector<std::string> out;
  for (std::string tok; is >> tok;) out.push_back(tok);
  return out;
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string out;
  std::string preset = "default";
};

int cmd_simulate(const SimulateArgs& a, const Overrides& ov, std::ostream& out) {
  RunConfig base;
  if (a.preset == "cross") base.scene = cross_device_scene_config();
  RunConfig cfg = ov.resolve(std::move(base));
  cfg.scene.seed = cfg.seed;
  const SyntheticScene scene = generate_scene(cfg.scene);
  const fs::path dir(a.out);
  export_scene(scene, dir);
  write_effective_config(cfg, dir);
  out << "simulated scene '" << cfg.scene.name << "': " << scene.points.size() << " points\n";
  for (const SyntheticDevice& d : scene.devices) {
    out << "  " << d.tag << ": " << d.map_frames.size() << " map frames, " << d.queries.size() << " queries\n";
  }
  return kExitOk;
}

struct BuildMapArgs {
  std::string frames;
  std::string out;
  std::string matches;
};

int cmd_build_map(const BuildMapArgs& a, const Overrides& ov, std::ostream& out) {
  const RunConfig cfg = ov.resolve();
  require_dir(a.frames, "frame store");
  MapDatabase src = load_map(a.frames);
  std::vector<MapFrame> frames = src.frames();
  std::vector<PairMatches> pairs;
  if (!a.matches.empty()) {
    require_dir(a.matches, "match directory");
    pairs = pair_matches_from_records(frames, load_match_file(a.matches), cfg.mapping.dedup_radius);
  } else {
    pairs = match_map_pairs(frames, cfg.mapping);
  }
  const MapDatabase db = build_map(std::move(frames), pairs, cfg.mapping.build);
  save_map(db, a.out);
  write_effective_config(cfg, a.out);
  out << "map: " << db.num_frames() << " frames, " << pairs.size() << " matched pairs, " << db.landmarks().size()
      << " landmarks\n";
  return kExitOk;
}

struct IndexArgs {
  std::string map;
  std::string out;
};

int cmd_index(const IndexArgs& a, std::ostream& out) {
  require_dir(a.map, "map");
  const MapDatabase db = load_map(a.map);
  const RetrievalIndex index = index_build(db.frames());
  const fs::path dir = a.out.empty() ? fs::path(a.map) : fs::path(a.out);
  save_index(index, dir);
  out << "index: " << index.size() << " frames, dim " << index.dim() << "\n";
  return kExitOk;
}

struct LocalizeArgs {
  std::string map;
  std::string queries;
  std::string index;
  std::string out;
  std::string neural = "oracle";
  std::string gt;
  std::string adapter_cmd;
  std::string query_matches;
};

int cmd_localize(const LocalizeArgs& a, const Overrides& ov, std::ostream& out) {
  const RunConfig cfg = ov.resolve();
  require_dir(a.map, "map");
  require_dir(a.queries, "query store");
  const fs::path index_dir = a.index.empty() ? fs::path(a.map) : fs::path(a.index);
  require_file(index_dir / "retrieval.json", "retrieval index");

  MapDatabase db = load_map(a.map);
  db.set_source_dir(fs::absolute(a.map));
  const RetrievalIndex index = load_index(index_dir);
  const std::vector<QueryFrame> queries = load_queries(a.queries);

  std::unique_ptr<NeuralLocalizer> neural;
  if (a.neural == "oracle") {
    if (a.gt.empty()) fail(ErrorCategory::kInvalidArgument, "--neural oracle needs --gt");
    require_file(a.gt, "ground truth");
    neural = std::make_unique<OracleLocalizer>(load_ground_truth(a.gt), cfg.oracle);
  } else if (a.neural == "adapter") {
    if (a.adapter_cmd.empty()) fail(ErrorCategory::kInvalidArgument, "--neural adapter needs --adapter-cmd");
    neural = std::make_unique<AdapterLocalizer>(split_command(a.adapter_cmd));
  }

  ImportedMatches imported;
  const bool wants_import = std::any_of(cfg.pipeline.sources.begin(), cfg.pipeline.sources.end(),
                                        [](const MatcherSource& s) { return s.kind == MatcherKind::kImported; });
  if (!a.query_matches.empty()) {
    require_dir(a.query_matches, "query match directory");
    imported = group_match_records(load_match_file(a.query_matches));
  } else if (wants_import) {
    fail(ErrorCategory::kInvalidArgument, "an imported matcher source needs --query-matches");
  }

  LocalizationInputs in;
  in.db = &db;
  in.index = &index;
  in.neural = neural.get();
  in.imported = &imported;
  in.query_dir = fs::absolute(a.queries);
  const auto results = localize_batch(queries, in, cfg.pipeline, cfg.seed, cfg.workers);

  const fs::path report(a.out);
  write_report(report, results, queries, ReportContext{cfg.scene.name, db.dominant_device()});
  write_effective_config(cfg, report.has_parent_path() ? report.parent_path() : fs::path("."));
  std::size_t localized = 0;
  for (const HybridResult& r : results) localized += r.final_pose ? 1 : 0;
  out << "localized " << localized << " / " << results.size() << " queries against map '" << db.dominant_device()
      << "'\n";
  return kExitOk;
}

struct EvaluateArgs {
  std::vector<std::string> reports;
  std::string gt;
  std::string out;
};

int cmd_evaluate(const EvaluateArgs& a, const Overrides& ov, std::ostream& out) {
  const RunConfig cfg = ov.resolve();
  require_file(a.gt, "ground truth");
  std::vector<ReportEntry> entries;
  for (const std::string& r : a.reports) {
    require_file(r, "report");
    auto e = read_report(r);
    entries.insert(entries.end(), e.begin(), e.end());
  }
  const auto by_scene = records_by_scene(entries, load_ground_truth(a.gt));

  json doc{{"scenes", json::object()}};
  std::vector<RecallMatrix> matrices;
  for (const auto& [scene, records] : by_scene) {
    const RecallMatrix m = device_pair_matrix(records, cfg.eval.trans_m, cfg.eval.rot_deg);
    out << format_matrix(m, "scene " + scene) << "\n";
    doc["scenes"][scene] = json::parse(matrix_to_json(m));
    matrices.push_back(m);
  }
  if (!matrices.empty()) {
    const RecallMatrix combined = combine_matrices(matrices);
    const auto score = overall_score(matrices);
    if (matrices.size() > 1) out << format_matrix(combined, "overall") << "\n";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f", score.value_or(0.0));
    out << "overall score (R@" << cfg.eval.trans_m << "m, " << cfg.eval.rot_deg << "deg): "
        << (score ? std::string(buf) : std::string("undefined")) << "\n";
    doc["overall"] = json::parse(matrix_to_json(combined));
    doc["overall_score"] = score ? json(*score) : json(nullptr);
  }
  if (!a.out.empty()) {
    write_text_file(fs::path(a.out) / "evaluation.json", doc.dump(2) + "\n");
    write_effective_config(cfg, a.out);
  }
  return kExitOk;
}

void report_error(std::ostream& err, std::string_view category, const std::string& message) {
  err << json{{"error", {{"category", category}, {"message", message}}}}.dump() << "\n";
}

}  // namespace

int exit_code(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::kInvalidArgument: return kExitUsage;
    case ErrorCategory::kNotFound: return kExitMissingInput;
    case ErrorCategory::kSchema: return kExitSchema;
    case ErrorCategory::kVersionMismatch: return kExitVersion;
    case ErrorCategory::kCorruptStore:
    case ErrorCategory::kTruncatedArray: return kExitCorrupt;
    case ErrorCategory::kTransport: return kExitTransport;
    default: return kExitOther;
  }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"xloc: cross-device visual localization"};
  app.name(args.empty() ? "xloc" : fs::path(args.front()).filename().string());
  app.require_subcommand(1);

  Overrides sim_ov, build_ov, loc_ov, eval_ov;

  SimulateArgs sim;
  CLI::App* s = app.add_subcommand("simulate", "Generate a synthetic multi-device scene");
  s->add_option("--out", sim.out, "Output directory")->required();
  s->add_option("--preset", sim.preset, "Scene preset; the config file and flags refine it")
      ->check(CLI::IsMember({"default", "cross"}));
  sim_ov.common(s);
  sim_ov.bind<std::string>(s, "--scene-name", "scene.name", "Scene name",
                           [](RunConfig& c) -> std::string& { return c.scene.name; });
  sim_ov.bind<std::size_t>(s, "--num-points", "scene.num_points", "World points",
                           [](RunConfig& c) -> std::size_t& { return c.scene.num_points; });
  sim_ov.bind<std::size_t>(s, "--frames-per-device", "scene.frames_per_device", "Map frames per device",
                           [](RunConfig& c) -> std::size_t& { return c.scene.frames_per_device; });
  sim_ov.bind<std::size_t>(s, "--queries-per-device", "scene.queries_per_device", "Queries per device",
                           [](RunConfig& c) -> std::size_t& { return c.scene.queries_per_device; });
  sim_ov.bind<double>(s, "--outlier-rate", "scene.outlier_rate", "Outlier keypoints per inlier keypoint",
                      [](RunConfig& c) -> double& { return c.scene.outlier_rate; });
  sim_ov.bind<double>(s, "--keypoint-noise", "scene.keypoint_noise_px", "Keypoint noise sigma (px)",
                      [](RunConfig& c) -> double& { return c.scene.keypoint_noise_px; });

  BuildMapArgs bm;
  CLI::App* b = app.add_subcommand("build-map", "Match and triangulate a frame store into a map");
  b->add_option("--frames", bm.frames, "Map store with posed frames")->required();
  b->add_option("--out", bm.out, "Output map directory")->required();
  b->add_option("--matches", bm.matches, "Interchange match directory between map frames (default: mutual NN)");
  build_ov.common(b);
  build_ov.bind<std::size_t>(b, "--pairs-per-frame", "mapping.pairs_per_frame", "Retrieval neighbours matched per frame",
                             [](RunConfig& c) -> std::size_t& { return c.mapping.pairs_per_frame; });
  build_ov.bind<double>(b, "--ratio", "mapping.ratio", "Ratio-test threshold",
                        [](RunConfig& c) -> double& { return c.mapping.ratio; });
  build_ov.bind<double>(b, "--max-reproj", "mapping.max_reprojection_error_px", "Landmark reprojection gate (px)",
                        [](RunConfig& c) -> double& { return c.mapping.build.max_reprojection_error_px; });

  IndexArgs ix;
  CLI::App* x = app.add_subcommand("index", "Build the retrieval index of a map");
  x->add_option("--map", ix.map, "Map directory")->required();
  x->add_option("--out", ix.out, "Index directory (default: the map directory)");

  LocalizeArgs lz;
  CLI::App* l = app.add_subcommand("localize", "Localize queries against a map and write report.jsonl");
  l->add_option("--map", lz.map, "Map directory")->required();
  l->add_option("--queries", lz.queries, "Query store")->required();
  l->add_option("--index", lz.index, "Index directory (default: the map directory)");
  l->add_option("--out", lz.out, "Report path (JSON lines)")->required();
  l->add_option("--neural", lz.neural, "Neural localizer: oracle, adapter or none")
      ->check(CLI::IsMember({"oracle", "adapter", "none"}));
  l->add_option("--gt", lz.gt, "Ground-truth poses for the oracle");
  l->add_option("--adapter-cmd", lz.adapter_cmd, "Adapter command line (split on whitespace)");
  l->add_option("--query-matches", lz.query_matches, "Interchange match directory between queries and map frames");
  loc_ov.common(l);
  loc_ov.bind<std::string>(l, "--scene", "scene.name", "Scene name recorded in the report",
                           [](RunConfig& c) -> std::string& { return c.scene.name; });
  loc_ov.bind<std::size_t>(l, "--top-k", "pipeline.top_k", "Retrieved candidates",
                           [](RunConfig& c) -> std::size_t& { return c.pipeline.top_k; });
  loc_ov.bind<double>(l, "--prune-radius", "pipeline.prune_radius", "Pruning radius (m, inclusive)",
                      [](RunConfig& c) -> double& { return c.pipeline.prune_radius; });
  loc_ov.bind<int>(l, "--inlier-gate", "pipeline.inlier_gate", "PnP wins with strictly more inliers",
                   [](RunConfig& c) -> int& { return c.pipeline.inlier_gate; });
  loc_ov.bind<double>(l, "--dedup-radius", "pipeline.dedup_radius", "Fusion dedup radius (px)",
                      [](RunConfig& c) -> double& { return c.pipeline.dedup_radius; });
  loc_ov.bind<double>(l, "--ransac-threshold", "pipeline.ransac.reproj_threshold", "RANSAC inlier threshold (px)",
                      [](RunConfig& c) -> double& { return c.pipeline.ransac.reproj_threshold; });
  loc_ov.flag(l, "--pre-neural-filter", "pipeline.pre_neural_filter", "Prune around the PnP pose before the neural pass",
              [](RunConfig& c) -> bool& { return c.pipeline.pre_neural_filter; });
  loc_ov.bind<double>(l, "--pre-filter-radius", "pipeline.pre_filter_radius", "Pre-neural filter radius (m)",
                      [](RunConfig& c) -> double& { return c.pipeline.pre_filter_radius; });
  loc_ov.bind<double>(l, "--oracle-rot-sigma", "oracle.rot_sigma_deg", "Oracle rotation noise (deg)",
                      [](RunConfig& c) -> double& { return c.oracle.rot_sigma_deg; });
  loc_ov.bind<double>(l, "--oracle-trans-sigma", "oracle.trans_sigma_m", "Oracle center noise per axis (m)",
                      [](RunConfig& c) -> double& { return c.oracle.trans_sigma_m; });
  loc_ov.bind<double>(l, "--oracle-alpha", "oracle.alpha_per_m", "Oracle noise growth per meter of candidate distance",
                      [](RunConfig& c) -> double& { return c.oracle.alpha_per_m; });

  EvaluateArgs ev;
  CLI::App* e = app.add_subcommand("evaluate", "Score reports against ground truth");
  e->add_option("--report", ev.reports, "Report file (repeatable)")->required();
  e->add_option("--gt", ev.gt, "Ground-truth poses")->required();
  e->add_option("--out", ev.out, "Directory for evaluation.json");
  eval_ov.common(e);
  eval_ov.bind<double>(e, "--t-thresh", "eval.trans_threshold_m", "Translation threshold (m, inclusive)",
                       [](RunConfig& c) -> double& { return c.eval.trans_m; });
  eval_ov.bind<double>(e, "--r-thresh", "eval.rot_threshold_deg", "Rotation threshold (deg, inclusive)",
                       [](RunConfig& c) -> double& { return c.eval.rot_deg; });

  std::vector<const char*> argv;
  for (const std::string& s : args) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex, out, err);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex, out, err);
  } catch (const CLI::ParseError& ex) {
    report_error(err, "usage", ex.what());
    return kExitUsage;
  }

  try {
    if (*s) return cmd_simulate(sim, sim_ov, out);
    if (*b) return cmd_build_map(bm, build_ov, out);
    if (*x) return cmd_index(ix, out);
    if (*l) return cmd_localize(lz, loc_ov, out);
    if (*e) return cmd_evaluate(ev, eval_ov, out);
  } catch (const Error& ex) {
    report_error(err, to_string(ex.category()), ex.what());
    return exit_code(ex.category());
  } catch (const std::exception& ex) {
    report_error(err, "internal", ex.what());
    return kExitOther;
  }
  return kExitUsage;
}

}  // namespace xloc::cli
