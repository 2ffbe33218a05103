#include <sstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "cli.hpp"
#include "test_support.hpp"
#include "xloc/config.hpp"
#include "xloc/eval.hpp"
#include "xloc/map_store.hpp"
#include "xloc/neural.hpp"
#include "xloc/report.hpp"
#include "xloc/retrieval.hpp"

namespace xloc {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

CliResult xloc_run(std::vector<std::string> args) {
  args.insert(args.begin(), "xloc");
  std::ostringstream out;
  std::ostringstream err;
  CliResult r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new testing::TempDir("cli");
    const std::string root = dir_->path().string();
    ASSERT_EQ(xloc_run({"simulate", "--out", root + "/scene", "--seed", "21", "--frames-per-device", "14",
                        "--queries-per-device", "6", "--scene-name", "tiny"})
                  .code,
              0);
    ASSERT_EQ(xloc_run({"build-map", "--frames", root + "/scene/maps/ios", "--out", root + "/map"}).code, 0);
    ASSERT_EQ(xloc_run({"index", "--map", root + "/map"}).code, 0);
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }

  static fs::path root() { return dir_->path(); }
  static std::string p(const std::string& rel) { return (dir_->path() / rel).string(); }

  static CliResult localize(const std::string& out, std::vector<std::string> extra = {}) {
    std::vector<std::string> args{"localize", "--map", p("map"), "--queries", p("scene/queries"), "--out", out,
                                  "--gt", p("scene/gt_poses.json"), "--scene", "tiny"};
    args.insert(args.end(), extra.begin(), extra.end());
    return xloc_run(args);
  }

  static testing::TempDir* dir_;
};

testing::TempDir* CliTest::dir_ = nullptr;

TEST_F(CliTest, EndToEnd) {
  const CliResult loc = localize(p("run/report.jsonl"));
  ASSERT_EQ(loc.code, 0) << loc.err;
  EXPECT_NE(loc.out.find("localized 6 / 6"), std::string::npos) << loc.out;
  EXPECT_TRUE(fs::exists(root() / "run" / "effective_config.json"));
  const CliResult ev = xloc_run({"evaluate", "--report", p("run/report.jsonl"), "--gt", p("scene/gt_poses.json"),
                           "--out", p("eval")});
  ASSERT_EQ(ev.code, 0) << ev.err;
  EXPECT_NE(ev.out.find("scene tiny"), std::string::npos);
  EXPECT_NE(ev.out.find("overall score"), std::string::npos);
  const json doc = json::parse(testing::read_file(root() / "eval" / "evaluation.json"));
  EXPECT_GE(doc.at("overall_score").get<double>(), 80.0);
  EXPECT_TRUE(doc.at("scenes").contains("tiny"));
}

TEST_F(CliTest, ReportIsIndependentOfWorkers) {
  ASSERT_EQ(localize(p("w1/report.jsonl"), {"--workers", "1"}).code, 0);
  ASSERT_EQ(localize(p("w4/report.jsonl"), {"--workers", "4"}).code, 0);
  EXPECT_EQ(testing::read_file(root() / "w1" / "report.jsonl"), testing::read_file(root() / "w4" / "report.jsonl"));
}

TEST_F(CliTest, MatchesInProcessRun) {
  ASSERT_EQ(localize(p("cmp/report.jsonl"), {"--seed", "5"}).code, 0);
  MapDatabase db = load_map(root() / "map");
  db.set_source_dir(fs::absolute(root() / "map"));
  const RetrievalIndex index = load_index(root() / "map");
  const auto queries = load_queries(root() / "scene" / "queries");
  RunConfig cfg;
  cfg.seed = 5;
  OracleLocalizer oracle(load_ground_truth(root() / "scene" / "gt_poses.json"), cfg.oracle);
  LocalizationInputs in;
  in.db = &db;
  in.index = &index;
  in.neural = &oracle;
  in.query_dir = fs::absolute(root() / "scene" / "queries");
  const auto results = localize_batch(queries, in, cfg.pipeline, cfg.seed, 1);
  write_report(root() / "cmp" / "inproc.jsonl", results, queries, ReportContext{"tiny", db.dominant_device()});
  EXPECT_EQ(testing::read_file(root() / "cmp" / "report.jsonl"), testing::read_file(root() / "cmp" / "inproc.jsonl"));
}

TEST_F(CliTest, NeuralNoneCountsFailures) {
  // Without landmarks the classical branch cannot succeed.
  ASSERT_EQ(xloc_run({"index", "--map", p("scene/maps/ios"), "--out", p("bare_index")}).code, 0);
  const CliResult loc = xloc_run({"localize", "--map", p("scene/maps/ios"), "--index", p("bare_index"), "--queries",
                            p("scene/queries"), "--out", p("none/report.jsonl"), "--neural", "none"});
  ASSERT_EQ(loc.code, 0) << loc.err;
  EXPECT_NE(loc.out.find("localized 0 / 6"), std::string::npos) << loc.out;
  for (const ReportEntry& e : read_report(root() / "none" / "report.jsonl")) EXPECT_FALSE(e.final_pose);
  const CliResult ev = xloc_run({"evaluate", "--report", p("none/report.jsonl"), "--gt", p("scene/gt_poses.json")});
  ASSERT_EQ(ev.code, 0);
  EXPECT_NE(ev.out.find("overall score (R@0.5m, 5deg): 0.00"), std::string::npos) << ev.out;
}

TEST_F(CliTest, EvaluateHandWrittenReport) {
  std::map<std::string, Pose> gt;
  std::string lines;
  const auto add = [&](const std::string& id, const std::string& qd, const std::string& md, double err_m) {
    gt[id] = Pose{};
    HybridResult r;
    r.query_id = id;
    r.final_pose = Pose{Rotation{}, Vec3(err_m, 0.0, 0.0)};
    r.branch = Branch::kPnP;
    lines += report_line(r, qd, ReportContext{"hand", md}) + "\n";
  };
  add("a", "ios", "ios", 0.1);
  add("b", "ios", "ios", 0.9);
  add("c", "ios", "hl", 0.5);
  add("d", "hl", "hl", 0.2);
  testing::write_file(root() / "hand" / "report.jsonl", lines);
  save_ground_truth(gt, root() / "hand" / "gt.json");
  const CliResult ev = xloc_run({"evaluate", "--report", p("hand/report.jsonl"), "--gt", p("hand/gt.json"), "--out",
                           p("hand")});
  ASSERT_EQ(ev.code, 0) << ev.err;
  const json doc = json::parse(testing::read_file(root() / "hand" / "evaluation.json"));
  const json& m = doc.at("scenes").at("hand");
  EXPECT_EQ(m.at("devices"), json({"ios", "hl"}));
  EXPECT_EQ(m.at("cells"), json::parse("[[0.5, 1.0], [null, 1.0]]"));
  EXPECT_NEAR(doc.at("overall_score").get<double>(), 100.0 * 2.5 / 3.0, 1e-9);
}

TEST_F(CliTest, ExitCodes) {
  // Missing input.
  EXPECT_EQ(xloc_run({"index", "--map", p("nowhere")}).code, cli::kExitMissingInput);
  EXPECT_EQ(xloc_run({"localize", "--map", p("map"), "--queries", p("scene/queries"), "--out", p("x/report.jsonl"),
                      "--gt", p("nope.json")})
                .code,
            cli::kExitMissingInput);

  // Schema: unknown config key.
  testing::write_file(root() / "bad.json", R"({"pipeline": {"topk": 3}})");
  const CliResult schema = localize(p("x/report.jsonl"), {"--config", p("bad.json")});
  EXPECT_EQ(schema.code, cli::kExitSchema);
  const json err = json::parse(schema.err);
  EXPECT_EQ(err.at("error").at("category"), "schema");

  // Version mismatch and corruption on copies of the map.
  fs::copy(root() / "map", root() / "map_v", fs::copy_options::recursive);
  std::string manifest = testing::read_file(root() / "map_v" / "manifest.json");
  const auto pos = manifest.find("\"format_version\": 1");
  ASSERT_NE(pos, std::string::npos);
  manifest.replace(pos, 19, "\"format_version\": 9");
  testing::write_file(root() / "map_v" / "manifest.json", manifest);
  EXPECT_EQ(xloc_run({"index", "--map", p("map_v")}).code, cli::kExitVersion);

  fs::copy(root() / "map", root() / "map_c", fs::copy_options::recursive);
  fs::resize_file(root() / "map_c" / "frames" / "000001.desc.f32", 12);
  EXPECT_EQ(xloc_run({"index", "--map", p("map_c")}).code, cli::kExitCorrupt);

  // Usage.
  EXPECT_EQ(xloc_run({"localize", "--bogus"}).code, cli::kExitUsage);
  EXPECT_EQ(xloc_run({}).code, cli::kExitUsage);
  EXPECT_EQ(localize(p("x/report.jsonl"), {"--neural", "adapter"}).code, cli::kExitUsage);
}

TEST(Cli, HelpNamesConfigKeys) {
  std::ostringstream out;
  std::ostringstream err;
  EXPECT_EQ(cli::run({"xloc", "localize", "--help"}, out, err), 0);
  const std::string help = out.str();
  for (const char* key : {"seed", "workers", "pipeline.top_k", "pipeline.prune_radius", "pipeline.inlier_gate",
                          "pipeline.dedup_radius", "pipeline.ransac.reproj_threshold", "pipeline.pre_neural_filter",
                          "pipeline.pre_filter_radius", "oracle.rot_sigma_deg", "oracle.trans_sigma_m",
                          "oracle.alpha_per_m", "scene.name"}) {
    EXPECT_NE(help.find(std::string("[config: ") + key + "]"), std::string::npos) << key;
  }
  std::ostringstream sim;
  EXPECT_EQ(cli::run({"xloc", "simulate", "--help"}, sim, err), 0);
  EXPECT_NE(sim.str().find("[config: scene.outlier_rate]"), std::string::npos);
}

}  // namespace
}  // namespace xloc
