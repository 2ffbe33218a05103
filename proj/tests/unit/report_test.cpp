#include <random>

#include <gtest/gtest.h>
#include <json.hpp>

#include "test_support.hpp"
#include "xloc/errors.hpp"
#include "xloc/report.hpp"

namespace xloc {
namespace {

using nlohmann::json;

HybridResult sample_result(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  HybridResult r;
  r.query_id = "ios-q0003";
  r.final_pose = testing::random_pose(rng);
  r.branch = Branch::kNeuralRerun;
  r.selected_branch = Branch::kNeural;
  r.retrieved = {{"ios-m0001", 0.9}, {"ios-m0002", 0.5}};
  r.num_correspondences = 17;
  r.pnp_failure = PnPFailure::kNoModel;
  r.neural_candidate_ids = {"ios-m0001", "ios-m0002"};
  r.neural_first = NeuralPoseEstimate{testing::random_pose(rng), 0.5, true, ""};
  r.pruned_ids = {"ios-m0001"};
  r.neural_rerun = NeuralPoseEstimate{*r.final_pose, 0.7, true, ""};
  return r;
}

TEST(Report, LineRoundTrip) {
  const HybridResult r = sample_result(1);
  const std::string line = report_line(r, "ios", ReportContext{"hydro", "hl"});
  EXPECT_EQ(line.find('\n'), std::string::npos);
  const ReportEntry e = parse_report_line(line);
  EXPECT_EQ(e.scene, "hydro");
  EXPECT_EQ(e.query_id, r.query_id);
  EXPECT_EQ(e.query_device, "ios");
  EXPECT_EQ(e.map_device, "hl");
  EXPECT_EQ(e.branch, Branch::kNeuralRerun);
  ASSERT_TRUE(e.final_pose);
  EXPECT_EQ(e.final_pose->translation, r.final_pose->translation);
  EXPECT_EQ(e.final_pose->rotation.quaternion().coeffs(), r.final_pose->rotation.quaternion().coeffs());
}

TEST(Report, KeysAreSortedAndComplete) {
  const json j = json::parse(report_line(sample_result(2), "ios", ReportContext{"s", "ios"}));
  std::vector<std::string> keys;
  for (const auto& [k, v] : j.items()) keys.push_back(k);
  EXPECT_TRUE(std::is_sorted(keys.begin(), keys.end()));
  for (const char* k : {"format_version", "scene", "query_id", "query_device", "map_device", "branch",
                        "selected_branch", "final_pose", "failure", "retrieved", "num_correspondences", "pnp",
                        "pnp_failure", "neural_candidates", "neural_first", "pruned_ids", "neural_rerun"}) {
    EXPECT_TRUE(j.contains(k)) << k;
  }
  EXPECT_EQ(j.at("pnp_failure"), "no_model");
  EXPECT_TRUE(j.at("pnp").is_null());
  EXPECT_EQ(j.at("neural_rerun").at("confidence"), 0.7);
}

TEST(Report, FailedQuery) {
  HybridResult r;
  r.query_id = "q";
  r.failure = "pnp: no_model; neural: disabled";
  const std::string line = report_line(r, "hl", ReportContext{"s", "hl"});
  const json j = json::parse(line);
  EXPECT_TRUE(j.at("final_pose").is_null());
  EXPECT_EQ(j.at("failure"), "pnp: no_model; neural: disabled");
  EXPECT_EQ(j.at("branch"), "none");
  EXPECT_FALSE(parse_report_line(line).final_pose.has_value());
}

TEST(Report, Errors) {
  const auto category = [](const std::string& line) -> std::optional<ErrorCategory> {
    try {
      parse_report_line(line);
    } catch (const Error& e) {
      return e.category();
    }
    return std::nullopt;
  };
  json j = json::parse(report_line(sample_result(3), "ios", ReportContext{"s", "ios"}));
  EXPECT_EQ(category("{not json"), ErrorCategory::kSchema);
  json v = j;
  v["format_version"] = 2;
  EXPECT_EQ(category(v.dump()), ErrorCategory::kVersionMismatch);
  json b = j;
  b["branch"] = "teleport";
  EXPECT_EQ(category(b.dump()), ErrorCategory::kSchema);
  json m = j;
  m.erase("final_pose");
  EXPECT_EQ(category(m.dump()), ErrorCategory::kSchema);
  json q = j;
  q.erase("query_id");
  EXPECT_EQ(category(q.dump()), ErrorCategory::kSchema);
}

TEST(Report, FileRoundTrip) {
  testing::TempDir dir("report");
  std::vector<HybridResult> results{sample_result(4), sample_result(5)};
  results[1].query_id = "hl-q0000";
  std::vector<QueryFrame> queries(2);
  queries[0].frame_id = results[0].query_id;
  queries[0].device = "ios";
  queries[1].frame_id = results[1].query_id;
  queries[1].device = "hl";
  write_report(dir / "r" / "report.jsonl", results, queries, ReportContext{"s", "spot"});
  const auto entries = read_report(dir / "r" / "report.jsonl");
  ASSERT_EQ(entries.size(), 2U);
  EXPECT_EQ(entries[1].query_device, "hl");
  EXPECT_EQ(entries[1].map_device, "spot");
  queries.pop_back();
  EXPECT_THROW(write_report(dir / "x.jsonl", results, queries, ReportContext{}), Error);
  EXPECT_THROW(read_report(dir / "missing.jsonl"), Error);
}

}  // namespace
}  // namespace xloc
