#include <gtest/gtest.h>
#include <json.hpp>

#include "test_support.hpp"
#include "xloc/config.hpp"
#include "xloc/errors.hpp"

namespace xloc {
namespace {

using nlohmann::json;

ErrorCategory parse_category(const std::string& text) {
  try {
    run_config_from_json(text);
  } catch (const Error& e) {
    return e.category();
  }
  ADD_FAILURE() << "accepted: " << text;
  return ErrorCategory::kInvalidArgument;
}

TEST(RunConfig, EmptyObjectKeepsDefaults) {
  const RunConfig c = run_config_from_json("{}");
  const RunConfig d;
  EXPECT_EQ(run_config_to_json(c), run_config_to_json(d));
}

TEST(RunConfig, RoundTrip) {
  RunConfig c;
  c.seed = 42;
  c.workers = 3;
  c.scene = cross_device_scene_config();
  c.pipeline.top_k = 7;
  c.pipeline.prune_radius = 12.5;
  c.pipeline.pre_neural_filter = true;
  c.pipeline.sources.push_back(MatcherSource{"lightglue", MatcherKind::kImported, 1.0});
  c.oracle.alpha_per_m = 0.05;
  c.eval.trans_m = 0.25;
  const std::string text = run_config_to_json(c);
  const RunConfig back = run_config_from_json(text);
  EXPECT_EQ(run_config_to_json(back), text);
  EXPECT_EQ(back.scene.devices, c.scene.devices);
  EXPECT_EQ(back.pipeline.sources.size(), 2U);
  EXPECT_EQ(back.pipeline.sources[1].kind, MatcherKind::kImported);
}

TEST(RunConfig, PartialOverride) {
  const RunConfig c = run_config_from_json(R"({"pipeline": {"ransac": {"reproj_threshold": 2.5}}, "seed": 9})");
  EXPECT_EQ(c.seed, 9U);
  EXPECT_EQ(c.pipeline.ransac.reproj_threshold, 2.5);
  EXPECT_EQ(c.pipeline.ransac.max_iterations, RansacConfig{}.max_iterations);
  EXPECT_EQ(c.pipeline.top_k, PipelineConfig{}.top_k);
}

TEST(RunConfig, RejectsUnknownKeys) {
  EXPECT_EQ(parse_category(R"({"sede": 1})"), ErrorCategory::kSchema);
  EXPECT_EQ(parse_category(R"({"pipeline": {"topk": 3}})"), ErrorCategory::kSchema);
  EXPECT_EQ(parse_category(R"({"pipeline": {"ransac": {"iterations": 3}}})"), ErrorCategory::kSchema);
  EXPECT_EQ(parse_category(R"({"scene": {"devices": [{"tag": "a", "lens": 1}]}})"), ErrorCategory::kSchema);
}

TEST(RunConfig, RejectsSceneSeed) {
  EXPECT_EQ(parse_category(R"({"scene": {"seed": 5}})"), ErrorCategory::kSchema);
}

TEST(RunConfig, RejectsWrongTypes) {
  EXPECT_EQ(parse_category(R"({"seed": "five"})"), ErrorCategory::kSchema);
  EXPECT_EQ(parse_category(R"({"workers": -1})"), ErrorCategory::kSchema);
  EXPECT_EQ(parse_category(R"({"pipeline": {"pre_neural_filter": 1}})"), ErrorCategory::kSchema);
  EXPECT_EQ(parse_category(R"({"pipeline": {"sources": {}}})"), ErrorCategory::kSchema);
  EXPECT_EQ(parse_category(R"({"pipeline": {"sources": [{"tag": "x", "kind": "sift"}]}})"), ErrorCategory::kSchema);
  EXPECT_EQ(parse_category("[1, 2]"), ErrorCategory::kSchema);
  EXPECT_EQ(parse_category("{"), ErrorCategory::kSchema);
}

TEST(RunConfig, Validation) {
  RunConfig c;
  EXPECT_NO_THROW(c.validate());
  c.pipeline.top_k = 0;
  EXPECT_THROW(c.validate(), Error);
  c = RunConfig{};
  c.eval.trans_m = -1.0;
  EXPECT_THROW(c.validate(), Error);
  c = RunConfig{};
  c.oracle.rot_sigma_deg = -1.0;
  EXPECT_THROW(c.validate(), Error);
  c = RunConfig{};
  c.workers = 0;
  EXPECT_THROW(c.validate(), Error);
}

TEST(RunConfig, FilesAndEffectiveConfig) {
  testing::TempDir dir("config");
  testing::write_file(dir / "c.json", R"({"seed": 77})");
  EXPECT_EQ(load_run_config(dir / "c.json").seed, 77U);
  EXPECT_THROW(load_run_config(dir / "missing.json"), Error);
  RunConfig c;
  c.seed = 5;
  write_effective_config(c, dir / "out");
  const json j = json::parse(testing::read_file(dir / "out" / "effective_config.json"));
  EXPECT_EQ(j.at("seed"), 5);
  EXPECT_FALSE(j.at("scene").contains("seed"));
}

TEST(SceneConfigJson, KeepsSeedAndDevices) {
  SceneConfig c = cross_device_scene_config();
  c.seed = 123;
  const SceneConfig back = scene_config_from_json(scene_config_to_json(c));
  EXPECT_EQ(back.seed, 123U);
  EXPECT_EQ(back.devices, c.devices);
  EXPECT_EQ(scene_config_to_json(back), scene_config_to_json(c));
}

}  // namespace
}  // namespace xloc
