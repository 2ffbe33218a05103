#include <random>

#include <gtest/gtest.h>

#include "test_support.hpp"
#include "xloc/adapter.hpp"
#include "xloc/errors.hpp"
#include "xloc/eval.hpp"
#include "xloc/mapping.hpp"
#include "xloc/pipeline.hpp"
#include "xloc/report.hpp"
#include "xloc/scene_sim.hpp"

namespace xloc {
namespace {

PnPResult pnp_with(int inliers) {
  PnPResult r;
  r.num_inliers = inliers;
  r.pose = Pose::from_center(Rotation::identity(), Vec3(1.0, 0.0, 0.0));
  return r;
}

NeuralPoseEstimate neural_valid(bool valid = true) {
  NeuralPoseEstimate e;
  e.pose = Pose::from_center(Rotation::identity(), Vec3(2.0, 0.0, 0.0));
  e.valid = valid;
  return e;
}

TEST(SelectHybrid, GateIsStrict) {
  EXPECT_EQ(select_hybrid_pose(pnp_with(121), neural_valid(), 120)->branch, Branch::kPnP);
  EXPECT_EQ(select_hybrid_pose(pnp_with(120), neural_valid(), 120)->branch, Branch::kNeural);
}

TEST(SelectHybrid, Fallbacks) {
  EXPECT_EQ(select_hybrid_pose(std::nullopt, neural_valid(), 120)->branch, Branch::kNeural);
  EXPECT_FALSE(select_hybrid_pose(std::nullopt, neural_valid(false), 120));
  EXPECT_FALSE(select_hybrid_pose(pnp_with(50), std::nullopt, 120));
  EXPECT_EQ(select_hybrid_pose(pnp_with(500), std::nullopt, 120)->branch, Branch::kPnP);
}

TEST(SelectHybrid, RaisingGateNeverTurnsNeuralIntoPnP) {
  for (int inliers = 0; inliers < 300; inliers += 7) {
    for (int gate = 0; gate < 300; gate += 11) {
      const auto lo = select_hybrid_pose(pnp_with(inliers), neural_valid(), gate);
      for (int higher = gate; higher < 320; higher += 13) {
        const auto hi = select_hybrid_pose(pnp_with(inliers), neural_valid(), higher);
        if (lo->branch == Branch::kNeural) EXPECT_EQ(hi->branch, Branch::kNeural);
      }
    }
  }
}

std::vector<std::pair<std::string, Pose>> along_x(const std::vector<double>& d) {
  std::vector<std::pair<std::string, Pose>> out;
  for (std::size_t i = 0; i < d.size(); ++i) {
    out.emplace_back("c" + std::to_string(i), Pose::from_center(Rotation::identity(), Vec3(d[i], 0.0, 0.0)));
  }
  return out;
}

TEST(Prune, InclusiveBoundary) {
  const auto c = along_x({5.0, 19.999, 20.0, 20.001});
  EXPECT_EQ(prune_candidates(c, Vec3::Zero(), 20.0), (std::vector<std::string>{"c0", "c1", "c2"}));
}

TEST(Prune, CoincidentCandidateKept) {
  const auto c = along_x({3.0});
  EXPECT_EQ(prune_candidates(c, Vec3(3.0, 0.0, 0.0), 1e-9), (std::vector<std::string>{"c0"}));
}

TEST(Prune, MatchesBruteForceAndIsMonotone) {
  std::mt19937_64 rng(1);
  std::vector<std::pair<std::string, Pose>> c;
  for (int i = 0; i < 200; ++i) c.emplace_back("c" + std::to_string(i), testing::random_pose(rng, 40.0));
  const Vec3 q = testing::random_vec(rng, 10.0);
  std::size_t prev = 0;
  for (double radius : {1.0, 5.0, 10.0, 20.0, 40.0, 80.0}) {
    std::vector<std::string> expected;
    for (const auto& [id, p] : c) {
      if ((p.center() - q).norm() <= radius) expected.push_back(id);
    }
    const auto kept = prune_candidates(c, q, radius);
    EXPECT_EQ(kept, expected);
    EXPECT_GE(kept.size(), prev);
    prev = kept.size();
  }
}

TEST(QuerySeed, StableAndDistinct) {
  EXPECT_EQ(query_seed(1, "a"), query_seed(1, "a"));
  EXPECT_NE(query_seed(1, "a"), query_seed(2, "a"));
  EXPECT_NE(query_seed(1, "a"), query_seed(1, "b"));
}

TEST(PipelineConfig, Validation) {
  PipelineConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.top_k = 0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = PipelineConfig{};
  cfg.prune_radius = 0.0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = PipelineConfig{};
  cfg.inlier_gate = -1;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = PipelineConfig{};
  cfg.sources.push_back(cfg.sources.front());
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(Branch, Names) {
  for (Branch b : {Branch::kNone, Branch::kPnP, Branch::kNeural, Branch::kNeuralRerun}) {
    EXPECT_EQ(branch_from_string(to_string(b)), b);
  }
  EXPECT_THROW(branch_from_string("ppl"), Error);
}

SceneConfig noiseless_config(std::uint64_t seed) {
  SceneConfig cfg = default_scene_config();
  cfg.frames_per_device = 16;
  cfg.queries_per_device = 6;
  cfg.keypoint_noise_px = 0.0;
  cfg.descriptor_noise = 0.0;
  cfg.outlier_rate = 0.0;
  cfg.global_noise = 0.0;
  cfg.depth_noise_m = 0.0;
  cfg.depth_salt_rate = 0.0;
  cfg.seed = seed;
  return cfg;
}

struct World {
  SyntheticScene scene;
  MapDatabase db;
  RetrievalIndex index;
};

World make_world(const SceneConfig& cfg) {
  SyntheticScene scene = generate_scene(cfg);
  MapDatabase db = build_map_from_frames(scene.devices[0].map_frames);
  RetrievalIndex index = index_build(db.frames());
  return World{std::move(scene), std::move(db), std::move(index)};
}

class PipelineTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    exact_ = new World(make_world(noiseless_config(3)));
    SceneConfig noisy = default_scene_config();
    noisy.frames_per_device = 16;
    noisy.queries_per_device = 8;
    noisy.seed = 4;
    noisy_ = new World(make_world(noisy));
  }
  static void TearDownTestSuite() {
    delete exact_;
    delete noisy_;
  }
  static World* exact_;
  static World* noisy_;
};

World* PipelineTest::exact_ = nullptr;
World* PipelineTest::noisy_ = nullptr;

TEST_F(PipelineTest, ExactSceneLocalizesWithPnP) {
  OracleLocalizer oracle(exact_->scene.query_poses, OracleNoise{});
  const LocalizationInputs in{&exact_->db, &exact_->index, &oracle, nullptr, std::nullopt};
  const PipelineConfig cfg;
  const auto& queries = exact_->scene.devices[0].queries;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const HybridResult r = localize_query(queries[i], i, in, cfg, 1);
    ASSERT_EQ(r.branch, Branch::kPnP) << queries[i].frame_id;
    ASSERT_TRUE(r.final_pose);
    const PoseError e = pose_error(*r.final_pose, exact_->scene.query_poses.at(queries[i].frame_id));
    EXPECT_LT(e.trans_m, 0.05);
    EXPECT_LT(e.rot_deg, 0.1);
    EXPECT_GT(r.pnp->num_inliers, cfg.inlier_gate);
    for (const std::string& id : r.pruned_ids) {
      EXPECT_TRUE(std::any_of(r.retrieved.begin(), r.retrieved.end(),
                              [&](const ScoredFrame& s) { return s.frame_id == id; }));
    }
  }
}

TEST_F(PipelineTest, NoLandmarksFallsBackToNeural) {
  const MapDatabase bare(exact_->db.frames(), {});
  OracleLocalizer oracle(exact_->scene.query_poses, OracleNoise{0.0, 0.1, 0.0, 1e9, 0.0});
  const LocalizationInputs in{&bare, &exact_->index, &oracle, nullptr, std::nullopt};
  const auto& queries = exact_->scene.devices[0].queries;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const HybridResult r = localize_query(queries[i], i, in, PipelineConfig{}, query_seed(5, queries[i].frame_id));
    EXPECT_TRUE(r.branch == Branch::kNeural || r.branch == Branch::kNeuralRerun);
    EXPECT_FALSE(r.pnp);
    ASSERT_TRUE(r.final_pose);
    // Gaussian center noise of 0.1 m per axis; 6 sigma in norm.
    EXPECT_LT(pose_error(*r.final_pose, exact_->scene.query_poses.at(queries[i].frame_id)).trans_m, 0.6);
  }
}

TEST_F(PipelineTest, BothBranchesFailing) {
  const MapDatabase bare(exact_->db.frames(), {});
  const LocalizationInputs in{&bare, &exact_->index, nullptr, nullptr, std::nullopt};
  const HybridResult r = localize_query(exact_->scene.devices[0].queries[0], 0, in, PipelineConfig{}, 1);
  EXPECT_EQ(r.branch, Branch::kNone);
  EXPECT_FALSE(r.final_pose);
  ASSERT_TRUE(r.failure);
  EXPECT_NE(r.failure->find("neural: disabled"), std::string::npos);
}

TEST_F(PipelineTest, EmptyMapFails) {
  const MapDatabase empty;
  const RetrievalIndex no_index;
  const LocalizationInputs in{&empty, &no_index, nullptr, nullptr, std::nullopt};
  const HybridResult r = localize_query(exact_->scene.devices[0].queries[0], 0, in, PipelineConfig{}, 1);
  EXPECT_FALSE(r.final_pose);
  EXPECT_TRUE(r.failure);
}

TEST_F(PipelineTest, PnPResultIndependentOfNeuralImplementation) {
  OracleLocalizer oracle(noisy_->scene.query_poses, OracleNoise{2.0, 0.3, 0.0, 1e9, 0.0});
  AdapterLocalizer stub({XLOC_NEURAL_STUB});
  const auto& queries = noisy_->scene.devices[0].queries;
  const PipelineConfig cfg;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const std::uint64_t seed = query_seed(9, queries[i].frame_id);
    const HybridResult a = localize_query(queries[i], i, {&noisy_->db, &noisy_->index, &oracle, nullptr, std::nullopt}, cfg, seed);
    const HybridResult b = localize_query(queries[i], i, {&noisy_->db, &noisy_->index, &stub, nullptr, std::nullopt}, cfg, seed);
    const HybridResult c = localize_query(queries[i], i, {&noisy_->db, &noisy_->index, nullptr, nullptr, std::nullopt}, cfg, seed);
    if (a.branch != Branch::kPnP) continue;
    EXPECT_EQ(b.branch, Branch::kPnP);
    EXPECT_EQ(c.branch, Branch::kPnP);
    EXPECT_EQ(a.final_pose->translation, b.final_pose->translation);
    EXPECT_EQ(a.final_pose->translation, c.final_pose->translation);
    EXPECT_EQ(a.final_pose->rotation.quaternion().coeffs(), c.final_pose->rotation.quaternion().coeffs());
  }
}

TEST_F(PipelineTest, RerunOnlyWhenSurvivorsDiffer) {
  OracleLocalizer oracle(noisy_->scene.query_poses, OracleNoise{1.0, 0.1, 0.0, 1e9, 0.0});
  const LocalizationInputs in{&noisy_->db, &noisy_->index, &oracle, nullptr, std::nullopt};
  PipelineConfig wide;
  wide.prune_radius = 1e6;
  PipelineConfig tight;
  tight.prune_radius = 8.0;
  tight.inlier_gate = 100000;
  const QueryFrame& q = noisy_->scene.devices[0].queries[0];
  const HybridResult a = localize_query(q, 0, in, wide, 3);
  EXPECT_EQ(a.pruned_ids, a.neural_candidate_ids);
  EXPECT_FALSE(a.neural_rerun);
  const HybridResult b = localize_query(q, 0, in, tight, 3);
  EXPECT_EQ(b.selected_branch, Branch::kNeural);
  ASSERT_FALSE(b.pruned_ids.empty());
  ASSERT_NE(b.pruned_ids, b.neural_candidate_ids);
  ASSERT_TRUE(b.neural_rerun);
  EXPECT_EQ(b.branch, Branch::kNeuralRerun);
  EXPECT_EQ(b.final_pose->translation, b.neural_rerun->pose.translation);
}

TEST_F(PipelineTest, PreNeuralFilterRestrictsFirstPass) {
  OracleLocalizer oracle(noisy_->scene.query_poses, OracleNoise{});
  const LocalizationInputs in{&noisy_->db, &noisy_->index, &oracle, nullptr, std::nullopt};
  PipelineConfig cfg;
  cfg.pre_neural_filter = true;
  cfg.pre_filter_radius = 8.0;
  const QueryFrame& q = noisy_->scene.devices[0].queries[1];
  const HybridResult r = localize_query(q, 1, in, cfg, 3);
  ASSERT_TRUE(r.pnp);
  for (const std::string& id : r.neural_candidate_ids) {
    EXPECT_LE((noisy_->db.frame(id).pose.center() - r.pnp->pose.center()).norm(), 8.0);
  }
  EXPECT_LT(r.neural_candidate_ids.size(), r.retrieved.size());
}

TEST_F(PipelineTest, ImportedMatchesReproduceBuiltInMatcher) {
  const auto& queries = noisy_->scene.devices[0].queries;
  ImportedMatches imported;
  for (const QueryFrame& q : queries) {
    for (const MapFrame& f : noisy_->db.frames()) {
      imported[{q.frame_id, f.frame_id}].push_back(
          MatchSet{q.frame_id, f.frame_id, match_mutual_nn(q.features.descriptors, f.features.descriptors, kDefaultRatio, "ext")});
    }
  }
  PipelineConfig ext;
  ext.sources = {{"ext", MatcherKind::kImported, kDefaultRatio}};
  const LocalizationInputs in_builtin{&noisy_->db, &noisy_->index, nullptr, nullptr, std::nullopt};
  const LocalizationInputs in_import{&noisy_->db, &noisy_->index, nullptr, &imported, std::nullopt};
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const HybridResult a = localize_query(queries[i], i, in_builtin, PipelineConfig{}, 7);
    const HybridResult b = localize_query(queries[i], i, in_import, ext, 7);
    EXPECT_EQ(a.num_correspondences, b.num_correspondences);
    ASSERT_EQ(a.final_pose.has_value(), b.final_pose.has_value());
    if (a.final_pose) EXPECT_EQ(a.final_pose->translation, b.final_pose->translation);
  }
}

TEST_F(PipelineTest, BatchIndependentOfWorkerCount) {
  OracleLocalizer oracle(noisy_->scene.query_poses, OracleNoise{1.0, 0.1, 0.05, 1e9, 0.0});
  PipelineConfig cfg;
  cfg.inlier_gate = 250;  // push some queries through the neural branch
  const LocalizationInputs in{&noisy_->db, &noisy_->index, &oracle, nullptr, std::nullopt};
  const auto& queries = noisy_->scene.devices[0].queries;
  const auto one = localize_batch(queries, in, cfg, 11, 1);
  const auto many = localize_batch(queries, in, cfg, 11, 4);
  ASSERT_EQ(one.size(), many.size());
  const ReportContext ctx{"s", "ios"};
  for (std::size_t i = 0; i < one.size(); ++i) {
    EXPECT_EQ(report_line(one[i], "ios", ctx), report_line(many[i], "ios", ctx));
    if (i > 0) EXPECT_LT(one[i - 1].query_id, one[i].query_id);
  }
}

TEST_F(PipelineTest, BatchRejectsDuplicateIds) {
  std::vector<QueryFrame> queries{noisy_->scene.devices[0].queries[0], noisy_->scene.devices[0].queries[0]};
  const LocalizationInputs in{&noisy_->db, &noisy_->index, nullptr, nullptr, std::nullopt};
  EXPECT_THROW(localize_batch(queries, in, PipelineConfig{}, 1, 2), Error);
}

}  // namespace
}  // namespace xloc
