#include <random>
#include <set>

#include <gtest/gtest.h>

#include "test_support.hpp"
#include "xloc/errors.hpp"
#include "xloc/map_store.hpp"
#include "xloc/mapping.hpp"
#include "xloc/scene_sim.hpp"

namespace xloc {
namespace {

using testing::TempDir;

const CameraIntrinsics kK = make_intrinsics(400.0, 400.0, 320.0, 240.0, 640, 480);

struct ExactViews {
  std::vector<MapFrame> frames;
  std::vector<Point3> points;
};

// Three cameras looking at `n` points; keypoint i of every frame is point i.
ExactViews exact_views(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  ExactViews ev;
  for (std::size_t i = 0; i < n; ++i) ev.points.emplace_back(u(rng), u(rng), 8.0 + u(rng));
  for (int c = 0; c < 3; ++c) {
    MapFrame f;
    f.frame_id = "f" + std::to_string(c);
    f.device = "sim";
    f.intrinsics = kK;
    f.pose = testing::look_at(Vec3(-1.0 + c, 0.3 * c, 0.0), Vec3(0.0, 0.0, 8.0), Vec3(0.0, -1.0, 0.0));
    f.features.descriptors = DescriptorMatrix::Random(static_cast<Eigen::Index>(n), 8);
    f.features.global = Eigen::VectorXf::Unit(4, c);
    for (const Point3& X : ev.points) {
      const Pixel p = *project(kK, f.pose, X);
      f.features.keypoints.push_back({static_cast<float>(p.x()), static_cast<float>(p.y()), 1.0F});
    }
    ev.frames.push_back(std::move(f));
  }
  return ev;
}

std::vector<PairMatches> identity_pairs(const ExactViews& ev) {
  std::vector<PairMatches> pairs;
  for (std::size_t a = 0; a < ev.frames.size(); ++a) {
    for (std::size_t b = a + 1; b < ev.frames.size(); ++b) {
      PairMatches pm{ev.frames[a].frame_id, ev.frames[b].frame_id, {}};
      for (std::size_t i = 0; i < ev.points.size(); ++i) {
        pm.matches.matches.push_back({static_cast<int>(i), static_cast<int>(i), 1.0F, "mnn"});
      }
      pairs.push_back(std::move(pm));
    }
  }
  return pairs;
}

TEST(BuildMap, ExactViewsGiveEveryLandmark) {
  const ExactViews ev = exact_views(50, 1);
  const MapDatabase db = build_map(ev.frames, identity_pairs(ev));
  ASSERT_EQ(db.landmarks().size(), 50U);
  for (const Landmark& lm : db.landmarks()) {
    EXPECT_EQ(lm.track.size(), 3U);
    const auto id = static_cast<std::size_t>(lm.track.front().keypoint_index);
    // Keypoints are stored as float32; the only residual left is that rounding.
    double quantization = 0.0;
    for (const MapFrame& f : ev.frames) {
      quantization += (*project(kK, f.pose, ev.points[id]) - f.features.keypoints[id].pixel()).norm();
    }
    quantization /= static_cast<double>(ev.frames.size());
    EXPECT_LT(lm.mean_reprojection_error, quantization + 1e-6);
    EXPECT_LT((lm.point - ev.points[id]).norm(), 1e-4);
  }
}

TEST(BuildMap, NoMatchesGivesEmptyMap) {
  const ExactViews ev = exact_views(10, 3);
  const MapDatabase db = build_map(ev.frames, {});
  EXPECT_EQ(db.num_frames(), 3U);
  EXPECT_TRUE(db.landmarks().empty());
}

TEST(BuildMap, DuplicateFrameIdRejected) {
  ExactViews ev = exact_views(10, 4);
  ev.frames[1].frame_id = ev.frames[0].frame_id;
  try {
    build_map(ev.frames, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::kInvalidArgument);
  }
}

TEST(BuildMap, WrongCorrespondenceNeverAddsLandmarks) {
  const ExactViews ev = exact_views(50, 5);
  auto pairs = identity_pairs(ev);
  // Cross two matches in the first pair: keypoint 0 <-> 1 and 1 <-> 0.
  pairs[0].matches.matches[0].map_idx = 1;
  pairs[0].matches.matches[1].map_idx = 0;
  const MapDatabase db = build_map(ev.frames, pairs);
  EXPECT_LE(db.landmarks().size(), 50U);
  for (const Landmark& lm : db.landmarks()) EXPECT_LE(lm.mean_reprojection_error, 4.0);
}

TEST(BuildMap, ConflictingTrackIsSplit) {
  const ExactViews ev = exact_views(20, 6);
  auto pairs = identity_pairs(ev);
  // f0:0 - f2:5 would join f2:0 and f2:5 through the track of point 0.
  pairs[1].matches.matches.push_back({0, 5, 1.0F, "mnn"});
  const MapDatabase db = build_map(ev.frames, pairs);
  for (const Landmark& lm : db.landmarks()) {
    std::set<std::string> frames_in_track;
    for (const TrackElement& te : lm.track) EXPECT_TRUE(frames_in_track.insert(te.frame_id).second);
  }
  EXPECT_NE(db.landmark_of(2, 0), db.landmark_of(2, 5));
}

TEST(BuildMap, LandmarksReprojectWithinGate) {
  SceneConfig cfg = default_scene_config();
  cfg.frames_per_device = 12;
  cfg.queries_per_device = 2;
  cfg.seed = 7;
  const SyntheticScene scene = generate_scene(cfg);
  const MapDatabase db = build_map_from_frames(scene.devices[0].map_frames);
  ASSERT_GT(db.landmarks().size(), 100U);
  for (std::size_t l = 0; l < db.landmarks().size(); ++l) {
    const Landmark& lm = db.landmarks()[l];
    ASSERT_GE(lm.track.size(), 2U);
    for (const TrackElement& te : lm.track) {
      const std::size_t fi = *db.frame_index(te.frame_id);
      const MapFrame& f = db.frames()[fi];
      const auto p = project(f.intrinsics, f.pose, lm.point);
      ASSERT_TRUE(p);
      EXPECT_LE((*p - f.features.keypoints[static_cast<std::size_t>(te.keypoint_index)].pixel()).norm(), 4.0);
      EXPECT_EQ(db.landmark_of(fi, te.keypoint_index), static_cast<int>(l));
    }
  }
}

TEST(BuildMap, Deterministic) {
  SceneConfig cfg = default_scene_config();
  cfg.frames_per_device = 8;
  cfg.queries_per_device = 1;
  cfg.seed = 8;
  const SyntheticScene scene = generate_scene(cfg);
  TempDir a("det_a");
  TempDir b("det_b");
  save_map(build_map_from_frames(scene.devices[0].map_frames), a.path());
  save_map(build_map_from_frames(scene.devices[0].map_frames), b.path());
  EXPECT_EQ(testing::snapshot_tree(a.path()), testing::snapshot_tree(b.path()));
}

MapDatabase small_map() {
  SceneConfig cfg = default_scene_config();
  cfg.frames_per_device = 6;
  cfg.queries_per_device = 1;
  cfg.seed = 9;
  return build_map_from_frames(generate_scene(cfg).devices[0].map_frames);
}

TEST(MapStore, RoundTripIsBitExact) {
  const MapDatabase db = small_map();
  TempDir dir("rt");
  save_map(db, dir / "a");
  const MapDatabase loaded = load_map(dir / "a");
  ASSERT_EQ(loaded.num_frames(), db.num_frames());
  for (std::size_t i = 0; i < db.num_frames(); ++i) {
    const MapFrame& x = db.frames()[i];
    const MapFrame& y = loaded.frames()[i];
    EXPECT_EQ(x.frame_id, y.frame_id);
    EXPECT_EQ(x.device, y.device);
    EXPECT_EQ(x.intrinsics, y.intrinsics);
    EXPECT_EQ(x.pose.rotation.quaternion().coeffs(), y.pose.rotation.quaternion().coeffs());
    EXPECT_EQ(x.pose.translation, y.pose.translation);
    EXPECT_EQ(x.features.keypoints, y.features.keypoints);
    EXPECT_EQ(x.features.descriptors, y.features.descriptors);
    EXPECT_EQ(x.features.global, y.features.global);
    EXPECT_EQ(x.depth, y.depth);
  }
  ASSERT_EQ(loaded.landmarks().size(), db.landmarks().size());
  for (std::size_t l = 0; l < db.landmarks().size(); ++l) {
    EXPECT_EQ(loaded.landmarks()[l].point, db.landmarks()[l].point);
    EXPECT_EQ(loaded.landmarks()[l].track, db.landmarks()[l].track);
    EXPECT_EQ(loaded.landmarks()[l].mean_reprojection_error, db.landmarks()[l].mean_reprojection_error);
  }
  save_map(loaded, dir / "b");
  EXPECT_EQ(testing::snapshot_tree(dir / "a"), testing::snapshot_tree(dir / "b"));
}

ErrorCategory load_error(const std::filesystem::path& dir) {
  try {
    load_map(dir);
  } catch (const Error& e) {
    return e.category();
  }
  ADD_FAILURE() << "load succeeded";
  return ErrorCategory::kIo;
}

TEST(MapStore, UnknownVersion) {
  TempDir dir("ver");
  save_map(small_map(), dir.path());
  std::string m = testing::read_file(dir / "manifest.json");
  const auto pos = m.find("\"format_version\": 1");
  ASSERT_NE(pos, std::string::npos);
  m.replace(pos, 19, "\"format_version\": 7");
  testing::write_file(dir / "manifest.json", m);
  EXPECT_EQ(load_error(dir.path()), ErrorCategory::kVersionMismatch);
}

TEST(MapStore, MissingArrayFile) {
  TempDir dir("miss");
  save_map(small_map(), dir.path());
  std::filesystem::remove(dir.path() / "frames" / "000002.desc.f32");
  EXPECT_EQ(load_error(dir.path()), ErrorCategory::kCorruptStore);
}

TEST(MapStore, TruncatedArray) {
  TempDir dir("trunc");
  save_map(small_map(), dir.path());
  const auto path = dir.path() / "frames" / "000001.kp.f32";
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 4);
  EXPECT_EQ(load_error(dir.path()), ErrorCategory::kTruncatedArray);
}

TEST(MapStore, MissingManifest) {
  TempDir dir("nomani");
  EXPECT_EQ(load_error(dir.path()), ErrorCategory::kCorruptStore);
}

TEST(MapStore, QueriesRoundTrip) {
  SceneConfig cfg = default_scene_config();
  cfg.frames_per_device = 4;
  cfg.queries_per_device = 3;
  cfg.seed = 10;
  const SyntheticScene scene = generate_scene(cfg);
  TempDir dir("q");
  save_queries(scene.devices[0].queries, dir.path());
  const auto loaded = load_queries(dir.path());
  ASSERT_EQ(loaded.size(), 3U);
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    EXPECT_EQ(loaded[i].frame_id, scene.devices[0].queries[i].frame_id);
    EXPECT_EQ(loaded[i].features.descriptors, scene.devices[0].queries[i].features.descriptors);
    EXPECT_EQ(loaded[i].depth, scene.devices[0].queries[i].depth);
  }
  EXPECT_THROW(load_map(dir.path()), Error);
}

TEST(MapDatabase, RejectsDanglingTrack) {
  const ExactViews ev = exact_views(5, 11);
  Landmark lm;
  lm.track = {{"f0", 0}, {"nope", 0}};
  try {
    MapDatabase(ev.frames, {lm});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::kCorruptStore);
  }
}

TEST(MapDatabase, DominantDevice) {
  ExactViews ev = exact_views(5, 12);
  ev.frames[0].device = "a";
  ev.frames[1].device = "b";
  ev.frames[2].device = "b";
  EXPECT_EQ(MapDatabase(ev.frames, {}).dominant_device(), "b");
  EXPECT_EQ(MapDatabase().dominant_device(), "");
}

}  // namespace
}  // namespace xloc
