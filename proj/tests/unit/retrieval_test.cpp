#include <algorithm>
#include <random>

#include <gtest/gtest.h>

#include "test_support.hpp"
#include "xloc/errors.hpp"
#include "xloc/retrieval.hpp"

namespace xloc {
namespace {

DescriptorMatrix random_rows(std::mt19937_64& rng, int n, int d) {
  std::normal_distribution<float> g(0.0F, 1.0F);
  DescriptorMatrix m(n, d);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) m(i, j) = g(rng);
  }
  return m;
}

std::vector<std::string> ids(int n) {
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "f%04d", i);
    out.emplace_back(buf);
  }
  return out;
}

TEST(RetrievalIndex, BuildShape) {
  std::mt19937_64 rng(1);
  const RetrievalIndex idx(ids(3), random_rows(rng, 3, 4));
  EXPECT_EQ(idx.size(), 3U);
  EXPECT_EQ(idx.dim(), 4);
}

TEST(RetrievalIndex, RowsAreUnitNorm) {
  std::mt19937_64 rng(2);
  const RetrievalIndex idx(ids(100), random_rows(rng, 100, 256));
  for (int i = 0; i < 100; ++i) EXPECT_NEAR(idx.rows().row(i).cast<double>().norm(), 1.0, 1e-6);
}

TEST(RetrievalIndex, RejectsBadInput) {
  std::mt19937_64 rng(3);
  DescriptorMatrix m = random_rows(rng, 3, 4);
  m.row(1).setZero();
  EXPECT_THROW(RetrievalIndex(ids(3), m), Error);
  EXPECT_THROW(RetrievalIndex(ids(2), random_rows(rng, 3, 4)), Error);
  EXPECT_THROW(RetrievalIndex({"a", "a"}, random_rows(rng, 2, 4)), Error);
}

TEST(RetrievalIndex, SelfQueryRanksFirst) {
  std::mt19937_64 rng(4);
  const RetrievalIndex idx(ids(20), random_rows(rng, 20, 16));
  const GlobalDescriptor q = idx.rows().row(7).transpose();
  const auto top = idx.query_topk(q, 5);
  ASSERT_EQ(top.size(), 5U);
  EXPECT_EQ(top[0].frame_id, "f0007");
  EXPECT_NEAR(top[0].score, 1.0, 1e-6);
}

TEST(RetrievalIndex, OrthogonalQueryTiesByFrameId) {
  DescriptorMatrix m = DescriptorMatrix::Zero(4, 5);
  for (int i = 0; i < 4; ++i) m(i, i) = 1.0F;
  const RetrievalIndex idx({"d", "b", "c", "a"}, m);
  GlobalDescriptor q = GlobalDescriptor::Zero(5);
  q(4) = 1.0F;
  const auto top = idx.query_topk(q, 10);
  ASSERT_EQ(top.size(), 4U);
  const std::vector<std::string> expected{"a", "b", "c", "d"};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(top[i].frame_id, expected[i]);
    EXPECT_EQ(top[i].score, 0.0);
  }
}

TEST(RetrievalIndex, MatchesExhaustiveSort) {
  std::mt19937_64 rng(5);
  const RetrievalIndex idx(ids(200), random_rows(rng, 200, 32));
  for (int trial = 0; trial < 20; ++trial) {
    GlobalDescriptor q = random_rows(rng, 1, 32).row(0).transpose();
    q.normalize();
    std::vector<ScoredFrame> all;
    for (int i = 0; i < 200; ++i) {
      all.push_back({idx.ids()[static_cast<std::size_t>(i)],
                     static_cast<double>(idx.rows().row(i).cast<double>().dot(q.cast<double>()))});
    }
    std::sort(all.begin(), all.end(), [](const ScoredFrame& a, const ScoredFrame& b) {
      return a.score != b.score ? a.score > b.score : a.frame_id < b.frame_id;
    });
    const auto top = idx.query_topk(q, 10);
    ASSERT_EQ(top.size(), 10U);
    for (std::size_t i = 0; i < 10; ++i) {
      EXPECT_EQ(top[i].frame_id, all[i].frame_id);
      EXPECT_NEAR(top[i].score, all[i].score, 1e-6);
      EXPECT_GE(top[i].score, -1.0);
      EXPECT_LE(top[i].score, 1.0);
    }
  }
}

TEST(RetrievalIndex, TopKIsPrefixOfTopKPlusOne) {
  std::mt19937_64 rng(6);
  const RetrievalIndex idx(ids(50), random_rows(rng, 50, 8));
  GlobalDescriptor q = random_rows(rng, 1, 8).row(0).transpose();
  const auto full = idx.query_topk(q, 50);
  for (std::size_t k = 1; k < 50; ++k) {
    const auto top = idx.query_topk(q, k);
    EXPECT_TRUE(std::equal(top.begin(), top.end(), full.begin()));
  }
}

TEST(RetrievalIndex, DimensionMismatch) {
  std::mt19937_64 rng(7);
  const RetrievalIndex idx(ids(5), random_rows(rng, 5, 8));
  EXPECT_THROW(idx.query_topk(GlobalDescriptor::Ones(7), 3), Error);
}

TEST(RetrievalIndex, SaveLoadRoundTrip) {
  std::mt19937_64 rng(8);
  const RetrievalIndex idx(ids(30), random_rows(rng, 30, 12));
  testing::TempDir dir("idx");
  save_index(idx, dir.path());
  const RetrievalIndex loaded = load_index(dir.path());
  EXPECT_EQ(loaded.ids(), idx.ids());
  EXPECT_EQ(loaded.rows(), idx.rows());
}

}  // namespace
}  // namespace xloc
