#include "xloc/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <unordered_map>

#include "xloc/errors.hpp"
#include "xloc/map_store.hpp"

namespace xloc {

namespace {

double exact_distance(const DescriptorMatrix& a, Eigen::Index i, const DescriptorMatrix& b, Eigen::Index j) {
  return (a.row(i).cast<double>() - b.row(j).cast<double>()).norm();
}

}  // namespace

std::vector<Match> match_mutual_nn(const DescriptorMatrix& desc_a, const DescriptorMatrix& desc_b,
                                   double ratio, const std::string& source) {
  std::vector<Match> out;
  if (desc_a.rows() == 0 || desc_b.rows() == 0) return out;
  if (desc_a.cols() != desc_b.cols()) {
    fail(ErrorCategory::kInvalidArgument, "descriptor dimensions differ");
  }

  const Eigen::Index n = desc_a.rows();
  const Eigen::Index m = desc_b.rows();
  const Eigen::VectorXf sq_a = desc_a.rowwise().squaredNorm();
  const Eigen::VectorXf sq_b = desc_b.rowwise().squaredNorm();
  const Eigen::MatrixXf dot = desc_a * desc_b.transpose();

  constexpr float kInf = std::numeric_limits<float>::infinity();
  std::vector<Eigen::Index> best_b(static_cast<std::size_t>(n), -1);
  std::vector<Eigen::Index> second_b(static_cast<std::size_t>(n), -1);
  std::vector<Eigen::Index> best_a(static_cast<std::size_t>(m), -1);
  std::vector<float> best_a_dist(static_cast<std::size_t>(m), kInf);

  for (Eigen::Index i = 0; i < n; ++i) {
    float d1 = kInf;
    float d2 = kInf;
    Eigen::Index j1 = -1;
    Eigen::Index j2 = -1;
    for (Eigen::Index j = 0; j < m; ++j) {
      const float d = sq_a(i) + sq_b(j) - 2.0F * dot(i, j);
      if (d < d1) {
        d2 = d1;
        j2 = j1;
        d1 = d;
        j1 = j;
      } else if (d < d2) {
        d2 = d;
        j2 = j;
      }
      auto& bad = best_a_dist[static_cast<std::size_t>(j)];
      if (d < bad) {
        bad = d;
        best_a[static_cast<std::size_t>(j)] = i;
      }
    }
    best_b[static_cast<std::size_t>(i)] = j1;
    second_b[static_cast<std::size_t>(i)] = j2;
  }

  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index j = best_b[static_cast<std::size_t>(i)];
    if (j < 0 || best_a[static_cast<std::size_t>(j)] != i) continue;
    const double d1 = exact_distance(desc_a, i, desc_b, j);
    const Eigen::Index j2 = second_b[static_cast<std::size_t>(i)];
    const double d2 = j2 < 0 ? std::numeric_limits<double>::infinity() : exact_distance(desc_a, i, desc_b, j2);
    if (std::isfinite(d2) && !(d1 < ratio * d2)) continue;
    const double conf = std::isfinite(d2) ? std::clamp(1.0 - d1 / d2, 0.0, 1.0) : 1.0;
    out.push_back({static_cast<int>(i), static_cast<int>(j), static_cast<float>(conf), source});
  }
  return out;
}

MatchSet normalize_confidences(MatchSet ms) {
  std::map<std::string, std::pair<float, float>> ranges;
  for (const Match& m : ms.matches) {
    auto [it, inserted] = ranges.try_emplace(m.source, m.confidence, m.confidence);
    if (!inserted) {
      it->second.first = std::min(it->second.first, m.confidence);
      it->second.second = std::max(it->second.second, m.confidence);
    }
  }
  for (Match& m : ms.matches) {
    const auto [lo, hi] = ranges.at(m.source);
    if (hi > lo) {
      m.confidence = static_cast<float>((static_cast<double>(m.confidence) - lo) / (static_cast<double>(hi) - lo));
    } else {
      m.confidence = 1.0F;
    }
  }
  return ms;
}

namespace {

class DisjointSet {
 public:
  explicit DisjointSet(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (b < a) std::swap(a, b);
    parent_[b] = a;
  }

 private:
  std::vector<std::size_t> parent_;
};

struct CellKey {
  long long x;
  long long y;
  bool operator==(const CellKey&) const = default;
};

struct CellHash {
  std::size_t operator()(const CellKey& k) const {
    return std::hash<long long>()(k.x * 73856093LL ^ k.y * 19349663LL);
  }
};

bool ranks_before(const Match& a, const Match& b) {
  if (a.confidence != b.confidence) return a.confidence > b.confidence;
  if (a.query_idx != b.query_idx) return a.query_idx < b.query_idx;
  return a.map_idx < b.map_idx;
}

}  // namespace

MatchSet fuse_matches(std::span<const MatchSet> sets, std::span<const Keypoint> query_keypoints,
                      std::span<const Keypoint> map_keypoints, double dedup_radius) {
  MatchSet out;
  if (sets.empty()) return out;
  out.query_id = sets.front().query_id;
  out.map_id = sets.front().map_id;

  std::vector<Match> all;
  for (const MatchSet& s : sets) {
    if (s.query_id != out.query_id || s.map_id != out.map_id) {
      fail(ErrorCategory::kInvalidArgument, "match sets reference different frame pairs");
    }
    for (const Match& m : s.matches) {
      if (m.query_idx < 0 || m.map_idx < 0 || static_cast<std::size_t>(m.query_idx) >= query_keypoints.size() ||
          static_cast<std::size_t>(m.map_idx) >= map_keypoints.size()) {
        fail(ErrorCategory::kInvalidArgument, "match index out of range");
      }
      all.push_back(m);
    }
  }
  if (all.empty()) return out;

  const double radius = std::max(dedup_radius, 0.0);
  const double cell = radius > 0.0 ? radius : 1.0;
  const auto cell_of = [&](const Keypoint& kp) {
    return CellKey{static_cast<long long>(std::floor(kp.u / cell)), static_cast<long long>(std::floor(kp.v / cell))};
  };
  const auto within = [&](const Keypoint& a, const Keypoint& b) {
    return (a.pixel() - b.pixel()).norm() <= radius;
  };

  // Duplicate groups: union over pairs whose both endpoints lie within radius.
  DisjointSet groups(all.size());
  std::unordered_map<CellKey, std::vector<std::size_t>, CellHash> grid;
  for (std::size_t i = 0; i < all.size(); ++i) {
    const Keypoint& qi = query_keypoints[static_cast<std::size_t>(all[i].query_idx)];
    const Keypoint& mi = map_keypoints[static_cast<std::size_t>(all[i].map_idx)];
    const CellKey c = cell_of(qi);
    for (long long dx = -1; dx <= 1; ++dx) {
      for (long long dy = -1; dy <= 1; ++dy) {
        const auto it = grid.find(CellKey{c.x + dx, c.y + dy});
        if (it == grid.end()) continue;
        for (std::size_t j : it->second) {
          if (within(qi, query_keypoints[static_cast<std::size_t>(all[j].query_idx)]) &&
              within(mi, map_keypoints[static_cast<std::size_t>(all[j].map_idx)])) {
            groups.unite(i, j);
          }
        }
      }
    }
    grid[c].push_back(i);
  }

  struct Group {
    Match representative;
    bool has_rep = false;
    std::map<std::string, float> best_per_source;
  };
  std::map<std::size_t, Group> by_root;
  for (std::size_t i = 0; i < all.size(); ++i) {
    Group& g = by_root[groups.find(i)];
    const Match& m = all[i];
    if (!g.has_rep || ranks_before(m, g.representative)) {
      g.representative = m;
      g.has_rep = true;
    }
    auto [it, inserted] = g.best_per_source.try_emplace(m.source, m.confidence);
    if (!inserted) it->second = std::max(it->second, m.confidence);
  }

  std::vector<Match> candidates;
  candidates.reserve(by_root.size());
  for (auto& [root, g] : by_root) {
    double miss = 1.0;
    for (const auto& [source, c] : g.best_per_source) miss *= 1.0 - static_cast<double>(c);
    Match m = g.representative;
    m.confidence = static_cast<float>(std::clamp(1.0 - miss, 0.0, 1.0));
    m.source = kFusedSource;
    candidates.push_back(std::move(m));
  }
  std::sort(candidates.begin(), candidates.end(), ranks_before);

  std::vector<char> used_q(query_keypoints.size(), 0);
  std::vector<char> used_m(map_keypoints.size(), 0);
  for (Match& m : candidates) {
    auto& uq = used_q[static_cast<std::size_t>(m.query_idx)];
    auto& um = used_m[static_cast<std::size_t>(m.map_idx)];
    if (uq || um) continue;
    uq = um = 1;
    out.matches.push_back(std::move(m));
  }
  return out;
}

std::vector<Correspondence2D3D> lift_to_2d3d(const MatchSet& ms, const MapDatabase& db,
                                             std::span<const Keypoint> query_keypoints) {
  const auto fi = db.frame_index(ms.map_id);
  if (!fi) fail(ErrorCategory::kNotFound, "unknown map frame '" + ms.map_id + "'");
  std::vector<Correspondence2D3D> out;
  for (const Match& m : ms.matches) {
    const int lid = db.landmark_of(*fi, m.map_idx);
    if (lid < 0) continue;
    if (m.query_idx < 0 || static_cast<std::size_t>(m.query_idx) >= query_keypoints.size()) {
      fail(ErrorCategory::kInvalidArgument, "query keypoint index out of range");
    }
    out.push_back({query_keypoints[static_cast<std::size_t>(m.query_idx)].pixel(),
                   db.landmarks()[static_cast<std::size_t>(lid)].point, static_cast<double>(m.confidence),
                   m.query_idx, lid});
  }
  return pool_correspondences(std::move(out));
}

std::vector<Correspondence2D3D> pool_correspondences(std::vector<Correspondence2D3D> all) {
  std::sort(all.begin(), all.end(), [](const Correspondence2D3D& a, const Correspondence2D3D& b) {
    if (a.query_idx != b.query_idx) return a.query_idx < b.query_idx;
    if (a.weight != b.weight) return a.weight > b.weight;
    return a.landmark_id < b.landmark_id;
  });
  all.erase(std::unique(all.begin(), all.end(),
                        [](const Correspondence2D3D& a, const Correspondence2D3D& b) {
                          return a.query_idx == b.query_idx;
                        }),
            all.end());
  return all;
}

}  // namespace xloc
