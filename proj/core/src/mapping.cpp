#include "xloc/mapping.hpp"

#include <algorithm>
#include <set>
#include <unordered_map>

#include "xloc/errors.hpp"
#include "xloc/retrieval.hpp"

namespace xloc {

std::vector<PairMatches> match_map_pairs(const std::vector<MapFrame>& frames, const MappingOptions& opts) {
  if (frames.size() < 2) return {};
  const RetrievalIndex index = index_build(frames);
  std::set<std::pair<std::size_t, std::size_t>> pairs;
  std::unordered_map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < frames.size(); ++i) pos.emplace(frames[i].frame_id, i);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto ranked = index.query_topk(frames[i].features.global, opts.pairs_per_frame + 1);
    for (const ScoredFrame& s : ranked) {
      const std::size_t j = pos.at(s.frame_id);
      if (j != i) pairs.emplace(std::min(i, j), std::max(i, j));
    }
  }

  std::vector<PairMatches> out;
  out.reserve(pairs.size());
  for (const auto& [i, j] : pairs) {
    const MapFrame& a = frames[i];
    const MapFrame& b = frames[j];
    MatchSet ms{a.frame_id, b.frame_id,
                match_mutual_nn(a.features.descriptors, b.features.descriptors, opts.ratio)};
    if (ms.matches.empty()) continue;
    out.push_back(PairMatches{a.frame_id, b.frame_id, std::move(ms)});
  }
  return out;
}

std::vector<PairMatches> pair_matches_from_records(const std::vector<MapFrame>& frames,
                                                   const std::vector<MatchRecord>& records,
                                                   double dedup_radius) {
  std::unordered_map<std::string, const MapFrame*> by_id;
  for (const MapFrame& f : frames) by_id.emplace(f.frame_id, &f);
  auto lookup = [&](const std::string& id) -> const MapFrame& {
    const auto it = by_id.find(id);
    if (it == by_id.end()) fail(ErrorCategory::kNotFound, "match record names unknown frame '" + id + "'");
    return *it->second;
  };

  std::vector<PairMatches> out;
  for (auto& [key, sets] : group_match_records(records)) {
    const MapFrame& a = lookup(key.first);
    const MapFrame& b = lookup(key.second);
    const auto na = static_cast<int>(a.features.keypoints.size());
    const auto nb = static_cast<int>(b.features.keypoints.size());
    for (MatchSet& s : sets) {
      for (const Match& m : s.matches) {
        if (m.query_idx >= na || m.map_idx >= nb) {
          fail(ErrorCategory::kSchema, "match index out of range for pair " + key.first + " / " + key.second);
        }
      }
      s = normalize_confidences(std::move(s));
    }
    MatchSet fused = fuse_matches(sets, a.features.keypoints, b.features.keypoints, dedup_radius);
    if (fused.matches.empty()) continue;
    out.push_back(PairMatches{key.first, key.second, std::move(fused)});
  }
  return out;
}

MapDatabase build_map_from_frames(std::vector<MapFrame> frames, const MappingOptions& opts) {
  const auto pairs = match_map_pairs(frames, opts);
  return build_map(std::move(frames), pairs, opts.build);
}

}  // namespace xloc
