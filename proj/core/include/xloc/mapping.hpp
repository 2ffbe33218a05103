#pragma once

#include <vector>

#include "xloc/interchange.hpp"
#include "xloc/map_store.hpp"
#include "xloc/matching.hpp"

namespace xloc {

struct MappingOptions {
  // Each frame is matched against this many retrieval neighbours.
  std::size_t pairs_per_frame = 10;
  double ratio = kDefaultRatio;
  double dedup_radius = kDefaultDedupRadiusPx;
  MapBuildOptions build;
};

// Pairs every frame with its nearest retrieval neighbours (unordered pairs,
// each once, sorted) and matches them with mutual nearest neighbours.
std::vector<PairMatches> match_map_pairs(const std::vector<MapFrame>& frames, const MappingOptions& opts = {});

// Turns imported match records between map frames into pair matches. Records
// of one pair from several sources are normalized and fused. Throws kNotFound
// for a record naming an unknown frame and kSchema for an index out of range.
std::vector<PairMatches> pair_matches_from_records(const std::vector<MapFrame>& frames,
                                                   const std::vector<MatchRecord>& records,
                                                   double dedup_radius = kDefaultDedupRadiusPx);

// match_map_pairs followed by build_map.
MapDatabase build_map_from_frames(std::vector<MapFrame> frames, const MappingOptions& opts = {});

}  // namespace xloc
