#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "xloc/frame.hpp"
#include "xloc/map_store.hpp"
#include "xloc/matching.hpp"
#include "xloc/neural.hpp"
#include "xloc/pnp.hpp"
#include "xloc/retrieval.hpp"

namespace xloc {

enum class MatcherKind {
  kMutualNN,  // computed in-process from the frames' local descriptors
  kImported,  // read from an interchange match file
};

struct MatcherSource {
  std::string tag;
  MatcherKind kind = MatcherKind::kMutualNN;
  double ratio = kDefaultRatio;  // used by kMutualNN
  bool operator==(const MatcherSource&) const = default;
};

struct PipelineConfig {
  std::size_t top_k = kDefaultTopK;
  double prune_radius = 20.0;  // meters, inclusive
  int inlier_gate = 120;       // PnP wins with strictly more inliers
  RansacConfig ransac;         // rng_seed is replaced per query
  DepthFilterConfig depth_filter;
  double dedup_radius = kDefaultDedupRadiusPx;
  std::vector<MatcherSource> sources{{"mnn", MatcherKind::kMutualNN, kDefaultRatio}};
  // When set and PnP produced a pose, the first neural pass only sees
  // candidates within pre_filter_radius of the PnP camera center.
  bool pre_neural_filter = false;
  double pre_filter_radius = 20.0;

  // Throws kInvalidArgument when a field is out of range.
  void validate() const;
};

enum class Branch { kNone, kPnP, kNeural, kNeuralRerun };

std::string_view to_string(Branch b);
// Throws kSchema for an unknown name.
Branch branch_from_string(std::string_view name);

struct HybridResult {
  std::string query_id;
  std::optional<Pose> final_pose;
  Branch branch = Branch::kNone;
  std::vector<ScoredFrame> retrieved;
  std::size_t num_correspondences = 0;
  std::optional<PnPResult> pnp;
  std::optional<PnPFailure> pnp_failure;
  // Candidates handed to the first neural pass.
  std::vector<std::string> neural_candidate_ids;
  std::optional<NeuralPoseEstimate> neural_first;
  // Branch picked by the first hybrid selection (kNone when it failed).
  Branch selected_branch = Branch::kNone;
  // Retrieved candidates within prune_radius of the selected pose's center.
  std::vector<std::string> pruned_ids;
  std::optional<NeuralPoseEstimate> neural_rerun;
  std::optional<std::string> failure;
};

struct HybridSelection {
  Pose pose;
  Branch branch = Branch::kNone;
};

// PnP pose when it has strictly more than `gate` inliers, else the neural
// estimate when valid, else std::nullopt.
std::optional<HybridSelection> select_hybrid_pose(const std::optional<PnPResult>& pnp,
                                                  const std::optional<NeuralPoseEstimate>& neural, int gate);

// Keeps, in input order, the candidates whose camera center lies within
// `radius` (inclusive) of `query_center`.
std::vector<std::string> prune_candidates(std::span<const std::pair<std::string, Pose>> candidates,
                                          const Vec3& query_center, double radius);

// Matches imported from interchange files, keyed by (query id, map id).
using ImportedMatches = std::map<std::pair<std::string, std::string>, std::vector<MatchSet>>;

struct LocalizationInputs {
  const MapDatabase* db = nullptr;
  const RetrievalIndex* index = nullptr;
  NeuralLocalizer* neural = nullptr;        // optional
  const ImportedMatches* imported = nullptr;  // required by kImported sources
  // Directory of the query store, for depth references handed to adapters.
  std::optional<std::filesystem::path> query_dir;
};

// Retrieval, classical branch, neural branch, hybrid selection, pruning,
// neural re-run on the survivors, final selection. `query_index` is the
// query's position in its store (used only for depth references).
HybridResult localize_query(const QueryFrame& query, std::size_t query_index, const LocalizationInputs& in,
                            const PipelineConfig& cfg, std::uint64_t seed);

// Per-query seed: stable hash of the run seed and the query id.
std::uint64_t query_seed(std::uint64_t run_seed, std::string_view query_id);

// Localizes every query on `workers` threads. Results are sorted by query id
// and independent of the worker count.
std::vector<HybridResult> localize_batch(std::span<const QueryFrame> queries, const LocalizationInputs& in,
                                         const PipelineConfig& cfg, std::uint64_t run_seed,
                                         std::size_t workers = 1);

}  // namespace xloc
