#include "xloc/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <sstream>
#include <thread>

#include "xloc/errors.hpp"

namespace xloc {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t substream(std::uint64_t seed, std::uint64_t k) { return splitmix64(seed ^ splitmix64(k)); }

constexpr std::uint64_t kRansacStream = 1;
constexpr std::uint64_t kNeuralStream = 2;
constexpr std::uint64_t kRerunStream = 3;

std::vector<Correspondence2D3D> classical_correspondences(const QueryFrame& query,
                                                          const std::vector<ScoredFrame>& retrieved,
                                                          const LocalizationInputs& in, const PipelineConfig& cfg) {
  std::vector<Correspondence2D3D> all;
  for (const ScoredFrame& cand : retrieved) {
    const MapFrame& mf = in.db->frame(cand.frame_id);
    std::vector<MatchSet> sets;
    for (const MatcherSource& src : cfg.sources) {
      MatchSet ms{query.frame_id, cand.frame_id, {}};
      if (src.kind == MatcherKind::kMutualNN) {
        ms.matches = match_mutual_nn(query.features.descriptors, mf.features.descriptors, src.ratio, src.tag);
      } else if (in.imported != nullptr) {
        const auto it = in.imported->find({query.frame_id, cand.frame_id});
        if (it != in.imported->end()) {
          for (const MatchSet& s : it->second) {
            for (const Match& m : s.matches) {
              if (m.source == src.tag) ms.matches.push_back(m);
            }
          }
        }
      }
      if (!ms.matches.empty()) sets.push_back(normalize_confidences(std::move(ms)));
    }
    if (sets.empty()) continue;
    const MatchSet fused = fuse_matches(sets, query.features.keypoints, mf.features.keypoints, cfg.dedup_radius);
    auto lifted = lift_to_2d3d(fused, *in.db, query.features.keypoints);
    all.insert(all.end(), lifted.begin(), lifted.end());
  }
  return pool_correspondences(std::move(all));
}

LocalizationContext make_context(const QueryFrame& query, std::size_t query_index, const LocalizationInputs& in,
                                 const std::vector<std::string>& candidate_ids, const Pose& reference,
                                 const DepthFilterConfig& depth_cfg) {
  LocalizationContext ctx;
  ctx.query.frame_id = query.frame_id;
  ctx.query.intrinsics = query.intrinsics;
  ctx.query.depth = query.depth;
  if (in.query_dir && query.depth) ctx.query.depth_ref = (*in.query_dir / frame_depth_file(query_index)).string();

  std::vector<const MapFrame*> frames;
  frames.reserve(candidate_ids.size());
  for (const std::string& id : candidate_ids) frames.push_back(&in.db->frame(id));
  auto conditioned = condition_depth(frames, reference, depth_cfg);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const MapFrame& f = *frames[i];
    CandidateView v{f.frame_id, f.intrinsics, f.pose, std::move(conditioned[i]), {}};
    if (in.db->source_dir() && f.depth) {
      v.depth_ref = (*in.db->source_dir() / frame_depth_file(*in.db->frame_index(f.frame_id))).string();
    }
    ctx.candidates.push_back(std::move(v));
  }
  return ctx;
}

std::string describe_failure(const HybridResult& r, int gate, bool has_neural) {
  std::ostringstream os;
  os << "pnp: ";
  if (r.pnp) {
    os << r.pnp->num_inliers << " inliers <= gate " << gate;
  } else if (r.pnp_failure) {
    os << to_string(*r.pnp_failure);
  }
  os << "; neural: ";
  if (!has_neural) {
    os << "disabled";
  } else if (r.neural_first && !r.neural_first->error.empty()) {
    os << r.neural_first->error;
  } else {
    os << "invalid estimate";
  }
  return os.str();
}

}  // namespace

void PipelineConfig::validate() const {
  auto bad = [](const std::string& msg) { fail(ErrorCategory::kInvalidArgument, msg); };
  if (top_k < 1) bad("top_k must be >= 1");
  if (!(prune_radius > 0.0)) bad("prune_radius must be positive");
  if (inlier_gate < 0) bad("inlier_gate must be >= 0");
  if (!(dedup_radius >= 0.0)) bad("dedup_radius must be >= 0");
  if (!(pre_filter_radius > 0.0)) bad("pre_filter_radius must be positive");
  if (sources.empty()) bad("at least one matcher source is required");
  for (std::size_t i = 0; i < sources.size(); ++i) {
    if (sources[i].tag.empty()) bad("matcher source tag is empty");
    if (!(sources[i].ratio > 0.0 && sources[i].ratio <= 1.0)) bad("matcher ratio must lie in (0, 1]");
    for (std::size_t j = 0; j < i; ++j) {
      if (sources[j].tag == sources[i].tag) bad("duplicate matcher source '" + sources[i].tag + "'");
    }
  }
  ransac.validate();
  depth_filter.validate();
}

std::string_view to_string(Branch b) {
  switch (b) {
    case Branch::kNone: return "none";
    case Branch::kPnP: return "pnp";
    case Branch::kNeural: return "neural";
    case Branch::kNeuralRerun: return "neural_rerun";
  }
  return "none";
}

Branch branch_from_string(std::string_view name) {
  for (Branch b : {Branch::kNone, Branch::kPnP, Branch::kNeural, Branch::kNeuralRerun}) {
    if (to_string(b) == name) return b;
  }
  fail(ErrorCategory::kSchema, "unknown branch '" + std::string(name) + "'");
}

std::optional<HybridSelection> select_hybrid_pose(const std::optional<PnPResult>& pnp,
                                                  const std::optional<NeuralPoseEstimate>& neural, int gate) {
  if (pnp && pnp->num_inliers > gate) return HybridSelection{pnp->pose, Branch::kPnP};
  if (neural && neural->valid) return HybridSelection{neural->pose, Branch::kNeural};
  return std::nullopt;
}

std::vector<std::string> prune_candidates(std::span<const std::pair<std::string, Pose>> candidates,
                                          const Vec3& query_center, double radius) {
  std::vector<std::string> kept;
  for (const auto& [id, pose] : candidates) {
    if ((pose.center() - query_center).norm() <= radius) kept.push_back(id);
  }
  return kept;
}

HybridResult localize_query(const QueryFrame& query, std::size_t query_index, const LocalizationInputs& in,
                            const PipelineConfig& cfg, std::uint64_t seed) {
  if (in.db == nullptr || in.index == nullptr) fail(ErrorCategory::kPrecondition, "pipeline needs a map and an index");
  HybridResult r;
  r.query_id = query.frame_id;

  // (1) retrieval
  if (in.index->size() == 0) {
    r.failure = "empty map";
    return r;
  }
  r.retrieved = in.index->query_topk(query.features.global, cfg.top_k);
  std::vector<std::pair<std::string, Pose>> candidates;
  std::vector<std::string> retrieved_ids;
  for (const ScoredFrame& s : r.retrieved) {
    candidates.emplace_back(s.frame_id, in.db->frame(s.frame_id).pose);
    retrieved_ids.push_back(s.frame_id);
  }

  // (2) classical branch
  const auto corrs = classical_correspondences(query, r.retrieved, in, cfg);
  r.num_correspondences = corrs.size();
  RansacConfig rc = cfg.ransac;
  rc.rng_seed = substream(seed, kRansacStream);
  PnPOutcome outcome = ransac_pnp(corrs, query.intrinsics, rc);
  r.pnp = std::move(outcome.result);
  r.pnp_failure = outcome.failure;

  // (3) neural branch; depth is conditioned around the best pose known so far
  if (in.neural != nullptr) {
    r.neural_candidate_ids = retrieved_ids;
    if (cfg.pre_neural_filter && r.pnp) {
      auto near = prune_candidates(candidates, r.pnp->pose.center(), cfg.pre_filter_radius);
      if (!near.empty()) r.neural_candidate_ids = std::move(near);
    }
    const Pose reference = r.pnp ? r.pnp->pose : in.db->frame(r.neural_candidate_ids.front()).pose;
    const auto ctx = make_context(query, query_index, in, r.neural_candidate_ids, reference, cfg.depth_filter);
    r.neural_first = in.neural->localize(ctx, substream(seed, kNeuralStream));
  }

  // (4) hybrid selection
  const auto selection = select_hybrid_pose(r.pnp, r.neural_first, cfg.inlier_gate);
  if (!selection) {
    r.failure = describe_failure(r, cfg.inlier_gate, in.neural != nullptr);
    return r;
  }
  r.selected_branch = selection->branch;

  // (5) pruning around the selected camera center
  r.pruned_ids = prune_candidates(candidates, selection->pose.center(), cfg.prune_radius);

  // (6) re-run on the survivors when they differ from the first pass
  if (in.neural != nullptr && !r.pruned_ids.empty() && r.pruned_ids != r.neural_candidate_ids) {
    const auto ctx = make_context(query, query_index, in, r.pruned_ids, selection->pose, cfg.depth_filter);
    r.neural_rerun = in.neural->localize(ctx, substream(seed, kRerunStream));
  }

  // (7) final pose
  if (selection->branch == Branch::kPnP) {
    r.final_pose = selection->pose;
    r.branch = Branch::kPnP;
  } else if (r.neural_rerun && r.neural_rerun->valid) {
    r.final_pose = r.neural_rerun->pose;
    r.branch = Branch::kNeuralRerun;
  } else {
    r.final_pose = selection->pose;
    r.branch = Branch::kNeural;
  }
  return r;
}

std::uint64_t query_seed(std::uint64_t run_seed, std::string_view query_id) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  auto mix = [&h](unsigned char byte) {
    h ^= byte;
    h *= 0x100000001B3ULL;
  };
  for (int i = 0; i < 8; ++i) mix(static_cast<unsigned char>(run_seed >> (8 * i)));
  for (char c : query_id) mix(static_cast<unsigned char>(c));
  return splitmix64(h);
}

std::vector<HybridResult> localize_batch(std::span<const QueryFrame> queries, const LocalizationInputs& in,
                                         const PipelineConfig& cfg, std::uint64_t run_seed, std::size_t workers) {
  cfg.validate();
  std::vector<std::size_t> order(queries.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return queries[a].frame_id < queries[b].frame_id; });
  for (std::size_t i = 1; i < order.size(); ++i) {
    if (queries[order[i]].frame_id == queries[order[i - 1]].frame_id) {
      fail(ErrorCategory::kInvalidArgument, "duplicate query id '" + queries[order[i]].frame_id + "'");
    }
  }

  std::vector<HybridResult> results(order.size());
  std::vector<std::exception_ptr> errors(order.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t k = next.fetch_add(1); k < order.size(); k = next.fetch_add(1)) {
      const QueryFrame& q = queries[order[k]];
      try {
        results[k] = localize_query(q, order[k], in, cfg, query_seed(run_seed, q.frame_id));
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  const std::size_t n = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(order.size(), 1));
  if (n == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < n; ++i) pool.emplace_back(work);
    for (std::thread& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

}  // namespace xloc
