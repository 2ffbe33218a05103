#include "xloc/retrieval.hpp"

#include <algorithm>
#include <unordered_set>

#include "io_util.hpp"

namespace xloc {

RetrievalIndex::RetrievalIndex(std::vector<std::string> ids, DescriptorMatrix descriptors)
    : ids_(std::move(ids)), rows_(std::move(descriptors)) {
  if (static_cast<std::size_t>(rows_.rows()) != ids_.size()) {
    fail(ErrorCategory::kInvalidArgument, "descriptor rows do not match id count");
  }
  std::unordered_set<std::string> seen;
  for (const std::string& id : ids_) {
    if (!seen.insert(id).second) fail(ErrorCategory::kInvalidArgument, "duplicate frame id '" + id + "'");
  }
  for (Eigen::Index r = 0; r < rows_.rows(); ++r) {
    const double n = rows_.row(r).cast<double>().norm();
    if (!(n > 0.0) || !std::isfinite(n)) {
      fail(ErrorCategory::kInvalidArgument, "zero or non-finite global descriptor for '" +
                                                ids_[static_cast<std::size_t>(r)] + "'");
    }
    // Rows already unit within tolerance are kept verbatim so that saving and
    // reloading an index does not perturb scores.
    if (std::abs(n - 1.0) > 1e-6) rows_.row(r) = (rows_.row(r).cast<double>() / n).cast<float>();
  }
}

std::vector<ScoredFrame> RetrievalIndex::query_topk(const GlobalDescriptor& q, std::size_t k) const {
  if (q.size() != rows_.cols()) {
    fail(ErrorCategory::kInvalidArgument, "query descriptor dimension " + std::to_string(q.size()) +
                                              " != index dimension " + std::to_string(rows_.cols()));
  }
  const Eigen::VectorXd qd = q.cast<double>();
  std::vector<ScoredFrame> scored(ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    scored[i] = {ids_[i], rows_.row(static_cast<Eigen::Index>(i)).cast<double>().dot(qd)};
  }
  const auto better = [](const ScoredFrame& a, const ScoredFrame& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.frame_id < b.frame_id;
  };
  const std::size_t n = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(), better);
  scored.resize(n);
  return scored;
}

RetrievalIndex index_build(std::span<const MapFrame> frames) {
  std::vector<std::string> ids;
  ids.reserve(frames.size());
  const Eigen::Index dim = frames.empty() ? 0 : frames.front().features.global.size();
  DescriptorMatrix rows(static_cast<Eigen::Index>(frames.size()), dim);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto& g = frames[i].features.global;
    if (g.size() != dim) {
      fail(ErrorCategory::kInvalidArgument, "global descriptor dimension mismatch at '" + frames[i].frame_id + "'");
    }
    rows.row(static_cast<Eigen::Index>(i)) = g.transpose();
    ids.push_back(frames[i].frame_id);
  }
  return RetrievalIndex(std::move(ids), std::move(rows));
}

void save_index(const RetrievalIndex& index, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  io::write_array<float>(dir / "retrieval.f32",
                         std::span<const float>(index.rows().data(), static_cast<std::size_t>(index.rows().size())));
  io::write_json(dir / "retrieval.json", io::json{{"format_version", kStoreFormatVersionIndex},
                                                  {"dim", index.dim()},
                                                  {"ids", index.ids()},
                                                  {"rows", "retrieval.f32"}});
}

RetrievalIndex load_index(const std::filesystem::path& dir) {
  constexpr auto kCorrupt = ErrorCategory::kCorruptStore;
  const auto path = dir / "retrieval.json";
  if (!std::filesystem::exists(path)) fail(kCorrupt, "missing " + path.string());
  const auto j = io::read_json(path, kCorrupt);
  if (io::get_field<int>(j, "format_version", kCorrupt) != kStoreFormatVersionIndex) {
    fail(ErrorCategory::kVersionMismatch, "unsupported retrieval index version");
  }
  auto ids = io::get_field<std::vector<std::string>>(j, "ids", kCorrupt);
  const auto dim = io::get_field<std::size_t>(j, "dim", kCorrupt);
  const auto data = io::read_array<float>(dir / io::get_field<std::string>(j, "rows", kCorrupt), ids.size() * dim);
  DescriptorMatrix rows = Eigen::Map<const DescriptorMatrix>(data.data(), static_cast<Eigen::Index>(ids.size()),
                                                             static_cast<Eigen::Index>(dim));
  return RetrievalIndex(std::move(ids), std::move(rows));
}

}  // namespace xloc
