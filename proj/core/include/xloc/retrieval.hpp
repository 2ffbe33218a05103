#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "xloc/frame.hpp"

namespace xloc {

inline constexpr std::size_t kDefaultTopK = 100;
inline constexpr int kStoreFormatVersionIndex = 1;

struct ScoredFrame {
  std::string frame_id;
  double score = 0.0;
  bool operator==(const ScoredFrame&) const = default;
};

// Exact cosine-similarity search over unit-normalized global descriptors.
// Immutable after construction; concurrent queries are safe.
class RetrievalIndex {
 public:
  RetrievalIndex() = default;
  // Rows are L2-normalized. Throws kInvalidArgument on a dimension mismatch,
  // a zero or non-finite descriptor, or duplicate ids.
  RetrievalIndex(std::vector<std::string> ids, DescriptorMatrix descriptors);

  std::size_t size() const { return ids_.size(); }
  Eigen::Index dim() const { return rows_.cols(); }
  const std::vector<std::string>& ids() const { return ids_; }
  const DescriptorMatrix& rows() const { return rows_; }

  // Ranked by descending cosine score, ties by ascending frame id; length
  // min(k, size()). Throws kInvalidArgument when dim(q) != dim().
  std::vector<ScoredFrame> query_topk(const GlobalDescriptor& q, std::size_t k = kDefaultTopK) const;

 private:
  std::vector<std::string> ids_;
  DescriptorMatrix rows_;
};

RetrievalIndex index_build(std::span<const MapFrame> frames);

// retrieval.json (ids, dim) + retrieval.f32 (rows, little-endian float32).
void save_index(const RetrievalIndex& index, const std::filesystem::path& dir);
RetrievalIndex load_index(const std::filesystem::path& dir);

}  // namespace xloc
