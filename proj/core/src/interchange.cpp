#include "xloc/interchange.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>

#include "io_util.hpp"

namespace xloc {

namespace fs = std::filesystem;
using io::json;

namespace {

constexpr auto kSchema = ErrorCategory::kSchema;
constexpr auto kCorrupt = ErrorCategory::kCorruptStore;

json read_manifest(const fs::path& path, const char* kind) {
  if (!fs::exists(path)) fail(kCorrupt, "missing manifest " + path.string());
  json m = io::read_json(path, kCorrupt);
  if (!m.is_object() || !m.contains("format_version") || !m.at("format_version").is_number_integer()) {
    fail(kSchema, path.string() + " lacks an integer format_version");
  }
  if (m.at("format_version").get<int>() != kInterchangeFormatVersion) {
    fail(ErrorCategory::kVersionMismatch, path.string() + ": unsupported format_version");
  }
  if (io::get_field<std::string>(m, "kind", kSchema) != kind) {
    fail(kSchema, path.string() + std::string(": kind is not '") + kind + "'");
  }
  return m;
}

std::string numbered(const char* prefix, std::size_t i, const char* suffix) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s%06zu%s", prefix, i, suffix);
  return buf;
}

bool all_finite(const std::vector<float>& v) {
  for (float x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace

void save_feature_file(const FeatureFile& features, const fs::path& dir) {
  fs::create_directories(dir);
  json images = json::array();
  std::size_t i = 0;
  for (const auto& [id, rec] : features) {
    const std::size_t n = rec.keypoints.size();
    std::vector<float> kp;
    std::vector<float> scores;
    kp.reserve(2 * n);
    scores.reserve(n);
    for (const Keypoint& k : rec.keypoints) {
      kp.push_back(k.u);
      kp.push_back(k.v);
      scores.push_back(k.score);
    }
    const std::string stem = numbered("img", i++, "");
    io::write_array<float>(dir / (stem + ".kp.f32"), kp);
    io::write_array<float>(dir / (stem + ".desc.f32"),
                           std::span<const float>(rec.descriptors.data(), static_cast<std::size_t>(rec.descriptors.size())));
    io::write_array<float>(dir / (stem + ".scores.f32"), scores);
    io::write_array<float>(dir / (stem + ".global.f32"),
                           std::span<const float>(rec.global.data(), static_cast<std::size_t>(rec.global.size())));
    images.push_back(json{{"id", id},
                          {"num_keypoints", n},
                          {"descriptor_dim", rec.descriptors.cols()},
                          {"global_dim", rec.global.size()},
                          {"keypoints", stem + ".kp.f32"},
                          {"descriptors", stem + ".desc.f32"},
                          {"scores", stem + ".scores.f32"},
                          {"global", stem + ".global.f32"}});
  }
  io::write_json(dir / "features.json",
                 json{{"format_version", kInterchangeFormatVersion}, {"kind", "features"}, {"images", images}});
}

FeatureFile load_feature_file(const fs::path& dir) {
  const json m = read_manifest(dir / "features.json", "features");
  if (!m.contains("images") || !m.at("images").is_array()) fail(kSchema, "features.json lacks images");
  FeatureFile out;
  for (const json& img : m.at("images")) {
    const auto id = io::get_field<std::string>(img, "id", kSchema);
    const auto n = io::get_field<std::size_t>(img, "num_keypoints", kSchema);
    const auto d = io::get_field<std::size_t>(img, "descriptor_dim", kSchema);
    const auto g = io::get_field<std::size_t>(img, "global_dim", kSchema);
    const auto kp = io::read_array<float>(dir / io::get_field<std::string>(img, "keypoints", kSchema), 2 * n);
    const auto desc = io::read_array<float>(dir / io::get_field<std::string>(img, "descriptors", kSchema), n * d);
    const auto scores = io::read_array<float>(dir / io::get_field<std::string>(img, "scores", kSchema), n);
    const auto glob = io::read_array<float>(dir / io::get_field<std::string>(img, "global", kSchema), g);
    if (!all_finite(kp) || !all_finite(desc) || !all_finite(scores) || !all_finite(glob)) {
      fail(kSchema, "image '" + id + "' contains non-finite values");
    }
    FeatureRecord rec;
    rec.keypoints.resize(n);
    for (std::size_t k = 0; k < n; ++k) rec.keypoints[k] = {kp[2 * k], kp[2 * k + 1], scores[k]};
    rec.descriptors = Eigen::Map<const DescriptorMatrix>(desc.data(), static_cast<Eigen::Index>(n),
                                                         static_cast<Eigen::Index>(d));
    rec.global = Eigen::Map<const GlobalDescriptor>(glob.data(), static_cast<Eigen::Index>(g));
    if (g > 0 && std::abs(rec.global.cast<double>().norm() - 1.0) > 1e-5) {
      fail(kSchema, "image '" + id + "' has a global descriptor that is not unit norm");
    }
    if (!out.emplace(id, std::move(rec)).second) fail(kSchema, "duplicate image id '" + id + "'");
  }
  return out;
}

void save_match_file(const std::vector<MatchRecord>& records, const fs::path& dir) {
  fs::create_directories(dir);
  json pairs = json::array();
  for (std::size_t i = 0; i < records.size(); ++i) {
    const MatchRecord& r = records[i];
    std::vector<std::int32_t> idx;
    std::vector<float> conf;
    idx.reserve(2 * r.matches.size());
    for (const Match& m : r.matches) {
      idx.push_back(m.query_idx);
      idx.push_back(m.map_idx);
      conf.push_back(m.confidence);
    }
    const std::string stem = numbered("pair", i, "");
    io::write_array<std::int32_t>(dir / (stem + ".idx.i32"), idx);
    io::write_array<float>(dir / (stem + ".conf.f32"), conf);
    pairs.push_back(json{{"image0", r.image0},
                         {"image1", r.image1},
                         {"source", r.source},
                         {"num_matches", r.matches.size()},
                         {"indices", stem + ".idx.i32"},
                         {"confidences", stem + ".conf.f32"}});
  }
  io::write_json(dir / "matches.json",
                 json{{"format_version", kInterchangeFormatVersion}, {"kind", "matches"}, {"pairs", pairs}});
}

std::vector<MatchRecord> load_match_file(const fs::path& dir) {
  const json m = read_manifest(dir / "matches.json", "matches");
  if (!m.contains("pairs") || !m.at("pairs").is_array()) fail(kSchema, "matches.json lacks pairs");
  std::vector<MatchRecord> out;
  for (const json& p : m.at("pairs")) {
    MatchRecord r;
    r.image0 = io::get_field<std::string>(p, "image0", kSchema);
    r.image1 = io::get_field<std::string>(p, "image1", kSchema);
    r.source = io::get_field<std::string>(p, "source", kSchema);
    const auto count = io::get_field<std::size_t>(p, "num_matches", kSchema);
    const auto idx = io::read_array<std::int32_t>(dir / io::get_field<std::string>(p, "indices", kSchema), 2 * count);
    const auto conf = io::read_array<float>(dir / io::get_field<std::string>(p, "confidences", kSchema), count);
    for (std::size_t k = 0; k < count; ++k) {
      if (idx[2 * k] < 0 || idx[2 * k + 1] < 0) fail(kSchema, "negative keypoint index in match file");
      if (!(conf[k] >= 0.0F && conf[k] <= 1.0F)) fail(kSchema, "match confidence outside [0, 1]");
      r.matches.push_back({idx[2 * k], idx[2 * k + 1], conf[k], r.source});
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::map<std::pair<std::string, std::string>, std::vector<MatchSet>> group_match_records(
    const std::vector<MatchRecord>& records) {
  std::map<std::pair<std::string, std::string>, std::vector<MatchSet>> out;
  for (const MatchRecord& r : records) {
    auto& sets = out[{r.image0, r.image1}];
    sets.push_back(MatchSet{r.image0, r.image1, r.matches});
  }
  return out;
}

}  // namespace xloc
