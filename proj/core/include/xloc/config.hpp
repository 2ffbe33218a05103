#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "xloc/mapping.hpp"
#include "xloc/neural.hpp"
#include "xloc/pipeline.hpp"
#include "xloc/scene_sim.hpp"

namespace xloc {

struct EvalThresholds {
  double trans_m = 0.5;
  double rot_deg = 5.0;
};

// Everything a run depends on. Serialized as JSON with the sections
//   seed, workers, scene{...}, mapping{...}, pipeline{...}, oracle{...}, eval{...}
// Keys absent from a file keep their defaults; unknown keys are rejected. The
// scene section takes no seed of its own: simulation uses the run seed.
struct RunConfig {
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  SceneConfig scene = default_scene_config();
  MappingOptions mapping;
  PipelineConfig pipeline;
  OracleNoise oracle{1.0, 0.1, 0.0, 1e9, 0.0};
  EvalThresholds eval;

  // Validates every section; throws kInvalidArgument.
  void validate() const;
};

// Throws kSchema for malformed JSON, unknown keys or wrongly typed values.
RunConfig run_config_from_json(const std::string& text, RunConfig base = {});
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {});
std::string run_config_to_json(const RunConfig& cfg);

std::string scene_config_to_json(const SceneConfig& cfg);
SceneConfig scene_config_from_json(const std::string& text, SceneConfig base = {});

// Writes effective_config.json into `dir`.
void write_effective_config(const RunConfig& cfg, const std::filesystem::path& dir);

void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace xloc
