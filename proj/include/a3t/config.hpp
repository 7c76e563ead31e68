#pragma once

#include "a3t/dsp.hpp"
#include "a3t/model.hpp"
#include "a3t/training.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace a3t {

using Json = nlohmann::ordered_json;

struct PathsConfig {
  std::string vocab;
  std::string manifest;
  std::string output_dir;
  bool operator==(const PathsConfig&) const = default;
};

struct RunConfig {
  AudioConfig audio;
  ModelConfig model;
  TrainConfig train;
  PathsConfig paths;
  std::uint64_t seed = 1;

  bool operator==(const RunConfig& o) const;
};

// Each from_json rejects unknown keys and wrong types (UsageError) and keeps
// defaults for missing keys.
Json to_json(const AudioConfig& c);
Json to_json(const ModelConfig& c);
Json to_json(const TrainConfig& c);
Json to_json(const RunConfig& c);
AudioConfig audio_config_from_json(const Json& j);
ModelConfig model_config_from_json(const Json& j);
TrainConfig train_config_from_json(const Json& j);
RunConfig run_config_from_json(const Json& j);

RunConfig parse_config_text(const std::string& text);
RunConfig parse_config(const std::filesystem::path& path);
std::string serialize_config(const RunConfig& c);

/// Throws UsageError naming the first empty path among `names`
/// ("vocab", "manifest", "output_dir").
void require_paths(const RunConfig& c, const std::vector<std::string>& names);

}  // namespace a3t
