#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "consor/model.hpp"
#include "consor/toy.hpp"
#include "consor/train.hpp"

namespace consor {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// One JSON file describing a run; command-line flags override fields.
///   {"taxonomy", "provider": "fixture"|"synthetic", "seed",
///    "paths": {"annotations", "fixtures", "corpora", "prompts", "output"},
///    "corpora_subset": [...], "fusion_layers": "default"|"none"|"9,12",
///    "model": {...}, "train": {...}, "toy": {...}}
/// Relative paths resolve against the config file's directory.
struct RunConfig {
  std::optional<std::string> taxonomy;
  std::string provider = "fixture";
  std::uint64_t seed = 0;
  std::filesystem::path annotations;
  std::filesystem::path fixtures;
  std::filesystem::path corpora;
  std::filesystem::path prompts;
  std::filesystem::path output;
  std::vector<CorpusKind> corpora_subset = all_corpus_kinds();
  ModelConfig model = ModelConfig::miniature();
  TrainConfig train;
  ToySpec toy;

  nlohmann::json to_json() const;
  /// Throws ConfigError on unknown keys or invalid values.
  static RunConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  std::string hash() const;
};

RunConfig load_run_config(const std::filesystem::path& path);

std::vector<CorpusKind> parse_corpora_subset(const std::string& csv);

}  // namespace consor
