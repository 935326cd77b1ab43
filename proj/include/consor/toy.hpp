#pragma once

// Deterministic toy task in frozen-feature space. Each image carries one
// relation label shared by all of its ordered person pairs. The label's
// prototype is added to the grid cells under every person box with a
// strength that grows with depth (none at layer 0 or in the pixels), and
// the class sentence's joint embedding is added to the global token.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <json.hpp>

#include "consor/dataset.hpp"
#include "consor/encoder.hpp"
#include "consor/fixture_provider.hpp"
#include "consor/prompts.hpp"

namespace consor {

struct ToySpec {
  int n_images = 64;
  int persons_per_image = 3;
  int num_classes = 3;
  std::uint64_t seed = 0;
  EncoderConfig encoder = EncoderConfig::miniature();
  double class_separation = 2.0;
  std::filesystem::path corpora_dir;  // bundled corpora when empty
  std::vector<CorpusKind> corpora = all_corpus_kinds();

  void validate() const;
  nlohmann::json to_json() const;
  static ToySpec from_json(const nlohmann::json& j);
};

struct ToyData {
  Dataset dataset;
  FixtureSet fixtures;  // images, prompts, class sentences, vocab prompts
  PromptBank prompts;
  std::vector<VisualVocabSelection> selections;
  std::vector<Mat> prototypes;  // [1, r^v] per class
};

/// The builtin taxonomy with `num_classes` classes when one exists, else
/// "toy-C" with classes "relation 0", "relation 1", ...
RelationTaxonomy toy_taxonomy(int num_classes);

ToyData generate_toy_dataset(const ToySpec& spec);

/// Writes fixtures under <dir>/fixtures, plus annotations.json, prompts.json,
/// vocabs.json and toy_spec.json.
void write_toy_dataset(const ToyData& data, const ToySpec& spec, const std::filesystem::path& dir);

}  // namespace consor
