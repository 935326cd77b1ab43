#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "consor/cir.hpp"
#include "consor/dataset.hpp"
#include "consor/encoder.hpp"
#include "consor/msat.hpp"
#include "consor/prompts.hpp"

namespace consor {

struct ModelConfig {
  EncoderConfig encoder;
  MsatConfig msat;
  CirConfig cir;
  double init_std = 0.02;

  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  /// Miniature encoder with a 48-wide side network; the schedule is the
  /// standard one scaled to the encoder depth.
  static ModelConfig miniature();
};

/// Memoizes provider reads; the encoders are frozen so entries never go
/// stale.
class FeatureCache {
 public:
  explicit FeatureCache(const EncoderProvider& provider) : provider_(provider) {}

  const VisualFeatures& visual(const std::string& image_id);
  const TextFeatures& text(const std::string& text);
  const EncoderProvider& provider() const { return provider_; }

 private:
  const EncoderProvider& provider_;
  std::map<std::string, VisualFeatures> visual_;
  std::map<std::string, TextFeatures> text_;
};

struct ImagePass {
  Var v_sn;     // [L^v, d]
  Var persons;  // [N, d] after interpersonal reasoning
  Var cls;      // [1, joint_dim], frozen
};

/// Per-sample outputs of a batched forward pass, in request order.
struct BatchForward {
  Var loss;  // mean cross-entropy; only set when labels were used
  std::vector<Var> logits;
};

class ConsorModel {
 public:
  ConsorModel(ModelConfig config, std::uint64_t seed);
  ConsorModel(const ConsorModel&) = delete;
  ConsorModel& operator=(const ConsorModel&) = delete;

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  const SideAdapter& msat() const { return *msat_; }
  const CirModule& cir() const { return *cir_; }

  ImagePass encode_image(Tape& tape, const VisualFeatures& vf, const std::vector<PersonBox>& persons) const;
  /// U for the ordered pair (i, j) as [1, d].
  Var pair_feature(Tape& tape, const ImagePass& pass, const std::vector<PersonBox>& persons, int i, int j,
                   AttentionTrace* trace = nullptr) const;
  /// Embedded prompts stacked as [C, d].
  Var prompt_embeddings(Tape& tape, const std::vector<const TextFeatures*>& prompts) const;

  /// Runs every sample, grouping work per image and encoding each distinct
  /// prompt text once. `class_weights` (optional) scales each sample's loss.
  BatchForward forward(Tape& tape, const Dataset& ds, const PromptBank& bank, FeatureCache& cache,
                       const std::vector<const PairSample*>& samples, double logit_scale, bool with_loss,
                       const std::vector<double>* class_weights = nullptr) const;

 private:
  ModelConfig config_;
  ParamStore store_;
  std::unique_ptr<SideAdapter> msat_;
  std::unique_ptr<CirModule> cir_;
};

}  // namespace consor
