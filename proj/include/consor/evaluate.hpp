#pragma once

#include <string>

#include "consor/metrics.hpp"
#include "consor/model.hpp"

namespace consor {

enum class EvalMode { standard, zeroshot };
std::string to_string(EvalMode m);
EvalMode eval_mode_from_string(const std::string& s);

/// Softmax of the model logits for every sample of `ds`, in dataset order.
ScoreTable score_model(const ConsorModel& model, const Dataset& ds, const PromptBank& bank, FeatureCache& cache,
                       double logit_scale, std::size_t chunk = 64);

/// Frozen-encoder baseline: softmax(100 * cos(image, class sentence)) with
/// one class-sentence prompt per relation. Pairs of an image share scores.
ScoreTable score_zeroshot(const Dataset& ds, const EncoderProvider& provider);

/// Reports every image or prompt a provider cannot serve; empty when
/// `ds` can be scored.
std::vector<std::string> missing_inputs(const Dataset& ds, const PromptBank* bank, const EncoderProvider& provider,
                                        EvalMode mode);

MetricsReport evaluate_model(const ConsorModel& model, const Dataset& ds, const PromptBank& bank,
                             FeatureCache& cache, double logit_scale, ScoreTable* table = nullptr);
MetricsReport evaluate_zeroshot(const Dataset& ds, const EncoderProvider& provider, ScoreTable* table = nullptr);

}  // namespace consor
