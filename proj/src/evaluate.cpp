#include "consor/evaluate.hpp"

#include <stdexcept>

#include "consor/fixture_provider.hpp"
#include "consor/head.hpp"

namespace consor {

std::string to_string(EvalMode m) { return m == EvalMode::zeroshot ? "zeroshot" : "standard"; }

EvalMode eval_mode_from_string(const std::string& s) {
  if (s == "standard") return EvalMode::standard;
  if (s == "zeroshot") return EvalMode::zeroshot;
  throw std::invalid_argument("unknown eval mode '" + s + "' (valid: standard, zeroshot)");
}

namespace {

ScoreRow make_row(const PairSample& s, const Eigen::RowVectorXd& logits) {
  Eigen::RowVectorXd p = softmax(logits);
  return {s.key(), s.label, std::vector<double>(p.data(), p.data() + p.size())};
}

}  // namespace

ScoreTable score_model(const ConsorModel& model, const Dataset& ds, const PromptBank& bank, FeatureCache& cache,
                       double logit_scale, std::size_t chunk) {
  ScoreTable table;
  table.num_classes = static_cast<int>(ds.taxonomy.size());
  for (std::size_t start = 0; start < ds.samples.size(); start += chunk) {
    std::vector<const PairSample*> part;
    for (std::size_t k = start; k < std::min(ds.samples.size(), start + chunk); ++k) part.push_back(&ds.samples[k]);
    Tape tape(false);
    BatchForward fwd = model.forward(tape, ds, bank, cache, part, logit_scale, false);
    for (std::size_t k = 0; k < part.size(); ++k) table.rows.push_back(make_row(*part[k], fwd.logits[k].value().row(0)));
  }
  return table;
}

ScoreTable score_zeroshot(const Dataset& ds, const EncoderProvider& provider) {
  ScoreTable table;
  table.num_classes = static_cast<int>(ds.taxonomy.size());
  Mat classes(table.num_classes, provider.config().joint_dim);
  for (int c = 0; c < table.num_classes; ++c) {
    classes.row(c) = provider.text_embedding(class_sentence(ds.taxonomy[static_cast<std::size_t>(c)])).transpose();
  }
  std::map<std::string, Eigen::RowVectorXd> logits;
  for (const auto& s : ds.samples) {
    auto it = logits.find(s.image_id);
    if (it == logits.end()) {
      Eigen::RowVectorXd z = 100.0 * (classes * provider.image_embedding(s.image_id)).transpose();
      it = logits.emplace(s.image_id, z).first;
    }
    table.rows.push_back(make_row(s, it->second));
  }
  return table;
}

std::vector<std::string> missing_inputs(const Dataset& ds, const PromptBank* bank, const EncoderProvider& provider,
                                        EvalMode mode) {
  const auto* fixtures = dynamic_cast<const FixtureProvider*>(&provider);
  std::vector<std::string> missing;
  if (fixtures == nullptr) return missing;
  for (const auto& image : ds.images) {
    if (!fixtures->has_image(image.image_id)) missing.push_back("image:" + image.image_id);
  }
  if (mode == EvalMode::zeroshot) {
    for (const auto& r : ds.taxonomy.classes()) {
      if (!fixtures->has_text(class_sentence(r))) missing.push_back("text:" + class_sentence(r));
    }
  } else if (bank != nullptr) {
    for (const auto& image : ds.images) {
      auto it = bank->prompts.find(image.image_id);
      if (it == bank->prompts.end()) {
        missing.push_back("prompts:" + image.image_id);
        continue;
      }
      for (const auto& text : it->second) {
        if (!fixtures->has_text(text)) missing.push_back("text:" + text);
      }
    }
  }
  return missing;
}

MetricsReport evaluate_model(const ConsorModel& model, const Dataset& ds, const PromptBank& bank,
                             FeatureCache& cache, double logit_scale, ScoreTable* table) {
  auto missing = missing_inputs(ds, &bank, cache.provider(), EvalMode::standard);
  if (!missing.empty()) throw MissingFeatureError(missing);
  ScoreTable t = score_model(model, ds, bank, cache, logit_scale);
  MetricsReport r = compute_metrics(t, ds.taxonomy.name(), "standard");
  if (table != nullptr) *table = std::move(t);
  return r;
}

MetricsReport evaluate_zeroshot(const Dataset& ds, const EncoderProvider& provider, ScoreTable* table) {
  auto missing = missing_inputs(ds, nullptr, provider, EvalMode::zeroshot);
  if (!missing.empty()) throw MissingFeatureError(missing);
  ScoreTable t = score_zeroshot(ds, provider);
  MetricsReport r = compute_metrics(t, ds.taxonomy.name(), "zeroshot");
  if (table != nullptr) *table = std::move(t);
  return r;
}

}  // namespace consor
