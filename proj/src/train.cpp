#include "consor/train.hpp"

#include <cmath>
#include <numeric>

#include "consor/util.hpp"

namespace consor {

void TrainConfig::validate() const {
  if (!(lr >= 0.0) || !(weight_decay >= 0.0)) throw std::invalid_argument("lr and weight_decay must be >= 0");
  if (epochs < 1 || batch_size < 1) throw std::invalid_argument("epochs and batch_size must be >= 1");
  if (!(logit_scale > 0.0)) throw std::invalid_argument("logit_scale must be positive");
  for (double w : class_weights) {
    if (!(w > 0.0)) throw std::invalid_argument("class weights must be positive");
  }
}

nlohmann::json TrainConfig::to_json() const {
  nlohmann::json j = {{"lr", lr}, {"weight_decay", weight_decay}, {"epochs", epochs},
                      {"batch_size", batch_size}, {"logit_scale", logit_scale}, {"seed", seed}};
  if (!class_weights.empty()) j["class_weights"] = class_weights;
  return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.lr = j.value("lr", c.lr);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.logit_scale = j.value("logit_scale", c.logit_scale);
  c.seed = j.value("seed", c.seed);
  if (j.contains("class_weights")) c.class_weights = j.at("class_weights").get<std::vector<double>>();
  c.validate();
  return c;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(epoch) + 0x5eedULL));
  rng.shuffle(order.begin(), order.end());
  return order;
}

Trainer::Trainer(ConsorModel& model, const Dataset& ds, const PromptBank& bank, FeatureCache& cache,
                 TrainConfig config)
    : model_(model), ds_(ds), bank_(bank), cache_(cache), config_(std::move(config)) {
  config_.validate();
  if (!config_.class_weights.empty() && config_.class_weights.size() != ds_.taxonomy.size()) {
    throw std::invalid_argument("class_weights must have one entry per class");
  }
  AdamWConfig oc;
  oc.weight_decay = config_.weight_decay;
  opt_ = AdamW(oc);
}

std::int64_t Trainer::steps_per_epoch() const {
  const auto n = static_cast<std::int64_t>(ds_.samples.size());
  return (n + config_.batch_size - 1) / config_.batch_size;
}

StepMetrics Trainer::train_step(const std::vector<const PairSample*>& batch, double lr) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  model_.params().zero_grad();
  Tape tape;
  const auto* weights = config_.class_weights.empty() ? nullptr : &config_.class_weights;
  BatchForward fwd = model_.forward(tape, ds_, bank_, cache_, batch, config_.logit_scale, true, weights);
  const double loss = fwd.loss.value()(0, 0);

  StepMetrics m;
  m.step = step_;
  m.epoch = epoch_;
  m.loss = loss;
  m.lr = lr;
  if (!std::isfinite(loss)) {
    nlohmann::json dump = {{"step", step_}, {"epoch", epoch_}, {"lr", lr}, {"loss", std::to_string(loss)}};
    nlohmann::json keys = nlohmann::json::array();
    for (const PairSample* s : batch) keys.push_back(s->key());
    dump["samples"] = keys;
    nlohmann::json norms = nlohmann::json::object();
    for (const Parameter* p : model_.params().all()) norms[p->name] = p->value.norm();
    dump["param_norms"] = norms;
    throw NonFiniteLossError("non-finite loss at step " + std::to_string(step_), dump);
  }
  int correct = 0;
  for (std::size_t k = 0; k < batch.size(); ++k) {
    Eigen::Index best = 0;
    fwd.logits[k].value().row(0).maxCoeff(&best);
    if (best == batch[k]->label) ++correct;
  }
  m.accuracy = static_cast<double>(correct) / static_cast<double>(batch.size());

  tape.backward(fwd.loss);
  opt_.step(model_.params().all(), lr);
  ++step_;
  return m;
}

std::vector<StepMetrics> Trainer::run() {
  std::vector<StepMetrics> curve;
  const std::int64_t total = total_steps();
  const auto bs = static_cast<std::size_t>(config_.batch_size);
  for (int e = epoch_; e < config_.epochs; ++e) {
    epoch_ = e;
    const auto order = epoch_order(ds_.samples.size(), config_.seed, e);
    const std::int64_t first = static_cast<std::int64_t>(e) * steps_per_epoch();
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::int64_t global = first + static_cast<std::int64_t>(start / bs);
      if (global < step_) continue;  // resumed run
      std::vector<const PairSample*> batch;
      for (std::size_t k = start; k < std::min(order.size(), start + bs); ++k) batch.push_back(&ds_.samples[order[k]]);
      StepMetrics m = train_step(batch, cosine_lr(config_.lr, global, total));
      log_event("train.step", {{"step", m.step}, {"epoch", m.epoch}, {"loss", m.loss}, {"lr", m.lr},
                               {"acc", m.accuracy}});
      curve.push_back(m);
    }
  }
  epoch_ = config_.epochs;
  return curve;
}

}  // namespace consor
