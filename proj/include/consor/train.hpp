#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "consor/model.hpp"
#include "consor/optim.hpp"

namespace consor {

struct TrainConfig {
  double lr = 1e-4;
  double weight_decay = 0.05;
  int epochs = 6;
  int batch_size = 32;
  double logit_scale = 1.0;
  std::uint64_t seed = 0;
  std::vector<double> class_weights;  // empty: plain cross-entropy

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct StepMetrics {
  std::int64_t step = 0;
  int epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
  double accuracy = 0.0;  // batch top-1 before the update
};

class NonFiniteLossError : public std::runtime_error {
 public:
  NonFiniteLossError(const std::string& what, nlohmann::json dump)
      : std::runtime_error(what), dump_(std::move(dump)) {}
  const nlohmann::json& dump() const { return dump_; }

 private:
  nlohmann::json dump_;
};

class Trainer {
 public:
  Trainer(ConsorModel& model, const Dataset& ds, const PromptBank& bank, FeatureCache& cache, TrainConfig config);

  /// One AdamW update on the mean batch loss at learning rate `lr`.
  StepMetrics train_step(const std::vector<const PairSample*>& batch, double lr);
  /// Seeded shuffle per epoch, cosine schedule over all steps. Each step is
  /// also logged as a "train.step" event.
  std::vector<StepMetrics> run();

  std::int64_t steps_per_epoch() const;
  std::int64_t total_steps() const { return steps_per_epoch() * config_.epochs; }
  std::int64_t step() const { return step_; }
  int epoch() const { return epoch_; }
  void set_position(std::int64_t step, int epoch) {
    step_ = step;
    epoch_ = epoch;
  }
  AdamW& optimizer() { return opt_; }
  const AdamW& optimizer() const { return opt_; }
  const TrainConfig& config() const { return config_; }

 private:
  ConsorModel& model_;
  const Dataset& ds_;
  const PromptBank& bank_;
  FeatureCache& cache_;
  TrainConfig config_;
  AdamW opt_;
  std::int64_t step_ = 0;
  int epoch_ = 0;
};

/// Order of sample indices for `epoch`: a Fisher-Yates shuffle seeded by
/// (seed, epoch).
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch);

}  // namespace consor
