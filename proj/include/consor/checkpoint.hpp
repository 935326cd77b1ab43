#pragma once

// A checkpoint is a directory holding manifest.json and tensors.fpk. Tensors
// are stored as float64, so reloading restores every parameter bit for bit.

#include <filesystem>
#include <memory>
#include <string>

#include "consor/train.hpp"

namespace consor {

std::string config_hash(const ModelConfig& model, const TrainConfig& train);

struct CheckpointInfo {
  ModelConfig model;
  TrainConfig train;
  std::int64_t step = 0;
  int epoch = 0;
  std::string config_hash;
  nlohmann::json extra = nlohmann::json::object();  // free-form, e.g. taxonomy name
};

void save_checkpoint(const std::filesystem::path& dir, const ConsorModel& model, const AdamW& optimizer,
                     const CheckpointInfo& info);

struct LoadedCheckpoint {
  CheckpointInfo info;
  std::unique_ptr<ConsorModel> model;
  AdamW optimizer;
};

/// Throws std::runtime_error when the manifest and tensors disagree.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace consor
