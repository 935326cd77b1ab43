#include "consor/checkpoint.hpp"

#include <stdexcept>

#include "consor/feature_pack.hpp"
#include "consor/util.hpp"

namespace consor {

std::string config_hash(const ModelConfig& model, const TrainConfig& train) {
  const nlohmann::json j = {{"model", model.to_json()}, {"train", train.to_json()}};
  return sha256_hex(j.dump());
}

void save_checkpoint(const std::filesystem::path& dir, const ConsorModel& model, const AdamW& optimizer,
                     const CheckpointInfo& info) {
  std::filesystem::create_directories(dir);
  FeaturePack pack;
  pack.subject_id = "checkpoint";
  nlohmann::json names = nlohmann::json::array();
  for (const Parameter* p : model.params().all()) {
    pack.put("param/" + p->name, p->value, DType::float64);
    names.push_back(p->name);
  }
  for (const auto& [name, s] : optimizer.state()) {
    pack.put("adam.m/" + name, s.m, DType::float64);
    pack.put("adam.v/" + name, s.v, DType::float64);
  }
  write_feature_pack(pack, dir / "tensors.fpk");

  const nlohmann::json manifest = {
      {"format", "consor-checkpoint-1"},
      {"model", info.model.to_json()},
      {"train", info.train.to_json()},
      {"step", info.step},
      {"epoch", info.epoch},
      {"optimizer_steps", optimizer.steps()},
      {"config_hash", config_hash(info.model, info.train)},
      {"parameters", names},
      {"extra", info.extra},
  };
  write_json_file(dir / "manifest.json", manifest);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir) {
  const nlohmann::json manifest = read_json_file(dir / "manifest.json");
  if (manifest.value("format", "") != "consor-checkpoint-1") {
    throw std::runtime_error("not a checkpoint: " + dir.string());
  }
  LoadedCheckpoint out;
  out.info.model = ModelConfig::from_json(manifest.at("model"));
  out.info.train = TrainConfig::from_json(manifest.at("train"));
  out.info.step = manifest.at("step").get<std::int64_t>();
  out.info.epoch = manifest.at("epoch").get<int>();
  out.info.config_hash = manifest.at("config_hash").get<std::string>();
  out.info.extra = manifest.value("extra", nlohmann::json::object());
  if (out.info.config_hash != config_hash(out.info.model, out.info.train)) {
    throw std::runtime_error("checkpoint config hash mismatch in " + dir.string());
  }

  const FeaturePack pack = read_feature_pack(dir / "tensors.fpk");
  out.model = std::make_unique<ConsorModel>(out.info.model, 0);
  for (Parameter* p : out.model->params().all()) {
    const std::string tag = "param/" + p->name;
    if (!pack.has(tag)) throw std::runtime_error("checkpoint lacks parameter " + p->name);
    Mat v = pack.matrix(tag);
    if (v.rows() != p->value.rows() || v.cols() != p->value.cols()) {
      throw std::runtime_error("checkpoint parameter " + p->name + " has the wrong shape");
    }
    p->value = std::move(v);
  }
  if (manifest.at("parameters").size() != out.model->params().all().size()) {
    throw std::runtime_error("checkpoint parameter set differs from the model");
  }

  std::map<std::string, AdamW::Moments> state;
  for (const auto& [tag, tensor] : pack.entries) {
    if (tag.rfind("adam.m/", 0) != 0) continue;
    const std::string name = tag.substr(7);
    state[name] = {pack.matrix(tag), pack.matrix("adam.v/" + name)};
  }
  AdamWConfig oc;
  oc.weight_decay = out.info.train.weight_decay;
  out.optimizer = AdamW(oc);
  out.optimizer.restore(manifest.at("optimizer_steps").get<std::int64_t>(), std::move(state));
  return out;
}

}  // namespace consor
