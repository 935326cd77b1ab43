#include "consor/run_config.hpp"

#include <set>
#include <sstream>

#include "consor/util.hpp"

namespace consor {
namespace {

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (known.count(key) == 0) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

std::filesystem::path resolve(const nlohmann::json& j, const char* key, const std::filesystem::path& base) {
  if (!j.contains(key)) return {};
  std::filesystem::path p = j.at(key).get<std::string>();
  return p.is_relative() && !base.empty() ? base / p : p;
}

}  // namespace

std::vector<CorpusKind> parse_corpora_subset(const std::string& csv) {
  std::vector<CorpusKind> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    if (item == "SC") out.push_back(CorpusKind::scene_category);
    else if (item == "SA") out.push_back(CorpusKind::scene_attribute);
    else if (item == "OC") out.push_back(CorpusKind::object_category);
    else if (item == "E") out.push_back(CorpusKind::emotion);
    else out.push_back(corpus_kind_from_string(item));
  }
  if (out.empty()) throw std::invalid_argument("corpora subset is empty");
  return out;
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json kinds = nlohmann::json::array();
  for (CorpusKind k : corpora_subset) kinds.push_back(to_string(k));
  nlohmann::json j = {
      {"provider", provider},
      {"seed", seed},
      {"paths", {{"annotations", annotations.string()}, {"fixtures", fixtures.string()},
                 {"corpora", corpora.string()}, {"prompts", prompts.string()}, {"output", output.string()}}},
      {"corpora_subset", kinds},
      {"model", model.to_json()},
      {"train", train.to_json()},
      {"toy", toy.to_json()},
  };
  if (taxonomy) j["taxonomy"] = *taxonomy;
  return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  try {
    reject_unknown(j, {"taxonomy", "provider", "seed", "paths", "corpora_subset", "fusion_layers", "model", "train", "toy"},
                   "run config");
    RunConfig c;
    if (j.contains("taxonomy")) {
      c.taxonomy = j.at("taxonomy").get<std::string>();
      builtin_taxonomy(*c.taxonomy);
    }
    c.provider = j.value("provider", c.provider);
    if (c.provider != "fixture" && c.provider != "synthetic") {
      throw ConfigError("provider must be fixture or synthetic");
    }
    c.seed = j.value("seed", c.seed);
    if (j.contains("paths")) {
      const auto& p = j.at("paths");
      reject_unknown(p, {"annotations", "fixtures", "corpora", "prompts", "output"}, "paths");
      c.annotations = resolve(p, "annotations", base_dir);
      c.fixtures = resolve(p, "fixtures", base_dir);
      c.corpora = resolve(p, "corpora", base_dir);
      c.prompts = resolve(p, "prompts", base_dir);
      c.output = resolve(p, "output", base_dir);
    }
    if (j.contains("corpora_subset")) {
      c.corpora_subset.clear();
      for (const auto& k : j.at("corpora_subset")) c.corpora_subset.push_back(corpus_kind_from_string(k.get<std::string>()));
    }
    if (j.contains("model")) {
      reject_unknown(j.at("model"), {"encoder", "msat", "cir", "init_std"}, "model");
      nlohmann::json m = j.at("model");
      if (!m.contains("encoder")) m["encoder"] = c.model.encoder.to_json();
      if (!m.contains("msat")) m["msat"] = c.model.msat.to_json();
      c.model = ModelConfig::from_json(m);
    }
    if (j.contains("fusion_layers")) {
      c.model.msat.schedule = FusionSchedule::parse(j.at("fusion_layers").get<std::string>(), c.model.encoder.n_layers,
                                                    c.model.msat.layers);
    }
    if (j.contains("train")) {
      reject_unknown(j.at("train"), {"lr", "weight_decay", "epochs", "batch_size", "logit_scale", "seed", "class_weights"},
                     "train");
      c.train = TrainConfig::from_json(j.at("train"));
    }
    if (j.contains("toy")) {
      reject_unknown(j.at("toy"), {"n_images", "persons_per_image", "num_classes", "seed", "encoder",
                                   "class_separation", "corpora", "corpora_dir"},
                     "toy");
      c.toy = ToySpec::from_json(j.at("toy"));
    }
    c.model.validate();
    return c;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
}

std::string RunConfig::hash() const { return sha256_hex(to_json().dump()); }

RunConfig load_run_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
  nlohmann::json j;
  try {
    j = read_json_file(path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return RunConfig::from_json(j, path.parent_path());
}

}  // namespace consor
