#include "consor/model.hpp"

#include <stdexcept>

#include "consor/head.hpp"

namespace consor {

void ModelConfig::validate() const {
  encoder.validate();
  if (msat.width % cir.heads != 0) throw std::invalid_argument("side network width must be divisible by cir heads");
  if (!(init_std > 0.0)) throw std::invalid_argument("init_std must be positive");
  msat.resolved_schedule(encoder.n_layers).validate(encoder.n_layers, msat.layers);
}

nlohmann::json ModelConfig::to_json() const {
  return {{"encoder", encoder.to_json()}, {"msat", msat.to_json()}, {"cir", cir.to_json()}, {"init_std", init_std}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  if (j.contains("encoder")) {
    const auto& e = j.at("encoder");
    c.encoder = e.is_string() && e.get<std::string>() == "miniature" ? EncoderConfig::miniature()
                                                                    : EncoderConfig::from_json(e);
  }
  if (j.contains("msat")) c.msat = MsatConfig::from_json(j.at("msat"));
  if (j.contains("cir")) c.cir = CirConfig::from_json(j.at("cir"));
  c.init_std = j.value("init_std", c.init_std);
  c.validate();
  return c;
}

ModelConfig ModelConfig::miniature() {
  ModelConfig c;
  c.encoder = EncoderConfig::miniature();
  c.msat.width = 48;
  return c;
}

const VisualFeatures& FeatureCache::visual(const std::string& image_id) {
  auto it = visual_.find(image_id);
  if (it == visual_.end()) it = visual_.emplace(image_id, provider_.visual_features(image_id)).first;
  return it->second;
}

const TextFeatures& FeatureCache::text(const std::string& text) {
  auto it = text_.find(text);
  if (it == text_.end()) it = text_.emplace(text, provider_.text_features(text)).first;
  return it->second;
}

ConsorModel::ConsorModel(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  Rng rng(mix_seed(seed, 0x6d6f64656cULL));
  msat_ = std::make_unique<SideAdapter>(store_, config_.msat, config_.encoder, rng, config_.init_std);
  cir_ = std::make_unique<CirModule>(store_, config_.cir, config_.msat.width, config_.encoder.joint_dim, rng,
                                     config_.init_std);
}

ImagePass ConsorModel::encode_image(Tape& tape, const VisualFeatures& vf, const std::vector<PersonBox>& persons) const {
  if (persons.empty()) throw std::invalid_argument("image has no persons");
  ImagePass pass;
  pass.v_sn = msat_->visual_forward(tape, vf);
  std::vector<Var> rows;
  rows.reserve(persons.size());
  for (const auto& box : persons) {
    rows.push_back(extract_person_feature(pass.v_sn, box, config_.encoder.grid_h, config_.encoder.grid_w));
  }
  pass.persons = cir_->interpersonal(tape, ad::concat_rows(rows));
  pass.cls = tape.constant(vf.cls.transpose());
  return pass;
}

Var ConsorModel::pair_feature(Tape& tape, const ImagePass& pass, const std::vector<PersonBox>& persons, int i, int j,
                              AttentionTrace* trace) const {
  const int n = static_cast<int>(persons.size());
  if (i < 0 || j < 0 || i >= n || j >= n || i == j) throw std::invalid_argument("bad person pair");
  Var u_bar = cir_->contextual_decode(tape, ad::slice_rows(pass.persons, i, 1), ad::slice_rows(pass.persons, j, 1),
                                      pass.v_sn, trace);
  return cir_->global_fuse(tape, u_bar, pass.cls);
}

Var ConsorModel::prompt_embeddings(Tape& tape, const std::vector<const TextFeatures*>& prompts) const {
  std::vector<Var> rows;
  rows.reserve(prompts.size());
  for (const TextFeatures* tf : prompts) rows.push_back(msat_->text_forward(tape, *tf));
  return ad::concat_rows(rows);
}

BatchForward ConsorModel::forward(Tape& tape, const Dataset& ds, const PromptBank& bank, FeatureCache& cache,
                                  const std::vector<const PairSample*>& samples, double logit_scale, bool with_loss,
                                  const std::vector<double>* class_weights) const {
  BatchForward out;
  out.logits.resize(samples.size());
  std::map<std::string, std::vector<std::size_t>> by_image;
  for (std::size_t k = 0; k < samples.size(); ++k) by_image[samples[k]->image_id].push_back(k);

  std::map<std::string, Var> prompt_cache;
  std::vector<Var> losses(samples.size());
  for (const auto& [image_id, members] : by_image) {
    const ImageRecord& image = ds.image(image_id);
    ImagePass pass = encode_image(tape, cache.visual(image_id), image.persons);

    const auto& texts = bank.at(image_id);
    if (texts.size() != ds.taxonomy.size()) {
      throw std::invalid_argument("image " + image_id + " has " + std::to_string(texts.size()) + " prompts for " +
                                  std::to_string(ds.taxonomy.size()) + " classes");
    }
    std::vector<Var> rows;
    for (const auto& text : texts) {
      auto it = prompt_cache.find(text);
      if (it == prompt_cache.end()) it = prompt_cache.emplace(text, msat_->text_forward(tape, cache.text(text))).first;
      rows.push_back(it->second);
    }
    Var prompts = ad::concat_rows(rows);

    for (std::size_t k : members) {
      const PairSample& s = *samples[k];
      Var u = pair_feature(tape, pass, image.persons, s.i, s.j);
      out.logits[k] = classify_logits(u, prompts, logit_scale);
      if (with_loss) {
        Var l = cross_entropy_loss(out.logits[k], s.label);
        if (class_weights != nullptr) l = ad::scale(l, class_weights->at(static_cast<std::size_t>(s.label)));
        losses[k] = l;
      }
    }
  }
  if (with_loss && !samples.empty()) out.loss = ad::mean(losses);
  return out;
}

}  // namespace consor
