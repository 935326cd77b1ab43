#include "consor/msat.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

namespace consor {

std::string to_string(SharingMode m) {
  switch (m) {
    case SharingMode::shared: return "shared";
    case SharingMode::dual: return "dual";
    case SharingMode::visual_only: return "visual-only";
    case SharingMode::text_only: return "text-only";
    case SharingMode::none: return "none";
  }
  return "shared";
}

SharingMode sharing_mode_from_string(const std::string& s) {
  if (s == "shared") return SharingMode::shared;
  if (s == "dual") return SharingMode::dual;
  if (s == "visual-only" || s == "visual") return SharingMode::visual_only;
  if (s == "text-only" || s == "text") return SharingMode::text_only;
  if (s == "none") return SharingMode::none;
  throw std::invalid_argument("unknown sharing mode '" + s + "' (valid: shared, dual, visual, text, none)");
}

double gate_value(double alpha, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("gate temperature must be positive");
  return 1.0 / (1.0 + std::exp(-alpha / tau));
}

Mat fuse(const Mat& side, const Mat& clip_projected, double mu) {
  if (side.rows() != clip_projected.rows() || side.cols() != clip_projected.cols()) {
    throw std::invalid_argument("fuse: shape mismatch");
  }
  return mu * side + (1.0 - mu) * clip_projected;
}

Var fuse(Var side, Var clip_projected, Var mu) {
  if (side.rows() != clip_projected.rows() || side.cols() != clip_projected.cols()) {
    throw std::invalid_argument("fuse: shape mismatch");
  }
  return ad::add(ad::scale_by(side, mu), ad::scale_by(clip_projected, ad::one_minus(mu)));
}

namespace {

void validate_pairs(const std::vector<FusionPair>& pairs, const char* branch, int encoder_layers,
                    int adapter_layers) {
  int previous = -1;
  for (const auto& p : pairs) {
    std::ostringstream where;
    where << branch << " fusion pair " << p.clip_layer << "->" << p.adapter_layer;
    if (p.clip_layer < 0 || p.clip_layer > encoder_layers) {
      throw std::invalid_argument(where.str() + ": CLIP layer outside [0, " + std::to_string(encoder_layers) + "]");
    }
    if (p.adapter_layer < 0 || p.adapter_layer > adapter_layers) {
      throw std::invalid_argument(where.str() + ": adapter layer outside [0, " + std::to_string(adapter_layers) + "]");
    }
    if (p.adapter_layer <= previous) {
      throw std::invalid_argument(where.str() + ": adapter layers must be strictly increasing");
    }
    previous = p.adapter_layer;
  }
}

nlohmann::json pairs_to_json(const std::vector<FusionPair>& pairs) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& p : pairs) j.push_back({p.clip_layer, p.adapter_layer});
  return j;
}

std::vector<FusionPair> pairs_from_json(const nlohmann::json& j) {
  std::vector<FusionPair> out;
  for (const auto& p : j) out.push_back({p.at(0).get<int>(), p.at(1).get<int>()});
  return out;
}

}  // namespace

void FusionSchedule::validate(int encoder_layers, int adapter_layers) const {
  validate_pairs(visual, "visual", encoder_layers, adapter_layers);
  validate_pairs(text, "text", encoder_layers, adapter_layers);
}

FusionSchedule FusionSchedule::standard(int encoder_layers, int adapter_layers) {
  if (encoder_layers < 1 || adapter_layers < 1) throw std::invalid_argument("layer counts must be positive");
  FusionSchedule s;
  for (int j = 0; j <= adapter_layers; ++j) {
    const int clip = (j * encoder_layers + adapter_layers / 2) / adapter_layers;
    s.visual.push_back({clip, j});
    if (j > 0) s.text.push_back({clip, j});
  }
  return s;
}

FusionSchedule FusionSchedule::subset(const std::vector<int>& clip_layers, int encoder_layers, int adapter_layers) {
  const FusionSchedule full = standard(encoder_layers, adapter_layers);
  std::set<int> wanted(clip_layers.begin(), clip_layers.end());
  std::set<int> available;
  for (const auto& p : full.visual) available.insert(p.clip_layer);
  for (int layer : wanted) {
    if (available.count(layer) == 0) {
      std::string valid;
      for (int a : available) valid += (valid.empty() ? "" : ", ") + std::to_string(a);
      throw std::invalid_argument("CLIP layer " + std::to_string(layer) + " is not a fusion layer (valid: " + valid + ")");
    }
  }
  FusionSchedule s;
  for (const auto& p : full.visual) {
    if (wanted.count(p.clip_layer) != 0) s.visual.push_back(p);
  }
  for (const auto& p : full.text) {
    if (wanted.count(p.clip_layer) != 0) s.text.push_back(p);
  }
  return s;
}

FusionSchedule FusionSchedule::parse(const std::string& spec, int encoder_layers, int adapter_layers) {
  if (spec == "default" || spec == "all") return standard(encoder_layers, adapter_layers);
  if (spec == "none" || spec.empty()) return {};
  std::vector<int> layers;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw std::invalid_argument("bad fusion layer list '" + spec + "'");
    layers.push_back(v);
  }
  return subset(layers, encoder_layers, adapter_layers);
}

nlohmann::json FusionSchedule::to_json() const {
  return {{"visual", pairs_to_json(visual)}, {"text", pairs_to_json(text)}};
}

FusionSchedule FusionSchedule::from_json(const nlohmann::json& j) {
  FusionSchedule s;
  s.visual = pairs_from_json(j.at("visual"));
  s.text = pairs_from_json(j.at("text"));
  return s;
}

FusionSchedule MsatConfig::resolved_schedule(int encoder_layers) const {
  return schedule ? *schedule : FusionSchedule::standard(encoder_layers, layers);
}

nlohmann::json MsatConfig::to_json() const {
  nlohmann::json j = {{"width", width}, {"layers", layers}, {"heads", heads},
                      {"mlp_ratio", mlp_ratio}, {"tau", tau}, {"sharing", to_string(sharing)}};
  j["schedule"] = schedule ? schedule->to_json() : nlohmann::json("default");
  return j;
}

MsatConfig MsatConfig::from_json(const nlohmann::json& j) {
  MsatConfig c;
  c.width = j.value("width", c.width);
  c.layers = j.value("layers", c.layers);
  c.heads = j.value("heads", c.heads);
  c.mlp_ratio = j.value("mlp_ratio", c.mlp_ratio);
  c.tau = j.value("tau", c.tau);
  if (j.contains("sharing")) c.sharing = sharing_mode_from_string(j.at("sharing").get<std::string>());
  if (j.contains("schedule")) {
    const auto& s = j.at("schedule");
    if (s.is_string()) {
      if (s.get<std::string>() == "none") c.schedule = FusionSchedule{};
      else if (s.get<std::string>() != "default") throw std::invalid_argument("schedule must be an object, \"default\" or \"none\"");
    } else {
      c.schedule = FusionSchedule::from_json(s);
    }
  }
  return c;
}

nlohmann::json MsatCensus::to_json() const {
  return {{"blocks", blocks}, {"embeddings", embeddings}, {"clip_proj", clip_proj},
          {"gates", gates}, {"out_proj", out_proj}, {"total", total()}};
}

namespace {

SideStack make_stack(ParamStore& store, const std::string& prefix, const MsatConfig& c, Rng& rng,
                     double init_std) {
  SideStack s;
  for (int k = 0; k < c.layers; ++k) {
    s.blocks.push_back(TransformerBlock::create(store, prefix + ".blocks." + std::to_string(k), c.width, c.heads,
                                                c.mlp_ratio, rng, init_std));
  }
  s.ln_post = LayerNorm::create(store, prefix + ".ln_post", c.width);
  return s;
}

std::vector<FusionPoint> make_points(ParamStore& store, const std::string& branch,
                                     const std::vector<FusionPair>& pairs, int in_width, int width, Rng& rng,
                                     double init_std) {
  std::vector<FusionPoint> out;
  for (const auto& p : pairs) {
    FusionPoint fp;
    fp.clip_layer = p.clip_layer;
    fp.adapter_layer = p.adapter_layer;
    const std::string tag = branch + "." + std::to_string(p.adapter_layer);
    fp.clip_proj = Linear::create(store, "msat.clip_proj_" + tag, in_width, width, rng, init_std);
    fp.alpha = &store.create("msat.gate_" + tag, Mat::Zero(1, 1), false);
    out.push_back(fp);
  }
  return out;
}

}  // namespace

SideAdapter::SideAdapter(ParamStore& store, const MsatConfig& config, const EncoderConfig& encoder, Rng& rng,
                         double init_std)
    : config_(config), encoder_(encoder), schedule_(config.resolved_schedule(encoder.n_layers)) {
  encoder_.validate();
  if (config_.width < 1 || config_.layers < 0 || config_.heads < 1 || config_.width % config_.heads != 0) {
    throw std::invalid_argument("side adapter width must be a positive multiple of the head count");
  }
  if (!(config_.tau > 0.0)) throw std::invalid_argument("gate temperature must be positive");
  schedule_.validate(encoder_.n_layers, config_.layers);

  const int d = config_.width;
  const bool visual_sn = config_.sharing == SharingMode::shared || config_.sharing == SharingMode::dual ||
                         config_.sharing == SharingMode::visual_only;
  const bool text_sn = config_.sharing == SharingMode::shared || config_.sharing == SharingMode::dual ||
                       config_.sharing == SharingMode::text_only;

  stacks_.reserve(2);
  if (config_.sharing == SharingMode::dual) {
    stacks_.push_back(make_stack(store, "msat.vis_stack", config_, rng, init_std));
    stacks_.push_back(make_stack(store, "msat.txt_stack", config_, rng, init_std));
    visual_stack_ = &stacks_[0];
    text_stack_ = &stacks_[1];
  } else if (visual_sn || text_sn) {
    stacks_.push_back(make_stack(store, "msat.stack", config_, rng, init_std));
    if (visual_sn) visual_stack_ = &stacks_[0];
    if (text_sn) text_stack_ = &stacks_[0];
  }

  if (visual_sn) {
    patch_embed_ = Linear::create(store, "msat.patch_embed", encoder_.patch_dim(), d, rng, init_std);
    vis_pos_ = &store.create("msat.vis_pos", rng.normal_matrix(encoder_.patch_count(), d, init_std), true);
    visual_points_ = make_points(store, "v", schedule_.visual, encoder_.vis_hidden, d, rng, init_std);
  } else {
    vis_frozen_proj_ = Linear::create(store, "msat.vis_frozen_proj", encoder_.vis_hidden, d, rng, init_std);
  }
  if (text_sn) {
    text_down_ = Linear::create(store, "msat.text_down", encoder_.txt_hidden, d, rng, init_std);
    text_points_ = make_points(store, "t", schedule_.text, encoder_.txt_hidden, d, rng, init_std);
  } else {
    txt_frozen_proj_ = Linear::create(store, "msat.txt_frozen_proj", encoder_.joint_dim, d, rng, init_std);
  }
  out_proj_ = Linear::create(store, "msat.out_proj", d, d, rng, init_std);
}

Var SideAdapter::run_stack(Tape& tape, const SideStack& stack, Var x, const std::vector<FusionPoint>& points,
                           const std::vector<Mat>& clip_layers, Eigen::Index rows, const Mat* mask) const {
  auto next = points.begin();
  const int n = static_cast<int>(stack.blocks.size());
  for (int j = 0; j <= n; ++j) {
    if (next != points.end() && next->adapter_layer == j) {
      const Mat& clip = clip_layers.at(static_cast<std::size_t>(next->clip_layer));
      Var projected = next->clip_proj(tape, tape.constant(clip.topRows(rows)));
      Var mu = ad::sigmoid(ad::scale(tape.param(*next->alpha), 1.0 / config_.tau));
      x = fuse(x, projected, mu);
      ++next;
    }
    if (j < n) x = stack.blocks[static_cast<std::size_t>(j)](tape, x, mask);
  }
  return stack.ln_post(tape, x);
}

Var SideAdapter::visual_forward(Tape& tape, const VisualFeatures& vf) const {
  if (static_cast<int>(vf.per_layer.size()) != encoder_.n_layers + 1) {
    throw std::invalid_argument("visual features carry " + std::to_string(vf.per_layer.size()) +
                                " layers, expected " + std::to_string(encoder_.n_layers + 1));
  }
  if (visual_stack_ == nullptr) {
    return vis_frozen_proj_(tape, tape.constant(vf.per_layer.back()));
  }
  if (vf.patches.rows() != encoder_.patch_count() || vf.patches.cols() != encoder_.patch_dim()) {
    throw std::invalid_argument("patch matrix does not match the encoder config");
  }
  Var x = ad::add(patch_embed_(tape, tape.constant(vf.patches)), tape.param(*vis_pos_));
  return run_stack(tape, *visual_stack_, x, visual_points_, vf.per_layer, encoder_.patch_count(), nullptr);
}

Var SideAdapter::text_forward(Tape& tape, const TextFeatures& tf, Var* sequence) const {
  if (text_stack_ == nullptr) {
    Var eot = out_proj_(tape, txt_frozen_proj_(tape, tape.constant(tf.eot.transpose())));
    if (sequence != nullptr) *sequence = eot;
    return eot;
  }
  if (static_cast<int>(tf.per_layer.size()) != encoder_.n_layers + 1) {
    throw std::invalid_argument("text features carry the wrong number of layers");
  }
  const Eigen::Index n = tf.token_count;
  if (n < 1 || n > tf.per_layer[0].rows()) throw std::invalid_argument("text features have a bad token count");
  const Mat mask = causal_mask(n);
  Var x = text_down_(tape, tape.constant(tf.per_layer[0].topRows(n)));
  Var seq = run_stack(tape, *text_stack_, x, text_points_, tf.per_layer, n, &mask);
  if (sequence != nullptr) *sequence = seq;
  return out_proj_(tape, ad::slice_rows(seq, n - 1, 1));
}

MsatCensus SideAdapter::census(const ParamStore& store) {
  MsatCensus c;
  for (const Parameter* p : store.all()) {
    const std::string& n = p->name;
    if (n.rfind("msat.", 0) != 0) continue;
    const auto size = static_cast<std::size_t>(p->value.size());
    if (n.find("stack.") != std::string::npos) c.blocks += size;
    else if (n.rfind("msat.gate_", 0) == 0) c.gates += size;
    else if (n.rfind("msat.clip_proj_", 0) == 0 || n.find("frozen_proj") != std::string::npos) c.clip_proj += size;
    else if (n.rfind("msat.out_proj", 0) == 0) c.out_proj += size;
    else c.embeddings += size;
  }
  return c;
}

}  // namespace consor
