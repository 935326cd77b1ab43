#include "consor/encoder.hpp"

#include <cctype>

#include "consor/util.hpp"

namespace consor {

void EncoderConfig::validate() const {
  if (n_layers < 1) throw std::invalid_argument("encoder: n_layers must be >= 1");
  if (grid_h < 1 || grid_w < 1) throw std::invalid_argument("encoder: grid dims must be >= 1");
  if (vis_hidden < 1 || txt_hidden < 1 || joint_dim < 1) throw std::invalid_argument("encoder: widths must be >= 1");
  if (max_text_len < 2) throw std::invalid_argument("encoder: max_text_len must be >= 2");
  if (image_size < grid_w || image_size % grid_w != 0 || image_size % grid_h != 0) {
    throw std::invalid_argument("encoder: image_size must be a multiple of the grid dims");
  }
}

nlohmann::json EncoderConfig::to_json() const {
  return {{"n_layers", n_layers},         {"vis_hidden", vis_hidden}, {"txt_hidden", txt_hidden},
          {"joint_dim", joint_dim},       {"grid", {grid_h, grid_w}}, {"max_text_len", max_text_len},
          {"image_size", image_size}};
}

EncoderConfig EncoderConfig::from_json(const nlohmann::json& j) {
  EncoderConfig c;
  c.n_layers = j.value("n_layers", c.n_layers);
  c.vis_hidden = j.value("vis_hidden", c.vis_hidden);
  c.txt_hidden = j.value("txt_hidden", c.txt_hidden);
  c.joint_dim = j.value("joint_dim", c.joint_dim);
  if (j.contains("grid")) {
    c.grid_h = j.at("grid").at(0).get<int>();
    c.grid_w = j.at("grid").at(1).get<int>();
  }
  c.max_text_len = j.value("max_text_len", c.max_text_len);
  c.image_size = j.value("image_size", c.image_size);
  c.validate();
  return c;
}

EncoderConfig EncoderConfig::miniature() {
  EncoderConfig c;
  c.n_layers = 4;
  c.vis_hidden = 24;
  c.txt_hidden = 16;
  c.joint_dim = 16;
  c.grid_h = 3;
  c.grid_w = 3;
  c.max_text_len = 32;
  c.image_size = 12;
  return c;
}

MissingFeatureError::MissingFeatureError(std::vector<std::string> ids)
    : std::runtime_error([&] {
        std::string s = "missing fixtures for:";
        for (const auto& id : ids) s += " " + id;
        return s;
      }()),
      ids_(std::move(ids)) {}

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  auto is_word = [](unsigned char c) { return std::isalnum(c) != 0 || c >= 0x80; };
  for (std::size_t k = 0; k < text.size(); ++k) {
    unsigned char c = static_cast<unsigned char>(text[k]);
    const bool joiner = (c == '-' || c == '\'' || c == '/') && !cur.empty() && k + 1 < text.size() &&
                        is_word(static_cast<unsigned char>(text[k + 1]));
    if (is_word(c) || joiner) {
      cur.push_back(static_cast<char>(c));
      continue;
    }
    if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
    if (std::isspace(c) == 0) out.emplace_back(1, static_cast<char>(c));
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

TokenizedText tokenize_prompt(const std::string& text, int max_len) {
  if (text.empty()) throw std::invalid_argument("text must be non-empty");
  TokenizedText t;
  std::vector<std::string> words = split_words(text);
  const std::size_t room = static_cast<std::size_t>(max_len) - 2;
  if (words.size() > room) {
    words.resize(room);
    t.truncated = true;
  }
  t.tokens.reserve(words.size() + 2);
  t.tokens.push_back("<sot>");
  for (auto& w : words) t.tokens.push_back(std::move(w));
  t.tokens.push_back("<eot>");
  return t;
}

Eigen::VectorXd unit(const Eigen::VectorXd& v) {
  const double n = v.norm();
  if (!(n > 0.0)) throw std::invalid_argument("cannot normalize a zero vector");
  return v / n;
}

FeaturePack visual_pack(const std::string& image_id, const VisualFeatures& vf) {
  FeaturePack p;
  p.subject_id = image_id;
  p.put("vis.patches", vf.patches);
  for (std::size_t l = 0; l < vf.per_layer.size(); ++l) p.put("vis.L" + std::to_string(l), vf.per_layer[l]);
  p.put_vector("vis.cls", vf.cls);
  p.put_vector("joint", unit(vf.cls));
  return p;
}

VisualFeatures visual_from_pack(const FeaturePack& pack, const EncoderConfig& cfg) {
  VisualFeatures vf;
  vf.patches = pack.matrix("vis.patches");
  for (int l = 0; l <= cfg.n_layers; ++l) vf.per_layer.push_back(pack.matrix("vis.L" + std::to_string(l)));
  vf.cls = pack.vector("vis.cls");
  if (vf.patches.rows() != cfg.patch_count() || vf.patches.cols() != cfg.patch_dim() ||
      vf.cls.size() != cfg.joint_dim) {
    throw FeaturePackError("visual pack '" + pack.subject_id + "' does not match the encoder config");
  }
  for (const Mat& m : vf.per_layer) {
    if (m.rows() != cfg.patch_count() || m.cols() != cfg.vis_hidden) {
      throw FeaturePackError("visual pack '" + pack.subject_id + "' has a mis-shaped layer");
    }
  }
  return vf;
}

FeaturePack text_pack(const std::string& text, const TextFeatures& tf) {
  FeaturePack p;
  p.subject_id = text;
  for (std::size_t l = 0; l < tf.per_layer.size(); ++l) p.put("txt.L" + std::to_string(l), tf.per_layer[l]);
  p.put_vector("txt.eot", tf.eot);
  p.put_vector("joint", unit(tf.eot));
  p.attrs = {{"token_count", tf.token_count}, {"truncated", tf.truncated}};
  return p;
}

TextFeatures text_from_pack(const FeaturePack& pack, const EncoderConfig& cfg) {
  TextFeatures tf;
  for (int l = 0; l <= cfg.n_layers; ++l) tf.per_layer.push_back(pack.matrix("txt.L" + std::to_string(l)));
  tf.eot = pack.vector("txt.eot");
  tf.token_count = pack.attrs.at("token_count").get<int>();
  tf.truncated = pack.attrs.value("truncated", false);
  for (const Mat& m : tf.per_layer) {
    if (m.rows() != cfg.max_text_len || m.cols() != cfg.txt_hidden) {
      throw FeaturePackError("text pack does not match the encoder config");
    }
  }
  if (tf.token_count < 2 || tf.token_count > cfg.max_text_len) {
    throw FeaturePackError("text pack has an invalid token count");
  }
  return tf;
}

FeaturePack joint_only_pack(const std::string& text, const Eigen::VectorXd& embedding) {
  FeaturePack p;
  p.subject_id = text;
  p.put_vector("joint", unit(embedding));
  return p;
}

std::string image_fixture_path(const std::string& image_id) { return image_id + ".fpk"; }

std::string text_fixture_path(const std::string& text) { return "text/" + sha256_hex(text) + ".fpk"; }

}  // namespace consor
