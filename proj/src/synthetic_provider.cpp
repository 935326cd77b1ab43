#include "consor/synthetic_provider.hpp"

#include <cmath>

#include "consor/rng.hpp"

namespace consor {
namespace {

constexpr std::uint64_t kWeightsStream = 1;
constexpr std::uint64_t kImageStream = 2;
constexpr std::uint64_t kTokenStream = 3;

Mat mix_layer(const Mat& x, const Mat& context, const Mat& weight) {
  Mat pre = (0.5 * x + 0.5 * context) * weight;
  return 0.5 * x + pre.unaryExpr([](double v) { return std::tanh(v); });
}

}  // namespace

SyntheticProvider::SyntheticProvider(std::uint64_t seed, EncoderConfig config)
    : seed_(seed), config_(config) {
  config_.validate();
  Rng rng(mix_seed(seed, kWeightsStream));
  const int rv = config_.vis_hidden;
  const int rt = config_.txt_hidden;
  patch_embed_ = rng.normal_matrix(config_.patch_dim(), rv, 1.0 / std::sqrt(config_.patch_dim()));
  vis_pos_ = rng.normal_matrix(config_.patch_count(), rv, 0.1);
  for (int l = 0; l < config_.n_layers; ++l) vis_mix_.push_back(rng.normal_matrix(rv, rv, 1.0 / std::sqrt(rv)));
  vis_proj_ = rng.normal_matrix(rv, config_.joint_dim, 1.0 / std::sqrt(rv));
  txt_pos_ = rng.normal_matrix(config_.max_text_len, rt, 0.1);
  for (int l = 0; l < config_.n_layers; ++l) txt_mix_.push_back(rng.normal_matrix(rt, rt, 1.0 / std::sqrt(rt)));
  txt_proj_ = rng.normal_matrix(rt, config_.joint_dim, 1.0 / std::sqrt(rt));
}

VisualFeatures SyntheticProvider::visual_features(const std::string& image_id) const {
  Rng rng(mix_seed(mix_seed(seed_, kImageStream), hash_string(image_id)));
  VisualFeatures vf;
  vf.patches = rng.normal_matrix(config_.patch_count(), config_.patch_dim());
  Mat x = vf.patches * patch_embed_ + vis_pos_;
  vf.per_layer.push_back(x);
  for (int l = 0; l < config_.n_layers; ++l) {
    Mat context = x.colwise().mean().replicate(x.rows(), 1);
    x = mix_layer(x, context, vis_mix_[static_cast<std::size_t>(l)]);
    vf.per_layer.push_back(x);
  }
  if (auto it = planted_images_.find(image_id); it != planted_images_.end()) {
    vf.cls = it->second;
  } else {
    vf.cls = (x.colwise().mean() * vis_proj_).transpose();
  }
  return vf;
}

Eigen::RowVectorXd SyntheticProvider::token_embedding(const std::string& token) const {
  Rng rng(mix_seed(mix_seed(seed_, kTokenStream), hash_string(token)));
  return rng.normal_matrix(1, config_.txt_hidden).row(0);
}

TextFeatures SyntheticProvider::text_features(const std::string& text) const {
  TokenizedText tok = tokenize_prompt(text, config_.max_text_len);
  const auto n = static_cast<Eigen::Index>(tok.tokens.size());
  TextFeatures tf;
  tf.token_count = static_cast<int>(n);
  tf.truncated = tok.truncated;

  Mat x(n, config_.txt_hidden);
  for (Eigen::Index t = 0; t < n; ++t) {
    x.row(t) = token_embedding(tok.tokens[static_cast<std::size_t>(t)]) + txt_pos_.row(t);
  }
  auto padded = [&](const Mat& m) {
    Mat p = Mat::Zero(config_.max_text_len, config_.txt_hidden);
    p.topRows(m.rows()) = m;
    return p;
  };
  tf.per_layer.push_back(padded(x));
  for (int l = 0; l < config_.n_layers; ++l) {
    Mat context(n, x.cols());
    Eigen::RowVectorXd running = Eigen::RowVectorXd::Zero(x.cols());
    for (Eigen::Index t = 0; t < n; ++t) {
      running += x.row(t);
      context.row(t) = running / static_cast<double>(t + 1);
    }
    x = mix_layer(x, context, txt_mix_[static_cast<std::size_t>(l)]);
    tf.per_layer.push_back(padded(x));
  }
  if (auto it = planted_texts_.find(text); it != planted_texts_.end()) {
    tf.eot = it->second;
  } else {
    tf.eot = (x.row(n - 1) * txt_proj_).transpose();
  }
  return tf;
}

Eigen::VectorXd SyntheticProvider::image_embedding(const std::string& image_id) const {
  if (auto it = planted_images_.find(image_id); it != planted_images_.end()) return unit(it->second);
  return unit(visual_features(image_id).cls);
}

Eigen::VectorXd SyntheticProvider::text_embedding(const std::string& text) const {
  if (text.empty()) throw std::invalid_argument("text must be non-empty");
  if (auto it = planted_texts_.find(text); it != planted_texts_.end()) return unit(it->second);
  return unit(text_features(text).eot);
}

void SyntheticProvider::plant_image(const std::string& image_id, const Eigen::VectorXd& joint) {
  if (joint.size() != config_.joint_dim) throw std::invalid_argument("planted vector has the wrong width");
  planted_images_[image_id] = joint;
}

void SyntheticProvider::plant_text(const std::string& text, const Eigen::VectorXd& joint) {
  if (joint.size() != config_.joint_dim) throw std::invalid_argument("planted vector has the wrong width");
  planted_texts_[text] = joint;
}

}  // namespace consor
