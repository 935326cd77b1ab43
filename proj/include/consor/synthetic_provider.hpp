#pragma once

#include <cstdint>
#include <map>

#include "consor/encoder.hpp"

namespace consor {

/// Deterministic stand-in for a frozen dual encoder. Fixed random weights
/// derived from the seed play the role of pretrained blocks: layer l is a
/// gated tanh mixing of layer l-1 (global mean for images, causal mean for
/// text), and the global tokens are linear projections into joint space.
/// Joint embeddings can be planted per image or text for tests.
class SyntheticProvider : public EncoderProvider {
 public:
  SyntheticProvider(std::uint64_t seed, EncoderConfig config);

  const EncoderConfig& config() const override { return config_; }
  VisualFeatures visual_features(const std::string& image_id) const override;
  TextFeatures text_features(const std::string& text) const override;
  Eigen::VectorXd image_embedding(const std::string& image_id) const override;
  Eigen::VectorXd text_embedding(const std::string& text) const override;

  /// Replaces the joint-space output (cls / eot) for one subject.
  void plant_image(const std::string& image_id, const Eigen::VectorXd& joint);
  void plant_text(const std::string& text, const Eigen::VectorXd& joint);

  std::uint64_t seed() const { return seed_; }

 private:
  Eigen::RowVectorXd token_embedding(const std::string& token) const;

  std::uint64_t seed_;
  EncoderConfig config_;
  Mat patch_embed_;             // [patch_dim, r^v]
  Mat vis_pos_;                 // [L^v, r^v]
  std::vector<Mat> vis_mix_;    // per layer [r^v, r^v]
  Mat vis_proj_;                // [r^v, joint]
  Mat txt_pos_;                 // [L^t, r^t]
  std::vector<Mat> txt_mix_;    // per layer [r^t, r^t]
  Mat txt_proj_;                // [r^t, joint]
  std::map<std::string, Eigen::VectorXd> planted_images_;
  std::map<std::string, Eigen::VectorXd> planted_texts_;
};

}  // namespace consor
