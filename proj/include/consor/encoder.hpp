#pragma once

// Frozen dual-encoder features. Nothing in this module is trainable; every
// provider returns identical tensors for identical requests.

#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "consor/autograd.hpp"
#include "consor/feature_pack.hpp"

namespace consor {

struct EncoderConfig {
  int n_layers = 12;
  int vis_hidden = 768;
  int txt_hidden = 512;
  int joint_dim = 512;
  int grid_h = 14;
  int grid_w = 14;
  int max_text_len = 77;
  int image_size = 224;

  int patch_count() const { return grid_h * grid_w; }
  int patch_size() const { return image_size / grid_w; }
  /// Flattened RGB patch width fed to the side network's patch embedding.
  int patch_dim() const { return 3 * patch_size() * patch_size(); }

  void validate() const;
  nlohmann::json to_json() const;
  static EncoderConfig from_json(const nlohmann::json& j);
  /// 4 layers, 3x3 grid of 4-pixel patches, 24/16-wide features.
  static EncoderConfig miniature();

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

struct VisualFeatures {
  Mat patches;                 // [L^v, patch_dim] raw patch pixels
  std::vector<Mat> per_layer;  // n_layers + 1 entries of [L^v, r^v]; entry 0 precedes block 1
  Eigen::VectorXd cls;         // [joint_dim], joint-space projection of the class token
};

struct TextFeatures {
  std::vector<Mat> per_layer;  // n_layers + 1 entries of [L^t, r^t], zero rows past token_count
  Eigen::VectorXd eot;         // [joint_dim]
  int token_count = 0;         // includes start and end markers
  bool truncated = false;

  int eot_position() const { return token_count - 1; }
};

class MissingFeatureError : public std::runtime_error {
 public:
  explicit MissingFeatureError(std::vector<std::string> ids);
  const std::vector<std::string>& ids() const { return ids_; }

 private:
  std::vector<std::string> ids_;
};

class EncoderProvider {
 public:
  virtual ~EncoderProvider() = default;
  virtual const EncoderConfig& config() const = 0;
  virtual VisualFeatures visual_features(const std::string& image_id) const = 0;
  /// Throws std::invalid_argument for empty text.
  virtual TextFeatures text_features(const std::string& text) const = 0;
  /// Unit-norm joint-space embeddings.
  virtual Eigen::VectorXd image_embedding(const std::string& image_id) const = 0;
  virtual Eigen::VectorXd text_embedding(const std::string& text) const = 0;
};

struct TokenizedText {
  std::vector<std::string> tokens;  // "<sot>" ... "<eot>"
  bool truncated = false;
};

/// Verbatim word/punctuation split. Words keep inner hyphens, apostrophes
/// and slashes; every other non-space character is its own token.
std::vector<std::string> split_words(const std::string& text);
/// Adds start/end markers and truncates to `max_len` tokens, always keeping
/// the end marker.
TokenizedText tokenize_prompt(const std::string& text, int max_len);

Eigen::VectorXd unit(const Eigen::VectorXd& v);

FeaturePack visual_pack(const std::string& image_id, const VisualFeatures& vf);
VisualFeatures visual_from_pack(const FeaturePack& pack, const EncoderConfig& cfg);
FeaturePack text_pack(const std::string& text, const TextFeatures& tf);
TextFeatures text_from_pack(const FeaturePack& pack, const EncoderConfig& cfg);
/// Pack carrying only the joint embedding, enough for vocab selection.
FeaturePack joint_only_pack(const std::string& text, const Eigen::VectorXd& embedding);

/// Relative fixture locations: "<image_id>.fpk" and "text/<sha256(text)>.fpk".
std::string image_fixture_path(const std::string& image_id);
std::string text_fixture_path(const std::string& text);

}  // namespace consor
