#pragma once

#include <filesystem>
#include <map>
#include <memory>

#include "consor/encoder.hpp"

namespace consor {

/// Relative fixture path -> pack; the in-memory image of a fixture tree.
using FixtureSet = std::map<std::string, FeaturePack>;

void write_fixtures(const FixtureSet& fixtures, const std::filesystem::path& root);

/// Serves features precomputed offline, either from a directory laid out as
/// <root>/<image_id>.fpk and <root>/text/<sha256(text)>.fpk or from an
/// in-memory FixtureSet with the same relative paths.
class FixtureProvider : public EncoderProvider {
 public:
  FixtureProvider(std::filesystem::path root, EncoderConfig config);
  FixtureProvider(std::shared_ptr<const FixtureSet> fixtures, EncoderConfig config);

  const EncoderConfig& config() const override { return config_; }
  VisualFeatures visual_features(const std::string& image_id) const override;
  TextFeatures text_features(const std::string& text) const override;
  Eigen::VectorXd image_embedding(const std::string& image_id) const override;
  Eigen::VectorXd text_embedding(const std::string& text) const override;

  bool has_image(const std::string& image_id) const;
  bool has_text(const std::string& text) const;

 private:
  bool exists(const std::string& rel) const;
  FeaturePack load(const std::string& rel, const std::string& subject) const;

  std::filesystem::path root_;
  std::shared_ptr<const FixtureSet> memory_;
  EncoderConfig config_;
};

}  // namespace consor
