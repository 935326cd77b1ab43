#include "consor/fixture_provider.hpp"

namespace consor {

void write_fixtures(const FixtureSet& fixtures, const std::filesystem::path& root) {
  for (const auto& [rel, pack] : fixtures) write_feature_pack(pack, root / rel);
}

FixtureProvider::FixtureProvider(std::filesystem::path root, EncoderConfig config)
    : root_(std::move(root)), config_(config) {
  config_.validate();
}

FixtureProvider::FixtureProvider(std::shared_ptr<const FixtureSet> fixtures, EncoderConfig config)
    : memory_(std::move(fixtures)), config_(config) {
  config_.validate();
}

bool FixtureProvider::exists(const std::string& rel) const {
  if (memory_) return memory_->count(rel) != 0;
  return std::filesystem::exists(root_ / rel);
}

FeaturePack FixtureProvider::load(const std::string& rel, const std::string& subject) const {
  if (!exists(rel)) throw MissingFeatureError({subject});
  if (memory_) return memory_->at(rel);
  return read_feature_pack(root_ / rel);
}

bool FixtureProvider::has_image(const std::string& image_id) const {
  return exists(image_fixture_path(image_id));
}

bool FixtureProvider::has_text(const std::string& text) const { return exists(text_fixture_path(text)); }

VisualFeatures FixtureProvider::visual_features(const std::string& image_id) const {
  return visual_from_pack(load(image_fixture_path(image_id), image_id), config_);
}

TextFeatures FixtureProvider::text_features(const std::string& text) const {
  if (text.empty()) throw std::invalid_argument("text must be non-empty");
  return text_from_pack(load(text_fixture_path(text), text), config_);
}

Eigen::VectorXd FixtureProvider::image_embedding(const std::string& image_id) const {
  return unit(load(image_fixture_path(image_id), image_id).vector("joint"));
}

Eigen::VectorXd FixtureProvider::text_embedding(const std::string& text) const {
  if (text.empty()) throw std::invalid_argument("text must be non-empty");
  return unit(load(text_fixture_path(text), text).vector("joint"));
}

}  // namespace consor
