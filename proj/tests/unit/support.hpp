#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

#include "consor/fixture_provider.hpp"
#include "consor/rng.hpp"
#include "consor/toy.hpp"
#include "consor/util.hpp"

namespace testing {

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("consor-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

/// Swallows JSON-line events for the lifetime of the object.
class QuietLog {
 public:
  QuietLog() { consor::set_event_sink(&sink_); }
  ~QuietLog() { consor::set_event_sink(nullptr); }
  std::string text() const { return sink_.str(); }

 private:
  std::ostringstream sink_;
};

struct SmallToy {
  consor::ToySpec spec;
  consor::ToyData data;
  std::shared_ptr<consor::FixtureSet> fixtures;
  std::unique_ptr<consor::FixtureProvider> provider;
};

inline SmallToy make_small_toy(std::uint64_t seed, int n_images, int persons = 3, double separation = 2.0) {
  QuietLog quiet;
  consor::ToySpec spec;
  spec.seed = seed;
  spec.n_images = n_images;
  spec.persons_per_image = persons;
  spec.class_separation = separation;
  SmallToy t{spec, consor::generate_toy_dataset(spec), nullptr, nullptr};
  t.fixtures = std::make_shared<consor::FixtureSet>(t.data.fixtures);
  t.provider = std::make_unique<consor::FixtureProvider>(t.fixtures, t.spec.encoder);
  return t;
}

inline double max_abs_diff(const consor::Mat& a, const consor::Mat& b) { return (a - b).cwiseAbs().maxCoeff(); }

}  // namespace testing

namespace testing {

/// Joint embeddings looked up from tables; enough for vocab selection.
class TableProvider : public consor::EncoderProvider {
 public:
  explicit TableProvider(int dim) { cfg_.joint_dim = dim; }
  const consor::EncoderConfig& config() const override { return cfg_; }
  consor::VisualFeatures visual_features(const std::string&) const override {
    throw std::logic_error("table provider has no visual features");
  }
  consor::TextFeatures text_features(const std::string&) const override {
    throw std::logic_error("table provider has no text features");
  }
  Eigen::VectorXd image_embedding(const std::string& id) const override { return images.at(id); }
  Eigen::VectorXd text_embedding(const std::string& text) const override { return texts.at(text); }

  std::map<std::string, Eigen::VectorXd> images;
  std::map<std::string, Eigen::VectorXd> texts;

 private:
  consor::EncoderConfig cfg_;
};

}  // namespace testing
