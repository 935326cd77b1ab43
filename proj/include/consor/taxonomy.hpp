#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace consor {

/// Ordered social-relation label space. The position of a class name is its
/// logit index.
class RelationTaxonomy {
 public:
  /// Throws std::invalid_argument unless there are at least two unique,
  /// non-empty class names.
  RelationTaxonomy(std::string name, std::vector<std::string> classes);

  const std::string& name() const { return name_; }
  const std::vector<std::string>& classes() const { return classes_; }
  std::size_t size() const { return classes_.size(); }
  const std::string& operator[](std::size_t i) const { return classes_.at(i); }
  /// Index of `class_name`, or -1.
  int index_of(const std::string& class_name) const;

  nlohmann::json to_json() const;
  static RelationTaxonomy from_json(const nlohmann::json& j);

  friend bool operator==(const RelationTaxonomy&, const RelationTaxonomy&) = default;

 private:
  std::string name_;
  std::vector<std::string> classes_;
};

/// pisc-coarse, pisc-fine, pipa-coarse or pipa-fine.
RelationTaxonomy builtin_taxonomy(const std::string& name);
std::vector<std::string> builtin_taxonomy_names();
RelationTaxonomy load_taxonomy(const std::filesystem::path& path);

}  // namespace consor
