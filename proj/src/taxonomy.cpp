#include "consor/taxonomy.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

namespace consor {

RelationTaxonomy::RelationTaxonomy(std::string name, std::vector<std::string> classes)
    : name_(std::move(name)), classes_(std::move(classes)) {
  if (name_.empty()) throw std::invalid_argument("taxonomy name must be non-empty");
  if (classes_.size() < 2) throw std::invalid_argument("taxonomy '" + name_ + "' needs at least 2 classes");
  std::set<std::string> seen;
  for (const auto& c : classes_) {
    if (c.empty()) throw std::invalid_argument("taxonomy '" + name_ + "' has an empty class name");
    if (!seen.insert(c).second) {
      throw std::invalid_argument("taxonomy '" + name_ + "' repeats class '" + c + "'");
    }
  }
}

int RelationTaxonomy::index_of(const std::string& class_name) const {
  for (std::size_t i = 0; i < classes_.size(); ++i) {
    if (classes_[i] == class_name) return static_cast<int>(i);
  }
  return -1;
}

nlohmann::json RelationTaxonomy::to_json() const {
  return nlohmann::json{{"name", name_}, {"classes", classes_}};
}

RelationTaxonomy RelationTaxonomy::from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("name") || !j.contains("classes")) {
    throw std::invalid_argument("taxonomy JSON needs \"name\" and \"classes\"");
  }
  return RelationTaxonomy(j.at("name").get<std::string>(),
                          j.at("classes").get<std::vector<std::string>>());
}

std::vector<std::string> builtin_taxonomy_names() {
  return {"pisc-coarse", "pisc-fine", "pipa-coarse", "pipa-fine"};
}

RelationTaxonomy builtin_taxonomy(const std::string& name) {
  if (name == "pisc-coarse") {
    return RelationTaxonomy(name, {"intimate", "non-intimate", "no-relation"});
  }
  if (name == "pisc-fine") {
    return RelationTaxonomy(
        name, {"friend", "family", "couple", "professional", "commercial", "no-relation"});
  }
  // PIPA-relation domains and relations as released with the dataset.
  if (name == "pipa-coarse") {
    return RelationTaxonomy(name, {"attachment", "reciprocity", "mating", "hierarchical power",
                                   "coalitional groups"});
  }
  if (name == "pipa-fine") {
    return RelationTaxonomy(
        name, {"father-child", "mother-child", "grandpa-grandchild", "grandma-grandchild",
               "friends", "siblings", "classmates", "lovers/spouses", "presenter-audience",
               "teacher-student", "trainer-trainee", "leader-subordinate", "band members",
               "dance team members", "sport team members", "colleagues"});
  }
  std::string valid;
  for (const auto& n : builtin_taxonomy_names()) valid += (valid.empty() ? "" : ", ") + n;
  throw std::invalid_argument("unknown taxonomy '" + name + "' (valid: " + valid + ")");
}

RelationTaxonomy load_taxonomy(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open taxonomy file " + path.string());
  return RelationTaxonomy::from_json(nlohmann::json::parse(in));
}

}  // namespace consor
