#pragma once

#include <string>
#include <vector>

#include "consor/taxonomy.hpp"

namespace consor {

/// Person bounding box in normalized image coordinates.
struct PersonBox {
  double x0 = 0.0, y0 = 0.0, x1 = 1.0, y1 = 1.0;

  bool valid() const;
  friend bool operator==(const PersonBox&, const PersonBox&) = default;
};

struct ImageRecord {
  std::string image_id;
  int width = 0;
  int height = 0;
  std::vector<PersonBox> persons;
};

/// One ordered (i, j) person pair to classify.
struct PairSample {
  std::string image_id;
  int i = 0;
  int j = 1;
  int label = 0;

  /// "<image>:<i>:<j>", the row key used by score tables.
  std::string key() const;
};

enum class Split { train, val, test };
std::string to_string(Split s);
Split split_from_string(const std::string& s);

struct Dataset {
  RelationTaxonomy taxonomy;
  std::vector<ImageRecord> images;
  std::vector<PairSample> samples;
  Split split = Split::train;

  /// Index into `images`, or -1.
  int find_image(const std::string& image_id) const;
  const ImageRecord& image(const std::string& image_id) const;
};

struct ValidationIssue {
  std::string kind;  // e.g. "self-pair", "label out of range"
  std::string where;  // e.g. "samples[3]"
  std::string detail;
};

struct ValidationReport {
  std::vector<ValidationIssue> issues;

  bool ok() const { return issues.empty(); }
  bool has(const std::string& kind) const;
  std::string summary() const;
};

ValidationReport validate_dataset(const Dataset& ds);

}  // namespace consor
