#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "consor/dataset.hpp"

namespace consor {

class AnnotationError : public std::runtime_error {
 public:
  explicit AnnotationError(const std::string& what, ValidationReport report = {})
      : std::runtime_error(what), report_(std::move(report)) {}
  const ValidationReport& report() const { return report_; }

 private:
  ValidationReport report_;
};

/// Parses the canonical annotation schema:
///   {"taxonomy": name | {"name", "classes"}, "coords": "normalized" | "pixel",
///    "split": "train" | "val" | "test",
///    "images": [{"id", "width", "height", "persons": [[x0,y0,x1,y1], ...]}],
///    "samples": [{"image", "i", "j", "label"}]}
/// Labels may be class indices or class names. Pixel boxes are divided by
/// the image width/height. Unrecognized fields are logged and ignored.
Dataset parse_annotations(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
Dataset load_annotations(const std::filesystem::path& path);

/// Canonical normalized-coordinate form accepted by parse_annotations.
nlohmann::json annotations_to_json(const Dataset& ds);

}  // namespace consor
