#include "consor/dataset.hpp"

#include <set>
#include <sstream>
#include <stdexcept>

namespace consor {

bool PersonBox::valid() const {
  auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  return in_unit(x0) && in_unit(y0) && in_unit(x1) && in_unit(y1) && x0 < x1 && y0 < y1;
}

std::string PairSample::key() const {
  return image_id + ":" + std::to_string(i) + ":" + std::to_string(j);
}

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw std::invalid_argument("unknown split '" + s + "' (valid: train, val, test)");
}

int Dataset::find_image(const std::string& image_id) const {
  for (std::size_t k = 0; k < images.size(); ++k) {
    if (images[k].image_id == image_id) return static_cast<int>(k);
  }
  return -1;
}

const ImageRecord& Dataset::image(const std::string& image_id) const {
  int k = find_image(image_id);
  if (k < 0) throw std::out_of_range("unknown image id '" + image_id + "'");
  return images[static_cast<std::size_t>(k)];
}

bool ValidationReport::has(const std::string& kind) const {
  for (const auto& i : issues) {
    if (i.kind == kind) return true;
  }
  return false;
}

std::string ValidationReport::summary() const {
  std::ostringstream os;
  for (std::size_t k = 0; k < issues.size(); ++k) {
    if (k != 0) os << "; ";
    os << issues[k].where << ": " << issues[k].kind;
    if (!issues[k].detail.empty()) os << " (" << issues[k].detail << ")";
  }
  return os.str();
}

ValidationReport validate_dataset(const Dataset& ds) {
  ValidationReport report;
  auto add = [&](std::string kind, std::string where, std::string detail = {}) {
    report.issues.push_back({std::move(kind), std::move(where), std::move(detail)});
  };

  std::set<std::string> ids;
  for (std::size_t k = 0; k < ds.images.size(); ++k) {
    const ImageRecord& img = ds.images[k];
    const std::string where = "images[" + std::to_string(k) + "]";
    if (img.image_id.empty()) add("empty image id", where);
    if (!ids.insert(img.image_id).second) add("duplicate image id", where, img.image_id);
    if (img.persons.empty()) add("no persons", where, img.image_id);
    for (std::size_t p = 0; p < img.persons.size(); ++p) {
      if (!img.persons[p].valid()) {
        add("invalid box", where + ".persons[" + std::to_string(p) + "]");
      }
    }
  }

  const int classes = static_cast<int>(ds.taxonomy.size());
  for (std::size_t k = 0; k < ds.samples.size(); ++k) {
    const PairSample& s = ds.samples[k];
    const std::string where = "samples[" + std::to_string(k) + "]";
    if (s.i == s.j) add("self-pair", where, s.key());
    if (s.label < 0 || s.label >= classes) {
      add("label out of range", where, std::to_string(s.label) + " not in [0," + std::to_string(classes) + ")");
    }
    int img = ds.find_image(s.image_id);
    if (img < 0) {
      add("unknown image", where, s.image_id);
      continue;
    }
    const int n = static_cast<int>(ds.images[static_cast<std::size_t>(img)].persons.size());
    if (s.i < 0 || s.i >= n || s.j < 0 || s.j >= n) {
      add("person index out of range", where, s.key() + " with " + std::to_string(n) + " persons");
    }
  }
  return report;
}

}  // namespace consor
