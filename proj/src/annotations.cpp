#include "consor/annotations.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "consor/util.hpp"

namespace consor {
namespace {

void note_unmapped(const nlohmann::json& obj, const std::set<std::string>& known, const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    if (known.count(key) == 0) log_event("annotations.unmapped_field", {{"where", where}, {"field", key}});
  }
}

RelationTaxonomy resolve_taxonomy(const nlohmann::json& t, const std::filesystem::path& base_dir) {
  if (t.is_object()) return RelationTaxonomy::from_json(t);
  if (!t.is_string()) throw AnnotationError("annotations: \"taxonomy\" must be a name or an object");
  const std::string name = t.get<std::string>();
  for (const auto& builtin : builtin_taxonomy_names()) {
    if (builtin == name) return builtin_taxonomy(name);
  }
  std::filesystem::path p = base_dir / name;
  if (std::filesystem::exists(p)) return load_taxonomy(p);
  return builtin_taxonomy(name);  // throws, naming the valid options
}

PersonBox parse_box(const nlohmann::json& b, bool pixel, int width, int height, const std::string& where) {
  if (!b.is_array() || b.size() != 4) throw AnnotationError(where + ": expected [x0, y0, x1, y1]");
  PersonBox box{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
  if (pixel) {
    if (width <= 0 || height <= 0) throw AnnotationError(where + ": pixel boxes need positive image size");
    box.x0 /= width;
    box.x1 /= width;
    box.y0 /= height;
    box.y1 /= height;
  }
  return box;
}

}  // namespace

Dataset parse_annotations(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  try {
    if (!j.is_object()) throw AnnotationError("annotations: top level must be an object");
    note_unmapped(j, {"taxonomy", "coords", "split", "images", "samples"}, "$");
    if (!j.contains("taxonomy")) throw AnnotationError("annotations: missing \"taxonomy\"");
    Dataset ds{resolve_taxonomy(j.at("taxonomy"), base_dir), {}, {}, Split::train};

    const std::string coords = j.value("coords", std::string("normalized"));
    if (coords != "normalized" && coords != "pixel") {
      throw AnnotationError("annotations: \"coords\" must be \"normalized\" or \"pixel\"");
    }
    const bool pixel = coords == "pixel";
    if (j.contains("split")) ds.split = split_from_string(j.at("split").get<std::string>());

    const auto& images = j.at("images");
    for (std::size_t k = 0; k < images.size(); ++k) {
      const auto& im = images[k];
      const std::string where = "images[" + std::to_string(k) + "]";
      note_unmapped(im, {"id", "width", "height", "persons"}, where);
      ImageRecord rec;
      rec.image_id = im.at("id").get<std::string>();
      rec.width = im.value("width", 0);
      rec.height = im.value("height", 0);
      const auto& persons = im.at("persons");
      for (std::size_t p = 0; p < persons.size(); ++p) {
        rec.persons.push_back(parse_box(persons[p], pixel, rec.width, rec.height,
                                        where + ".persons[" + std::to_string(p) + "]"));
      }
      ds.images.push_back(std::move(rec));
    }

    const auto& samples = j.at("samples");
    for (std::size_t k = 0; k < samples.size(); ++k) {
      const auto& s = samples[k];
      const std::string where = "samples[" + std::to_string(k) + "]";
      note_unmapped(s, {"image", "i", "j", "label"}, where);
      PairSample ps;
      ps.image_id = s.at("image").get<std::string>();
      ps.i = s.at("i").get<int>();
      ps.j = s.at("j").get<int>();
      const auto& label = s.at("label");
      if (label.is_string()) {
        ps.label = ds.taxonomy.index_of(label.get<std::string>());
        if (ps.label < 0) {
          throw AnnotationError(where + ": label '" + label.get<std::string>() + "' is not in taxonomy " +
                                ds.taxonomy.name());
        }
      } else {
        ps.label = label.get<int>();
      }
      ds.samples.push_back(std::move(ps));
    }

    ValidationReport report = validate_dataset(ds);
    if (!report.ok()) throw AnnotationError("annotations invalid: " + report.summary(), report);
    return ds;
  } catch (const nlohmann::json::exception& e) {
    throw AnnotationError(std::string("annotations: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw AnnotationError(std::string("annotations: ") + e.what());
  }
}

Dataset load_annotations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw AnnotationError("cannot open annotations " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    std::ostringstream os;
    os << path.string() << ": parse error at byte " << e.byte << ": " << e.what();
    throw AnnotationError(os.str());
  }
  return parse_annotations(j, path.parent_path());
}

nlohmann::json annotations_to_json(const Dataset& ds) {
  nlohmann::json images = nlohmann::json::array();
  for (const auto& im : ds.images) {
    nlohmann::json persons = nlohmann::json::array();
    for (const auto& b : im.persons) persons.push_back({b.x0, b.y0, b.x1, b.y1});
    images.push_back({{"id", im.image_id}, {"width", im.width}, {"height", im.height}, {"persons", persons}});
  }
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& s : ds.samples) {
    samples.push_back({{"image", s.image_id}, {"i", s.i}, {"j", s.j}, {"label", s.label}});
  }
  return {{"taxonomy", ds.taxonomy.to_json()},
          {"coords", "normalized"},
          {"split", to_string(ds.split)},
          {"images", images},
          {"samples", samples}};
}

}  // namespace consor
