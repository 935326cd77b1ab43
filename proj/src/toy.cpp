#include "consor/toy.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

#include "consor/annotations.hpp"
#include "consor/rng.hpp"
#include "consor/synthetic_provider.hpp"
#include "consor/util.hpp"

namespace consor {

void ToySpec::validate() const {
  if (n_images < 1) throw std::invalid_argument("toy: n_images must be >= 1");
  if (persons_per_image < 2) throw std::invalid_argument("toy: persons_per_image must be >= 2");
  if (num_classes < 2) throw std::invalid_argument("toy: num_classes must be >= 2");
  if (!(class_separation >= 0.0)) throw std::invalid_argument("toy: class_separation must be >= 0");
  encoder.validate();
}

nlohmann::json ToySpec::to_json() const {
  nlohmann::json kinds = nlohmann::json::array();
  for (CorpusKind k : corpora) kinds.push_back(to_string(k));
  return {{"n_images", n_images}, {"persons_per_image", persons_per_image}, {"num_classes", num_classes},
          {"seed", seed}, {"encoder", encoder.to_json()}, {"class_separation", class_separation},
          {"corpora", kinds}};
}

ToySpec ToySpec::from_json(const nlohmann::json& j) {
  ToySpec s;
  s.n_images = j.value("n_images", s.n_images);
  s.persons_per_image = j.value("persons_per_image", s.persons_per_image);
  s.num_classes = j.value("num_classes", s.num_classes);
  s.seed = j.value("seed", s.seed);
  if (j.contains("encoder")) {
    const auto& e = j.at("encoder");
    s.encoder = e.is_string() && e.get<std::string>() == "miniature" ? EncoderConfig::miniature()
                                                                    : EncoderConfig::from_json(e);
  }
  s.class_separation = j.value("class_separation", s.class_separation);
  if (j.contains("corpora_dir")) s.corpora_dir = j.at("corpora_dir").get<std::string>();
  if (j.contains("corpora")) {
    s.corpora.clear();
    for (const auto& k : j.at("corpora")) s.corpora.push_back(corpus_kind_from_string(k.get<std::string>()));
  }
  s.validate();
  return s;
}

RelationTaxonomy toy_taxonomy(int num_classes) {
  for (const auto& name : builtin_taxonomy_names()) {
    RelationTaxonomy t = builtin_taxonomy(name);
    if (static_cast<int>(t.size()) == num_classes) return t;
  }
  std::vector<std::string> classes;
  for (int c = 0; c < num_classes; ++c) classes.push_back("relation " + std::to_string(c));
  return RelationTaxonomy("toy-" + std::to_string(num_classes), classes);
}

namespace {

PersonBox random_box(Rng& rng) {
  const double w = rng.uniform(0.25, 0.5);
  const double h = rng.uniform(0.4, 0.8);
  const double x0 = rng.uniform(0.0, 1.0 - w);
  const double y0 = rng.uniform(0.0, 1.0 - h);
  return {x0, y0, x0 + w, y0 + h};
}

/// Grid cells whose centers fall inside the box, or the cell under the box
/// center when none do.
std::vector<int> covered_cells(const PersonBox& b, int gh, int gw) {
  std::vector<int> cells;
  for (int r = 0; r < gh; ++r) {
    for (int c = 0; c < gw; ++c) {
      const double cy = (r + 0.5) / gh;
      const double cx = (c + 0.5) / gw;
      if (cx >= b.x0 && cx <= b.x1 && cy >= b.y0 && cy <= b.y1) cells.push_back(r * gw + c);
    }
  }
  if (cells.empty()) {
    const int r = std::min(gh - 1, static_cast<int>(0.5 * (b.y0 + b.y1) * gh));
    const int c = std::min(gw - 1, static_cast<int>(0.5 * (b.x0 + b.x1) * gw));
    cells.push_back(r * gw + c);
  }
  return cells;
}

}  // namespace

ToyData generate_toy_dataset(const ToySpec& spec) {
  spec.validate();
  const EncoderConfig& cfg = spec.encoder;
  SyntheticProvider base(mix_seed(spec.seed, 0x746f79ULL), cfg);
  Rng rng(mix_seed(spec.seed, 0x6c6162656cULL));

  ToyData out{Dataset{toy_taxonomy(spec.num_classes), {}, {}, Split::train}, {}, {}, {}, {}};
  out.dataset.split = Split::train;
  const auto& classes = out.dataset.taxonomy.classes();

  std::vector<Eigen::VectorXd> class_joint;
  for (const auto& r : classes) {
    const std::string sentence = class_sentence(r);
    const TextFeatures tf = base.text_features(sentence);
    out.fixtures[text_fixture_path(sentence)] = text_pack(sentence, tf);
    class_joint.push_back(unit(tf.eot));
  }
  for (int c = 0; c < spec.num_classes; ++c) {
    Mat p = rng.normal_matrix(1, cfg.vis_hidden);
    out.prototypes.push_back(p / p.norm());
  }

  std::vector<int> labels;
  for (int k = 0; k < spec.n_images; ++k) labels.push_back(k % spec.num_classes);
  rng.shuffle(labels.begin(), labels.end());

  for (int k = 0; k < spec.n_images; ++k) {
    char id[32];
    std::snprintf(id, sizeof(id), "toy-%04d", k);
    ImageRecord image;
    image.image_id = id;
    image.width = cfg.image_size;
    image.height = cfg.image_size;
    for (int p = 0; p < spec.persons_per_image; ++p) image.persons.push_back(random_box(rng));

    const int y = labels[static_cast<std::size_t>(k)];
    VisualFeatures vf = base.visual_features(image.image_id);
    std::vector<int> cells;
    for (const auto& box : image.persons) {
      for (int cell : covered_cells(box, cfg.grid_h, cfg.grid_w)) cells.push_back(cell);
    }
    std::sort(cells.begin(), cells.end());
    cells.erase(std::unique(cells.begin(), cells.end()), cells.end());
    for (int l = 1; l <= cfg.n_layers; ++l) {
      const double strength = spec.class_separation * l / cfg.n_layers;
      for (int cell : cells) vf.per_layer[static_cast<std::size_t>(l)].row(cell) += strength * out.prototypes[static_cast<std::size_t>(y)].row(0);
    }
    vf.cls += spec.class_separation * class_joint[static_cast<std::size_t>(y)];
    out.fixtures[image_fixture_path(image.image_id)] = visual_pack(image.image_id, vf);

    for (int i = 0; i < spec.persons_per_image; ++i) {
      for (int j = 0; j < spec.persons_per_image; ++j) {
        if (i != j) out.dataset.samples.push_back({image.image_id, i, j, y});
      }
    }
    out.dataset.images.push_back(std::move(image));
  }

  const auto dir = spec.corpora_dir.empty() ? bundled_corpora_dir() : spec.corpora_dir;
  std::vector<Corpus> corpora = load_corpora(dir, spec.corpora);
  for (const auto& corpus : corpora) {
    for (const auto& v : corpus.vocabs) {
      const std::string prompt = render_vocab_prompt(corpus.kind, v);
      out.fixtures[text_fixture_path(prompt)] = joint_only_pack(prompt, base.text_embedding(prompt));
    }
  }

  auto view = std::make_shared<FixtureSet>(out.fixtures);
  FixtureProvider lookup(view, cfg);
  VocabSelector selector(lookup, corpora);
  for (const auto& image : out.dataset.images) {
    VisualVocabSelection sel = selector.select(image.image_id);
    std::vector<std::string> texts;
    for (const auto& prompt : assemble_social_prompts(sel, out.dataset.taxonomy)) {
      out.fixtures[text_fixture_path(prompt.text)] = text_pack(prompt.text, base.text_features(prompt.text));
      texts.push_back(prompt.text);
    }
    out.prompts.prompts[image.image_id] = std::move(texts);
    out.selections.push_back(std::move(sel));
  }

  ValidationReport report = validate_dataset(out.dataset);
  if (!report.ok()) throw std::logic_error("toy dataset failed validation: " + report.summary());
  return out;
}

void write_toy_dataset(const ToyData& data, const ToySpec& spec, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_fixtures(data.fixtures, dir / "fixtures");
  write_json_file(dir / "annotations.json", annotations_to_json(data.dataset));
  write_json_file(dir / "prompts.json", data.prompts.to_json());
  nlohmann::json vocabs = nlohmann::json::array();
  for (const auto& sel : data.selections) vocabs.push_back(sel.to_json());
  write_json_file(dir / "vocabs.json", vocabs);
  write_json_file(dir / "toy_spec.json", spec.to_json());
}

}  // namespace consor
