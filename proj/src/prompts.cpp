#include "consor/prompts.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "consor/util.hpp"

namespace consor {

std::string to_string(CorpusKind kind) {
  switch (kind) {
    case CorpusKind::scene_category: return "scene_category";
    case CorpusKind::scene_attribute: return "scene_attribute";
    case CorpusKind::object_category: return "object_category";
    case CorpusKind::emotion: return "emotion";
  }
  return "scene_category";
}

CorpusKind corpus_kind_from_string(const std::string& s) {
  for (CorpusKind k : all_corpus_kinds()) {
    if (to_string(k) == s) return k;
  }
  throw std::invalid_argument("unknown corpus kind '" + s +
                              "' (valid: scene_category, scene_attribute, object_category, emotion)");
}

const std::vector<CorpusKind>& all_corpus_kinds() {
  static const std::vector<CorpusKind> kinds = {CorpusKind::scene_category, CorpusKind::scene_attribute,
                                                CorpusKind::object_category, CorpusKind::emotion};
  return kinds;
}

int default_top_k(CorpusKind kind) { return kind == CorpusKind::emotion ? 1 : 5; }

std::size_t reference_corpus_size(CorpusKind kind) {
  switch (kind) {
    case CorpusKind::scene_category: return 365;
    case CorpusKind::scene_attribute: return 94;
    case CorpusKind::object_category: return 1000;
    case CorpusKind::emotion: return 24;
  }
  return 0;
}

std::string Corpus::hash() const {
  std::string blob = to_string(kind) + "\n" + std::to_string(top_k) + "\n";
  for (const auto& v : vocabs) blob += v + "\n";
  return sha256_hex(blob);
}

Corpus load_corpus(CorpusKind kind, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus " + path.string());
  Corpus c;
  c.kind = kind;
  c.top_k = default_top_k(kind);
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    c.vocabs.push_back(line);
  }
  if (c.vocabs.empty()) throw std::runtime_error("corpus " + path.string() + " is empty");
  return c;
}

std::filesystem::path bundled_corpora_dir() { return std::filesystem::path(CONSOR_DATA_DIR) / "corpora"; }

std::vector<Corpus> load_corpora(const std::filesystem::path& dir, const std::vector<CorpusKind>& kinds) {
  std::vector<Corpus> out;
  const bool bundled = std::filesystem::weakly_canonical(dir) == std::filesystem::weakly_canonical(bundled_corpora_dir());
  for (CorpusKind k : kinds) {
    Corpus c = load_corpus(k, dir / (to_string(k) + ".txt"));
    if (bundled && c.vocabs.size() != reference_corpus_size(k)) {
      log_event("corpus.size_mismatch", {{"corpus", to_string(k)},
                                         {"size", c.vocabs.size()},
                                         {"reference", reference_corpus_size(k)}});
    }
    out.push_back(std::move(c));
  }
  return out;
}

std::string render_vocab_prompt(CorpusKind kind, const std::string& vocab) {
  if (vocab.empty()) throw std::invalid_argument("vocab must be non-empty");
  switch (kind) {
    case CorpusKind::scene_category: return "The photo is taken in " + vocab + ".";
    case CorpusKind::scene_attribute: return "The scene attribute of the image is " + vocab + ".";
    case CorpusKind::object_category: return "There are " + vocab + " in the photo.";
    case CorpusKind::emotion: return "The emotion in this photo is " + vocab + ".";
  }
  throw std::invalid_argument("unknown corpus kind");
}

std::string render_vocab_prompt(const std::string& kind, const std::string& vocab) {
  return render_vocab_prompt(corpus_kind_from_string(kind), vocab);
}

const RankedList* VisualVocabSelection::find(CorpusKind kind) const {
  for (const auto& l : lists) {
    if (l.kind == kind) return &l;
  }
  return nullptr;
}

nlohmann::json VisualVocabSelection::to_json() const {
  nlohmann::json corpora = nlohmann::json::array();
  for (const auto& l : lists) {
    nlohmann::json items = nlohmann::json::array();
    for (const auto& it : l.items) items.push_back({{"vocab", it.vocab}, {"score", it.score}, {"index", it.index}});
    corpora.push_back({{"kind", to_string(l.kind)}, {"top_k", l.top_k}, {"items", items}});
  }
  return {{"image_id", image_id}, {"corpora", corpora}};
}

VisualVocabSelection VisualVocabSelection::from_json(const nlohmann::json& j) {
  VisualVocabSelection sel;
  sel.image_id = j.at("image_id").get<std::string>();
  for (const auto& c : j.at("corpora")) {
    RankedList l;
    l.kind = corpus_kind_from_string(c.at("kind").get<std::string>());
    l.top_k = c.at("top_k").get<int>();
    for (const auto& it : c.at("items")) {
      l.items.push_back({it.at("vocab").get<std::string>(), it.at("score").get<double>(),
                         it.at("index").get<std::size_t>()});
    }
    sel.lists.push_back(std::move(l));
  }
  return sel;
}

VocabSelector::VocabSelector(const EncoderProvider& provider, std::vector<Corpus> corpora)
    : provider_(provider), corpora_(std::move(corpora)) {
  for (const auto& c : corpora_) {
    if (c.top_k < 1 || static_cast<std::size_t>(c.top_k) > c.vocabs.size()) {
      throw std::invalid_argument("corpus " + to_string(c.kind) + ": top_k must be in [1, corpus size]");
    }
    hashes_.push_back(c.hash());
  }
}

const Mat& VocabSelector::embeddings(std::size_t corpus) {
  auto it = embeddings_.find(corpus);
  if (it != embeddings_.end()) return it->second;
  const Corpus& c = corpora_[corpus];
  Mat m(static_cast<Eigen::Index>(c.vocabs.size()), provider_.config().joint_dim);
  for (std::size_t v = 0; v < c.vocabs.size(); ++v) {
    m.row(static_cast<Eigen::Index>(v)) = provider_.text_embedding(render_vocab_prompt(c.kind, c.vocabs[v])).transpose();
  }
  return embeddings_.emplace(corpus, std::move(m)).first->second;
}

VisualVocabSelection VocabSelector::select(const std::string& image_id) {
  VisualVocabSelection sel;
  sel.image_id = image_id;
  Eigen::VectorXd image;
  bool have_image = false;
  for (std::size_t ci = 0; ci < corpora_.size(); ++ci) {
    auto key = std::make_pair(image_id, hashes_[ci]);
    if (auto hit = cache_.find(key); hit != cache_.end()) {
      sel.lists.push_back(hit->second);
      continue;
    }
    if (!have_image) {
      image = provider_.image_embedding(image_id);
      have_image = true;
    }
    const Corpus& c = corpora_[ci];
    Eigen::VectorXd scores = embeddings(ci) * image;
    std::vector<std::size_t> order(c.vocabs.size());
    std::iota(order.begin(), order.end(), 0);
    const auto k = static_cast<std::size_t>(c.top_k);
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t a, std::size_t b) {
                        const double sa = scores(static_cast<Eigen::Index>(a));
                        const double sb = scores(static_cast<Eigen::Index>(b));
                        return sa != sb ? sa > sb : a < b;
                      });
    RankedList list;
    list.kind = c.kind;
    list.top_k = c.top_k;
    for (std::size_t r = 0; r < k; ++r) {
      list.items.push_back({c.vocabs[order[r]], scores(static_cast<Eigen::Index>(order[r])), order[r]});
    }
    cache_.emplace(std::move(key), list);
    sel.lists.push_back(std::move(list));
  }
  return sel;
}

VisualVocabSelection select_visual_vocabs(const std::string& image_id, const std::vector<Corpus>& corpora,
                                          const EncoderProvider& provider) {
  VocabSelector selector(provider, corpora);
  return selector.select(image_id);
}

std::string class_sentence(const std::string& relation) {
  return "In this photo, the social relation of this person pair is " + relation + ".";
}

std::string join_vocabs(const std::vector<std::string>& vocabs) {
  std::string out;
  for (std::size_t k = 0; k < vocabs.size(); ++k) {
    if (k != 0) out += ", ";
    out += vocabs[k];
  }
  return out;
}

std::string vocab_description(const VisualVocabSelection& sel) {
  std::string out;
  for (CorpusKind kind : all_corpus_kinds()) {
    const RankedList* list = sel.find(kind);
    if (list == nullptr) continue;
    if (list->items.size() < static_cast<std::size_t>(list->top_k) || list->items.empty()) {
      throw std::invalid_argument("incomplete vocab selection for " + to_string(kind) + " on image " + sel.image_id);
    }
    std::vector<std::string> words;
    for (const auto& it : list->items) words.push_back(it.vocab);
    const std::string joined = join_vocabs(words);
    if (!out.empty()) out += " ";
    switch (kind) {
      case CorpusKind::scene_category: out += "The photo is taken in " + joined + "."; break;
      case CorpusKind::scene_attribute: out += "This scene attribute of the image are " + joined + "."; break;
      case CorpusKind::object_category: out += "There are " + joined + " in the photo."; break;
      case CorpusKind::emotion: out += "This emotion in this photo is " + joined + "."; break;
    }
  }
  return out;
}

std::vector<SocialPrompt> assemble_social_prompts(const VisualVocabSelection& sel,
                                                  const RelationTaxonomy& taxonomy) {
  if (sel.lists.empty()) throw std::invalid_argument("vocab selection for " + sel.image_id + " is empty");
  const std::string suffix = vocab_description(sel);
  std::vector<SocialPrompt> out;
  out.reserve(taxonomy.size());
  for (const auto& relation : taxonomy.classes()) {
    out.push_back({relation, class_sentence(relation) + " " + suffix});
  }
  return out;
}

const std::vector<std::string>& PromptBank::at(const std::string& image_id) const {
  auto it = prompts.find(image_id);
  if (it == prompts.end()) throw MissingFeatureError({"prompts:" + image_id});
  return it->second;
}

nlohmann::json PromptBank::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [id, texts] : prompts) j[id] = texts;
  return j;
}

PromptBank PromptBank::from_json(const nlohmann::json& j) {
  PromptBank b;
  for (const auto& [id, texts] : j.items()) b.prompts[id] = texts.get<std::vector<std::string>>();
  return b;
}

}  // namespace consor
