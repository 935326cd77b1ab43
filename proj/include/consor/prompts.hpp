#pragma once

// Descriptive social prompts: per-vocab templates, zero-shot visual-vocab
// selection with the frozen joint embeddings, and per-class assembly.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "consor/encoder.hpp"
#include "consor/taxonomy.hpp"

namespace consor {

enum class CorpusKind { scene_category, scene_attribute, object_category, emotion };

std::string to_string(CorpusKind kind);
/// Throws std::invalid_argument naming the valid kinds.
CorpusKind corpus_kind_from_string(const std::string& s);
const std::vector<CorpusKind>& all_corpus_kinds();
int default_top_k(CorpusKind kind);
/// Vocabulary sizes of the reference corpora (365 / 94 / 1000 / 24).
std::size_t reference_corpus_size(CorpusKind kind);

struct Corpus {
  CorpusKind kind = CorpusKind::scene_category;
  std::vector<std::string> vocabs;
  int top_k = 5;

  std::string hash() const;
};

/// One vocab per line; blank lines and lines starting with '#' are skipped.
Corpus load_corpus(CorpusKind kind, const std::filesystem::path& path);
std::filesystem::path bundled_corpora_dir();
/// Loads <dir>/<kind>.txt for each requested kind (all four by default)
/// and logs a warning when a bundled corpus deviates from its reference
/// size.
std::vector<Corpus> load_corpora(const std::filesystem::path& dir,
                                 const std::vector<CorpusKind>& kinds = all_corpus_kinds());

std::string render_vocab_prompt(CorpusKind kind, const std::string& vocab);
std::string render_vocab_prompt(const std::string& kind, const std::string& vocab);

struct RankedVocab {
  std::string vocab;
  double score = 0.0;
  std::size_t index = 0;  // position in the corpus
};

struct RankedList {
  CorpusKind kind = CorpusKind::scene_category;
  int top_k = 0;
  std::vector<RankedVocab> items;
};

struct VisualVocabSelection {
  std::string image_id;
  std::vector<RankedList> lists;  // in corpus order of the request

  const RankedList* find(CorpusKind kind) const;
  nlohmann::json to_json() const;
  static VisualVocabSelection from_json(const nlohmann::json& j);
};

/// Ranks every vocab prompt of each corpus by cosine similarity with the
/// image in joint space; ties keep corpus order. Vocab embeddings are
/// computed once per corpus and selections are cached per
/// (image, corpus hash).
class VocabSelector {
 public:
  VocabSelector(const EncoderProvider& provider, std::vector<Corpus> corpora);

  VisualVocabSelection select(const std::string& image_id);
  const std::vector<Corpus>& corpora() const { return corpora_; }

 private:
  const Mat& embeddings(std::size_t corpus);

  const EncoderProvider& provider_;
  std::vector<Corpus> corpora_;
  std::vector<std::string> hashes_;
  std::map<std::size_t, Mat> embeddings_;
  std::map<std::pair<std::string, std::string>, RankedList> cache_;
};

VisualVocabSelection select_visual_vocabs(const std::string& image_id, const std::vector<Corpus>& corpora,
                                          const EncoderProvider& provider);

struct SocialPrompt {
  std::string relation;
  std::string text;
};

std::string class_sentence(const std::string& relation);
/// Comma-joins the vocabs substituted into one template slot.
std::string join_vocabs(const std::vector<std::string>& vocabs);
/// The vocab sentences shared by every class prompt of an image.
std::string vocab_description(const VisualVocabSelection& sel);
/// One prompt per class: the class sentence followed by the vocab sentences.
/// Throws std::invalid_argument when a list is shorter than its top_k.
std::vector<SocialPrompt> assemble_social_prompts(const VisualVocabSelection& sel,
                                                  const RelationTaxonomy& taxonomy);

/// image_id -> C prompt texts in taxonomy order.
struct PromptBank {
  std::map<std::string, std::vector<std::string>> prompts;

  const std::vector<std::string>& at(const std::string& image_id) const;
  nlohmann::json to_json() const;
  static PromptBank from_json(const nlohmann::json& j);
};

}  // namespace consor
