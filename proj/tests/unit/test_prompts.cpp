#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "consor/prompts.hpp"
#include "consor/synthetic_provider.hpp"
#include "support.hpp"

using namespace consor;

namespace {

VisualVocabSelection letters_selection() {
  VisualVocabSelection sel;
  sel.image_id = "img";
  auto list = [](CorpusKind kind, std::vector<std::string> words) {
    RankedList l{kind, static_cast<int>(words.size()), {}};
    for (std::size_t k = 0; k < words.size(); ++k) l.items.push_back({words[k], 1.0 - 0.1 * k, k});
    return l;
  };
  sel.lists = {list(CorpusKind::scene_category, {"a", "b", "c", "d", "e"}),
               list(CorpusKind::scene_attribute, {"f", "g", "h", "i", "j"}),
               list(CorpusKind::object_category, {"k", "l", "m", "n", "o"}),
               list(CorpusKind::emotion, {"p"})};
  return sel;
}

Eigen::VectorXd basis(int dim, int k) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(dim);
  v(k) = 1.0;
  return v;
}

}  // namespace

TEST_CASE("vocab templates") {
  CHECK(render_vocab_prompt(CorpusKind::scene_category, "office") == "The photo is taken in office.");
  CHECK(render_vocab_prompt(CorpusKind::emotion, "joy") == "The emotion in this photo is joy.");
  CHECK(render_vocab_prompt(CorpusKind::object_category, "bow-tie") == "There are bow-tie in the photo.");
  CHECK(render_vocab_prompt("scene_attribute", "natural light") == "The scene attribute of the image is natural light.");
  CHECK_THROWS_AS(render_vocab_prompt("weather", "rain"), std::invalid_argument);
}

TEST_CASE("bundled corpora") {
  testing::QuietLog quiet;
  auto corpora = load_corpora(bundled_corpora_dir());
  REQUIRE(corpora.size() == 4);
  CHECK(corpora[0].vocabs.size() == 365);
  CHECK(corpora[2].vocabs.size() == 1000);
  CHECK(corpora[3].vocabs.size() == 24);
  CHECK(corpora[3].top_k == 1);
  CHECK(corpora[0].top_k == 5);
  for (const auto& c : corpora) {
    std::vector<std::string> sorted = c.vocabs;
    std::sort(sorted.begin(), sorted.end());
    CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
  }
  CHECK(corpora[0].hash() != corpora[1].hash());
}

TEST_CASE("selection: identical embedding ranks first with score 1") {
  testing::TableProvider p(4);
  p.images["img"] = basis(4, 2);
  Corpus c{CorpusKind::emotion, {"joy", "anger", "calm"}, 1};
  p.texts[render_vocab_prompt(c.kind, "joy")] = basis(4, 0);
  p.texts[render_vocab_prompt(c.kind, "anger")] = basis(4, 2);
  p.texts[render_vocab_prompt(c.kind, "calm")] = basis(4, 1);
  auto sel = select_visual_vocabs("img", {c}, p);
  REQUIRE(sel.lists.size() == 1);
  REQUIRE(sel.lists[0].items.size() == 1);
  CHECK(sel.lists[0].items[0].vocab == "anger");
  CHECK(sel.lists[0].items[0].score == doctest::Approx(1.0));
}

TEST_CASE("selection: all ties keep corpus order") {
  testing::TableProvider p(8);
  p.images["img"] = basis(8, 0);
  Corpus c{CorpusKind::scene_category, {}, 5};
  for (int k = 0; k < 7; ++k) {
    c.vocabs.push_back("v" + std::to_string(k));
    p.texts[render_vocab_prompt(c.kind, c.vocabs.back())] = basis(8, 1 + k);
  }
  auto sel = select_visual_vocabs("img", {c}, p);
  std::vector<std::string> got;
  for (const auto& it : sel.lists[0].items) got.push_back(it.vocab);
  CHECK(got == std::vector<std::string>{"v0", "v1", "v2", "v3", "v4"});
}

TEST_CASE("selection: seeded random embeddings match a full sort") {
  Rng rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    testing::TableProvider p(6);
    Eigen::VectorXd img = unit(rng.normal_matrix(6, 1).col(0));
    p.images["img"] = img;
    Corpus c{CorpusKind::object_category, {}, 5};
    std::vector<std::pair<double, int>> oracle;
    for (int k = 0; k < 10; ++k) {
      c.vocabs.push_back("obj" + std::to_string(k));
      Eigen::VectorXd e = unit(rng.normal_matrix(6, 1).col(0));
      p.texts[render_vocab_prompt(c.kind, c.vocabs.back())] = e;
      oracle.emplace_back(-e.dot(img), k);
    }
    std::sort(oracle.begin(), oracle.end());
    auto sel = select_visual_vocabs("img", {c}, p);
    REQUIRE(sel.lists[0].items.size() == 5);
    for (int k = 0; k < 5; ++k) {
      CHECK(sel.lists[0].items[static_cast<std::size_t>(k)].index == static_cast<std::size_t>(oracle[static_cast<std::size_t>(k)].second));
      CHECK(sel.lists[0].items[static_cast<std::size_t>(k)].score == doctest::Approx(-oracle[static_cast<std::size_t>(k)].first));
    }
  }
}

TEST_CASE("selection json round trip and caching") {
  SyntheticProvider p(3, EncoderConfig::miniature());
  Corpus c{CorpusKind::emotion, {"joy", "anger", "calm", "fear"}, 2};
  VocabSelector selector(p, {c});
  auto a = selector.select("img");
  auto b = selector.select("img");
  CHECK(a.to_json() == b.to_json());
  CHECK(VisualVocabSelection::from_json(a.to_json()).to_json() == a.to_json());
  c.top_k = 5;
  CHECK_THROWS_AS(VocabSelector(p, {c}), std::invalid_argument);
}

TEST_CASE("composite description") {
  CHECK(vocab_description(letters_selection()) ==
        "The photo is taken in a, b, c, d, e. This scene attribute of the image are f, g, h, i, j. "
        "There are k, l, m, n, o in the photo. This emotion in this photo is p.");
  CHECK(class_sentence("friend") == "In this photo, the social relation of this person pair is friend.");
}

TEST_CASE("assembled prompts differ only in the class sentence") {
  auto tax = builtin_taxonomy("pisc-fine");
  auto prompts = assemble_social_prompts(letters_selection(), tax);
  REQUIRE(prompts.size() == 6);
  const std::string suffix = vocab_description(letters_selection());
  for (std::size_t c = 0; c < prompts.size(); ++c) {
    CHECK(prompts[c].relation == tax[c]);
    const std::string head = class_sentence(tax[c]);
    REQUIRE(prompts[c].text.rfind(head, 0) == 0);
    CHECK(prompts[c].text.substr(head.size()) == " " + suffix);
  }
}

TEST_CASE("incomplete selection is rejected") {
  auto sel = letters_selection();
  sel.lists[1].items.pop_back();
  CHECK_THROWS_AS(assemble_social_prompts(sel, builtin_taxonomy("pisc-coarse")), std::invalid_argument);
  VisualVocabSelection empty;
  CHECK_THROWS_AS(assemble_social_prompts(empty, builtin_taxonomy("pisc-coarse")), std::invalid_argument);
}

TEST_CASE("a corpus subset drops its sentence") {
  auto sel = letters_selection();
  sel.lists.erase(sel.lists.begin() + 1);
  CHECK(vocab_description(sel) ==
        "The photo is taken in a, b, c, d, e. There are k, l, m, n, o in the photo. This emotion in this photo is p.");
}

TEST_CASE("prompt bank") {
  PromptBank bank;
  bank.prompts["x"] = {"one", "two"};
  CHECK(PromptBank::from_json(bank.to_json()).prompts == bank.prompts);
  CHECK_THROWS_AS(bank.at("y"), MissingFeatureError);
}
