#include <doctest.h>

#include "consor/dataset.hpp"
#include "consor/taxonomy.hpp"

using namespace consor;

TEST_CASE("builtin taxonomies list their classes in order") {
  auto coarse = builtin_taxonomy("pisc-coarse");
  CHECK(coarse.classes() == std::vector<std::string>{"intimate", "non-intimate", "no-relation"});
  auto fine = builtin_taxonomy("pisc-fine");
  CHECK(fine.classes() ==
        std::vector<std::string>{"friend", "family", "couple", "professional", "commercial", "no-relation"});
  CHECK(builtin_taxonomy("pipa-fine").size() == 16);
  CHECK(builtin_taxonomy("pipa-coarse").size() == 5);
  CHECK(coarse.index_of("no-relation") == 2);
  CHECK(coarse.index_of("stranger") == -1);
}

TEST_CASE("unknown taxonomy names the valid options") {
  try {
    builtin_taxonomy("pisc-medium");
    FAIL("expected an error");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    for (const auto& n : builtin_taxonomy_names()) CHECK(msg.find(n) != std::string::npos);
  }
}

TEST_CASE("builtin taxonomies are deterministic and match the shipped files") {
  for (const auto& name : builtin_taxonomy_names()) {
    CHECK(builtin_taxonomy(name) == builtin_taxonomy(name));
    auto path = std::filesystem::path(CONSOR_DATA_DIR) / "taxonomies" / (name + ".json");
    CHECK(load_taxonomy(path) == builtin_taxonomy(name));
    CHECK(RelationTaxonomy::from_json(builtin_taxonomy(name).to_json()) == builtin_taxonomy(name));
  }
}

TEST_CASE("taxonomy invariants") {
  CHECK_THROWS_AS(RelationTaxonomy("t", {"a"}), std::invalid_argument);
  CHECK_THROWS_AS(RelationTaxonomy("t", {"a", "a"}), std::invalid_argument);
  CHECK_THROWS_AS(RelationTaxonomy("t", {"a", ""}), std::invalid_argument);
  CHECK_NOTHROW(RelationTaxonomy("t", {"a", "b"}));
}

namespace {

Dataset one_pair() {
  Dataset ds{builtin_taxonomy("pisc-coarse"), {}, {}, Split::train};
  ds.images.push_back({"img", 100, 80, {{0.1, 0.1, 0.4, 0.9}, {0.5, 0.2, 0.9, 0.8}}});
  ds.samples.push_back({"img", 0, 1, 2});
  return ds;
}

}  // namespace

TEST_CASE("validate_dataset accepts a valid dataset") {
  auto report = validate_dataset(one_pair());
  CHECK(report.ok());
  CHECK(report.issues.empty());
}

TEST_CASE("validate_dataset reports each violated invariant") {
  SUBCASE("self-pair") {
    auto ds = one_pair();
    ds.samples[0].j = 0;
    auto r = validate_dataset(ds);
    CHECK(r.has("self-pair"));
    CHECK(r.issues.front().where == "samples[0]");
  }
  SUBCASE("label out of range") {
    auto ds = one_pair();
    ds.samples[0].label = 3;
    CHECK(validate_dataset(ds).has("label out of range"));
  }
  SUBCASE("duplicate image id") {
    auto ds = one_pair();
    ds.images.push_back(ds.images[0]);
    CHECK(validate_dataset(ds).has("duplicate image id"));
  }
  SUBCASE("unknown image") {
    auto ds = one_pair();
    ds.samples[0].image_id = "other";
    CHECK(validate_dataset(ds).has("unknown image"));
  }
  SUBCASE("person index out of range") {
    auto ds = one_pair();
    ds.samples[0].j = 2;
    CHECK(validate_dataset(ds).has("person index out of range"));
  }
  SUBCASE("invalid box") {
    auto ds = one_pair();
    ds.images[0].persons[1] = {0.6, 0.2, 0.5, 0.8};
    CHECK(validate_dataset(ds).has("invalid box"));
    ds.images[0].persons[1] = {0.5, 0.2, 1.2, 0.8};
    CHECK(validate_dataset(ds).has("invalid box"));
  }
  SUBCASE("no persons") {
    auto ds = one_pair();
    ds.images.push_back({"empty", 10, 10, {}});
    CHECK(validate_dataset(ds).has("no persons"));
  }
  SUBCASE("several problems are all listed") {
    auto ds = one_pair();
    ds.samples.push_back({"img", 1, 1, 7});
    auto r = validate_dataset(ds);
    CHECK(r.has("self-pair"));
    CHECK(r.has("label out of range"));
    CHECK(r.issues.size() == 2);
  }
}

TEST_CASE("pair keys") { CHECK(PairSample{"a", 2, 0, 1}.key() == "a:2:0"); }
