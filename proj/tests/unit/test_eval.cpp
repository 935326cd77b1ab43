#include <doctest.h>

#include <cmath>

#include "consor/evaluate.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace consor;

namespace {

ScoreRow row(const std::string& id, int label, std::vector<double> scores) { return {id, label, std::move(scores)}; }

}  // namespace

TEST_CASE("average precision hand case") {
  ScoreTable t{2, {row("a", 0, {0.9, 0.1}), row("b", 1, {0.6, 0.4}), row("c", 0, {0.2, 0.8})}};
  CHECK(average_precision(t, 0) == 5.0 / 6.0);
  CHECK(average_precision(t, 1) == 0.5);
  ScoreTable all_pos{1, {row("a", 0, {1.0}), row("b", 0, {1.0})}};
  CHECK(average_precision(all_pos, 0) == 1.0);
}

TEST_CASE("average precision fuzz against the oracle") {
  Rng rng(2024);
  for (int k = 0; k < 300; ++k) {
    ScoreTable t = testing::random_table(rng, 20, 5);
    auto ap = mean_average_precision(t);
    for (int c = 0; c < t.num_classes; ++c) {
      const double want = testing::oracle_ap(t, c);
      if (std::isnan(want)) {
        CHECK(std::isnan(ap.per_class_ap[static_cast<std::size_t>(c)]));
      } else {
        CHECK(std::abs(ap.per_class_ap[static_cast<std::size_t>(c)] - want) <= 1e-9);
      }
    }
    CHECK(std::abs(ap.map - testing::oracle_map(t)) <= 1e-9);
  }
}

TEST_CASE("recall and accuracy") {
  ScoreTable perfect{3, {row("a", 0, {0.8, 0.1, 0.1}), row("b", 1, {0.1, 0.8, 0.1}), row("c", 1, {0.2, 0.7, 0.1})}};
  auto rec = per_class_recall(perfect);
  CHECK(rec[0] == 1.0);
  CHECK(rec[1] == 1.0);
  CHECK(std::isnan(rec[2]));
  CHECK(top1_accuracy(perfect) == 1.0);

  ScoreTable wrong{2, {row("a", 0, {0.2, 0.8}), row("b", 1, {0.7, 0.3})}};
  CHECK(per_class_recall(wrong) == std::vector<double>{0.0, 0.0});

  ScoreTable partial{2, {row("a", 0, {0.9, 0.1}), row("b", 0, {0.6, 0.4}), row("c", 0, {0.3, 0.7}), row("d", 1, {0.1, 0.9})}};
  CHECK(per_class_recall(partial)[0] == doctest::Approx(2.0 / 3.0));
  CHECK(top1_accuracy(partial) == 0.75);

  ScoreTable uniform{3, {row("a", 0, {1.0 / 3, 1.0 / 3, 1.0 / 3}), row("b", 0, {1.0 / 3, 1.0 / 3, 1.0 / 3})}};
  CHECK(top1_accuracy(uniform) == 1.0);
  CHECK(argmax({0.2, 0.4, 0.4}) == 1);

  ScoreTable empty{2, {}};
  CHECK_THROWS_AS(top1_accuracy(empty), std::invalid_argument);
  CHECK_THROWS_AS(per_class_recall(empty), std::invalid_argument);
  CHECK_THROWS_AS(mean_average_precision(empty), std::invalid_argument);
}

TEST_CASE("metrics are invariant to row order") {
  Rng rng(5);
  for (int k = 0; k < 30; ++k) {
    ScoreTable t = testing::random_table(rng, 15, 4);
    ScoreTable s = t;
    rng.shuffle(s.rows.begin(), s.rows.end());
    auto a = compute_metrics(t, "x", "standard");
    auto b = compute_metrics(s, "x", "standard");
    CHECK(a.to_json() == b.to_json());
  }
}

TEST_CASE("report and score table round trips") {
  Rng rng(6);
  ScoreTable t = testing::random_table(rng, 12, 4);
  ScoreTable back = ScoreTable::from_csv(t.to_csv());
  REQUIRE(back.rows.size() == t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    CHECK(back.rows[r].sample_id == t.rows[r].sample_id);
    CHECK(back.rows[r].scores == t.rows[r].scores);
  }
  auto report = compute_metrics(t, "pisc-fine", "zeroshot");
  auto again = MetricsReport::from_json(report.to_json());
  CHECK(again.to_json() == report.to_json());
  CHECK(again.mode == "zeroshot");
  CHECK(report.n_samples == t.rows.size());
}

TEST_CASE("zero-shot scoring of planted class embeddings beats chance") {
  auto toy = testing::make_small_toy(12, 30);
  const Dataset& ds = toy.data.dataset;
  const auto c = static_cast<int>(ds.taxonomy.size());
  // oracle: nearest class sentence in joint space, ties to the lower class
  double expected = 0.0;
  for (const auto& s : ds.samples) {
    const Eigen::VectorXd img = toy.provider->image_embedding(s.image_id);
    int best = 0;
    double best_cos = -2.0;
    for (int k = 0; k < c; ++k) {
      const double cos = img.dot(toy.provider->text_embedding(class_sentence(ds.taxonomy[static_cast<std::size_t>(k)])));
      if (cos > best_cos) {
        best_cos = cos;
        best = k;
      }
    }
    expected += best == s.label ? 1.0 : 0.0;
  }
  expected /= static_cast<double>(ds.samples.size());
  ScoreTable table;
  auto report = evaluate_zeroshot(ds, *toy.provider, &table);
  CHECK(report.mode == "zeroshot");
  CHECK(report.acc1 == doctest::Approx(expected));
  CHECK(report.acc1 > 1.0 / c);
  CHECK(table.rows.size() == ds.samples.size());
}

TEST_CASE("evaluation of an untrained model") {
  testing::QuietLog quiet;
  auto toy = testing::make_small_toy(13, 3);
  ModelConfig mc = ModelConfig::miniature();
  mc.msat.layers = 1;
  ConsorModel model(mc, 1);
  FeatureCache cache(*toy.provider);
  ScoreTable table;
  auto report = evaluate_model(model, toy.data.dataset, toy.data.prompts, cache, 1.0, &table);
  CHECK(report.mode == "standard");
  CHECK(report.n_samples == toy.data.dataset.samples.size());
  CHECK_NOTHROW(table.validate());
  ScoreTable chunked = score_model(model, toy.data.dataset, toy.data.prompts, cache, 1.0, 5);
  for (std::size_t r = 0; r < table.rows.size(); ++r) CHECK(chunked.rows[r].scores == table.rows[r].scores);
}

TEST_CASE("missing fixtures are listed by id") {
  auto toy = testing::make_small_toy(14, 2);
  auto fixtures = std::make_shared<FixtureSet>(toy.data.fixtures);
  fixtures->erase(image_fixture_path("toy-0001"));
  FixtureProvider provider(fixtures, toy.spec.encoder);
  auto missing = missing_inputs(toy.data.dataset, &toy.data.prompts, provider, EvalMode::standard);
  CHECK(missing == std::vector<std::string>{"image:toy-0001"});
  try {
    evaluate_zeroshot(toy.data.dataset, provider);
    FAIL("expected an error");
  } catch (const MissingFeatureError& e) {
    CHECK(e.ids() == std::vector<std::string>{"image:toy-0001"});
  }
  CHECK(eval_mode_from_string("zeroshot") == EvalMode::zeroshot);
  CHECK_THROWS(eval_mode_from_string("fewshot"));
}
