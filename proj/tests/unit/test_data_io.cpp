#include <doctest.h>

#include <cstring>
#include <fstream>

#include "consor/annotations.hpp"
#include "consor/cir.hpp"
#include "consor/feature_pack.hpp"
#include "consor/synthetic_provider.hpp"
#include "support.hpp"

using namespace consor;
using nlohmann::json;

namespace {

json minimal_annotations() {
  return json{{"taxonomy", "pisc-coarse"},
              {"images", {{{"id", "a"}, {"width", 100}, {"height", 50}, {"persons", {{0.0, 0.0, 0.5, 1.0}, {0.5, 0.0, 1.0, 1.0}}}}}},
              {"samples", {{{"image", "a"}, {"i", 0}, {"j", 1}, {"label", 1}}}}};
}

}  // namespace

TEST_CASE("annotations: minimal file") {
  testing::TempDir dir;
  write_json_file(dir / "ann.json", minimal_annotations());
  Dataset ds = load_annotations(dir / "ann.json");
  CHECK(ds.samples.size() == 1);
  CHECK(ds.images.size() == 1);
  CHECK(ds.images[0].persons.size() == 2);
  CHECK(ds.samples[0].label == 1);
  CHECK(ds.taxonomy.name() == "pisc-coarse");
}

TEST_CASE("annotations: pixel boxes are divided by the image size") {
  json j = minimal_annotations();
  j["coords"] = "pixel";
  j["images"][0]["width"] = 200;
  j["images"][0]["height"] = 80;
  j["images"][0]["persons"] = {{20, 8, 100, 80}, {150, 0, 200, 40}};
  Dataset ds = parse_annotations(j);
  const PersonBox& b = ds.images[0].persons[0];
  CHECK(b.x0 == doctest::Approx(20.0 / 200));
  CHECK(b.x1 == doctest::Approx(100.0 / 200));
  CHECK(b.y0 == doctest::Approx(8.0 / 80));
  CHECK(b.y1 == doctest::Approx(1.0));
  CHECK(ds.images[0].persons[1].x0 == doctest::Approx(0.75));
}

TEST_CASE("annotations: labels by name") {
  json j = minimal_annotations();
  j["samples"][0]["label"] = "no-relation";
  CHECK(parse_annotations(j).samples[0].label == 2);
  j["samples"][0]["label"] = "stranger";
  CHECK_THROWS_AS(parse_annotations(j), AnnotationError);
}

TEST_CASE("annotations: duplicate image id is reported") {
  json j = minimal_annotations();
  j["images"].push_back(j["images"][0]);
  try {
    parse_annotations(j);
    FAIL("expected an error");
  } catch (const AnnotationError& e) {
    CHECK(e.report().has("duplicate image id"));
    CHECK(std::string(e.what()).find("duplicate image id") != std::string::npos);
  }
}

TEST_CASE("annotations: parse errors carry a position") {
  testing::TempDir dir;
  write_text_file(dir / "bad.json", "{\"taxonomy\": \"pisc-coarse\",\n \"images\": [,]}");
  try {
    load_annotations(dir / "bad.json");
    FAIL("expected an error");
  } catch (const AnnotationError& e) {
    CHECK(std::string(e.what()).find("line") != std::string::npos);
  }
}

TEST_CASE("annotations: canonical json round trip") {
  testing::QuietLog quiet;
  json j = minimal_annotations();
  j["extra_field"] = 3;
  Dataset ds = parse_annotations(j);
  CHECK(quiet.text().find("annotations.unmapped_field") != std::string::npos);
  Dataset back = parse_annotations(annotations_to_json(ds));
  CHECK(back.taxonomy == ds.taxonomy);
  CHECK(back.images[0].persons == ds.images[0].persons);
  CHECK(back.samples[0].key() == ds.samples[0].key());
}

TEST_CASE("feature pack round trip is lossless") {
  testing::TempDir dir;
  Rng rng(3);
  FeaturePack pack;
  pack.subject_id = "subject";
  pack.attrs = {{"k", "v"}};
  pack.put("f64", rng.normal_matrix(3, 7), DType::float64);
  pack.put("f32", rng.normal_matrix(2, 5), DType::float32);
  pack.put_vector("vec", Eigen::VectorXd::LinSpaced(4, -1.0, 1.0), DType::float64);
  write_feature_pack(pack, dir / "p.fpk");
  FeaturePack back = read_feature_pack(dir / "p.fpk");
  CHECK(back == pack);
  CHECK(back.matrix("f64").rows() == 3);
  CHECK(back.vector("vec").size() == 4);

  // float32 entries hold exactly the rounded values
  Mat src = rng.normal_matrix(1, 3);
  FeaturePack p2;
  p2.subject_id = "s";
  p2.put("x", src);
  for (int k = 0; k < 3; ++k) CHECK(p2.matrix("x")(0, k) == static_cast<double>(static_cast<float>(src(0, k))));
}

TEST_CASE("feature pack: truncated payload is a corruption error") {
  FeaturePack pack;
  pack.subject_id = "s";
  pack.put("x", Mat::Ones(4, 4));
  auto bytes = encode_feature_pack(pack);
  bytes.resize(bytes.size() - 3);
  CHECK_THROWS_AS(decode_feature_pack(bytes), FeaturePackError);
  bytes.resize(6);
  CHECK_THROWS_AS(decode_feature_pack(bytes), FeaturePackError);
}

TEST_CASE("feature pack: hand-built [5,4] float32 entry") {
  const std::string header =
      R"({"subject_id":"hand","entries":{"m":{"shape":[5,4],"dtype":"float32","offset":0,"nbytes":80}}})";
  std::vector<std::uint8_t> bytes;
  const std::string magic = "CSRFPK1\n";
  bytes.insert(bytes.end(), magic.begin(), magic.end());
  const auto len = static_cast<std::uint32_t>(header.size());
  for (int b = 0; b < 4; ++b) bytes.push_back(static_cast<std::uint8_t>((len >> (8 * b)) & 0xff));
  bytes.insert(bytes.end(), header.begin(), header.end());
  for (int k = 0; k < 20; ++k) {
    float f = 0.5f * static_cast<float>(k);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    for (int b = 0; b < 4; ++b) bytes.push_back(static_cast<std::uint8_t>((bits >> (8 * b)) & 0xff));
  }
  FeaturePack pack = decode_feature_pack(bytes);
  Mat m = pack.matrix("m");
  REQUIRE(m.rows() == 5);
  REQUIRE(m.cols() == 4);
  CHECK(m(4, 3) == 9.5);
  CHECK(m(1, 0) == 2.0);

  auto short_bytes = bytes;
  short_bytes.resize(short_bytes.size() - 4);
  CHECK_THROWS_AS(decode_feature_pack(short_bytes), FeaturePackError);
  auto long_bytes = bytes;
  long_bytes.push_back(0);
  CHECK_THROWS_AS(decode_feature_pack(long_bytes), FeaturePackError);
}

TEST_CASE("toy dataset: same spec twice gives identical fixtures") {
  auto a = testing::make_small_toy(5, 6);
  auto b = testing::make_small_toy(5, 6);
  CHECK(a.data.fixtures == b.data.fixtures);
  CHECK(a.data.prompts.prompts == b.data.prompts.prompts);
  CHECK(annotations_to_json(a.data.dataset) == annotations_to_json(b.data.dataset));
  auto c = testing::make_small_toy(6, 6);
  CHECK(c.data.fixtures != a.data.fixtures);
}

TEST_CASE("toy dataset: layout") {
  auto t = testing::make_small_toy(1, 7, 3);
  const Dataset& ds = t.data.dataset;
  CHECK(ds.taxonomy.name() == "pisc-coarse");
  CHECK(ds.images.size() == 7);
  CHECK(ds.samples.size() == 7 * 6);
  CHECK(ds.images[0].image_id == "toy-0000");
  CHECK(validate_dataset(ds).ok());
  for (const auto& image : ds.images) CHECK(t.data.prompts.at(image.image_id).size() == 3);
  CHECK(toy_taxonomy(6).name() == "pisc-fine");
  CHECK(toy_taxonomy(4).name() == "toy-4");
}

TEST_CASE("toy dataset: zero separation leaves features label-independent") {
  testing::QuietLog quiet;
  ToySpec spec;
  spec.seed = 11;
  spec.n_images = 6;
  spec.class_separation = 0.0;
  ToyData data = generate_toy_dataset(spec);
  // every image carries exactly the base encoder output, whatever its label
  SyntheticProvider base(mix_seed(spec.seed, 0x746f79ULL), spec.encoder);
  for (const auto& image : data.dataset.images) {
    const auto& stored = data.fixtures.at(image_fixture_path(image.image_id));
    CHECK(stored == visual_pack(image.image_id, base.visual_features(image.image_id)));
  }
}

TEST_CASE("toy dataset: a least-squares linear probe on pooled pair features separates the classes") {
  auto t = testing::make_small_toy(0, 64);
  const Dataset& ds = t.data.dataset;
  const EncoderConfig& cfg = t.spec.encoder;
  const int r = cfg.vis_hidden;
  const int c = static_cast<int>(ds.taxonomy.size());
  const auto n = static_cast<Eigen::Index>(ds.samples.size());
  Mat x(n, 2 * r + 1);
  Mat y = Mat::Zero(n, c);
  for (Eigen::Index k = 0; k < n; ++k) {
    const PairSample& s = ds.samples[static_cast<std::size_t>(k)];
    const auto& image = ds.image(s.image_id);
    const Mat last = t.provider->visual_features(s.image_id).per_layer.back();
    x.row(k).segment(0, r) = roi_weights(image.persons[s.i], cfg.grid_h, cfg.grid_w) * last;
    x.row(k).segment(r, r) = roi_weights(image.persons[s.j], cfg.grid_h, cfg.grid_w) * last;
    x(k, 2 * r) = 1.0;
    y(k, s.label) = 1.0;
  }
  Mat w = x.colPivHouseholderQr().solve(y);
  Mat pred = x * w;
  int correct = 0;
  for (Eigen::Index k = 0; k < n; ++k) {
    Eigen::Index best;
    pred.row(k).maxCoeff(&best);
    if (y(k, best) == 1.0) ++correct;
  }
  const double acc = static_cast<double>(correct) / static_cast<double>(n);
  MESSAGE("linear probe accuracy " << acc);
  CHECK(acc >= 0.9);
}

TEST_CASE("toy dataset: written tree reloads") {
  testing::QuietLog quiet;
  testing::TempDir dir;
  auto t = testing::make_small_toy(2, 3);
  write_toy_dataset(t.data, t.spec, dir.path());
  Dataset ds = load_annotations(dir / "annotations.json");
  CHECK(ds.samples.size() == t.data.dataset.samples.size());
  PromptBank bank = PromptBank::from_json(read_json_file(dir / "prompts.json"));
  CHECK(bank.prompts == t.data.prompts.prompts);
  FixtureProvider disk(dir / "fixtures", t.spec.encoder);
  const auto a = disk.visual_features("toy-0001");
  const auto b = t.provider->visual_features("toy-0001");
  CHECK(a.per_layer.back() == b.per_layer.back());
  CHECK(a.cls == b.cls);
  const std::string& prompt = bank.at("toy-0002")[1];
  CHECK(disk.text_features(prompt).eot == t.provider->text_features(prompt).eot);
  CHECK_THROWS_AS(disk.visual_features("toy-9999"), MissingFeatureError);
}
