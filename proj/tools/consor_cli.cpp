#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include "consor/annotations.hpp"
#include "consor/checkpoint.hpp"
#include "consor/evaluate.hpp"
#include "consor/fixture_provider.hpp"
#include "consor/grad_check.hpp"
#include "consor/run_config.hpp"
#include "consor/synthetic_provider.hpp"
#include "consor/toy.hpp"
#include "consor/util.hpp"

namespace fs = std::filesystem;
using namespace consor;

namespace {

constexpr const char* kVersion = "0.1.0";

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Flags {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string provider;
  std::string mode = "standard";
  std::string taxonomy;
  std::string fusion_layers;
  std::string sharing;
  std::string corpora_subset;
  std::string data;
  std::string annotations;
  std::string prompts;
  std::string fixtures;
  std::string corpora;
  std::string checkpoint;
  std::string vocabs;
  std::string image;
  std::string pair;
  std::vector<std::string> metrics;
  std::optional<int> n_images;
  std::optional<int> persons;
  std::optional<int> classes;
  std::optional<double> separation;
  std::optional<int> epochs;
  std::optional<double> lr;
  std::optional<double> logit_scale;
  int n_coords = 200;
  double fd_step = 1e-3;
  double tol = 1e-4;
};

/// Resolved configuration plus everything needed to write the manifest.
struct Run {
  std::string command;
  std::vector<std::string> argv;
  RunConfig cfg;
  fs::path out;
  std::vector<std::string> outputs;

  void wrote(const fs::path& p) { outputs.push_back(fs::relative(p, out).generic_string()); }
};

void require_file(const fs::path& p, const std::string& what) {
  if (p.empty()) throw UsageError(what + " is required");
  if (!fs::exists(p)) throw UsageError(what + " not found: " + p.string());
}

Run resolve(const std::string& command, const Flags& f, const std::vector<std::string>& argv) {
  Run run;
  run.command = command;
  run.argv = argv;
  if (!f.config.empty()) run.cfg = load_run_config(f.config);
  RunConfig& c = run.cfg;
  if (f.seed) {
    c.seed = *f.seed;
    c.train.seed = *f.seed;
    c.toy.seed = *f.seed;
  } else if (!f.config.empty()) {
    c.train.seed = c.seed;
    c.toy.seed = c.seed;
  }
  if (!f.provider.empty()) {
    if (f.provider != "fixture" && f.provider != "synthetic") throw UsageError("--provider must be fixture or synthetic");
    c.provider = f.provider;
  }
  if (!f.taxonomy.empty()) {
    builtin_taxonomy(f.taxonomy);
    c.taxonomy = f.taxonomy;
  }
  if (!f.sharing.empty()) c.model.msat.sharing = sharing_mode_from_string(f.sharing);
  if (!f.fusion_layers.empty()) {
    c.model.msat.schedule = FusionSchedule::parse(f.fusion_layers, c.model.encoder.n_layers, c.model.msat.layers);
  }
  if (!f.corpora_subset.empty()) c.corpora_subset = parse_corpora_subset(f.corpora_subset);
  if (!f.data.empty()) {
    const fs::path d = f.data;
    if (!fs::is_directory(d)) throw UsageError("--data directory not found: " + d.string());
    c.annotations = d / "annotations.json";
    c.prompts = d / "prompts.json";
    c.fixtures = d / "fixtures";
  }
  if (!f.annotations.empty()) c.annotations = f.annotations;
  if (!f.prompts.empty()) c.prompts = f.prompts;
  if (!f.fixtures.empty()) c.fixtures = f.fixtures;
  if (!f.corpora.empty()) c.corpora = f.corpora;
  if (c.corpora.empty()) c.corpora = bundled_corpora_dir();
  if (f.epochs) c.train.epochs = *f.epochs;
  if (f.lr) c.train.lr = *f.lr;
  if (f.logit_scale) c.train.logit_scale = *f.logit_scale;
  c.train.validate();
  c.model.validate();

  if (!f.out.empty()) c.output = f.out;
  if (c.output.empty()) throw UsageError("--out is required");
  run.out = c.output;
  fs::create_directories(run.out);
  return run;
}

void write_manifest(const Run& run) {
  nlohmann::json versions = {
      {"consor", kVersion},
      {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                    std::to_string(EIGEN_MINOR_VERSION)},
      {"compiler", __VERSION__},
  };
  write_json_file(run.out / "run_manifest.json", {{"command", run.command},
                                                  {"argv", run.argv},
                                                  {"config", run.cfg.to_json()},
                                                  {"config_hash", run.cfg.hash()},
                                                  {"seed", run.cfg.seed},
                                                  {"versions", versions},
                                                  {"outputs", run.outputs}});
}

std::unique_ptr<EncoderProvider> make_provider(const RunConfig& c, const EncoderConfig& encoder) {
  if (c.provider == "synthetic") return std::make_unique<SyntheticProvider>(c.seed, encoder);
  require_file(c.fixtures, "fixture directory");
  return std::make_unique<FixtureProvider>(c.fixtures, encoder);
}

Dataset load_dataset(const RunConfig& c) {
  require_file(c.annotations, "annotations file");
  Dataset ds = load_annotations(c.annotations);
  if (c.taxonomy && *c.taxonomy != ds.taxonomy.name()) {
    throw ConfigError("taxonomy '" + *c.taxonomy + "' does not match the annotations ('" + ds.taxonomy.name() + "')");
  }
  return ds;
}

std::vector<Corpus> load_selected_corpora(const RunConfig& c) { return load_corpora(c.corpora, c.corpora_subset); }

PromptBank build_bank(const Dataset& ds, const std::vector<VisualVocabSelection>& sels) {
  PromptBank bank;
  for (const auto& sel : sels) {
    std::vector<std::string> texts;
    for (const auto& p : assemble_social_prompts(sel, ds.taxonomy)) texts.push_back(p.text);
    bank.prompts[sel.image_id] = std::move(texts);
  }
  return bank;
}

std::vector<VisualVocabSelection> select_all(const Dataset& ds, const EncoderProvider& provider,
                                             const std::vector<Corpus>& corpora) {
  VocabSelector selector(provider, corpora);
  std::vector<VisualVocabSelection> out;
  for (const auto& image : ds.images) out.push_back(selector.select(image.image_id));
  return out;
}

PromptBank load_or_build_prompts(const RunConfig& c, const Dataset& ds, const EncoderProvider& provider) {
  if (!c.prompts.empty()) {
    require_file(c.prompts, "prompts file");
    return PromptBank::from_json(read_json_file(c.prompts));
  }
  return build_bank(ds, select_all(ds, provider, load_selected_corpora(c)));
}

// ---- commands ----

int cmd_gen_toy(Run& run, const Flags& f) {
  ToySpec spec = run.cfg.toy;
  if (f.n_images) spec.n_images = *f.n_images;
  if (f.persons) spec.persons_per_image = *f.persons;
  if (f.classes) spec.num_classes = *f.classes;
  if (f.separation) spec.class_separation = *f.separation;
  if (run.cfg.taxonomy) spec.num_classes = static_cast<int>(builtin_taxonomy(*run.cfg.taxonomy).size());
  spec.encoder = run.cfg.model.encoder;
  spec.corpora_dir = run.cfg.corpora;
  spec.corpora = run.cfg.corpora_subset;
  ToyData data = generate_toy_dataset(spec);
  write_toy_dataset(data, spec, run.out);
  for (const char* name : {"annotations.json", "prompts.json", "vocabs.json", "toy_spec.json"}) run.wrote(run.out / name);
  run.wrote(run.out / "fixtures");
  log_event("gen_toy.done", {{"images", data.dataset.images.size()}, {"samples", data.dataset.samples.size()},
                             {"fixtures", data.fixtures.size()}});
  return 0;
}

int cmd_build_fixtures(Run& run, const Flags&) {
  const RunConfig& c = run.cfg;
  Dataset ds = load_dataset(c);
  SyntheticProvider synth(c.seed, c.model.encoder);
  FixtureSet set;
  for (const auto& image : ds.images) {
    set[image_fixture_path(image.image_id)] = visual_pack(image.image_id, synth.visual_features(image.image_id));
  }
  for (const auto& r : ds.taxonomy.classes()) {
    const std::string s = class_sentence(r);
    set[text_fixture_path(s)] = text_pack(s, synth.text_features(s));
  }
  for (const auto& corpus : load_selected_corpora(c)) {
    for (const auto& v : corpus.vocabs) {
      const std::string p = render_vocab_prompt(corpus.kind, v);
      set[text_fixture_path(p)] = joint_only_pack(p, synth.text_embedding(p));
    }
  }
  if (!c.prompts.empty()) {
    require_file(c.prompts, "prompts file");
    for (const auto& [id, texts] : PromptBank::from_json(read_json_file(c.prompts)).prompts) {
      for (const auto& t : texts) set[text_fixture_path(t)] = text_pack(t, synth.text_features(t));
    }
  }
  write_fixtures(set, run.out / "fixtures");
  run.wrote(run.out / "fixtures");
  log_event("build_fixtures.done", {{"fixtures", set.size()}});
  return 0;
}

int cmd_select_vocabs(Run& run, const Flags&) {
  const RunConfig& c = run.cfg;
  Dataset ds = load_dataset(c);
  auto provider = make_provider(c, c.model.encoder);
  nlohmann::json report = nlohmann::json::array();
  for (const auto& sel : select_all(ds, *provider, load_selected_corpora(c))) report.push_back(sel.to_json());
  write_json_file(run.out / "vocabs.json", report);
  run.wrote(run.out / "vocabs.json");
  return 0;
}

int cmd_build_prompts(Run& run, const Flags& f) {
  const RunConfig& c = run.cfg;
  Dataset ds = load_dataset(c);
  std::vector<VisualVocabSelection> sels;
  if (!f.vocabs.empty()) {
    require_file(f.vocabs, "vocab report");
    for (const auto& j : read_json_file(f.vocabs)) sels.push_back(VisualVocabSelection::from_json(j));
  } else {
    auto provider = make_provider(c, c.model.encoder);
    sels = select_all(ds, *provider, load_selected_corpora(c));
  }
  PromptBank bank = build_bank(ds, sels);
  write_json_file(run.out / "prompts.json", bank.to_json());
  run.wrote(run.out / "prompts.json");
  for (const auto& [id, texts] : bank.prompts) {
    std::string body;
    for (const auto& t : texts) body += t + "\n";
    const fs::path p = run.out / "prompts" / (id + ".txt");
    fs::create_directories(p.parent_path());
    write_text_file(p, body);
    run.wrote(p);
  }
  return 0;
}

int cmd_train(Run& run, const Flags&) {
  const RunConfig& c = run.cfg;
  Dataset ds = load_dataset(c);
  auto provider = make_provider(c, c.model.encoder);
  PromptBank bank = load_or_build_prompts(c, ds, *provider);
  auto missing = missing_inputs(ds, &bank, *provider, EvalMode::standard);
  if (!missing.empty()) throw MissingFeatureError(missing);

  ConsorModel model(c.model, c.seed);
  FeatureCache cache(*provider);
  Trainer trainer(model, ds, bank, cache, c.train);
  std::ofstream log(run.out / "train_log.jsonl", std::ios::binary | std::ios::trunc);
  set_event_sink(&log);
  std::vector<StepMetrics> curve;
  try {
    curve = trainer.run();
  } catch (...) {
    set_event_sink(nullptr);
    throw;
  }
  set_event_sink(nullptr);
  run.wrote(run.out / "train_log.jsonl");

  CheckpointInfo info;
  info.model = c.model;
  info.train = c.train;
  info.step = trainer.step();
  info.epoch = trainer.epoch();
  info.extra = {{"taxonomy", ds.taxonomy.name()}, {"seed", c.seed}};
  save_checkpoint(run.out / "checkpoint", model, trainer.optimizer(), info);
  run.wrote(run.out / "checkpoint");

  ScoreTable table;
  MetricsReport r = evaluate_model(model, ds, bank, cache, c.train.logit_scale, &table);
  write_json_file(run.out / "train_metrics.json", r.to_json());
  run.wrote(run.out / "train_metrics.json");
  log_event("train.done", {{"steps", curve.size()}, {"final_loss", curve.empty() ? 0.0 : curve.back().loss},
                           {"train_acc1", r.acc1}});
  return 0;
}

int cmd_eval(Run& run, const Flags& f) {
  RunConfig& c = run.cfg;
  const EvalMode mode = eval_mode_from_string(f.mode);
  ScoreTable table;
  MetricsReport report;
  if (mode == EvalMode::zeroshot) {
    Dataset ds = load_dataset(c);
    auto provider = make_provider(c, c.model.encoder);
    report = evaluate_zeroshot(ds, *provider, &table);
  } else {
    require_file(f.checkpoint, "--checkpoint");
    LoadedCheckpoint ck = load_checkpoint(f.checkpoint);
    c.model = ck.info.model;
    Dataset ds = load_dataset(c);
    auto provider = make_provider(c, ck.info.model.encoder);
    PromptBank bank = load_or_build_prompts(c, ds, *provider);
    FeatureCache cache(*provider);
    report = evaluate_model(*ck.model, ds, bank, cache, ck.info.train.logit_scale, &table);
  }
  write_json_file(run.out / "metrics.json", report.to_json());
  write_text_file(run.out / "scores.csv", table.to_csv());
  run.wrote(run.out / "metrics.json");
  run.wrote(run.out / "scores.csv");
  log_event("eval.done", {{"mode", report.mode}, {"acc1", report.acc1}});
  return 0;
}

int cmd_grad_check(Run& run, const Flags& f) {
  const RunConfig& c = run.cfg;
  std::unique_ptr<ConsorModel> model;
  if (!f.checkpoint.empty()) {
    require_file(f.checkpoint, "--checkpoint");
    model = std::move(load_checkpoint(f.checkpoint).model);
  } else {
    model = std::make_unique<ConsorModel>(c.model, c.seed);
  }
  const EncoderConfig& enc = model->config().encoder;
  Dataset ds{toy_taxonomy(3), {}, {}, Split::train};
  std::unique_ptr<EncoderProvider> provider;
  PromptBank bank;
  if (!c.annotations.empty()) {
    ds = load_dataset(c);
    provider = make_provider(c, enc);
    bank = load_or_build_prompts(c, ds, *provider);
  } else {
    ToySpec spec;
    spec.n_images = 1;
    spec.seed = c.seed;
    spec.encoder = enc;
    spec.corpora_dir = c.corpora;
    ToyData toy = generate_toy_dataset(spec);
    ds = toy.dataset;
    bank = toy.prompts;
    provider = std::make_unique<FixtureProvider>(std::make_shared<FixtureSet>(toy.fixtures), enc);
  }
  if (ds.samples.empty()) throw std::runtime_error("dataset has no samples");
  FeatureCache cache(*provider);
  std::vector<const PairSample*> batch = {&ds.samples.front()};
  GradCheckOptions opt;
  opt.n_coords = f.n_coords;
  opt.step = f.fd_step;
  opt.tol = f.tol;
  opt.seed = c.seed;
  GradCheckReport report = grad_check(
      model->params(),
      [&](Tape& tape) { return model->forward(tape, ds, bank, cache, batch, c.train.logit_scale, true).loss; }, opt);
  write_json_file(run.out / "grad_check.json", report.to_json());
  run.wrote(run.out / "grad_check.json");
  log_event("grad_check.done", {{"passed", report.passed()}, {"max_rel_error", report.max_rel_error}});
  if (!report.passed()) throw std::runtime_error("gradient check failed on " + std::to_string(report.failing().size()) + " coordinates");
  return 0;
}

std::pair<int, int> parse_pair(const std::string& s) {
  const auto comma = s.find(',');
  if (comma == std::string::npos) throw UsageError("--pair expects i,j");
  try {
    return {std::stoi(s.substr(0, comma)), std::stoi(s.substr(comma + 1))};
  } catch (const std::exception&) {
    throw UsageError("--pair expects i,j");
  }
}

int cmd_export_attn(Run& run, const Flags& f) {
  RunConfig& c = run.cfg;
  require_file(f.checkpoint, "--checkpoint");
  LoadedCheckpoint ck = load_checkpoint(f.checkpoint);
  c.model = ck.info.model;
  Dataset ds = load_dataset(c);
  auto provider = make_provider(c, ck.info.model.encoder);
  FeatureCache cache(*provider);
  std::vector<const PairSample*> targets;
  std::optional<std::pair<int, int>> pair;
  if (!f.pair.empty()) pair = parse_pair(f.pair);
  for (const auto& s : ds.samples) {
    if (!f.image.empty() && s.image_id != f.image) continue;
    if (pair && (s.i != pair->first || s.j != pair->second)) continue;
    targets.push_back(&s);
  }
  if (targets.empty()) throw UsageError("no samples match the requested image/pair");
  const EncoderConfig& enc = ck.info.model.encoder;
  for (const PairSample* s : targets) {
    Tape tape(false);
    const ImageRecord& image = ds.image(s->image_id);
    ImagePass pass = ck.model->encode_image(tape, cache.visual(s->image_id), image.persons);
    AttentionTrace trace;
    ck.model->pair_feature(tape, pass, image.persons, s->i, s->j, &trace);
    const fs::path p = run.out / "attention" / (s->image_id + "_" + std::to_string(s->i) + "_" + std::to_string(s->j) + ".json");
    fs::create_directories(p.parent_path());
    write_json_file(p, export_attention_maps(s->image_id, s->i, s->j, enc.grid_h, enc.grid_w, trace));
    run.wrote(p);
  }
  return 0;
}

std::string fmt(double v) {
  if (std::isnan(v)) return "n/a";
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(4);
  os << v;
  return os.str();
}

int cmd_report(Run& run, const Flags& f) {
  if (f.metrics.empty()) throw UsageError("report needs at least one --metrics file");
  std::string md = "| run | taxonomy | mode | samples | mAP | acc@1 |\n|---|---|---|---|---|---|\n";
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& path : f.metrics) {
    require_file(path, "metrics file");
    MetricsReport r = MetricsReport::from_json(read_json_file(path));
    md += "| " + path + " | " + r.taxonomy + " | " + r.mode + " | " + std::to_string(r.n_samples) + " | " + fmt(r.map) +
          " | " + fmt(r.acc1) + " |\n";
    nlohmann::json row = r.to_json();
    row["source"] = path;
    rows.push_back(row);
  }
  write_text_file(run.out / "report.md", md);
  write_json_file(run.out / "report.json", rows);
  run.wrote(run.out / "report.md");
  run.wrote(run.out / "report.json");
  std::cout << md;
  return 0;
}

void print_error(const std::string& category, const std::string& message) {
  std::cerr << nlohmann::json({{"error", category}, {"message", message}}).dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Social relation recognition with side-adapted frozen encoders"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", kVersion);
  Flags f;
  app.add_option("--config", f.config, "Run config JSON");
  app.add_option("--out", f.out, "Output directory");
  app.add_option("--seed", f.seed, "Seed for toy data, initialization and data order");
  app.add_option("--provider", f.provider, "Feature provider")->check(CLI::IsMember({"fixture", "synthetic"}));
  app.add_option("--taxonomy", f.taxonomy, "Builtin taxonomy name");
  app.add_option("--fusion-layers", f.fusion_layers, "default, none, or a comma list of CLIP layers");
  app.add_option("--sharing", f.sharing, "Side network sharing")
      ->check(CLI::IsMember({"shared", "dual", "visual", "text", "none", "visual-only", "text-only"}));
  app.add_option("--corpora-subset", f.corpora_subset, "Comma list of corpora (SC,SA,OC,E or full names)");
  app.add_option("--data", f.data, "Directory produced by gen-toy");
  app.add_option("--annotations", f.annotations, "Annotation JSON");
  app.add_option("--prompts", f.prompts, "Prompt bank JSON");
  app.add_option("--fixtures", f.fixtures, "Fixture directory");
  app.add_option("--corpora", f.corpora, "Corpus directory");

  auto* gen = app.add_subcommand("gen-toy", "Generate the toy dataset and its fixtures");
  gen->add_option("--n-images", f.n_images);
  gen->add_option("--persons", f.persons);
  gen->add_option("--classes", f.classes);
  gen->add_option("--separation", f.separation);
  app.add_subcommand("build-fixtures", "Fill a fixture tree from the synthetic encoder");
  app.add_subcommand("select-vocabs", "Zero-shot visual-vocab selection per image");
  auto* prompts = app.add_subcommand("build-prompts", "Assemble social prompts per image");
  prompts->add_option("--vocabs", f.vocabs, "vocabs.json from select-vocabs");
  auto* train = app.add_subcommand("train", "Train and write a checkpoint");
  train->add_option("--epochs", f.epochs);
  train->add_option("--lr", f.lr);
  train->add_option("--logit-scale", f.logit_scale);
  auto* eval = app.add_subcommand("eval", "Score a dataset and write metrics");
  eval->add_option("--mode", f.mode)->check(CLI::IsMember({"standard", "zeroshot"}));
  eval->add_option("--checkpoint", f.checkpoint);
  auto* gc = app.add_subcommand("grad-check", "Finite-difference gradient check");
  gc->add_option("--checkpoint", f.checkpoint);
  gc->add_option("--n-coords", f.n_coords);
  gc->add_option("--step", f.fd_step);
  gc->add_option("--tol", f.tol);
  auto* attn = app.add_subcommand("export-attn", "Export pair cross-attention maps");
  attn->add_option("--checkpoint", f.checkpoint);
  attn->add_option("--image", f.image);
  attn->add_option("--pair", f.pair, "i,j");
  auto* report = app.add_subcommand("report", "Summarize metrics files");
  report->add_option("--metrics", f.metrics)->expected(1, -1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("usage", e.what());
    return 2;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  std::vector<std::string> args(argv + 1, argv + argc);
  std::optional<Run> run;
  try {
    run = resolve(command, f, args);
  } catch (const ConfigError& e) {
    print_error("config", e.what());
    return 2;
  } catch (const std::exception& e) {
    print_error("usage", e.what());
    return 2;
  }
  try {
    int rc = 0;
    if (command == "gen-toy") rc = cmd_gen_toy(*run, f);
    else if (command == "build-fixtures") rc = cmd_build_fixtures(*run, f);
    else if (command == "select-vocabs") rc = cmd_select_vocabs(*run, f);
    else if (command == "build-prompts") rc = cmd_build_prompts(*run, f);
    else if (command == "train") rc = cmd_train(*run, f);
    else if (command == "eval") rc = cmd_eval(*run, f);
    else if (command == "grad-check") rc = cmd_grad_check(*run, f);
    else if (command == "export-attn") rc = cmd_export_attn(*run, f);
    else if (command == "report") rc = cmd_report(*run, f);
    write_manifest(*run);
    return rc;
  } catch (const UsageError& e) {
    print_error("usage", e.what());
    return 2;
  } catch (const ConfigError& e) {
    print_error("config", e.what());
    return 2;
  } catch (const MissingFeatureError& e) {
    print_error("missing-fixture", e.what());
    return 1;
  } catch (const AnnotationError& e) {
    print_error("annotation", e.what());
    return 1;
  } catch (const NonFiniteLossError& e) {
    if (run) write_json_file(run->out / "nonfinite_dump.json", e.dump());
    print_error("non-finite-loss", e.what());
    return 1;
  } catch (const FeaturePackError& e) {
    print_error("feature-pack", e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error("runtime", e.what());
    return 1;
  }
}
