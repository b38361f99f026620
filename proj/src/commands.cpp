#include "mmkg/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mmkg/benchmark.hpp"
#include "mmkg/checkpoint.hpp"
#include "mmkg/error.hpp"
#include "mmkg/evaluation.hpp"

namespace mmkg {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
  out << text;
  if (!text.empty() && text.back() != '\n') out << '\n';
  if (!out) fail(ErrorCode::kIo, "failed writing " + path.string());
}

class Run {
 public:
  Run(const RunConfig& config, const std::string& command)
      : start_(std::chrono::steady_clock::now()) {
    config.validate();
    out_ = config.get("run", "out").value_or("out");
    std::error_code ec;
    fs::create_directories(out_, ec);
    if (ec) fail(ErrorCode::kIo, "cannot create " + out_.string() + ": " + ec.message());
    RunConfig resolved = config;
    resolved.set("run", "seed", std::to_string(config_seed(config)));
    resolved.set("run", "out", out_.string());
    write_text(out_ / "resolved_config.ini", resolved.to_ini());
    log_.open(out_ / "log.jsonl");
    if (!log_) fail(ErrorCode::kIo, "cannot write " + (out_ / "log.jsonl").string());
    event({{"event", "start"}, {"command", command}});
  }

  const fs::path& out() const { return out_; }

  void event(ordered_json record) {
    record["elapsed"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    log_ << record.dump() << '\n';
    log_.flush();
  }

  void warn(const std::string& message) {
    warnings_.push_back(message);
    event({{"event", "warning"}, {"message", message}});
  }
  const std::vector<std::string>& warnings() const { return warnings_; }

 private:
  fs::path out_;
  std::ofstream log_;
  std::chrono::steady_clock::time_point start_;
  std::vector<std::string> warnings_;
};

fs::path required_path(const RunConfig& c, const std::string& section, const std::string& key) {
  auto v = c.get(section, key);
  if (!v) fail(ErrorCode::kConfig, section + "." + key + " is required");
  return resolve_data_path(*v);
}

fs::path optional_path(const RunConfig& c, const std::string& section, const std::string& key) {
  auto v = c.get(section, key);
  return v ? resolve_data_path(*v) : fs::path();
}

ModalityRegistry registry_for(const ModelSpec& spec) {
  auto names = ModalityRegistry::standard().names();
  for (const auto& m : spec.modalities)
    if (std::find(names.begin(), names.end(), m.name) == names.end()) names.push_back(m.name);
  return ModalityRegistry(names);
}

SplitGraph load_graph(const RunConfig& c, const ModelSpec& spec) {
  SplitPaths paths;
  paths.train = required_path(c, "data", "train");
  paths.valid = optional_path(c, "data", "valid");
  paths.test = optional_path(c, "data", "test");
  paths.types = optional_path(c, "data", "types");
  paths.attributes = optional_path(c, "data", "attributes");
  return load_split_graph(paths, registry_for(spec));
}

TripleSet known_triples(const SplitGraph& g) {
  TripleSet s(g.train.begin(), g.train.end());
  s.insert(g.valid.begin(), g.valid.end());
  s.insert(g.test.begin(), g.test.end());
  return s;
}

ordered_json train_config_json(const TrainConfig& t) {
  return {{"learning_rate", t.learning_rate}, {"regularization", t.regularization},
          {"batch_size", t.batch_size},       {"loss", to_string(t.loss)},
          {"margin", t.margin},               {"negatives", t.negatives},
          {"epochs", t.epochs},               {"eval_interval", t.eval_interval},
          {"patience", t.patience},           {"optimizer", to_string(t.optimizer)},
          {"corrupt", to_string(t.corrupt)},  {"seed", t.seed}};
}

ordered_json nullable(double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(); }

ordered_json train_result_json(const TrainConfig& cfg, const TrainResult& r) {
  ordered_json j;
  j["config"] = train_config_json(cfg);
  j["steps"] = r.steps;
  j["best_step"] = r.best_step;
  j["best_val_mrr"] = nullable(r.best_val_mrr);
  j["epochs_run"] = r.epoch_losses.size();
  j["early_stopped"] = r.early_stopped;
  j["seconds"] = r.seconds;
  auto& history = j["history"] = ordered_json::array();
  for (const auto& p : r.history)
    history.push_back({{"step", p.step}, {"epoch", p.epoch}, {"val_mrr", p.val_mrr},
                       {"seconds", p.seconds}});
  return j;
}

EpochCallback epoch_logger(Run& run, const std::string& stage) {
  return [&run, stage](const EpochLog& log) {
    ordered_json rec{{"event", "epoch"}, {"stage", stage},  {"epoch", log.epoch},
                     {"step", log.step}, {"loss", log.loss}};
    if (log.evaluated) rec["val_mrr"] = log.val_mrr;
    run.event(std::move(rec));
  };
}

// Test-set metrics next to a trained model, when the configuration has a test split.
std::optional<MetricsReport> test_metrics(const Model& model, const SplitGraph& g,
                                          const TripleSet& known) {
  if (g.test.empty()) return std::nullopt;
  return evaluate(model, g.test, &known);
}

// Steps after which the history first reaches `target`, or null.
ordered_json steps_to_reach(const TrainResult& r, double target) {
  if (!std::isfinite(target)) return nullptr;
  for (const auto& p : r.history)
    if (p.val_mrr >= target) return p.step;
  return nullptr;
}

}  // namespace

std::string cmd_split(const RunConfig& config) {
  Run run(config, "split");
  const auto triples = required_path(config, "data", "triples");
  KnowledgeGraph kg = ingest_triples(triples);
  run.event({{"event", "loaded"}, {"triples", kg.triples.size()}, {"entities", kg.num_entities()}});
  if (auto types = optional_path(config, "data", "types"); !types.empty()) {
    const auto unknown = load_entity_types(kg, types);
    if (unknown) run.warn(std::to_string(unknown) + " type lines name entities outside the graph");
  }
  ordered_json coverage = nullptr;
  if (auto attrs = optional_path(config, "data", "attributes"); !attrs.empty()) {
    const auto stats = attach_attributes(kg, attrs);
    coverage = ordered_json::object();
    for (const auto& [type, c] : stats.coverage)
      coverage[type] = {{"entities", c.entities}, {"with_attributes", c.covered}};
    if (stats.skipped_unknown_entity)
      run.warn(std::to_string(stats.skipped_unknown_entity) +
               " attribute lines name entities outside the graph");
  }
  BenchmarkPairs benchmarks;
  if (auto path = optional_path(config, "data", "benchmarks"); !path.empty()) {
    if (fs::exists(path)) {
      benchmarks = load_benchmarks(path);
    } else {
      run.warn("benchmark file " + path.string() + " not found; decoupling skipped");
    }
  }
  const SplitRatios ratios = split_ratios(config);
  const auto seed = config_seed(config);
  const SplitBundle split = decouple_and_split(kg, benchmarks, ratios, seed);
  write_split(kg, split, ratios, seed, run.out());

  std::ostringstream degrees;
  degrees.precision(17);
  degrees << "type\tcount\tmean\tstd\tmin\t25%\t50%\t75%\tmax\n";
  for (const auto& r : degree_table(kg))
    degrees << r.type << '\t' << r.count << '\t' << r.mean << '\t' << r.std << '\t' << r.min << '\t'
            << r.q25 << '\t' << r.q50 << '\t' << r.q75 << '\t' << r.max << '\n';
  write_text(run.out() / "degree_table.tsv", degrees.str());

  ordered_json summary;
  summary["command"] = "split";
  summary["out"] = run.out().string();
  summary["triples"] = kg.triples.size();
  summary["benchmark_pairs"] = benchmarks.size();
  summary["train"] = split.train.size();
  summary["valid"] = split.valid.size();
  summary["test"] = split.test.size();
  summary["removed"] = split.removed.size();
  summary["dropped_entities"] = split.dropped_entities.size();
  summary["attribute_coverage"] = coverage;
  summary["warnings"] = run.warnings();
  run.event({{"event", "done"}});
  return summary.dump(2);
}

std::string cmd_train(const RunConfig& config) {
  Run run(config, "train");
  const ModelSpec spec = model_spec(config);
  const TrainConfig tc = train_config(config, "train");
  const SplitGraph g = load_graph(config, spec);
  const TripleSet known = known_triples(g);
  run.event({{"event", "loaded"}, {"entities", g.kg.num_entities()}, {"train", g.train.size()},
             {"valid", g.valid.size()}, {"test", g.test.size()}});

  const TrainingData data{&g.kg, g.train, g.valid, &known};
  TrainResult result = train(data, tc, Model::create(g.kg, spec), epoch_logger(run, "train"));
  const ordered_json info = train_result_json(tc, result);
  save_checkpoint(result.model, run.out() / "checkpoint", info.dump());

  ordered_json summary;
  summary["command"] = "train";
  summary["checkpoint"] = (run.out() / "checkpoint").string();
  summary["training"] = info;
  if (auto m = test_metrics(result.model, g, known)) {
    write_text(run.out() / "metrics.json", to_json(*m));
    summary["test"] = ordered_json::parse(to_json(*m));
  }
  run.event({{"event", "done"}, {"steps", result.steps}});
  return summary.dump(2);
}

std::string cmd_pretrain(const RunConfig& config) {
  Run run(config, "pretrain");
  const ModelSpec spec = model_spec(config);
  const TrainConfig stage1 = train_config(config, "stage1");
  const TrainConfig stage2 = train_config(config, "stage2");
  const SplitGraph g = load_graph(config, spec);
  const TripleSet known = known_triples(g);
  const TrainingData data{&g.kg, g.train, g.valid, &known};

  PretrainResult result = pretrain_then_finetune(data, stage1, stage2, spec,
                                                 epoch_logger(run, "stage1"),
                                                 epoch_logger(run, "stage2"));
  const auto info1 = train_result_json(stage1, result.stage1);
  const auto info2 = train_result_json(stage2, result.stage2);
  save_checkpoint(result.stage1.model, run.out() / "stage1" / "checkpoint", info1.dump());
  save_checkpoint(result.stage2.model, run.out() / "stage2" / "checkpoint", info2.dump());

  ordered_json timing;
  auto stage_timing = [](const TrainResult& r) {
    return ordered_json{{"seconds", r.seconds},
                        {"steps", r.steps},
                        {"best_step", r.best_step},
                        {"best_val_mrr", nullable(r.best_val_mrr)}};
  };
  timing["stage1"] = stage_timing(result.stage1);
  timing["stage2"] = stage_timing(result.stage2);
  timing["total_seconds"] = result.stage1.seconds + result.stage2.seconds;
  if (config_flag(config, "pretrain", "compare_scratch", false)) {
    ModelSpec scratch_spec = spec;
    scratch_spec.use_attributes = true;
    TrainResult scratch = train(data, stage2, Model::create(g.kg, scratch_spec),
                                epoch_logger(run, "scratch"));
    timing["scratch"] = stage_timing(scratch);
    timing["stage2_steps_to_scratch_best"] = steps_to_reach(result.stage2, scratch.best_val_mrr);
    save_checkpoint(scratch.model, run.out() / "scratch" / "checkpoint",
                    train_result_json(stage2, scratch).dump());
  }
  write_text(run.out() / "timing.json", timing.dump(2));

  ordered_json summary;
  summary["command"] = "pretrain";
  summary["stage1_checkpoint"] = (run.out() / "stage1" / "checkpoint").string();
  summary["stage2_checkpoint"] = (run.out() / "stage2" / "checkpoint").string();
  summary["timing"] = timing;
  if (auto m = test_metrics(result.stage2.model, g, known)) {
    write_text(run.out() / "metrics.json", to_json(*m));
    summary["test"] = ordered_json::parse(to_json(*m));
  }
  run.event({{"event", "done"}});
  return summary.dump(2);
}

std::string cmd_hpo(const RunConfig& config) {
  Run run(config, "hpo");
  const ModelSpec spec = model_spec(config);
  const TrainConfig base = train_config(config, "train");
  const SplitGraph g = load_graph(config, spec);
  if (g.valid.empty())
    fail(ErrorCode::kConfig, "hpo needs validation triples (data.valid) for its objective");
  const TripleSet known = known_triples(g);
  const TrainingData data{&g.kg, g.train, g.valid, &known};
  const std::size_t budget = config_size(config, "hpo", "budget", 10);
  const HpoSpace space = hpo_space(config, spec.scorer);

  std::ofstream trials(run.out() / "trials.jsonl");
  if (!trials) fail(ErrorCode::kIo, "cannot write " + (run.out() / "trials.jsonl").string());
  auto objective = [&](const TrainConfig& tc) {
    const auto r = train(data, tc, Model::create(g.kg, spec));
    return std::isfinite(r.best_val_mrr) ? r.best_val_mrr : 0.0;
  };
  auto on_trial = [&](const HpoTrial& t) {
    ordered_json rec{{"trial", t.index},
                     {"config", train_config_json(t.config)},
                     {"val_mrr", t.objective}};
    trials << rec.dump() << '\n';
    trials.flush();
    run.event({{"event", "trial"}, {"trial", t.index}, {"val_mrr", t.objective}});
  };
  const HpoResult result = hpo_search(space, base, budget, config_seed(config), objective, on_trial);

  RunConfig best = config;
  write_train_config(best, "train", result.best);
  write_text(run.out() / "best_config.ini", best.to_ini());

  ordered_json summary;
  summary["command"] = "hpo";
  summary["trials"] = result.trials.size();
  summary["best_val_mrr"] = result.best_objective;
  summary["best_config"] = train_config_json(result.best);
  run.event({{"event", "done"}});
  return summary.dump(2);
}

std::string cmd_evaluate(const RunConfig& config) {
  Run run(config, "evaluate");
  const Checkpoint ckpt = load_checkpoint(required_path(config, "evaluate", "checkpoint"));
  const Model& model = ckpt.model;
  fs::path triples_path = optional_path(config, "evaluate", "triples");
  if (triples_path.empty()) triples_path = required_path(config, "data", "test");
  const auto triples = read_triples(triples_path, model.entities(), model.relations());
  const RankMode mode = parse_rank_mode(config.get("evaluate", "mode").value_or("filtered"));

  TripleSet filter(triples.begin(), triples.end());
  std::vector<fs::path> filter_files;
  if (config.has("evaluate", "filter")) {
    for (const auto& item : config_list(config, "evaluate", "filter"))
      filter_files.push_back(resolve_data_path(item));
  } else {
    for (const char* key : {"train", "valid", "test"})
      if (auto p = optional_path(config, "data", key); !p.empty()) filter_files.push_back(p);
  }
  if (mode == RankMode::kFiltered) {
    for (const auto& f : filter_files) {
      std::size_t skipped = 0;
      for (const auto& t : read_triples(f, model.entities(), model.relations(), &skipped))
        filter.insert(t);
      if (skipped) run.warn(f.string() + ": " + std::to_string(skipped) +
                            " filter triples name identifiers unknown to the model");
    }
  }
  const MetricsReport report =
      evaluate(model, triples, mode == RankMode::kFiltered ? &filter : nullptr);
  const std::string json = to_json(report);
  write_text(run.out() / "metrics.json", json);
  run.event({{"event", "done"}, {"mrr", report.mrr}});
  return json;
}

std::string cmd_analyze_degree(const RunConfig& config) {
  Run run(config, "analyze-degree");
  const Checkpoint a = load_checkpoint(required_path(config, "analyze", "checkpoint_a"));
  const Checkpoint b = load_checkpoint(required_path(config, "analyze", "checkpoint_b"));
  auto type = config.get("analyze", "type");
  if (!type) fail(ErrorCode::kConfig, "analyze.type is required");
  fs::path triples_path = optional_path(config, "analyze", "triples");
  if (triples_path.empty()) triples_path = required_path(config, "data", "test");
  const auto& ents = a.model.entities();
  const auto& rels = a.model.relations();
  const auto triples = read_triples(triples_path, ents, rels);

  std::size_t skipped = 0;
  const auto train = read_triples(required_path(config, "data", "train"), ents, rels, &skipped);
  const auto degrees = entity_degrees(a.model.num_entities(), train);
  TripleSet filter(train.begin(), train.end());
  filter.insert(triples.begin(), triples.end());
  for (const char* key : {"valid", "test"})
    if (auto p = optional_path(config, "data", key); !p.empty())
      for (const auto& t : read_triples(p, ents, rels, &skipped)) filter.insert(t);

  const DegreeAnalysis analysis =
      degree_stratified_delta(a.model, b.model, triples, degrees, *type, &filter);
  write_text(run.out() / "predicting_target.tsv", to_tsv(analysis.predicting_target));
  write_text(run.out() / "predicting_other.tsv", to_tsv(analysis.predicting_other));

  RankList ra, rb;
  evaluate(a.model, triples, &filter, &ra);
  evaluate(b.model, triples, &filter, &rb);
  const auto rr_a = reciprocal_ranks_per_triple(ra);
  const auto rr_b = reciprocal_ranks_per_triple(rb);
  ordered_json welch = nullptr;
  if (rr_a.size() >= 2) {
    const WelchResult w = welch_test(rr_a, rr_b);
    welch = {{"t", nullable(w.t)}, {"dof", w.dof}, {"p", w.p}, {"n", rr_a.size()}};
    write_text(run.out() / "welch.json", welch.dump(2));
  }

  auto buckets = [](const std::vector<DegreeBucket>& list) {
    auto out = ordered_json::array();
    for (const auto& b : list)
      out.push_back({{"degree", b.degree}, {"delta_mrr", b.delta_mrr}, {"count", b.count}});
    return out;
  };
  ordered_json summary;
  summary["command"] = "analyze-degree";
  summary["type"] = *type;
  summary["predicting_target"] = buckets(analysis.predicting_target);
  summary["predicting_other"] = buckets(analysis.predicting_other);
  summary["welch"] = welch;
  run.event({{"event", "done"}});
  return summary.dump(2);
}

std::string cmd_benchmark(const RunConfig& config) {
  Run run(config, "benchmark");
  fs::path pairs_path = optional_path(config, "benchmark", "pairs");
  if (pairs_path.empty()) pairs_path = required_path(config, "data", "benchmarks");
  const BenchmarkPairs pairs = load_benchmarks(pairs_path);

  fs::path graph_path = optional_path(config, "data", "triples");
  if (graph_path.empty()) graph_path = required_path(config, "data", "train");
  KnowledgeGraph kg = ingest_triples(graph_path);
  if (auto p = optional_path(config, "data", "types"); !p.empty()) load_entity_types(kg, p);
  if (auto p = optional_path(config, "data", "attributes"); !p.empty()) {
    ModelSpec spec = model_spec(config);
    kg.modalities = registry_for(spec);
    attach_attributes(kg, p);
  }

  BenchmarkOptions options;
  auto size = [&](const char* key, std::size_t fallback) {
    return config_size(config, "benchmark", key, fallback);
  };
  options.ratio = size("ratio", options.ratio);
  options.folds = size("folds", options.folds);
  options.tuning_budget = size("tuning_budget", options.tuning_budget);
  options.seed = config_seed(config);
  const std::size_t feature_dim = size("feature_dim", 32);

  std::vector<Checkpoint> models;
  std::vector<std::pair<std::string, std::string>> named;  // (name, what)
  auto source_items = config_list(config, "benchmark", "sources");
  if (source_items.empty()) source_items = {"random"};
  for (const auto& item : source_items) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) {
      named.emplace_back(item, item);
    } else {
      named.emplace_back(item.substr(0, eq), item.substr(eq + 1));
    }
  }
  models.reserve(named.size());
  std::vector<FeatureSource> sources;
  for (const auto& [name, what] : named) {
    FeatureSource s;
    s.name = name;
    s.dim = feature_dim;
    s.seed = options.seed;
    if (what == "random") {
      s.kind = FeatureSourceKind::kRandom;
    } else if (what == "structural") {
      s.kind = FeatureSourceKind::kStructural;
    } else if (name != what) {
      models.push_back(load_checkpoint(resolve_data_path(what)));
      s.kind = FeatureSourceKind::kModel;
      s.model = &models.back().model;
    } else {
      fail(ErrorCode::kConfig, "benchmark.sources: '" + name +
                                   "' is not random, structural or name=checkpoint");
    }
    sources.push_back(s);
  }
  std::vector<ClassifierKind> classifiers;
  for (const auto& item : config_list(config, "benchmark", "classifiers"))
    classifiers.push_back(parse_classifier(item));
  if (classifiers.empty()) classifiers.push_back(ClassifierKind::kLogistic);

  const BenchmarkReport report = run_benchmark(pairs, kg, sources, classifiers, options);
  const std::string json = to_json(report);
  write_text(run.out() / "report.json", json);
  write_text(run.out() / "summary.tsv", to_summary_tsv(report));
  run.event({{"event", "done"}});
  return json;
}

}  // namespace mmkg
