// Command-line front end. Talks to the engine only through the C API.
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "mmkg/mmkg.h"

namespace {

struct Binding {
  CLI::Option* option;
  std::string key;  // section.key
  std::string value;
};

struct Command {
  std::string name;
  CLI::App* app = nullptr;
  std::vector<std::unique_ptr<Binding>> bindings;

  void flag(const std::string& flag, const std::string& key, const std::string& help) {
    auto b = std::make_unique<Binding>();
    b->key = key;
    b->option = app->add_option(flag, b->value, help + " (" + key + ")");
    bindings.push_back(std::move(b));
  }
};

int report(mmkg_status status) {
  std::fprintf(stderr, "mmkg: %s error: %s\n", mmkg_status_name(status), mmkg_last_error());
  return static_cast<int>(status);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multimodal knowledge-graph embedding toolkit"};
  app.set_version_flag("--version", std::string(mmkg_version()));
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::string seed;
  std::vector<std::string> overrides;

  std::vector<std::unique_ptr<Command>> commands;
  auto add = [&](const std::string& name, const std::string& help) -> Command& {
    auto c = std::make_unique<Command>();
    c->name = name;
    c->app = app.add_subcommand(name, help);
    c->app->add_option("--config", config_path, "INI run configuration");
    c->app->add_option("--out", out_dir, "output directory (run.out)");
    c->app->add_option("--seed", seed, "random seed (run.seed)");
    c->app->add_option("--set", overrides, "override section.key=value; repeatable");
    commands.push_back(std::move(c));
    return *commands.back();
  };
  auto model_flags = [](Command& c) {
    c.flag("--train", "data.train", "training triples");
    c.flag("--valid", "data.valid", "validation triples");
    c.flag("--test", "data.test", "test triples");
    c.flag("--types", "data.types", "entity types");
    c.flag("--attributes", "data.attributes", "entity attributes");
    c.flag("--scorer", "model.scorer", "transe, complex or rotate");
    c.flag("--dim", "model.dim", "embedding dimension");
  };

  auto& split = add("split", "decouple benchmark pairs and split triples");
  split.flag("--triples", "data.triples", "input triples");
  split.flag("--attributes", "data.attributes", "entity attributes");
  split.flag("--types", "data.types", "entity types");
  split.flag("--benchmarks", "data.benchmarks", "benchmark pairs to decouple");
  split.flag("--ratios", "split.ratios", "train,valid,test ratios");

  auto& train = add("train", "train a model");
  model_flags(train);
  train.flag("--epochs", "train.epochs", "training epochs");

  auto& pretrain = add("pretrain", "lookup pretraining followed by encoder fine-tuning");
  model_flags(pretrain);

  auto& hpo = add("hpo", "random hyperparameter search");
  model_flags(hpo);
  hpo.flag("--budget", "hpo.budget", "number of trials");

  auto& evaluate = add("evaluate", "rank-based link prediction metrics");
  evaluate.flag("--checkpoint", "evaluate.checkpoint", "checkpoint directory");
  evaluate.flag("--triples", "evaluate.triples", "triples to rank");
  evaluate.flag("--mode", "evaluate.mode", "raw or filtered");
  evaluate.flag("--filter", "evaluate.filter", "comma-separated known-triple files");

  auto& analyze = add("analyze-degree", "degree-stratified MRR difference between two models");
  analyze.flag("--checkpoint-a", "analyze.checkpoint_a", "first checkpoint");
  analyze.flag("--checkpoint-b", "analyze.checkpoint_b", "second checkpoint");
  analyze.flag("--triples", "analyze.triples", "evaluation triples");
  analyze.flag("--type", "analyze.type", "target entity type");
  analyze.flag("--train", "data.train", "training triples (degrees)");

  auto& bench = add("benchmark", "pair-classification benchmark over embeddings");
  bench.flag("--pairs", "benchmark.pairs", "benchmark pairs");
  bench.flag("--graph", "data.triples", "knowledge graph triples (negative filtering)");
  bench.flag("--types", "data.types", "entity types");
  bench.flag("--attributes", "data.attributes", "entity attributes (structural features)");
  bench.flag("--sources", "benchmark.sources", "random, structural, name=checkpoint, ...");
  bench.flag("--classifiers", "benchmark.classifiers", "logistic_regression, mlp");
  bench.flag("--ratio", "benchmark.ratio", "negatives per positive");
  bench.flag("--folds", "benchmark.folds", "cross-validation folds");
  bench.flag("--tuning-budget", "benchmark.tuning_budget", "random-search trials per fold");

  CLI11_PARSE(app, argc, argv);

  Command* chosen = nullptr;
  for (auto& c : commands)
    if (c->app->parsed()) chosen = c.get();
  if (!chosen) return 1;

  mmkg_config* config = nullptr;
  mmkg_status status =
      config_path.empty() ? mmkg_config_new(&config) : mmkg_config_load(config_path.c_str(), &config);
  if (status != MMKG_OK) return report(status);

  std::vector<std::pair<std::string, std::string>> settings;
  for (const auto& b : chosen->bindings)
    if (b->option->count() > 0) settings.emplace_back(b->key, b->value);
  if (!out_dir.empty()) settings.emplace_back("run.out", out_dir);
  if (!seed.empty()) settings.emplace_back("run.seed", seed);
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "mmkg: --set expects section.key=value, got '%s'\n", o.c_str());
      mmkg_config_free(config);
      return 2;
    }
    settings.emplace_back(o.substr(0, eq), o.substr(eq + 1));
  }
  for (const auto& [key, value] : settings) {
    status = mmkg_config_set(config, key.c_str(), value.c_str());
    if (status != MMKG_OK) {
      mmkg_config_free(config);
      return report(status);
    }
  }

  char* summary = nullptr;
  status = mmkg_run(config, chosen->name.c_str(), &summary);
  mmkg_config_free(config);
  if (status != MMKG_OK) return report(status);
  std::printf("%s\n", summary);
  mmkg_string_free(summary);
  return 0;
}
