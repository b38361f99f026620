#include "mmkg/mmkg.h"

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <new>
#include <string>

#include <json.hpp>

#include "mmkg/checkpoint.hpp"
#include "mmkg/commands.hpp"
#include "mmkg/config.hpp"
#include "mmkg/error.hpp"
#include "mmkg/evaluation.hpp"

struct mmkg_config {
  mmkg::RunConfig config;
};

struct mmkg_graph {
  mmkg::KnowledgeGraph kg;
};

struct mmkg_model {
  mmkg::Model model;
};

namespace {

thread_local std::string last_error;

mmkg_status status_of(mmkg::ErrorCode code) {
  switch (code) {
    case mmkg::ErrorCode::kIo: return MMKG_ERR_IO;
    case mmkg::ErrorCode::kParse: return MMKG_ERR_PARSE;
    case mmkg::ErrorCode::kInvalidArgument: return MMKG_ERR_INVALID_ARGUMENT;
    case mmkg::ErrorCode::kNotFound: return MMKG_ERR_NOT_FOUND;
    case mmkg::ErrorCode::kNumeric: return MMKG_ERR_NUMERIC;
    case mmkg::ErrorCode::kConfig: return MMKG_ERR_CONFIG;
  }
  return MMKG_ERR_INTERNAL;
}

template <typename Fn>
mmkg_status guarded(Fn&& fn) {
  last_error.clear();
  try {
    fn();
    return MMKG_OK;
  } catch (const mmkg::Error& e) {
    last_error = e.what();
    return status_of(e.code());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
  } catch (const std::exception& e) {
    last_error = e.what();
  } catch (...) {
    last_error = "unknown error";
  }
  return MMKG_ERR_INTERNAL;
}

void require(const void* p, const char* what) {
  if (!p) mmkg::fail(mmkg::ErrorCode::kInvalidArgument, std::string(what) + " must not be NULL");
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

}  // namespace

extern "C" {

const char* mmkg_version(void) { return "0.1.0"; }

const char* mmkg_last_error(void) { return last_error.c_str(); }

const char* mmkg_status_name(mmkg_status status) {
  switch (status) {
    case MMKG_OK: return "ok";
    case MMKG_ERR_IO: return "io";
    case MMKG_ERR_PARSE: return "parse";
    case MMKG_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case MMKG_ERR_NOT_FOUND: return "not_found";
    case MMKG_ERR_NUMERIC: return "numeric";
    case MMKG_ERR_CONFIG: return "config";
    case MMKG_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

void mmkg_string_free(char* s) { std::free(s); }

mmkg_status mmkg_config_new(mmkg_config** out) {
  return guarded([&] {
    require(out, "out");
    *out = new mmkg_config();
  });
}

mmkg_status mmkg_config_load(const char* path, mmkg_config** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    auto cfg = mmkg::RunConfig::load(path);
    *out = new mmkg_config{std::move(cfg)};
  });
}

mmkg_status mmkg_config_parse(const char* text, mmkg_config** out) {
  return guarded([&] {
    require(text, "text");
    require(out, "out");
    auto cfg = mmkg::RunConfig::parse(text);
    *out = new mmkg_config{std::move(cfg)};
  });
}

mmkg_status mmkg_config_set(mmkg_config* config, const char* key, const char* value) {
  return guarded([&] {
    require(config, "config");
    require(key, "key");
    require(value, "value");
    config->config.set(key, value);
  });
}

mmkg_status mmkg_config_get(const mmkg_config* config, const char* key, char** value) {
  return guarded([&] {
    require(config, "config");
    require(key, "key");
    require(value, "value");
    *value = nullptr;
    const std::string k(key);
    const auto dot = k.find('.');
    if (dot == std::string::npos)
      mmkg::fail(mmkg::ErrorCode::kConfig, "'" + k + "': expected section.key");
    if (auto v = config->config.get(k.substr(0, dot), k.substr(dot + 1))) *value = copy_string(*v);
  });
}

mmkg_status mmkg_config_to_ini(const mmkg_config* config, char** ini) {
  return guarded([&] {
    require(config, "config");
    require(ini, "ini");
    *ini = copy_string(config->config.to_ini());
  });
}

void mmkg_config_free(mmkg_config* config) { delete config; }

mmkg_status mmkg_run(const mmkg_config* config, const char* command, char** summary_json) {
  return guarded([&] {
    require(config, "config");
    require(command, "command");
    if (summary_json) *summary_json = nullptr;
    const std::string cmd(command);
    std::string summary;
    if (cmd == "split") {
      summary = mmkg::cmd_split(config->config);
    } else if (cmd == "train") {
      summary = mmkg::cmd_train(config->config);
    } else if (cmd == "pretrain") {
      summary = mmkg::cmd_pretrain(config->config);
    } else if (cmd == "hpo") {
      summary = mmkg::cmd_hpo(config->config);
    } else if (cmd == "evaluate") {
      summary = mmkg::cmd_evaluate(config->config);
    } else if (cmd == "analyze-degree") {
      summary = mmkg::cmd_analyze_degree(config->config);
    } else if (cmd == "benchmark") {
      summary = mmkg::cmd_benchmark(config->config);
    } else {
      mmkg::fail(mmkg::ErrorCode::kInvalidArgument, "unknown command '" + cmd + "'");
    }
    if (summary_json) *summary_json = copy_string(summary);
  });
}

mmkg_status mmkg_graph_load(const char* triples_path, mmkg_graph** out) {
  return guarded([&] {
    require(triples_path, "triples_path");
    require(out, "out");
    auto kg = mmkg::ingest_triples(triples_path);
    *out = new mmkg_graph{std::move(kg)};
  });
}

mmkg_status mmkg_graph_load_types(mmkg_graph* graph, const char* path) {
  return guarded([&] {
    require(graph, "graph");
    require(path, "path");
    mmkg::load_entity_types(graph->kg, path);
  });
}

mmkg_status mmkg_graph_attach_attributes(mmkg_graph* graph, const char* path) {
  return guarded([&] {
    require(graph, "graph");
    require(path, "path");
    mmkg::attach_attributes(graph->kg, path);
  });
}

mmkg_status mmkg_graph_counts(const mmkg_graph* graph, size_t* entities, size_t* relations,
                              size_t* triples) {
  return guarded([&] {
    require(graph, "graph");
    if (entities) *entities = graph->kg.num_entities();
    if (relations) *relations = graph->kg.num_relations();
    if (triples) *triples = graph->kg.triples.size();
  });
}

mmkg_status mmkg_graph_degree_table_json(const mmkg_graph* graph, char** json) {
  return guarded([&] {
    require(graph, "graph");
    require(json, "json");
    auto rows = nlohmann::ordered_json::array();
    for (const auto& r : mmkg::degree_table(graph->kg))
      rows.push_back({{"type", r.type}, {"count", r.count}, {"mean", r.mean}, {"std", r.std},
                      {"min", r.min}, {"25%", r.q25}, {"50%", r.q50}, {"75%", r.q75},
                      {"max", r.max}});
    *json = copy_string(rows.dump(2));
  });
}

void mmkg_graph_free(mmkg_graph* graph) { delete graph; }

mmkg_status mmkg_model_load(const char* checkpoint_dir, mmkg_model** out) {
  return guarded([&] {
    require(checkpoint_dir, "checkpoint_dir");
    require(out, "out");
    auto ckpt = mmkg::load_checkpoint(checkpoint_dir);
    *out = new mmkg_model{std::move(ckpt.model)};
  });
}

mmkg_status mmkg_model_dims(const mmkg_model* model, size_t* dim, size_t* width) {
  return guarded([&] {
    require(model, "model");
    if (dim) *dim = model->model.spec().dim;
    if (width) *width = model->model.entity_width();
  });
}

mmkg_status mmkg_model_score(const mmkg_model* model, const char* head, const char* relation,
                             const char* tail, double* score) {
  return guarded([&] {
    require(model, "model");
    require(head, "head");
    require(relation, "relation");
    require(tail, "tail");
    require(score, "score");
    const auto& m = model->model;
    *score = m.score({m.entities().at(head), m.relations().at(relation), m.entities().at(tail)});
  });
}

mmkg_status mmkg_model_embed(const mmkg_model* model, const char* entity, double* values,
                             size_t capacity, size_t* written) {
  return guarded([&] {
    require(model, "model");
    require(entity, "entity");
    const auto& m = model->model;
    const auto v = m.emb(m.entities().at(entity));
    if (values)
      std::copy_n(v.values.begin(), std::min(capacity, v.values.size()), values);
    if (written) *written = v.values.size();
  });
}

void mmkg_model_free(mmkg_model* model) { delete model; }

mmkg_status mmkg_welch_test(const double* a, size_t na, const double* b, size_t nb, double* t,
                            double* dof, double* p) {
  return guarded([&] {
    require(a, "a");
    require(b, "b");
    const auto r = mmkg::welch_test({a, na}, {b, nb});
    if (t) *t = r.t;
    if (dof) *dof = r.dof;
    if (p) *p = r.p;
  });
}

}  // extern "C"
