#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

namespace mmkg {

using EntityIndex = std::uint32_t;
using RelationIndex = std::uint32_t;
// 0 means "no attribute"; registered modalities are numbered from 1.
using ModalityId = std::uint32_t;

// Bijection between string identifiers and dense indices, in first-appearance
// order.
class Vocabulary {
 public:
  std::uint32_t intern(std::string_view name);
  std::optional<std::uint32_t> find(std::string_view name) const;
  std::uint32_t at(std::string_view name) const;  // throws kNotFound
  const std::string& name(std::uint32_t index) const { return names_.at(index); }
  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return names_.size(); }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

struct Triple {
  EntityIndex head = 0;
  RelationIndex relation = 0;
  EntityIndex tail = 0;

  auto operator<=>(const Triple&) const = default;
};

struct TripleHash {
  std::size_t operator()(const Triple& t) const noexcept;
};

using TripleSet = std::unordered_set<Triple, TripleHash>;

struct AttributeRecord {
  ModalityId modality = 0;
  std::string payload;
};

class ModalityRegistry {
 public:
  ModalityRegistry() = default;
  explicit ModalityRegistry(std::vector<std::string> names);

  // protein, molecule, text
  static ModalityRegistry standard();

  ModalityId id(std::string_view name) const;  // throws, listing the registered names
  std::optional<ModalityId> find(std::string_view name) const;
  const std::string& name(ModalityId id) const { return names_.at(id - 1); }
  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
};

struct KnowledgeGraph {
  Vocabulary entities;
  Vocabulary relations;
  std::vector<std::string> entity_types;  // "" when unlabeled; parallel to entities
  std::vector<Triple> triples;            // deduplicated, in file order
  std::vector<std::optional<AttributeRecord>> attributes;  // the partial map d
  ModalityRegistry modalities = ModalityRegistry::standard();

  std::size_t num_entities() const { return entities.size(); }
  std::size_t num_relations() const { return relations.size(); }
  bool has_types() const;

  EntityIndex add_entity(std::string_view name);
  ModalityId modality_of(EntityIndex e) const {
    return attributes[e] ? attributes[e]->modality : 0;
  }
};

struct IngestStats {
  std::size_t lines = 0;
  std::size_t duplicates = 0;
};

KnowledgeGraph ingest_triples(const std::filesystem::path& path, IngestStats* stats = nullptr);

// Reads a triple file into an existing graph's vocabularies. New triples are
// appended to `kg.triples` (deduplicated against it); the file's own
// deduplicated triples are returned in file order.
std::vector<Triple> append_triples(KnowledgeGraph& kg, const std::filesystem::path& path,
                                   IngestStats* stats = nullptr);

// Reads a triple file against fixed vocabularies (deduplicated, file order).
// Lines naming unknown identifiers are counted into `skipped` when given,
// otherwise they are kNotFound errors.
std::vector<Triple> read_triples(const std::filesystem::path& path, const Vocabulary& entities,
                                 const Vocabulary& relations, std::size_t* skipped = nullptr);

// Sidecar `entity\ttype`. Returns the number of lines naming unknown entities.
std::size_t load_entity_types(KnowledgeGraph& kg, const std::filesystem::path& path);

struct TypeCoverage {
  std::size_t entities = 0;
  std::size_t covered = 0;
};

struct AttachStats {
  std::size_t lines = 0;
  std::size_t attached = 0;
  std::size_t skipped_unknown_entity = 0;
  std::map<std::string, TypeCoverage> coverage;  // by entity type; "All" aggregates
};

AttachStats attach_attributes(KnowledgeGraph& kg, const std::filesystem::path& path);
std::map<std::string, TypeCoverage> attribute_coverage(const KnowledgeGraph& kg);

struct BenchmarkPair {
  std::string a;
  std::string b;
  std::string task;
};

using BenchmarkPairs = std::vector<BenchmarkPair>;

BenchmarkPairs load_benchmarks(const std::filesystem::path& path);

struct SplitRatios {
  double train = 0.8;
  double valid = 0.1;
  double test = 0.1;
};

void validate_ratios(const SplitRatios& ratios);

struct SplitBundle {
  std::vector<Triple> train;
  std::vector<Triple> valid;
  std::vector<Triple> test;
  std::vector<Triple> removed;
  std::vector<EntityIndex> dropped_entities;
};

SplitBundle decouple_and_split(const KnowledgeGraph& kg, const BenchmarkPairs& benchmarks,
                               const SplitRatios& ratios, std::uint64_t seed);

// train.tsv / valid.tsv / test.tsv / removed.tsv plus manifest.json. Returns
// the manifest text.
std::string write_split(const KnowledgeGraph& kg, const SplitBundle& split,
                        const SplitRatios& ratios, std::uint64_t seed,
                        const std::filesystem::path& out_dir);

void write_triples(const KnowledgeGraph& kg, std::span<const Triple> triples,
                   const std::filesystem::path& path);

// Degree = incoming + outgoing edges; a self-loop counts twice.
std::vector<std::size_t> entity_degrees(std::size_t num_entities, std::span<const Triple> triples);

struct DegreeRow {
  std::string type;
  std::size_t count = 0;
  double mean = 0, std = 0, min = 0, q25 = 0, q50 = 0, q75 = 0, max = 0;
};

// One row per entity type (sorted), then "All". Entities with no incident
// edge are excluded. Quantiles use linear interpolation; std is the sample
// standard deviation.
std::vector<DegreeRow> degree_table(const KnowledgeGraph& kg);

double quantile_linear(std::span<const double> sorted, double q);

// A graph assembled from split files: the vocabulary follows first appearance
// in train, then valid, then test.
struct SplitGraph {
  KnowledgeGraph kg;
  std::vector<Triple> train;
  std::vector<Triple> valid;
  std::vector<Triple> test;
};

struct SplitPaths {
  std::filesystem::path train;
  std::filesystem::path valid;  // optional
  std::filesystem::path test;   // optional
  std::filesystem::path types;  // optional
  std::filesystem::path attributes;  // optional
};

SplitGraph load_split_graph(const SplitPaths& paths, const ModalityRegistry& modalities);

}  // namespace mmkg
