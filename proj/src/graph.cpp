#include "mmkg/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mmkg/error.hpp"

namespace mmkg {

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

// Calls `fn(line_number, columns)` for every non-blank line.
template <typename Fn>
std::size_t for_each_tsv_line(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++rows;
    fn(line_no, split_tabs(line));
  }
  return rows;
}

[[noreturn]] void parse_error(const std::filesystem::path& path, std::size_t line_no,
                              const std::string& what) {
  fail(ErrorCode::kParse, path.string() + ":" + std::to_string(line_no) + ": " + what);
}

std::uint64_t pair_key(EntityIndex a, EntityIndex b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(a) << 32) | b;
}

}  // namespace

std::uint32_t Vocabulary::intern(std::string_view name) {
  auto it = index_.find(std::string(name));
  if (it != index_.end()) return it->second;
  const auto id = static_cast<std::uint32_t>(names_.size());
  names_.emplace_back(name);
  index_.emplace(names_.back(), id);
  return id;
}

std::optional<std::uint32_t> Vocabulary::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::uint32_t Vocabulary::at(std::string_view name) const {
  auto id = find(name);
  if (!id) fail(ErrorCode::kNotFound, "unknown identifier '" + std::string(name) + "'");
  return *id;
}

std::size_t TripleHash::operator()(const Triple& t) const noexcept {
  std::uint64_t h = t.head;
  h = h * 0x9E3779B97F4A7C15ull ^ t.relation;
  h = h * 0x9E3779B97F4A7C15ull ^ t.tail;
  return static_cast<std::size_t>(h ^ (h >> 29));
}

ModalityRegistry::ModalityRegistry(std::vector<std::string> names) : names_(std::move(names)) {
  std::set<std::string> seen;
  for (const auto& n : names_) {
    if (n.empty()) fail(ErrorCode::kInvalidArgument, "empty modality name");
    if (!seen.insert(n).second) fail(ErrorCode::kInvalidArgument, "duplicate modality '" + n + "'");
  }
}

ModalityRegistry ModalityRegistry::standard() {
  return ModalityRegistry({"protein", "molecule", "text"});
}

std::optional<ModalityId> ModalityRegistry::find(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return static_cast<ModalityId>(i + 1);
  return std::nullopt;
}

ModalityId ModalityRegistry::id(std::string_view name) const {
  if (auto id = find(name)) return *id;
  std::string listed;
  for (const auto& n : names_) listed += (listed.empty() ? "" : ", ") + n;
  fail(ErrorCode::kInvalidArgument,
       "unknown modality '" + std::string(name) + "' (registered: " + listed + ")");
}

bool KnowledgeGraph::has_types() const {
  return std::any_of(entity_types.begin(), entity_types.end(),
                     [](const std::string& t) { return !t.empty(); });
}

EntityIndex KnowledgeGraph::add_entity(std::string_view name) {
  const auto id = entities.intern(name);
  if (id == entity_types.size()) {
    entity_types.emplace_back();
    attributes.emplace_back();
  }
  return id;
}

std::vector<Triple> append_triples(KnowledgeGraph& kg, const std::filesystem::path& path,
                                   IngestStats* stats) {
  TripleSet existing(kg.triples.begin(), kg.triples.end());
  TripleSet in_file;
  std::vector<Triple> file_triples;
  IngestStats local;
  local.lines = for_each_tsv_line(path, [&](std::size_t line_no, const auto& cols) {
    if (cols.size() != 3)
      parse_error(path, line_no,
                  "expected 3 tab-separated columns, found " + std::to_string(cols.size()));
    if (cols[0].empty() || cols[1].empty() || cols[2].empty())
      parse_error(path, line_no, "empty identifier");
    Triple t;
    t.head = kg.add_entity(cols[0]);
    t.relation = kg.relations.intern(cols[1]);
    t.tail = kg.add_entity(cols[2]);
    if (!in_file.insert(t).second) {
      ++local.duplicates;
      return;
    }
    file_triples.push_back(t);
    if (existing.insert(t).second) kg.triples.push_back(t);
  });
  if (stats) *stats = local;
  return file_triples;
}

std::vector<Triple> read_triples(const std::filesystem::path& path, const Vocabulary& entities,
                                 const Vocabulary& relations, std::size_t* skipped) {
  std::vector<Triple> out;
  TripleSet seen;
  for_each_tsv_line(path, [&](std::size_t line_no, const auto& cols) {
    if (cols.size() != 3)
      parse_error(path, line_no,
                  "expected 3 tab-separated columns, found " + std::to_string(cols.size()));
    const auto h = entities.find(cols[0]), r = relations.find(cols[1]), t_ = entities.find(cols[2]);
    if (!h || !r || !t_) {
      if (skipped) {
        ++*skipped;
        return;
      }
      const auto bad = !h ? cols[0] : !r ? cols[1] : cols[2];
      fail(ErrorCode::kNotFound, path.string() + ":" + std::to_string(line_no) + ": unknown " +
                                     (!r && h ? "relation" : "entity") + " '" + std::string(bad) + "'");
    }
    Triple t{*h, *r, *t_};
    if (seen.insert(t).second) out.push_back(t);
  });
  return out;
}

KnowledgeGraph ingest_triples(const std::filesystem::path& path, IngestStats* stats) {
  KnowledgeGraph kg;
  append_triples(kg, path, stats);
  if (kg.triples.empty()) fail(ErrorCode::kParse, path.string() + ": no triples");
  return kg;
}

std::size_t load_entity_types(KnowledgeGraph& kg, const std::filesystem::path& path) {
  std::size_t unknown = 0;
  for_each_tsv_line(path, [&](std::size_t line_no, const auto& cols) {
    if (cols.size() != 2)
      parse_error(path, line_no, "expected entity<TAB>type");
    auto id = kg.entities.find(cols[0]);
    if (!id) {
      ++unknown;
      return;
    }
    kg.entity_types[*id] = std::string(cols[1]);
  });
  return unknown;
}

std::map<std::string, TypeCoverage> attribute_coverage(const KnowledgeGraph& kg) {
  std::map<std::string, TypeCoverage> out;
  for (EntityIndex e = 0; e < kg.num_entities(); ++e) {
    const bool covered = kg.attributes[e].has_value();
    for (const std::string& key : {kg.entity_types[e].empty() ? std::string("untyped")
                                                              : kg.entity_types[e],
                                   std::string("All")}) {
      auto& c = out[key];
      ++c.entities;
      if (covered) ++c.covered;
    }
  }
  return out;
}

AttachStats attach_attributes(KnowledgeGraph& kg, const std::filesystem::path& path) {
  AttachStats stats;
  stats.lines = for_each_tsv_line(path, [&](std::size_t line_no, const auto& cols) {
    if (cols.size() != 3)
      parse_error(path, line_no, "expected entity<TAB>modality<TAB>payload");
    const ModalityId modality = kg.modalities.id(cols[1]);
    if (cols[2].empty()) parse_error(path, line_no, "empty payload");
    auto id = kg.entities.find(cols[0]);
    if (!id) {
      ++stats.skipped_unknown_entity;
      return;
    }
    if (kg.attributes[*id])
      parse_error(path, line_no, "second attribute record for '" + std::string(cols[0]) + "'");
    kg.attributes[*id] = AttributeRecord{modality, std::string(cols[2])};
    ++stats.attached;
  });
  stats.coverage = attribute_coverage(kg);
  return stats;
}

BenchmarkPairs load_benchmarks(const std::filesystem::path& path) {
  BenchmarkPairs pairs;
  for_each_tsv_line(path, [&](std::size_t line_no, const auto& cols) {
    if (cols.size() != 3 && cols.size() != 2)
      parse_error(path, line_no, "expected entity_a<TAB>entity_b<TAB>task");
    pairs.push_back({std::string(cols[0]), std::string(cols[1]),
                     cols.size() == 3 ? std::string(cols[2]) : std::string()});
  });
  return pairs;
}

void validate_ratios(const SplitRatios& r) {
  if (!(r.train > 0 && r.valid > 0 && r.test > 0))
    fail(ErrorCode::kInvalidArgument, "split ratios must be positive");
  if (std::abs(r.train + r.valid + r.test - 1.0) > 1e-9)
    fail(ErrorCode::kInvalidArgument, "split ratios must sum to 1");
}

SplitBundle decouple_and_split(const KnowledgeGraph& kg, const BenchmarkPairs& benchmarks,
                               const SplitRatios& ratios, std::uint64_t seed) {
  validate_ratios(ratios);

  std::unordered_set<std::uint64_t> excluded;
  for (const auto& p : benchmarks) {
    auto a = kg.entities.find(p.a);
    auto b = kg.entities.find(p.b);
    if (a && b) excluded.insert(pair_key(*a, *b));
  }

  SplitBundle out;
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < kg.triples.size(); ++i) {
    const auto& t = kg.triples[i];
    if (excluded.count(pair_key(t.head, t.tail)))
      out.removed.push_back(t);
    else
      kept.push_back(i);
  }
  if (kept.empty()) fail(ErrorCode::kInvalidArgument, "no triples left after decoupling");

  std::mt19937_64 rng(seed);
  std::shuffle(kept.begin(), kept.end(), rng);
  const std::size_t n = kept.size();
  const auto n_train = static_cast<std::size_t>(std::floor(n * ratios.train + 1e-9));
  const auto n_valid =
      std::min(n - n_train, static_cast<std::size_t>(std::floor(n * ratios.valid + 1e-9)));

  // 0 train, 1 valid, 2 test, indexed by position in kg.triples
  std::vector<int> assignment(kg.triples.size(), -1);
  for (std::size_t k = 0; k < n; ++k)
    assignment[kept[k]] = k < n_train ? 0 : (k < n_train + n_valid ? 1 : 2);

  // Repair: every entity seen in valid/test must occur in some training triple.
  std::vector<char> in_train(kg.num_entities(), 0);
  std::vector<std::vector<std::size_t>> held_out_by_entity(kg.num_entities());
  for (std::size_t i : kept) {
    const auto& t = kg.triples[i];
    if (assignment[i] == 0) {
      in_train[t.head] = in_train[t.tail] = 1;
    } else {
      held_out_by_entity[t.head].push_back(i);
      if (t.tail != t.head) held_out_by_entity[t.tail].push_back(i);
    }
  }
  auto lex_less = [&](std::size_t x, std::size_t y) {
    const auto& a = kg.triples[x];
    const auto& b = kg.triples[y];
    const auto& en = kg.entities;
    const auto& rn = kg.relations;
    return std::tie(en.name(a.head), rn.name(a.relation), en.name(a.tail)) <
           std::tie(en.name(b.head), rn.name(b.relation), en.name(b.tail));
  };
  std::vector<EntityIndex> uncovered;
  for (EntityIndex e = 0; e < kg.num_entities(); ++e)
    if (!in_train[e] && !held_out_by_entity[e].empty()) uncovered.push_back(e);
  std::sort(uncovered.begin(), uncovered.end(), [&](EntityIndex a, EntityIndex b) {
    return kg.entities.name(a) < kg.entities.name(b);
  });
  for (EntityIndex e : uncovered) {
    if (in_train[e]) continue;
    const auto& candidates = held_out_by_entity[e];
    const std::size_t best = *std::min_element(candidates.begin(), candidates.end(), lex_less);
    assignment[best] = 0;
    in_train[kg.triples[best].head] = in_train[kg.triples[best].tail] = 1;
  }

  std::vector<char> present(kg.num_entities(), 0);
  for (std::size_t i = 0; i < kg.triples.size(); ++i) {
    const auto& t = kg.triples[i];
    switch (assignment[i]) {
      case 0: out.train.push_back(t); break;
      case 1: out.valid.push_back(t); break;
      case 2: out.test.push_back(t); break;
      default: continue;
    }
    present[t.head] = present[t.tail] = 1;
  }
  for (EntityIndex e = 0; e < kg.num_entities(); ++e)
    if (!present[e]) out.dropped_entities.push_back(e);
  return out;
}

void write_triples(const KnowledgeGraph& kg, std::span<const Triple> triples,
                   const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
  for (const auto& t : triples)
    out << kg.entities.name(t.head) << '\t' << kg.relations.name(t.relation) << '\t'
        << kg.entities.name(t.tail) << '\n';
}

std::string write_split(const KnowledgeGraph& kg, const SplitBundle& split,
                        const SplitRatios& ratios, std::uint64_t seed,
                        const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  write_triples(kg, split.train, out_dir / "train.tsv");
  write_triples(kg, split.valid, out_dir / "valid.tsv");
  write_triples(kg, split.test, out_dir / "test.tsv");
  write_triples(kg, split.removed, out_dir / "removed.tsv");

  nlohmann::ordered_json m;
  m["seed"] = seed;
  m["ratios"] = {{"train", ratios.train}, {"valid", ratios.valid}, {"test", ratios.test}};
  m["counts"] = {{"original", kg.triples.size()},
                 {"train", split.train.size()},
                 {"valid", split.valid.size()},
                 {"test", split.test.size()},
                 {"removed", split.removed.size()},
                 {"dropped_entities", split.dropped_entities.size()}};
  auto dropped = nlohmann::ordered_json::array();
  for (auto e : split.dropped_entities) dropped.push_back(kg.entities.name(e));
  m["dropped_entities"] = dropped;
  m["files"] = {{"train", "train.tsv"}, {"valid", "valid.tsv"}, {"test", "test.tsv"},
                {"removed", "removed.tsv"}};
  const std::string text = m.dump(2) + "\n";
  std::ofstream out(out_dir / "manifest.json", std::ios::binary);
  if (!out) fail(ErrorCode::kIo, "cannot write manifest in " + out_dir.string());
  out << text;
  return text;
}

std::vector<std::size_t> entity_degrees(std::size_t num_entities,
                                        std::span<const Triple> triples) {
  std::vector<std::size_t> degree(num_entities, 0);
  for (const auto& t : triples) {
    ++degree.at(t.head);
    ++degree.at(t.tail);
  }
  return degree;
}

double quantile_linear(std::span<const double> sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

namespace {

DegreeRow describe(std::string type, std::vector<double> values) {
  DegreeRow row;
  row.type = std::move(type);
  row.count = values.size();
  if (values.empty()) return row;
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  row.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0;
  for (double v : values) ss += (v - row.mean) * (v - row.mean);
  row.std = values.size() > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
  row.min = values.front();
  row.max = values.back();
  row.q25 = quantile_linear(values, 0.25);
  row.q50 = quantile_linear(values, 0.50);
  row.q75 = quantile_linear(values, 0.75);
  return row;
}

}  // namespace

std::vector<DegreeRow> degree_table(const KnowledgeGraph& kg) {
  if (kg.triples.empty()) fail(ErrorCode::kInvalidArgument, "degree table of an empty graph");
  const auto degree = entity_degrees(kg.num_entities(), kg.triples);
  std::map<std::string, std::vector<double>> by_type;
  std::vector<double> all;
  for (EntityIndex e = 0; e < kg.num_entities(); ++e) {
    if (degree[e] == 0) continue;
    all.push_back(static_cast<double>(degree[e]));
    if (!kg.entity_types[e].empty())
      by_type[kg.entity_types[e]].push_back(static_cast<double>(degree[e]));
  }
  std::vector<DegreeRow> rows;
  for (auto& [type, values] : by_type) rows.push_back(describe(type, std::move(values)));
  rows.push_back(describe("All", std::move(all)));
  return rows;
}

SplitGraph load_split_graph(const SplitPaths& paths, const ModalityRegistry& modalities) {
  SplitGraph g;
  g.kg.modalities = modalities;
  g.train = append_triples(g.kg, paths.train);
  if (g.train.empty()) fail(ErrorCode::kParse, paths.train.string() + ": no triples");
  if (!paths.valid.empty()) g.valid = append_triples(g.kg, paths.valid);
  if (!paths.test.empty()) g.test = append_triples(g.kg, paths.test);
  if (!paths.types.empty()) load_entity_types(g.kg, paths.types);
  if (!paths.attributes.empty()) attach_attributes(g.kg, paths.attributes);
  return g;
}

}  // namespace mmkg
