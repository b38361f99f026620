#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include <unistd.h>

#include "mmkg/graph.hpp"
#include "mmkg/model.hpp"

namespace testing {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("mmkg-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline void write_file(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

using NamedTriple = std::tuple<std::string, std::string, std::string>;

inline mmkg::KnowledgeGraph make_graph(const std::vector<NamedTriple>& triples) {
  mmkg::KnowledgeGraph kg;
  for (const auto& [h, r, t] : triples) {
    mmkg::Triple tr;
    tr.head = kg.add_entity(h);
    tr.relation = kg.relations.intern(r);
    tr.tail = kg.add_entity(t);
    kg.triples.push_back(tr);
  }
  return kg;
}

// Central differences of a scalar function over every coordinate of x.
inline std::vector<double> numeric_gradient(const std::function<double(std::vector<double>&)>& f,
                                            std::vector<double> x, double h = 1e-6) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double up = f(x);
    x[i] = orig - h;
    const double down = f(x);
    x[i] = orig;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

// |a - b| / max(|a|, |b|, floor), elementwise maximum.
inline double max_rel_error(const std::vector<double>& a, const std::vector<double>& b,
                            double floor = 1e-6) {
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::fabs(a[i]), std::fabs(b[i]), floor});
    worst = std::max(worst, std::fabs(a[i] - b[i]) / scale);
  }
  return worst;
}

inline std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  std::vector<double> v(n);
  for (auto& x : v) x = normal(rng);
  return v;
}

// A ring of `n` entities with relations that shift by fixed offsets, the
// third being the composition of the first two. Entities 0 .. attr-1 carry
// attributes spread over three modalities; payload tokens identify the entity.
struct SyntheticKg {
  mmkg::KnowledgeGraph kg;
  std::vector<mmkg::Triple> train, valid, test;
};

inline std::string letters(std::size_t j, const std::string& alphabet) {
  return std::string(1, alphabet[(2 * j) % alphabet.size()]) +
         alphabet[(2 * j + 1) % alphabet.size()];
}

inline SyntheticKg synthetic_kg(std::uint64_t seed, std::size_t n = 50, std::size_t with_attributes = 30,
                                double held_out = 0.1) {
  SyntheticKg out;
  auto& kg = out.kg;
  for (std::size_t i = 0; i < n; ++i) kg.add_entity("e" + std::to_string(i));
  const std::size_t shifts[] = {1, 3, 4};
  for (std::size_t r = 0; r < 3; ++r) kg.relations.intern("shift" + std::to_string(shifts[r]));
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t i = 0; i < n; ++i)
      kg.triples.push_back({static_cast<mmkg::EntityIndex>(i), static_cast<mmkg::RelationIndex>(r),
                            static_cast<mmkg::EntityIndex>((i + shifts[r]) % n)});

  const std::string protein = "ACDEFGHIKLMNPQRSTVWY";
  const std::string molecule = "CNOSPFIBrlcnos()=#123";
  for (std::size_t i = 0; i < with_attributes && i < n; ++i) {
    const std::size_t m = i % 3, j = i / 3;
    std::string payload;
    if (m == 0) {
      payload = "M" + letters(j, protein) + letters(j + 3, protein);
      kg.entity_types[i] = "protein";
    } else if (m == 1) {
      payload = letters(j, molecule) + "C" + letters(j + 5, molecule);
      kg.entity_types[i] = "molecule";
    } else {
      payload = "disease term" + std::to_string(j) + " affecting tissue" + std::to_string(j % 4);
      kg.entity_types[i] = "disease";
    }
    kg.attributes[i] = mmkg::AttributeRecord{static_cast<mmkg::ModalityId>(m + 1), payload};
  }
  for (std::size_t i = with_attributes; i < n; ++i) kg.entity_types[i] = "other";

  std::vector<mmkg::Triple> all = kg.triples;
  std::mt19937_64 rng(seed);
  std::shuffle(all.begin(), all.end(), rng);
  const auto k = static_cast<std::size_t>(held_out * static_cast<double>(all.size()));
  out.valid.assign(all.begin(), all.begin() + static_cast<long>(k));
  out.test.assign(all.begin() + static_cast<long>(k), all.begin() + static_cast<long>(2 * k));
  out.train.assign(all.begin() + static_cast<long>(2 * k), all.end());
  return out;
}

inline mmkg::ModelSpec synthetic_spec(mmkg::ScorerKind scorer, std::size_t dim, std::uint64_t seed) {
  mmkg::ModelSpec spec;
  spec.scorer = scorer;
  spec.dim = dim;
  spec.seed = seed;
  spec.modalities = {{"protein", mmkg::EncoderKind::kSequenceMean},
                     {"molecule", mmkg::EncoderKind::kSequenceAttention},
                     {"text", mmkg::EncoderKind::kText}};
  return spec;
}

}  // namespace testing
