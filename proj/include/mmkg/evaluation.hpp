#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mmkg/graph.hpp"
#include "mmkg/model.hpp"

namespace mmkg {

enum class Side { kHead, kTail };
enum class RankMode { kRaw, kFiltered };

std::string to_string(RankMode mode);
RankMode parse_rank_mode(std::string_view name);

// Realistic rank of `scores[truth]`: 1 + #strictly greater + ceil(#ties / 2),
// skipping candidates with excluded[i] set (the truth is never excluded).
std::int64_t realistic_rank(std::span<const double> scores, std::size_t truth,
                            std::span<const std::uint8_t> excluded = {});

// Scores every entity at `side` against the fixed rest of `triple`, using
// precomputed entity embeddings (one row per entity, see Model::embed_all).
std::vector<double> candidate_scores(const Model& model, const Matrix& entity_embeddings,
                                     const Triple& triple, Side side);

// filter == nullptr ranks against all entities (raw mode).
std::int64_t rank_triple(const Model& model, const Matrix& entity_embeddings,
                         const Triple& triple, Side side, const TripleSet* filter);
std::int64_t rank_triple(const Model& model, const Triple& triple, Side side,
                         const TripleSet* filter);

double mrr(std::span<const std::int64_t> ranks);
double hits_at_k(std::span<const std::int64_t> ranks, std::int64_t k);

struct RankEntry {
  Triple triple;
  Side side = Side::kTail;
  std::int64_t rank = 1;
};

using RankList = std::vector<RankEntry>;

struct RelationMetrics {
  double mrr = 0, hits1 = 0, hits3 = 0, hits10 = 0;
  std::size_t count = 0;
};

struct MetricsReport {
  RankMode mode = RankMode::kFiltered;
  double mrr = 0, hits1 = 0, hits3 = 0, hits10 = 0;
  std::size_t count = 0;
  std::map<std::string, RelationMetrics> per_relation;
};

// Head and tail ranks for every triple, in triple order (head first).
RankList rank_all(const Model& model, std::span<const Triple> triples, const TripleSet* filter);

MetricsReport summarize(const Model& model, const RankList& ranks, RankMode mode);
MetricsReport evaluate(const Model& model, std::span<const Triple> triples,
                       const TripleSet* filter, RankList* ranks_out = nullptr);

std::string to_json(const MetricsReport& report);

// Mean of 1/rank over the two sides of each triple, in triple order.
std::vector<double> reciprocal_ranks_per_triple(const RankList& ranks);

struct DegreeBucket {
  std::int64_t degree = 0;  // lower bound of the base-2 bucket (0, 1, 2, 4, 8, ...)
  double delta_mrr = 0;     // MRR(model_a) - MRR(model_b)
  std::size_t count = 0;
};

struct DegreeAnalysis {
  std::vector<DegreeBucket> predicting_target;  // predicted entity has target type
  std::vector<DegreeBucket> predicting_other;   // given a target-type entity, predicting another type
};

std::int64_t degree_bucket(std::size_t degree);

// Both models must share the entity and relation vocabularies. `degrees`
// are training-graph degrees indexed like the models' entities.
DegreeAnalysis degree_stratified_delta(const Model& model_a, const Model& model_b,
                                       std::span<const Triple> triples,
                                       std::span<const std::size_t> degrees,
                                       const std::string& target_type, const TripleSet* filter);

std::string to_tsv(const std::vector<DegreeBucket>& buckets);

struct WelchResult {
  double t = 0;
  double dof = 0;
  double p = 1;
};

// Welch's unequal-variance two-sample t test, two-sided.
WelchResult welch_test(std::span<const double> a, std::span<const double> b);

}  // namespace mmkg
