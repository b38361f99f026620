#include "mmkg/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>
#include <json.hpp>

#include "mmkg/error.hpp"

namespace mmkg {

std::string to_string(RankMode mode) { return mode == RankMode::kRaw ? "raw" : "filtered"; }

RankMode parse_rank_mode(std::string_view name) {
  if (name == "raw") return RankMode::kRaw;
  if (name == "filtered") return RankMode::kFiltered;
  fail(ErrorCode::kInvalidArgument,
       "unknown ranking mode '" + std::string(name) + "' (expected raw or filtered)");
}

std::int64_t realistic_rank(std::span<const double> scores, std::size_t truth,
                            std::span<const std::uint8_t> excluded) {
  if (truth >= scores.size()) fail(ErrorCode::kInvalidArgument, "true candidate out of range");
  if (!excluded.empty() && excluded.size() != scores.size())
    fail(ErrorCode::kInvalidArgument, "exclusion mask does not match the candidate count");
  const double target = scores[truth];
  if (!std::isfinite(target)) fail(ErrorCode::kNumeric, "the true candidate has a non-finite score");
  std::int64_t greater = 0, ties = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (i == truth || (!excluded.empty() && excluded[i])) continue;
    if (scores[i] > target) {
      ++greater;
    } else if (scores[i] == target) {
      ++ties;
    }
  }
  return 1 + greater + (ties + 1) / 2;
}

std::vector<double> candidate_scores(const Model& model, const Matrix& entity_embeddings,
                                     const Triple& triple, Side side) {
  const auto n = static_cast<std::size_t>(entity_embeddings.rows());
  if (triple.head >= n || triple.tail >= n)
    fail(ErrorCode::kNotFound, "triple refers to an entity outside the model");
  const auto width = static_cast<std::size_t>(entity_embeddings.cols());
  auto row = [&](std::size_t e) {
    return std::span<const double>(entity_embeddings.data() + e * width, width);
  };
  const auto rel = model.relation(triple.relation);
  std::vector<double> out(n);
  for (std::size_t e = 0; e < n; ++e) {
    out[e] = side == Side::kTail ? score(model.scorer(), row(triple.head), rel, row(e))
                                 : score(model.scorer(), row(e), rel, row(triple.tail));
  }
  return out;
}

namespace {

std::int64_t rank_from_scores(std::span<const double> scores, const Triple& triple, Side side,
                              const TripleSet* filter, std::vector<std::uint8_t>& mask) {
  const EntityIndex truth = side == Side::kTail ? triple.tail : triple.head;
  mask.assign(scores.size(), 0);
  if (filter) {
    for (EntityIndex e = 0; e < scores.size(); ++e) {
      if (e == truth) continue;
      Triple probe = triple;
      (side == Side::kTail ? probe.tail : probe.head) = e;
      if (filter->count(probe)) mask[e] = 1;
    }
  }
  return realistic_rank(scores, truth, mask);
}

}  // namespace

std::int64_t rank_triple(const Model& model, const Matrix& entity_embeddings,
                         const Triple& triple, Side side, const TripleSet* filter) {
  const auto scores = candidate_scores(model, entity_embeddings, triple, side);
  std::vector<std::uint8_t> mask;
  return rank_from_scores(scores, triple, side, filter, mask);
}

std::int64_t rank_triple(const Model& model, const Triple& triple, Side side,
                         const TripleSet* filter) {
  return rank_triple(model, model.embed_all(), triple, side, filter);
}

double mrr(std::span<const std::int64_t> ranks) {
  if (ranks.empty()) fail(ErrorCode::kInvalidArgument, "MRR of an empty rank list");
  double sum = 0;
  for (auto r : ranks) sum += 1.0 / static_cast<double>(r);
  return sum / static_cast<double>(ranks.size());
}

double hits_at_k(std::span<const std::int64_t> ranks, std::int64_t k) {
  if (ranks.empty()) fail(ErrorCode::kInvalidArgument, "hits@k of an empty rank list");
  if (k < 1) fail(ErrorCode::kInvalidArgument, "hits@k needs k >= 1");
  const auto hits = std::count_if(ranks.begin(), ranks.end(), [k](auto r) { return r <= k; });
  return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

RankList rank_all(const Model& model, std::span<const Triple> triples, const TripleSet* filter) {
  const Matrix embeddings = model.embed_all();
  RankList out;
  out.reserve(2 * triples.size());
  std::vector<std::uint8_t> mask;
  for (const auto& t : triples) {
    for (Side side : {Side::kHead, Side::kTail}) {
      const auto scores = candidate_scores(model, embeddings, t, side);
      out.push_back({t, side, rank_from_scores(scores, t, side, filter, mask)});
    }
  }
  return out;
}

namespace {

template <typename Out>
void fill_metrics(Out& out, std::span<const std::int64_t> ranks) {
  out.mrr = mrr(ranks);
  out.hits1 = hits_at_k(ranks, 1);
  out.hits3 = hits_at_k(ranks, 3);
  out.hits10 = hits_at_k(ranks, 10);
  out.count = ranks.size();
}

}  // namespace

MetricsReport summarize(const Model& model, const RankList& ranks, RankMode mode) {
  if (ranks.empty()) fail(ErrorCode::kInvalidArgument, "no triples to evaluate");
  MetricsReport report;
  report.mode = mode;
  std::vector<std::int64_t> all;
  std::map<std::string, std::vector<std::int64_t>> by_relation;
  for (const auto& entry : ranks) {
    all.push_back(entry.rank);
    by_relation[model.relations().name(entry.triple.relation)].push_back(entry.rank);
  }
  fill_metrics(report, all);
  for (const auto& [name, list] : by_relation) fill_metrics(report.per_relation[name], list);
  return report;
}

MetricsReport evaluate(const Model& model, std::span<const Triple> triples,
                       const TripleSet* filter, RankList* ranks_out) {
  if (triples.empty()) fail(ErrorCode::kInvalidArgument, "no triples to evaluate");
  RankList ranks = rank_all(model, triples, filter);
  auto report = summarize(model, ranks, filter ? RankMode::kFiltered : RankMode::kRaw);
  if (ranks_out) *ranks_out = std::move(ranks);
  return report;
}

std::string to_json(const MetricsReport& report) {
  nlohmann::ordered_json j;
  j["mode"] = to_string(report.mode);
  j["count"] = report.count;
  j["mrr"] = report.mrr;
  j["hits@1"] = report.hits1;
  j["hits@3"] = report.hits3;
  j["hits@10"] = report.hits10;
  auto& rel = j["per_relation"] = nlohmann::ordered_json::object();
  for (const auto& [name, m] : report.per_relation) {
    rel[name] = {{"count", m.count}, {"mrr", m.mrr},       {"hits@1", m.hits1},
                 {"hits@3", m.hits3}, {"hits@10", m.hits10}};
  }
  return j.dump(2);
}

std::vector<double> reciprocal_ranks_per_triple(const RankList& ranks) {
  std::vector<double> out;
  out.reserve(ranks.size() / 2);
  for (std::size_t i = 0; i + 1 < ranks.size(); i += 2)
    out.push_back(0.5 / static_cast<double>(ranks[i].rank) +
                  0.5 / static_cast<double>(ranks[i + 1].rank));
  return out;
}

std::int64_t degree_bucket(std::size_t degree) {
  if (degree == 0) return 0;
  std::int64_t b = 1;
  while (static_cast<std::size_t>(b) * 2 <= degree) b *= 2;
  return b;
}

namespace {

struct BucketSums {
  double a = 0, b = 0;
  std::size_t count = 0;
};

std::vector<DegreeBucket> finish(const std::map<std::int64_t, BucketSums>& sums) {
  std::vector<DegreeBucket> out;
  for (const auto& [degree, s] : sums) {
    const auto n = static_cast<double>(s.count);
    out.push_back({degree, s.a / n - s.b / n, s.count});
  }
  return out;
}

}  // namespace

DegreeAnalysis degree_stratified_delta(const Model& model_a, const Model& model_b,
                                       std::span<const Triple> triples,
                                       std::span<const std::size_t> degrees,
                                       const std::string& target_type, const TripleSet* filter) {
  if (model_a.entities().names() != model_b.entities().names() ||
      model_a.relations().names() != model_b.relations().names())
    fail(ErrorCode::kInvalidArgument, "the two models do not share entity and relation sets");
  if (degrees.size() != model_a.num_entities())
    fail(ErrorCode::kInvalidArgument, "degree table does not match the model's entities");
  const auto& types = model_a.entity_types();

  std::vector<Triple> scoped;
  for (const auto& t : triples)
    if (types[t.head] == target_type || types[t.tail] == target_type) scoped.push_back(t);
  if (scoped.empty())
    fail(ErrorCode::kInvalidArgument, "no evaluation triple touches an entity of type '" +
                                          target_type + "'");

  const RankList ra = rank_all(model_a, scoped, filter);
  const RankList rb = rank_all(model_b, scoped, filter);
  std::map<std::int64_t, BucketSums> target, other;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    const Triple& t = ra[i].triple;
    const bool tail = ra[i].side == Side::kTail;
    const EntityIndex predicted = tail ? t.tail : t.head;
    const EntityIndex given = tail ? t.head : t.tail;
    std::map<std::int64_t, BucketSums>* into = nullptr;
    if (types[predicted] == target_type) {
      into = &target;
    } else if (types[given] == target_type) {
      into = &other;
    } else {
      continue;
    }
    auto& s = (*into)[degree_bucket(degrees[predicted])];
    s.a += 1.0 / static_cast<double>(ra[i].rank);
    s.b += 1.0 / static_cast<double>(rb[i].rank);
    ++s.count;
  }
  return {finish(target), finish(other)};
}

std::string to_tsv(const std::vector<DegreeBucket>& buckets) {
  std::ostringstream out;
  out.precision(17);
  out << "degree\tdelta_mrr\tcount\n";
  for (const auto& b : buckets) out << b.degree << '\t' << b.delta_mrr << '\t' << b.count << '\n';
  return out.str();
}

WelchResult welch_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2)
    fail(ErrorCode::kInvalidArgument, "Welch's test needs at least two values per sample");
  auto moments = [](std::span<const double> x) {
    double mean = 0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(x.size());
    double ss = 0;
    for (double v : x) ss += (v - mean) * (v - mean);
    return std::pair{mean, ss / static_cast<double>(x.size() - 1)};
  };
  const auto [ma, va] = moments(a);
  const auto [mb, vb] = moments(b);
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double sa = va / na, sb = vb / nb;
  const double se2 = sa + sb;
  WelchResult r;
  if (se2 == 0) {
    r.dof = na + nb - 2;
    if (ma == mb) return {0, r.dof, 1};
    r.t = ma > mb ? std::numeric_limits<double>::infinity()
                  : -std::numeric_limits<double>::infinity();
    r.p = 0;
    return r;
  }
  r.t = (ma - mb) / std::sqrt(se2);
  r.dof = se2 * se2 / (sa * sa / (na - 1) + sb * sb / (nb - 1));
  boost::math::students_t dist(r.dof);
  r.p = 2 * boost::math::cdf(boost::math::complement(dist, std::fabs(r.t)));
  r.p = std::min(1.0, r.p);
  return r;
}

}  // namespace mmkg
