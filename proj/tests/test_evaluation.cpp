#include <doctest.h>

#include <cmath>
#include <map>
#include <random>

#include "mmkg/error.hpp"
#include "mmkg/evaluation.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace mmkg;

namespace {

ModelSpec transe(std::size_t dim, std::uint64_t seed) {
  ModelSpec spec;
  spec.scorer = ScorerKind::kTransE;
  spec.dim = dim;
  spec.seed = seed;
  return spec;
}

// Coordinates rounded to {-1, 0, 1} so that many candidates tie.
void quantize(Model& model) {
  for (auto* p : model.parameters()) p->value = p->value.array().round().max(-1.0).min(1.0).matrix();
}

}  // namespace

TEST_SUITE("evaluation") {

TEST_CASE("realistic rank conventions") {
  const std::vector<double> s{0.1, 0.9, 0.5, 0.2};
  CHECK(realistic_rank(s, 1) == 1);
  CHECK(realistic_rank(s, 0) == 4);
  const std::vector<double> ties(5, 1.0);
  CHECK(realistic_rank(ties, 2) == 3);  // 1 + 4/2
  const std::vector<std::uint8_t> mask{1, 0, 0, 1, 0};
  CHECK(realistic_rank(ties, 2, mask) == 2);  // 1 + 2/2
  const std::vector<double> one_tie{1.0, 1.0};
  CHECK(realistic_rank(one_tie, 0) == 2);  // 1 + 1/2 rounded half up
  CHECK_THROWS_AS(realistic_rank(s, 9), Error);
}

TEST_CASE("mrr and hits examples") {
  const std::vector<std::int64_t> ones{1, 1, 1}, a{1, 2, 4}, b{1, 5, 20};
  CHECK(mrr(ones) == 1.0);
  CHECK(mrr(a) == doctest::Approx(7.0 / 12.0));
  CHECK(hits_at_k(b, 10) == doctest::Approx(2.0 / 3.0));
  CHECK(hits_at_k(b, 20) == 1.0);
  CHECK_THROWS_AS(mrr(std::vector<std::int64_t>{}), Error);
  CHECK_THROWS_AS(hits_at_k(b, 0), Error);
}

TEST_CASE("ranks match the brute-force oracle, raw and filtered, with ties") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto s = testing::synthetic_kg(seed, 12, 0);
    auto model = Model::create(s.kg, transe(2, seed));
    if (seed % 2) quantize(model);
    TripleSet filter(s.kg.triples.begin(), s.kg.triples.end());
    for (const auto& t : s.test) {
      for (bool tail : {false, true}) {
        const Side side = tail ? Side::kTail : Side::kHead;
        CHECK(rank_triple(model, t, side, nullptr) == testing::brute_rank(model, t, tail, nullptr));
        const auto filtered = rank_triple(model, t, side, &filter);
        CHECK(filtered == testing::brute_rank(model, t, tail, &filter));
        CHECK(filtered <= rank_triple(model, t, side, nullptr));
      }
    }
  }
}

TEST_CASE("all candidates tied") {
  auto kg = testing::make_graph({{"a", "r", "b"}, {"a", "r", "c"}, {"d", "r", "e"}});
  auto model = Model::create(kg, transe(2, 0));
  for (auto* p : model.parameters()) p->value.setZero();
  const TripleSet filter(kg.triples.begin(), kg.triples.end());
  // Five candidates, one filtered competitor: 1 + (5 - 1 - 1) / 2 rounded half up.
  CHECK(rank_triple(model, {0, 0, 1}, Side::kTail, &filter) == 3);
  CHECK(rank_triple(model, {0, 0, 1}, Side::kTail, nullptr) == 3);
}

TEST_CASE("evaluate reports head and tail ranks per triple") {
  auto s = testing::synthetic_kg(1, 15, 0);
  auto model = Model::create(s.kg, transe(3, 1));
  TripleSet filter(s.kg.triples.begin(), s.kg.triples.end());
  RankList ranks;
  auto report = evaluate(model, s.test, &filter, &ranks);
  CHECK(report.count == 2 * s.test.size());
  CHECK(report.mode == RankMode::kFiltered);
  std::vector<std::int64_t> expect;
  for (const auto& t : s.test)
    for (bool tail : {false, true}) expect.push_back(testing::brute_rank(model, t, tail, &filter));
  std::vector<std::int64_t> got;
  for (const auto& r : ranks) got.push_back(r.rank);
  CHECK(got == expect);
  CHECK(report.mrr == testing::brute_mrr(expect));
  CHECK(report.hits10 == testing::brute_hits(expect, 10));
  CHECK(report.hits1 <= report.hits3);
  CHECK(report.hits3 <= report.hits10);
  CHECK(report.hits1 <= report.mrr);
  CHECK(report.mrr <= 1.0);

  std::size_t per_relation = 0;
  for (const auto& [name, m] : report.per_relation) per_relation += m.count;
  CHECK(per_relation == report.count);

  const auto raw = evaluate(model, s.test, nullptr);
  CHECK(raw.mode == RankMode::kRaw);
  CHECK(report.mrr >= raw.mrr);
  CHECK_THROWS_AS(evaluate(model, std::vector<Triple>{}, nullptr), Error);
}

TEST_CASE("perfect model on one triple") {
  auto kg = testing::make_graph({{"a", "r", "b"}, {"c", "r", "d"}});
  auto model = Model::create(kg, transe(1, 0));
  model.lookup().entities.value << 0, 1, 10, 20;
  model.lookup().relations.value << 1;
  const std::vector<Triple> one{kg.triples[0]};
  auto report = evaluate(model, one, nullptr);
  CHECK(report.mrr == 1.0);
  CHECK(report.hits1 == 1.0);
}

TEST_CASE("mrr is invariant under monotone score transforms") {
  // TransE with the scale of every coordinate doubled doubles every score.
  auto s = testing::synthetic_kg(2, 20, 0);
  auto model = Model::create(s.kg, transe(4, 2));
  TripleSet filter(s.kg.triples.begin(), s.kg.triples.end());
  const double before = evaluate(model, s.test, &filter).mrr;
  for (auto* p : model.parameters()) p->value *= 2.0;
  CHECK(evaluate(model, s.test, &filter).mrr == before);
}

TEST_CASE("json report labels the mode and lists relations") {
  auto s = testing::synthetic_kg(3, 20, 0);
  auto model = Model::create(s.kg, transe(4, 3));
  auto json = to_json(evaluate(model, s.test, nullptr));
  CHECK(json.find("\"mode\": \"raw\"") != std::string::npos);
  CHECK(json.find("\"per_relation\"") != std::string::npos);
  CHECK(json.find("\"hits@10\"") != std::string::npos);
}

TEST_CASE("degree buckets are powers of two") {
  CHECK(degree_bucket(0) == 0);
  CHECK(degree_bucket(1) == 1);
  CHECK(degree_bucket(3) == 2);
  CHECK(degree_bucket(4) == 4);
  CHECK(degree_bucket(1000) == 512);
}

TEST_CASE("degree-stratified deltas match an exhaustive oracle") {
  auto kg = testing::make_graph({{"p1", "r", "d1"}, {"p2", "r", "d1"}, {"p1", "r", "d2"},
                                 {"p3", "s", "p1"}, {"d2", "s", "x"}, {"p2", "r", "d2"},
                                 {"x", "r", "p3"}});
  kg.entity_types = {"protein", "disease", "protein", "disease", "protein", "other"};
  REQUIRE(kg.num_entities() == 6);
  auto a = Model::create(kg, transe(2, 1));
  auto b = Model::create(kg, transe(2, 2));
  const TripleSet filter(kg.triples.begin(), kg.triples.end());
  const auto degrees = entity_degrees(kg.num_entities(), kg.triples);

  auto analysis = degree_stratified_delta(a, b, kg.triples, degrees, "disease", &filter);

  std::map<std::int64_t, std::pair<double, std::size_t>> target, other;
  for (const auto& t : kg.triples) {
    for (bool tail : {false, true}) {
      const EntityIndex predicted = tail ? t.tail : t.head, given = tail ? t.head : t.tail;
      std::map<std::int64_t, std::pair<double, std::size_t>>* into = nullptr;
      if (kg.entity_types[predicted] == "disease")
        into = &target;
      else if (kg.entity_types[given] == "disease")
        into = &other;
      else
        continue;
      std::int64_t bucket = 1;
      while (bucket * 2 <= static_cast<std::int64_t>(degrees[predicted])) bucket *= 2;
      auto& cell = (*into)[bucket];
      cell.first += 1.0 / testing::brute_rank(a, t, tail, &filter) -
                    1.0 / testing::brute_rank(b, t, tail, &filter);
      ++cell.second;
    }
  }
  auto compare = [](const std::vector<DegreeBucket>& got,
                    const std::map<std::int64_t, std::pair<double, std::size_t>>& want) {
    REQUIRE(got.size() == want.size());
    std::size_t i = 0;
    for (const auto& [degree, cell] : want) {
      CHECK(got[i].degree == degree);
      CHECK(got[i].count == cell.second);
      CHECK(got[i].delta_mrr == doctest::Approx(cell.first / static_cast<double>(cell.second)));
      ++i;
    }
  };
  compare(analysis.predicting_target, target);
  compare(analysis.predicting_other, other);

  std::size_t in_scope = 0;
  for (const auto& t : kg.triples)
    for (bool tail : {false, true}) {
      const EntityIndex predicted = tail ? t.tail : t.head, given = tail ? t.head : t.tail;
      in_scope += kg.entity_types[predicted] == "disease" || kg.entity_types[given] == "disease";
    }
  std::size_t counted = 0;
  for (const auto* list : {&analysis.predicting_target, &analysis.predicting_other})
    for (const auto& bucket : *list) counted += bucket.count;
  CHECK(counted == in_scope);

  auto self = degree_stratified_delta(a, a, kg.triples, degrees, "disease", &filter);
  for (const auto* list : {&self.predicting_target, &self.predicting_other})
    for (const auto& bucket : *list) CHECK(bucket.delta_mrr == 0.0);

  CHECK_THROWS_AS(degree_stratified_delta(a, b, kg.triples, degrees, "gene", &filter), Error);
  const auto tsv = to_tsv(analysis.predicting_target);
  CHECK(tsv.rfind("degree\tdelta_mrr\tcount\n", 0) == 0);
}

TEST_CASE("welch test reference values") {
  const std::vector<double> a{1, 2, 3, 4, 5}, b{3, 4, 5, 6, 7};
  const auto r = welch_test(a, b);
  CHECK(r.t == doctest::Approx(-2.0).epsilon(1e-12));
  CHECK(r.dof == doctest::Approx(8.0).epsilon(1e-12));
  CHECK(r.p == doctest::Approx(0.0805).epsilon(0.001));
  CHECK(std::fabs(r.p - testing::t_two_sided_p(-2.0, 8.0)) < 1e-6);

  const std::vector<double> c{0.2, 0.9, 0.35, 0.5, 1.0, 0.1, 0.25}, d{0.5, 0.55, 0.6, 0.4};
  const auto w = welch_test(c, d);
  const auto ref = testing::welch_reference(c, d);
  CHECK(std::fabs(w.t - ref.t) < 1e-9);
  CHECK(std::fabs(w.dof - ref.dof) < 1e-9);
  CHECK(std::fabs(w.p - ref.p) < 1e-6);
}

TEST_CASE("welch test degenerate cases") {
  const std::vector<double> a{0.5, 0.5, 0.5}, b{0.5, 0.5};
  const auto same = welch_test(a, b);
  CHECK(same.t == 0.0);
  CHECK(same.p == 1.0);
  const std::vector<double> x{1, 2, 3};
  const auto ident = welch_test(x, x);
  CHECK(ident.t == 0.0);
  CHECK(ident.p == doctest::Approx(1.0));
  CHECK_THROWS_AS(welch_test(std::vector<double>{1.0}, x), Error);
}

}  // TEST_SUITE
