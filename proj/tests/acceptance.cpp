// Acceptance harness: one PASS/FAIL line per criterion, exit status 1 when
// any criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "mmkg/benchmark.hpp"
#include "mmkg/error.hpp"
#include "mmkg/evaluation.hpp"
#include "mmkg/training.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace mmkg;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string fmt(const char* f, double a, double b) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

std::string fmt(const char* f, double a, double b, double c) {
  char buf[200];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// 1. Central finite differences for scorers, losses and encoders.
Outcome gradient_suite() {
  std::mt19937_64 rng(20240601);
  double scorer = 0, loss = 0, encoder = 0;
  for (auto kind : {ScorerKind::kTransE, ScorerKind::kComplEx, ScorerKind::kRotatE})
    for (int i = 0; i < 200; ++i) scorer = std::max(scorer, testing::scorer_grad_error(kind, 8, rng));
  for (auto kind : {LossKind::kMargin, LossKind::kBce, LossKind::kCe})
    for (int i = 0; i < 200; ++i) loss = std::max(loss, testing::loss_grad_error(kind, rng));
  for (auto kind : {EncoderKind::kSequenceMean, EncoderKind::kSequenceAttention, EncoderKind::kText})
    for (int i = 0; i < 200; ++i) encoder = std::max(encoder, testing::encoder_grad_error(kind, 8, rng));
  for (int i = 0; i < 200; ++i) encoder = std::max(encoder, testing::lookup_grad_error(8, rng));
  return {scorer < 1e-4 && loss < 1e-4 && encoder < 1e-3,
          fmt("max rel err scorers %.2e, losses %.2e, encoders %.2e", scorer, loss, encoder)};
}

// 2. Ranks and metrics against a brute-force oracle on random graphs.
Outcome ranking_oracle() {
  std::size_t checked = 0, mismatches = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    const auto n = std::uniform_int_distribution<std::size_t>(5, 50)(rng);
    const auto r = std::uniform_int_distribution<std::size_t>(1, 4)(rng);
    const auto m = std::uniform_int_distribution<std::size_t>(1, 300)(rng);
    KnowledgeGraph kg;
    for (std::size_t i = 0; i < n; ++i) kg.add_entity("v" + std::to_string(i));
    for (std::size_t i = 0; i < r; ++i) kg.relations.intern("r" + std::to_string(i));
    TripleSet seen;
    std::uniform_int_distribution<EntityIndex> ent(0, static_cast<EntityIndex>(n - 1));
    std::uniform_int_distribution<RelationIndex> rel(0, static_cast<RelationIndex>(r - 1));
    for (std::size_t i = 0; i < m; ++i) {
      const Triple t{ent(rng), rel(rng), ent(rng)};
      if (seen.insert(t).second) kg.triples.push_back(t);
    }
    ModelSpec spec;
    spec.scorer = static_cast<ScorerKind>(seed % 3);
    spec.dim = 3;
    spec.seed = seed;
    auto model = Model::create(kg, spec);
    // Coarse parameters on every other graph so that many candidates tie.
    if (seed % 2)
      for (auto* p : model.parameters()) p->value = p->value.array().round().matrix();

    for (const TripleSet* filter : std::vector<const TripleSet*>{nullptr, &seen}) {
      RankList ranks;
      const auto report = evaluate(model, kg.triples, filter, &ranks);
      std::vector<std::int64_t> expect;
      for (const auto& t : kg.triples)
        for (bool tail : {false, true}) expect.push_back(testing::brute_rank(model, t, tail, filter));
      std::vector<std::int64_t> got;
      for (std::size_t i = 0; i < ranks.size(); ++i) {
        const auto& t = kg.triples[i / 2];
        const auto direct = rank_triple(model, t, i % 2 ? Side::kTail : Side::kHead, filter);
        got.push_back(ranks[i].rank);
        mismatches += direct != expect[i];
      }
      mismatches += got != expect;
      mismatches += report.mrr != testing::brute_mrr(expect);
      mismatches += mrr(expect) != testing::brute_mrr(expect);
      for (std::int64_t k : {1, 3, 10}) mismatches += hits_at_k(expect, k) != testing::brute_hits(expect, k);
      mismatches += report.hits10 != testing::brute_hits(expect, 10);
      checked += expect.size();
    }
  }
  return {mismatches == 0, std::to_string(checked) + " ranks, " + std::to_string(mismatches) + " mismatches"};
}

// 3. Benchmark decoupling and split invariants on random graphs.
Outcome split_soundness() {
  std::size_t violations = 0, graphs = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::mt19937_64 rng(1000 + seed);
    const auto n = std::uniform_int_distribution<std::size_t>(8, 40)(rng);
    KnowledgeGraph kg;
    for (std::size_t i = 0; i < n; ++i) kg.add_entity("v" + std::to_string(i));
    kg.relations.intern("r0");
    kg.relations.intern("r1");
    std::uniform_int_distribution<EntityIndex> ent(0, static_cast<EntityIndex>(n - 1));
    TripleSet seen;
    // A ring keeps every entity connected, random chords add density.
    for (EntityIndex i = 0; i < n; ++i) {
      const Triple t{i, 0, static_cast<EntityIndex>((i + 1) % n)};
      if (seen.insert(t).second) kg.triples.push_back(t);
    }
    for (std::size_t i = 0; i < 3 * n; ++i) {
      const Triple t{ent(rng), static_cast<RelationIndex>(rng() % 2), ent(rng)};
      if (seen.insert(t).second) kg.triples.push_back(t);
    }
    // Inject benchmark pairs: some joined by triples in either direction, some not.
    BenchmarkPairs pairs;
    std::set<std::pair<EntityIndex, EntityIndex>> pair_set;
    for (int k = 0; k < 4; ++k) {
      const auto& t = kg.triples[rng() % kg.triples.size()];
      if (t.head == t.tail) continue;
      pairs.push_back({kg.entities.name(t.tail), kg.entities.name(t.head), "t"});
      pair_set.insert(std::minmax(t.head, t.tail));
    }
    const EntityIndex a = ent(rng), b = ent(rng);
    if (a != b) {
      pairs.push_back({kg.entities.name(a), kg.entities.name(b), "t"});
      pair_set.insert(std::minmax(a, b));
    }

    SplitBundle split;
    try {
      split = decouple_and_split(kg, pairs, {0.8, 0.1, 0.1}, seed);
    } catch (const Error&) {
      ++violations;
      continue;
    }
    ++graphs;
    std::multiset<std::tuple<EntityIndex, RelationIndex, EntityIndex>> all, parts;
    for (const auto& t : kg.triples) all.insert({t.head, t.relation, t.tail});
    std::set<EntityIndex> train_entities;
    for (const auto* part : {&split.train, &split.valid, &split.test}) {
      for (const auto& t : *part) {
        parts.insert({t.head, t.relation, t.tail});
        violations += pair_set.count(std::minmax(t.head, t.tail));
      }
    }
    for (const auto& t : split.removed) {
      parts.insert({t.head, t.relation, t.tail});
      violations += pair_set.count(std::minmax(t.head, t.tail)) == 0;
    }
    violations += all != parts;
    for (const auto& t : split.train) {
      train_entities.insert(t.head);
      train_entities.insert(t.tail);
    }
    for (const auto* part : {&split.valid, &split.test})
      for (const auto& t : *part)
        violations += !train_entities.count(t.head) + !train_entities.count(t.tail);
  }
  return {violations == 0 && graphs == 50,
          std::to_string(graphs) + " graphs, " + std::to_string(violations) + " violations"};
}

TrainConfig smoke_config(std::uint64_t seed) {
  TrainConfig c;
  c.learning_rate = 0.01;
  c.batch_size = 32;
  c.loss = LossKind::kCe;
  c.negatives = 16;
  c.epochs = 200;
  c.eval_interval = 10;
  c.patience = 1000;
  c.optimizer = OptimizerKind::kAdam;
  c.seed = seed;
  return c;
}

ModelSpec smoke_spec(std::uint64_t seed) {
  auto spec = testing::synthetic_spec(ScorerKind::kRotatE, 32, seed);
  spec.token_dim = 16;
  return spec;
}

// 4. A RotatE model with encoders learns the planted ring pattern.
Outcome learning_smoke() {
  const std::uint64_t seed = 1;
  const auto s = testing::synthetic_kg(seed);
  const TripleSet known(s.kg.triples.begin(), s.kg.triples.end());
  const TrainingData data{&s.kg, s.train, s.valid, &known};
  const Model untrained = Model::create(s.kg, smoke_spec(seed));
  const double baseline = evaluate(untrained, s.test, &known).mrr;
  const auto result = train(data, smoke_config(seed), Model::create(s.kg, smoke_spec(seed)));
  const double train_mrr = evaluate(result.model, s.train, &known).mrr;
  const double test_mrr = evaluate(result.model, s.test, &known).mrr;
  return {train_mrr >= 0.5 && test_mrr >= 3 * baseline,
          fmt("train MRR %.3f, held-out MRR %.3f, random-model baseline %.3f", train_mrr, test_mrr,
              baseline)};
}

// 5. Lookup pretraining followed by fine-tuning against training from scratch.
Outcome pretraining_benefit() {
  std::vector<double> pre_steps, scratch_steps, pre_mrr, scratch_mrr;
  std::vector<double> rr_pre, rr_scratch;
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto s = testing::synthetic_kg(seed);
    const TripleSet known(s.kg.triples.begin(), s.kg.triples.end());
    const TrainingData data{&s.kg, s.train, s.valid, &known};
    TrainConfig stage1 = smoke_config(seed), stage2 = smoke_config(seed);
    stage1.epochs = 100;
    stage2.epochs = 60;
    stage2.eval_interval = 2;
    const auto spec = smoke_spec(seed);
    const auto pre = pretrain_then_finetune(data, stage1, stage2, spec);
    const auto scratch = train(data, stage2, Model::create(s.kg, spec));

    double reach = std::numeric_limits<double>::infinity();
    for (const auto& p : pre.stage2.history)
      if (p.val_mrr >= scratch.best_val_mrr) {
        reach = static_cast<double>(p.step);
        break;
      }
    pre_steps.push_back(reach);
    scratch_steps.push_back(static_cast<double>(scratch.best_step));
    pre_mrr.push_back(pre.stage2.best_val_mrr);
    scratch_mrr.push_back(scratch.best_val_mrr);

    RankList a, b;
    evaluate(pre.stage2.model, s.valid, &known, &a);
    evaluate(scratch.model, s.valid, &known, &b);
    for (double v : reciprocal_ranks_per_triple(a)) rr_pre.push_back(v);
    for (double v : reciprocal_ranks_per_triple(b)) rr_scratch.push_back(v);
  }
  const double steps_pre = median(pre_steps), steps_scratch = median(scratch_steps);
  const double mrr_pre = median(pre_mrr), mrr_scratch = median(scratch_mrr);
  const auto w = welch_test(rr_pre, rr_scratch);
  return {steps_pre < steps_scratch && mrr_pre >= mrr_scratch,
          fmt("median steps to scratch best %.0f vs %.0f, ", steps_pre, steps_scratch) +
              fmt("median val MRR %.3f vs %.3f, ", mrr_pre, mrr_scratch) +
              fmt("Welch p %.3g", w.p)};
}

// 6. Chance-level AUPRC for random features, near-perfect AUROC when separable.
Outcome classifier_calibration() {
  PairDataset data;
  for (int i = 0; i < 10010; ++i)
    data.instances.push_back({"a" + std::to_string(i), "b" + std::to_string(i), i % 11 == 0 ? 1 : 0, i % 11 != 0});
  KnowledgeGraph empty;
  const FeatureSource random{"random", FeatureSourceKind::kRandom, 32, nullptr, 5};
  BenchmarkOptions options;
  options.folds = 5;
  options.tuning_budget = 0;
  options.seed = 5;
  const std::vector<ClassifierKind> logistic{ClassifierKind::kLogistic};
  const auto chance = run_benchmark_on(data, {{"random", featurize(data, empty, random)}}, logistic, options);
  const double auprc_mean = chance.entries[0].mean.auprc;

  std::mt19937_64 rng(6);
  std::normal_distribution<double> noise;
  Matrix x(static_cast<Eigen::Index>(data.instances.size()), 4);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < 4; ++j) x(i, j) = noise(rng);
    if (data.instances[static_cast<std::size_t>(i)].label == 1) x(i, 0) += 4.0;
  }
  const auto separable = run_benchmark_on(data, {{"separable", x}}, logistic, options);
  const double auroc_mean = separable.entries[0].mean.auroc;
  return {std::fabs(auprc_mean - 1.0 / 11.0) <= 0.05 && auroc_mean > 0.95,
          fmt("random AUPRC %.4f (prevalence %.4f), separable AUROC %.4f", auprc_mean, 1.0 / 11.0,
              auroc_mean)};
}

// 7. Welch test and AUROC against independent references.
Outcome statistical_oracles() {
  double worst = 0;
  const std::vector<double> a{1, 2, 3, 4, 5}, b{3, 4, 5, 6, 7};
  const auto w = welch_test(a, b);
  worst = std::max({worst, std::fabs(w.t + 2.0), std::fabs(w.dof - 8.0),
                    std::fabs(w.p - testing::t_two_sided_p(-2.0, 8.0))});
  const bool reference = std::fabs(w.p - 0.0805) < 5e-4;

  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const auto na = std::uniform_int_distribution<std::size_t>(2, 30)(rng);
    const auto nb = std::uniform_int_distribution<std::size_t>(2, 30)(rng);
    std::normal_distribution<double> da(0.0, 1.0), db(0.3, 2.0);
    std::vector<double> x(na), y(nb);
    for (auto& v : x) v = da(rng);
    for (auto& v : y) v = db(rng);
    const auto got = welch_test(x, y);
    const auto ref = testing::welch_reference(x, y);
    worst = std::max({worst, std::fabs(got.t - ref.t), std::fabs(got.dof - ref.dof),
                      std::fabs(got.p - ref.p)});
  }
  for (int trial = 0; trial < 200; ++trial) {
    const auto n = std::uniform_int_distribution<std::size_t>(2, 200)(rng);
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    const int levels = trial % 2 ? 5 : 1000000;
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = std::uniform_int_distribution<int>(0, levels)(rng) / static_cast<double>(levels);
      labels[i] = static_cast<int>(rng() % 2);
    }
    labels[0] = 1;
    labels[1] = 0;
    worst = std::max(worst, std::fabs(auroc(scores, labels) - testing::brute_auroc(scores, labels)));
  }
  return {reference && worst < 1e-6, fmt("max deviation %.2e, quintuple p %.4f", worst, w.p)};
}

// 8. Sampled HPO configurations stay inside the search space.
Outcome hpo_conformance() {
  std::size_t outside = 0, below_mid = 0;
  const HpoSpace defaults;
  for (auto scorer : {ScorerKind::kTransE, ScorerKind::kComplEx, ScorerKind::kRotatE}) {
    HpoSpace space;
    space.scorer = scorer;
    std::mt19937_64 rng(8);
    for (int i = 0; i < 1000; ++i) {
      const auto c = sample_config(space, TrainConfig{}, rng);
      outside += c.learning_rate < space.learning_rate_min || c.learning_rate > space.learning_rate_max;
      outside += c.regularization < space.regularization_min ||
                 c.regularization > space.regularization_max;
      outside += std::find(space.batch_sizes.begin(), space.batch_sizes.end(), c.batch_size) ==
                 space.batch_sizes.end();
      if (scorer == ScorerKind::kTransE)
        outside += c.loss != LossKind::kMargin;
      else
        outside += c.loss == LossKind::kMargin;
      below_mid += c.learning_rate < std::sqrt(space.learning_rate_min * space.learning_rate_max);
    }
  }
  // Log-uniform sampling puts half the mass below the geometric midpoint.
  const double fraction = static_cast<double>(below_mid) / 3000.0;
  return {outside == 0 && std::fabs(fraction - 0.5) < 0.05,
          std::to_string(outside) + " out-of-space draws in 3000, " +
              fmt("%.3f below the geometric midpoint", fraction)};
}

struct Criterion {
  const char* name;
  double budget_seconds;
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {"gradient suite", 60, gradient_suite},
      {"ranking oracle", 60, ranking_oracle},
      {"split soundness", 30, split_soundness},
      {"learning smoke test", 600, learning_smoke},
      {"pretraining benefit", 1800, pretraining_benefit},
      {"classifier calibration", 300, classifier_calibration},
      {"statistical oracles", 10, statistical_oracles},
      {"hpo conformance", 5, hpo_conformance},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto& c = criteria[i];
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("error: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = seconds <= c.budget_seconds;
    const bool pass = out.pass && in_time;
    failed += !pass;
    std::printf("%s %zu. %s: %s; %.1f s of %.0f s%s\n", pass ? "PASS" : "FAIL", i + 1, c.name,
                out.detail.c_str(), seconds, c.budget_seconds, in_time ? "" : " (over budget)");
    std::fflush(stdout);
  }
  return failed ? 1 : 0;
}
