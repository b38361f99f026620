#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include <boost/math/distributions/chi_squared.hpp>

#include "gradcheck.hpp"
#include "mmkg/error.hpp"
#include "mmkg/evaluation.hpp"
#include "mmkg/training.hpp"

using namespace mmkg;

namespace {

// a..e; a, b, c carry one attribute per modality.
KnowledgeGraph toy_graph() {
  auto kg = testing::make_graph({{"a", "r", "b"}, {"b", "s", "c"}, {"c", "r", "d"},
                                 {"d", "s", "e"}, {"e", "r", "a"}, {"a", "s", "d"}});
  kg.attributes[0] = AttributeRecord{1, "MKVL"};
  kg.attributes[1] = AttributeRecord{2, "CCOC"};
  kg.attributes[2] = AttributeRecord{3, "heart disease of the valve"};
  return kg;
}

TrainingData data_for(const testing::SyntheticKg& s, const TripleSet& filter) {
  TrainingData d;
  d.kg = &s.kg;
  d.train = s.train;
  d.valid = s.valid;
  d.filter = &filter;
  return d;
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("margin loss examples") {
  auto a = loss_margin(5, 1, 1);
  CHECK(a.value == 0.0);
  CHECK(a.d_pos == 0.0);
  CHECK(a.d_neg[0] == 0.0);
  auto b = loss_margin(1, 5, 1);
  CHECK(b.value == 5.0);
  CHECK(b.d_pos == -1.0);
  CHECK(b.d_neg[0] == 1.0);
  auto c = loss_margin(2, 2, 0);
  CHECK(c.value == 0.0);
  CHECK(c.d_pos == 0.0);
  CHECK(c.d_neg[0] == 0.0);
  CHECK_THROWS_AS(loss_margin(0, 0, -1), Error);
  CHECK_THROWS_AS(loss_margin(0, std::span<const double>{}, 1), Error);
}

TEST_CASE("binary cross-entropy examples") {
  const std::vector<double> zero{0.0};
  CHECK(loss_bce(0, zero).value == doctest::Approx(-2 * std::log(0.5)));
  const std::vector<double> far{-800.0};
  CHECK(loss_bce(800, far).value == doctest::Approx(0.0));
  CHECK(std::isfinite(loss_bce(-800, std::vector<double>{800.0}).value));
}

TEST_CASE("cross-entropy examples") {
  const std::vector<double> one{1.5};
  CHECK(loss_ce(1.5, one).value == doctest::Approx(std::log(2.0)));
  CHECK(loss_ce(100, std::vector<double>{-100.0, -50.0}).value == doctest::Approx(0.0));
  const std::vector<double> negs{0.3, -1.2, 2.0};
  std::vector<double> shifted(negs);
  for (auto& x : shifted) x += 17.0;
  CHECK(loss_ce(0.7, negs).value == doctest::Approx(loss_ce(17.7, shifted).value).epsilon(1e-12));
}

TEST_CASE("loss gradients match central differences") {
  std::mt19937_64 rng(1);
  for (auto kind : {LossKind::kMargin, LossKind::kBce, LossKind::kCe}) {
    CAPTURE(to_string(kind));
    double worst = 0;
    for (int i = 0; i < 200; ++i) worst = std::max(worst, testing::loss_grad_error(kind, rng));
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("corruption keeps the relation and replaces exactly one side") {
  std::mt19937_64 rng(2);
  const Triple t{3, 1, 7};
  for (int i = 0; i < 1000; ++i) {
    const auto c = corrupt(t, 10, CorruptSide::kUniform, rng);
    CHECK(c.relation == 1);
    CHECK(((c.head != 3) != (c.tail != 7)));
  }
  CHECK(corrupt({0, 0, 1}, 2, CorruptSide::kHead, rng) == Triple{1, 0, 1});
  CHECK_THROWS_AS(corrupt({0, 0, 0}, 1, CorruptSide::kHead, rng), Error);
}

TEST_CASE("replacement entities are uniform (chi-squared)") {
  std::mt19937_64 rng(3);
  std::map<EntityIndex, int> counts;
  const int n = 10000;
  for (int i = 0; i < n; ++i) ++counts[corrupt({2, 0, 4}, 5, CorruptSide::kHead, rng).head];
  CHECK(counts.size() == 4);
  CHECK(counts.count(2) == 0);
  double chi2 = 0;
  const double expected = n / 4.0;
  for (const auto& [e, c] : counts) chi2 += (c - expected) * (c - expected) / expected;
  const double p = 1 - boost::math::cdf(boost::math::chi_squared(3), chi2);
  CHECK(p > 0.01);
}

TEST_CASE("training configuration validation lists every problem") {
  TrainConfig c;
  c.loss = LossKind::kCe;
  c.batch_size = 0;
  c.learning_rate = -1;
  const auto problems = config_problems(c, ScorerKind::kTransE);
  CHECK(problems.size() == 3);
  CHECK_THROWS_AS(validate(c, ScorerKind::kTransE), Error);
  c = TrainConfig{};
  c.loss = LossKind::kBce;
  CHECK(config_problems(c, ScorerKind::kRotatE).empty());
  CHECK(config_problems(c, ScorerKind::kTransE).size() == 1);
}

TEST_CASE("end-to-end batch gradient matches central differences") {
  const auto kg = toy_graph();
  std::mt19937_64 rng(4);
  for (auto scorer : {ScorerKind::kTransE, ScorerKind::kComplEx, ScorerKind::kRotatE}) {
    for (auto loss : {LossKind::kMargin, LossKind::kBce, LossKind::kCe}) {
      if (scorer == ScorerKind::kTransE && loss != LossKind::kMargin) continue;
      CAPTURE(to_string(scorer));
      CAPTURE(to_string(loss));
      ModelSpec spec;
      spec.scorer = scorer;
      spec.dim = 3;
      spec.token_dim = 4;
      spec.seed = 11;
      spec.modalities = {{"protein", EncoderKind::kSequenceMean},
                         {"molecule", EncoderKind::kSequenceAttention},
                         {"text", EncoderKind::kText}};
      auto model = Model::create(kg, spec);
      TrainConfig config;
      config.loss = loss;
      config.margin = 100.0;  // keeps every margin term active, away from the hinge
      config.negatives = 2;
      std::vector<Triple> negatives;
      for (const auto& t : kg.triples)
        for (int j = 0; j < 2; ++j) negatives.push_back(corrupt(t, 5, CorruptSide::kUniform, rng));

      auto params = model.parameters();
      zero_grads(params);
      batch_loss_grad(model, kg.triples, negatives, config);
      std::vector<double> analytic, numeric;
      for (auto* p : params) {
        if (!p->trainable) {
          CHECK(p->grad.isZero());
          continue;
        }
        for (Eigen::Index i = 0; i < p->value.size(); ++i) {
          auto eval = [&] {
            Model copy = model;
            auto cp = copy.parameters();
            zero_grads(cp);
            return batch_loss_grad(copy, kg.triples, negatives, config);
          };
          double& v = p->value.data()[i];
          const double orig = v;
          v = orig + testing::kFdStep;
          const double up = eval();
          v = orig - testing::kFdStep;
          const double down = eval();
          v = orig;
          numeric.push_back((up - down) / (2 * testing::kFdStep));
          analytic.push_back(p->grad.data()[i]);
        }
      }
      CHECK(testing::max_rel_error(analytic, numeric) < 1e-3);
    }
  }
}

TEST_CASE("zero learning rate leaves every parameter unchanged") {
  auto s = testing::synthetic_kg(0);
  TripleSet filter(s.kg.triples.begin(), s.kg.triples.end());
  auto model = Model::create(s.kg, testing::synthetic_spec(ScorerKind::kRotatE, 8, 1));
  const auto before = model.snapshot();
  TrainConfig c;
  c.learning_rate = 0;
  c.loss = LossKind::kBce;
  c.epochs = 3;
  c.batch_size = 32;
  auto result = train(data_for(s, filter), c, model);
  const auto after = result.model.snapshot();
  REQUIRE(before.size() == after.size());
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(before[i] == after[i]);
}

TEST_CASE("training is deterministic, keeps frozen tables and lowers the loss") {
  auto s = testing::synthetic_kg(1);
  TripleSet filter(s.kg.triples.begin(), s.kg.triples.end());
  auto model = Model::create(s.kg, testing::synthetic_spec(ScorerKind::kRotatE, 8, 2));
  const Matrix frozen = std::get<SequenceMeanEncoder>(model.encoders()[0].impl).frozen.value;
  TrainConfig c;
  c.learning_rate = 0.01;
  c.optimizer = OptimizerKind::kAdam;
  c.loss = LossKind::kCe;
  c.negatives = 4;
  c.batch_size = 32;
  c.epochs = 30;
  c.eval_interval = 0;
  c.seed = 5;
  auto a = train(data_for(s, filter), c, model);
  auto b = train(data_for(s, filter), c, model);
  CHECK(a.epoch_losses == b.epoch_losses);
  CHECK(std::get<SequenceMeanEncoder>(a.model.encoders()[0].impl).frozen.value == frozen);
  CHECK(std::get<SequenceAttentionEncoder>(a.model.encoders()[1].impl).frozen.value ==
        std::get<SequenceAttentionEncoder>(model.encoders()[1].impl).frozen.value);

  auto avg = [&](std::size_t from) {
    double sum = 0;
    for (std::size_t i = from; i < from + 10; ++i) sum += a.epoch_losses[i];
    return sum / 10;
  };
  CHECK(avg(20) < avg(10));
  CHECK(avg(10) < avg(0));
  CHECK(a.steps == 30 * 4);
}

TEST_CASE("validation keeps the best parameters and stops early") {
  auto s = testing::synthetic_kg(2);
  TripleSet filter(s.kg.triples.begin(), s.kg.triples.end());
  auto spec = testing::synthetic_spec(ScorerKind::kRotatE, 8, 3);
  TrainConfig c;
  c.learning_rate = 0.05;
  c.optimizer = OptimizerKind::kAdam;
  c.loss = LossKind::kCe;
  c.negatives = 4;
  c.batch_size = 64;
  c.epochs = 400;
  c.eval_interval = 1;
  c.patience = 3;
  auto r = train(data_for(s, filter), c, Model::create(s.kg, spec));
  REQUIRE(!r.history.empty());
  double best = 0;
  for (const auto& h : r.history) best = std::max(best, h.val_mrr);
  CHECK(r.best_val_mrr == best);
  CHECK(evaluate(r.model, s.valid, &filter).mrr == doctest::Approx(best));
  if (r.early_stopped) CHECK(r.history.size() < 400);
}

TEST_CASE("non-finite losses abort training") {
  auto s = testing::synthetic_kg(0, 50, 0);
  ModelSpec spec;
  spec.scorer = ScorerKind::kComplEx;
  spec.dim = 4;
  auto model = Model::create(s.kg, spec);
  model.lookup().entities.value(0, 0) = std::numeric_limits<double>::infinity();
  TrainConfig c;
  c.loss = LossKind::kBce;
  c.epochs = 1;
  c.batch_size = 1000;
  TrainingData d;
  d.kg = &s.kg;
  d.train = s.kg.triples;
  try {
    train(d, c, model);
    FAIL("expected a numeric error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNumeric);
  }
}

TEST_CASE("fine-tuning with zero steps reproduces stage-one scores off attribute entities") {
  auto s = testing::synthetic_kg(3);
  TripleSet filter(s.kg.triples.begin(), s.kg.triples.end());
  auto spec = testing::synthetic_spec(ScorerKind::kRotatE, 8, 4);
  TrainConfig c1;
  c1.loss = LossKind::kCe;
  c1.epochs = 5;
  c1.batch_size = 32;
  c1.eval_interval = 0;
  TrainConfig c2 = c1;
  c2.epochs = 0;
  auto r = pretrain_then_finetune(data_for(s, filter), c1, c2, spec);
  CHECK(r.stage2.steps == 0);
  CHECK_FALSE(r.stage1.model.spec().use_attributes);
  std::size_t checked = 0;
  for (const auto& t : s.kg.triples) {
    if (t.head < 30 || t.tail < 30) continue;
    CHECK(r.stage2.model.score(t) == r.stage1.model.score(t));
    ++checked;
  }
  CHECK(checked > 0);

  auto bad = spec;
  bad.dim = 6;
  CHECK_THROWS_AS(finetune(data_for(s, filter), c2, bad, r.stage1.model), Error);
}

TEST_CASE("hpo sampling stays inside the search space") {
  std::mt19937_64 rng(6);
  for (auto scorer : {ScorerKind::kTransE, ScorerKind::kComplEx, ScorerKind::kRotatE}) {
    HpoSpace space;
    space.scorer = scorer;
    for (int i = 0; i < 1000; ++i) {
      const auto c = sample_config(space, TrainConfig{}, rng);
      CHECK(c.learning_rate >= 1e-3);
      CHECK(c.learning_rate <= 1.0);
      CHECK(c.regularization >= 1e-6);
      CHECK(c.regularization <= 1e-3);
      CHECK(std::find(space.batch_sizes.begin(), space.batch_sizes.end(), c.batch_size) !=
            space.batch_sizes.end());
      if (scorer == ScorerKind::kTransE)
        CHECK(c.loss == LossKind::kMargin);
      else
        CHECK(c.loss != LossKind::kMargin);
    }
  }
}

TEST_CASE("hpo search returns the best trial") {
  HpoSpace space;
  int calls = 0;
  auto r = hpo_search(space, TrainConfig{}, 1, 3, [&](const TrainConfig&) {
    ++calls;
    return 0.25;
  });
  CHECK(calls == 1);
  REQUIRE(r.trials.size() == 1);
  CHECK(r.best.learning_rate == r.trials[0].config.learning_rate);

  auto many = hpo_search(space, TrainConfig{}, 20, 3,
                         [](const TrainConfig& c) { return -std::fabs(std::log(c.learning_rate)); });
  for (const auto& t : many.trials) CHECK(t.objective <= many.best_objective);
  CHECK_THROWS_AS(hpo_search(space, TrainConfig{}, 0, 3, [](const TrainConfig&) { return 0.0; }),
                  Error);
}

}  // TEST_SUITE
