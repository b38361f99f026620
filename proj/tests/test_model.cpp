#include <doctest.h>

#include <cmath>
#include <numbers>

#include "mmkg/error.hpp"
#include "mmkg/model.hpp"
#include "support.hpp"

using namespace mmkg;

TEST_SUITE("model") {

TEST_CASE("lookup-only model builds a row per entity and relation") {
  auto kg = testing::make_graph({{"a", "r", "b"}, {"b", "s", "c"}});
  ModelSpec spec;
  spec.scorer = ScorerKind::kTransE;
  spec.dim = 4;
  auto model = Model::create(kg, spec);
  CHECK(model.lookup().entities.value.rows() == 3);
  CHECK(model.lookup().entities.value.cols() == 4);
  CHECK(model.lookup().relations.value.rows() == 2);
  const double bound = 6.0 / std::sqrt(4.0);
  CHECK(model.lookup().entities.value.cwiseAbs().maxCoeff() <= bound);
}

TEST_CASE("lookup returns the stored row and rows are independent") {
  auto kg = testing::make_graph({{"a", "r", "b"}});
  ModelSpec spec;
  spec.scorer = ScorerKind::kComplEx;
  spec.dim = 3;
  auto model = Model::create(kg, spec);
  const auto row = model.lookup().entities.value.row(0);
  const auto v = model.emb(0);
  CHECK(v.space == EmbeddingSpace::kComplex);
  CHECK(v.dim() == 3);
  REQUIRE(v.values.size() == 6);
  for (int i = 0; i < 6; ++i) CHECK(v.values[static_cast<std::size_t>(i)] == row(i));
  const auto before = model.emb(1).values;
  model.lookup().entities.value.row(0).setZero();
  CHECK(model.emb(1).values == before);
}

TEST_CASE("unseen entities cannot be looked up") {
  auto kg = testing::make_graph({{"a", "r", "b"}});
  ModelSpec spec;
  spec.dim = 2;
  auto model = Model::create(kg, spec);
  try {
    model.emb(7);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNotFound);
  }
  CHECK_THROWS_AS(encode_lookup(model.lookup(), spec.scorer, 9), Error);
}

TEST_CASE("rotate relations are phases in [0, 2pi)") {
  auto data = testing::synthetic_kg(0);
  auto model = Model::create(data.kg, testing::synthetic_spec(ScorerKind::kRotatE, 8, 1));
  const auto& rel = model.lookup().relations.value;
  CHECK(rel.cols() == 8);
  CHECK(rel.minCoeff() >= 0.0);
  CHECK(rel.maxCoeff() < 2 * std::numbers::pi);
}

TEST_CASE("attribute entities dispatch to their modality encoder") {
  auto data = testing::synthetic_kg(0);
  auto model = Model::create(data.kg, testing::synthetic_spec(ScorerKind::kRotatE, 8, 1));
  CHECK(model.lookup().entities.value.rows() == 20);
  CHECK(model.modality_of(0) == 1);
  CHECK(model.modality_of(1) == 2);
  CHECK(model.modality_of(2) == 3);
  CHECK(model.modality_of(40) == 0);

  const auto& protein = std::get<SequenceMeanEncoder>(model.encoders()[0].impl);
  EncoderTrace trace;
  const Vector direct = protein.forward(model.entity_tokens()[0], &trace);
  const auto via_emb = model.emb(0);
  REQUIRE(via_emb.values.size() == 16);
  for (int i = 0; i < 16; ++i) CHECK(via_emb.values[static_cast<std::size_t>(i)] == direct(i));
  CHECK(model.emb(3).values == model.emb(3).values);

  const Matrix all = model.embed_all();
  for (EntityIndex e = 0; e < model.num_entities(); ++e) {
    const auto v = model.emb(e).values;
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(all(e, static_cast<Eigen::Index>(i)) == v[i]);
  }
}

TEST_CASE("a graph modality without an encoder is rejected") {
  auto data = testing::synthetic_kg(0);
  ModelSpec spec = testing::synthetic_spec(ScorerKind::kRotatE, 4, 0);
  spec.modalities.pop_back();
  CHECK_THROWS_AS(Model::create(data.kg, spec), Error);
  spec.use_attributes = false;
  CHECK_NOTHROW(Model::create(data.kg, spec));
}

TEST_CASE("copying lookup rows transfers relations and attribute-less entities") {
  auto data = testing::synthetic_kg(0);
  auto spec = testing::synthetic_spec(ScorerKind::kRotatE, 4, 5);
  auto lookup_spec = spec;
  lookup_spec.use_attributes = false;
  lookup_spec.seed = 6;
  auto pre = Model::create(data.kg, lookup_spec);
  auto model = Model::create(data.kg, spec);
  CHECK(model.copy_lookup_rows_from(pre) == 20);
  CHECK(model.lookup().relations.value == pre.lookup().relations.value);
  for (EntityIndex e = 30; e < 50; ++e) CHECK(model.emb(e).values == pre.emb(e).values);

  auto other = testing::synthetic_spec(ScorerKind::kRotatE, 6, 0);
  other.use_attributes = false;
  CHECK_THROWS_AS(model.copy_lookup_rows_from(Model::create(data.kg, other)), Error);
}

TEST_CASE("snapshot and restore") {
  auto data = testing::synthetic_kg(0);
  auto model = Model::create(data.kg, testing::synthetic_spec(ScorerKind::kComplEx, 4, 2));
  const auto snap = model.snapshot();
  const double s = model.score({0, 0, 5});
  for (auto* p : model.parameters()) p->value.setConstant(0.5);
  CHECK(model.score({0, 0, 5}) != s);
  model.restore(snap);
  CHECK(model.score({0, 0, 5}) == s);
}

}  // TEST_SUITE
