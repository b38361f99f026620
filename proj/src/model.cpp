#include "mmkg/model.hpp"

#include <cmath>
#include <numbers>

#include "mmkg/error.hpp"

namespace mmkg {

std::span<const double> LookupTable::entity(EntityIndex e) const {
  if (!has_entity(e))
    fail(ErrorCode::kNotFound,
         "entity " + std::to_string(e) + " has no lookup embedding (unseen by the lookup table)");
  const auto row = entity_row[e];
  return {entities.value.data() + row * entities.value.cols(),
          static_cast<std::size_t>(entities.value.cols())};
}

std::span<const double> LookupTable::relation(RelationIndex r) const {
  if (r >= relations.value.rows())
    fail(ErrorCode::kNotFound, "relation " + std::to_string(r) + " has no lookup embedding");
  return {relations.value.data() + r * relations.value.cols(),
          static_cast<std::size_t>(relations.value.cols())};
}

EmbeddingVector encode_lookup(const LookupTable& table, ScorerKind scorer, EntityIndex e) {
  const auto row = table.entity(e);
  EmbeddingVector v;
  v.space = scorer == ScorerKind::kTransE ? EmbeddingSpace::kReal : EmbeddingSpace::kComplex;
  v.values.assign(row.begin(), row.end());
  return v;
}

Model Model::create(const KnowledgeGraph& kg, const ModelSpec& spec) {
  std::vector<std::optional<AttributeRecord>> attributes(kg.num_entities());
  std::vector<std::vector<std::string>> payloads(spec.modalities.size());
  for (EntityIndex e = 0; e < kg.num_entities(); ++e) {
    const auto& rec = kg.attributes[e];
    if (!rec) continue;
    const std::string& name = kg.modalities.name(rec->modality);
    std::size_t m = 0;
    while (m < spec.modalities.size() && spec.modalities[m].name != name) ++m;
    if (m == spec.modalities.size()) {
      if (!spec.use_attributes) continue;
      fail(ErrorCode::kInvalidArgument,
           "the graph has '" + name + "' attributes but the model declares no encoder for it");
    }
    attributes[e] = AttributeRecord{static_cast<ModalityId>(m + 1), rec->payload};
    payloads[m].push_back(rec->payload);
  }
  std::vector<TokenVocabulary> vocabularies;
  for (std::size_t m = 0; m < spec.modalities.size(); ++m)
    vocabularies.push_back(
        TokenVocabulary::build(payloads[m], tokenizer_for(spec.modalities[m].encoder)));

  Vocabulary relations;
  for (const auto& name : kg.relations.names()) relations.intern(name);
  return from_parts(spec, kg.entities, std::move(relations), kg.entity_types,
                    std::move(attributes), std::move(vocabularies));
}

Model Model::from_parts(ModelSpec spec, Vocabulary entities, Vocabulary relations,
                        std::vector<std::string> entity_types,
                        std::vector<std::optional<AttributeRecord>> attributes,
                        std::vector<TokenVocabulary> vocabularies) {
  if (spec.dim == 0) fail(ErrorCode::kInvalidArgument, "embedding dimension must be positive");
  if (vocabularies.size() != spec.modalities.size())
    fail(ErrorCode::kInvalidArgument, "one token vocabulary per modality is required");
  if (attributes.size() != entities.size() || entity_types.size() != entities.size())
    fail(ErrorCode::kInvalidArgument, "entity tables have inconsistent sizes");

  Model model;
  model.spec_ = std::move(spec);
  model.entities_ = std::move(entities);
  model.relations_ = std::move(relations);
  model.entity_types_ = std::move(entity_types);
  model.attributes_ = std::move(attributes);

  const auto& s = model.spec_;
  const std::size_t n = model.num_entities();
  model.modality_.assign(n, 0);
  model.tokens_.assign(n, {});
  std::int64_t lookup_rows = 0;
  model.lookup_.entity_row.assign(n, -1);
  for (EntityIndex e = 0; e < n; ++e) {
    const auto& rec = model.attributes_[e];
    if (s.use_attributes && rec) {
      if (rec->modality == 0 || rec->modality > s.modalities.size())
        fail(ErrorCode::kInvalidArgument, "attribute modality out of range");
      model.modality_[e] = rec->modality;
      model.tokens_[e] = vocabularies[rec->modality - 1].encode(rec->payload);
    } else {
      model.lookup_.entity_row[e] = lookup_rows++;
    }
  }

  Rng rng(s.seed);
  const auto ew = static_cast<Eigen::Index>(model.entity_width());
  const auto rw = static_cast<Eigen::Index>(model.relation_width());
  const double bound = 6.0 / std::sqrt(static_cast<double>(s.dim));
  std::uniform_real_distribution<double> coord(-bound, bound);
  Matrix ent(lookup_rows, ew);
  for (Eigen::Index i = 0; i < ent.size(); ++i) ent.data()[i] = coord(rng);
  Matrix rel(static_cast<Eigen::Index>(model.num_relations()), rw);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  for (Eigen::Index i = 0; i < rel.size(); ++i)
    rel.data()[i] = s.scorer == ScorerKind::kRotatE ? phase(rng) : coord(rng);
  model.lookup_.entities = Parameter("lookup.entities", std::move(ent), true, true);
  model.lookup_.relations = Parameter("lookup.relations", std::move(rel), true, true);

  if (s.use_attributes) {
    EncoderShape shape;
    shape.token_dim = static_cast<Eigen::Index>(s.resolved_token_dim());
    shape.out_dim = ew;
    shape.ffn_hidden = static_cast<Eigen::Index>(s.ffn_hidden);
    shape.text_layers = s.text_layers;
    shape.text_max_len = s.text_max_len;
    for (std::size_t m = 0; m < s.modalities.size(); ++m)
      model.encoders_.push_back(make_encoder(s.modalities[m].name, s.modalities[m].encoder,
                                             std::move(vocabularies[m]), shape, rng));
  } else {
    for (std::size_t m = 0; m < s.modalities.size(); ++m) {
      ModalityEncoder placeholder;
      placeholder.modality = s.modalities[m].name;
      placeholder.kind = s.modalities[m].encoder;
      placeholder.vocab = std::move(vocabularies[m]);
      model.encoders_.push_back(std::move(placeholder));
    }
  }
  return model;
}

EmbeddingVector Model::emb(EntityIndex e) const {
  if (e >= num_entities()) fail(ErrorCode::kNotFound, "unknown entity index " + std::to_string(e));
  const ModalityId m = modality_[e];
  if (m == 0) return encode_lookup(lookup_, spec_.scorer, e);
  EmbeddingVector v;
  v.space = spec_.scorer == ScorerKind::kTransE ? EmbeddingSpace::kReal : EmbeddingSpace::kComplex;
  const Vector out = encoders_[m - 1].forward(tokens_[e], nullptr);
  v.values.assign(out.data(), out.data() + out.size());
  return v;
}

double Model::score(const Triple& t) const {
  const auto h = emb(t.head);
  const auto tl = emb(t.tail);
  return mmkg::score(spec_.scorer, h.values, relation(t.relation), tl.values);
}

Matrix Model::embed_all() const {
  Matrix out(static_cast<Eigen::Index>(num_entities()), static_cast<Eigen::Index>(entity_width()));
  for (EntityIndex e = 0; e < num_entities(); ++e) {
    if (modality_[e] == 0) {
      const auto row = lookup_.entity(e);
      out.row(e) = Eigen::Map<const RowVector>(row.data(), static_cast<Eigen::Index>(row.size()));
    } else {
      out.row(e) = encoders_[modality_[e] - 1].forward(tokens_[e], nullptr).transpose();
    }
  }
  return out;
}

Vector Model::forward_entity(EntityIndex e, EncoderTrace* trace) const {
  const ModalityId m = modality_.at(e);
  if (m == 0) {
    const auto row = lookup_.entity(e);
    return Eigen::Map<const Vector>(row.data(), static_cast<Eigen::Index>(row.size()));
  }
  return encoders_[m - 1].forward(tokens_[e], trace);
}

void Model::backward_entity(EntityIndex e, const EncoderTrace& trace,
                            std::span<const double> d_emb) {
  const Eigen::Map<const Vector> d(d_emb.data(), static_cast<Eigen::Index>(d_emb.size()));
  const ModalityId m = modality_.at(e);
  if (m == 0) {
    const auto row = lookup_.entity_row[e];
    lookup_.entities.grad.row(row) += d.transpose();
    lookup_.entities.touch_row(row);
    return;
  }
  encoders_[m - 1].backward(trace, d);
}

void Model::accumulate_relation_grad(RelationIndex r, std::span<const double> d_rel) {
  lookup_.relations.grad.row(r) +=
      Eigen::Map<const RowVector>(d_rel.data(), static_cast<Eigen::Index>(d_rel.size()));
  lookup_.relations.touch_row(r);
}

ParameterList Model::parameters() {
  ParameterList out{&lookup_.entities, &lookup_.relations};
  if (spec_.use_attributes)
    for (auto& enc : encoders_)
      for (auto* p : enc.parameters()) out.push_back(p);
  return out;
}

std::vector<const Parameter*> Model::parameters() const {
  auto mut = const_cast<Model*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

Parameter* Model::find_parameter(const std::string& name) {
  for (auto* p : parameters())
    if (p->name == name) return p;
  return nullptr;
}

std::vector<Matrix> Model::snapshot() const {
  std::vector<Matrix> out;
  for (const auto* p : parameters()) out.push_back(p->value);
  return out;
}

void Model::restore(const std::vector<Matrix>& values) {
  auto params = parameters();
  if (values.size() != params.size())
    fail(ErrorCode::kInvalidArgument, "snapshot does not match the model's parameters");
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = values[i];
}

std::size_t Model::copy_lookup_rows_from(const Model& other) {
  if (other.entity_width() != entity_width() || other.relation_width() != relation_width() ||
      other.scorer() != scorer())
    fail(ErrorCode::kInvalidArgument, "cannot transfer embeddings between models of different "
                                      "scorer or dimension");
  std::size_t copied = 0;
  for (EntityIndex e = 0; e < num_entities(); ++e) {
    if (!lookup_.has_entity(e)) continue;
    auto src = other.entities().find(entities_.name(e));
    if (!src || !other.lookup().has_entity(*src)) continue;
    lookup_.entities.value.row(lookup_.entity_row[e]) =
        other.lookup().entities.value.row(other.lookup().entity_row[*src]);
    ++copied;
  }
  for (RelationIndex r = 0; r < num_relations(); ++r) {
    auto src = other.relations().find(relations_.name(r));
    if (src) lookup_.relations.value.row(r) = other.lookup().relations.value.row(*src);
  }
  return copied;
}

}  // namespace mmkg
