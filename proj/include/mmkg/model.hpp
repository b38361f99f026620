#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mmkg/encoders.hpp"
#include "mmkg/graph.hpp"
#include "mmkg/params.hpp"
#include "mmkg/scoring.hpp"

namespace mmkg {

struct ModalitySpec {
  std::string name;
  EncoderKind encoder = EncoderKind::kSequenceMean;
};

struct ModelSpec {
  ScorerKind scorer = ScorerKind::kRotatE;
  std::size_t dim = 32;
  std::size_t token_dim = 0;  // 0 means 2 * dim
  std::size_t text_layers = 1;
  std::size_t text_max_len = TextEncoder::kDefaultMaxLen;
  std::size_t ffn_hidden = 0;  // 0 means 2 * token_dim
  std::vector<ModalitySpec> modalities;
  // false: every entity gets a lookup row and attributes are ignored
  bool use_attributes = true;
  std::uint64_t seed = 0;

  std::size_t resolved_token_dim() const { return token_dim ? token_dim : 2 * dim; }
};

// W_e holds a row for every entity encoded by lookup; W_r a row per relation.
struct LookupTable {
  Parameter entities;
  Parameter relations;
  std::vector<std::int64_t> entity_row;  // -1 for entities encoded from attributes

  std::span<const double> entity(EntityIndex e) const;  // throws for non-lookup entities
  std::span<const double> relation(RelationIndex r) const;
  bool has_entity(EntityIndex e) const {
    return e < entity_row.size() && entity_row[e] >= 0;
  }
};

// Lookup semantics: returns the stored row, or throws kNotFound for an entity
// the table was not built with (lookup embeddings are transductive).
EmbeddingVector encode_lookup(const LookupTable& table, ScorerKind scorer, EntityIndex e);

class Model {
 public:
  // Builds lookup rows for attribute-less entities (all entities when
  // spec.use_attributes is false) and one encoder per declared modality.
  static Model create(const KnowledgeGraph& kg, const ModelSpec& spec);

  const ModelSpec& spec() const { return spec_; }
  ScorerKind scorer() const { return spec_.scorer; }
  std::size_t entity_width() const { return mmkg::entity_width(spec_.scorer, spec_.dim); }
  std::size_t relation_width() const { return mmkg::relation_width(spec_.scorer, spec_.dim); }

  const Vocabulary& entities() const { return entities_; }
  const Vocabulary& relations() const { return relations_; }
  const std::vector<std::string>& entity_types() const { return entity_types_; }
  std::size_t num_entities() const { return entities_.size(); }
  std::size_t num_relations() const { return relations_.size(); }

  // 0 for lookup entities, otherwise 1 + index into spec().modalities.
  ModalityId modality_of(EntityIndex e) const { return modality_.at(e); }
  const std::optional<AttributeRecord>& attribute(EntityIndex e) const { return attributes_.at(e); }

  const LookupTable& lookup() const { return lookup_; }
  LookupTable& lookup() { return lookup_; }
  const std::vector<ModalityEncoder>& encoders() const { return encoders_; }
  std::vector<ModalityEncoder>& encoders() { return encoders_; }

  // Dispatches on the entity's modality.
  EmbeddingVector emb(EntityIndex e) const;
  std::span<const double> relation(RelationIndex r) const { return lookup_.relation(r); }
  double score(const Triple& t) const;

  // Embeddings of every entity, one row each.
  Matrix embed_all() const;

  // Forward pass keeping what backward_entity needs.
  Vector forward_entity(EntityIndex e, EncoderTrace* trace) const;
  // Accumulates d(loss)/d(emb(e)) into the parameters that produced it.
  void backward_entity(EntityIndex e, const EncoderTrace& trace, std::span<const double> d_emb);
  void accumulate_relation_grad(RelationIndex r, std::span<const double> d_rel);

  // Every parameter group in a fixed order: lookups, then encoders.
  ParameterList parameters();
  std::vector<const Parameter*> parameters() const;
  Parameter* find_parameter(const std::string& name);

  std::vector<Matrix> snapshot() const;
  void restore(const std::vector<Matrix>& values);

  // Copies lookup rows (by entity/relation name) from `other` wherever both
  // models hold a lookup row. Returns the number of entity rows copied.
  std::size_t copy_lookup_rows_from(const Model& other);

  // Used when restoring a checkpoint.
  static Model from_parts(ModelSpec spec, Vocabulary entities, Vocabulary relations,
                          std::vector<std::string> entity_types,
                          std::vector<std::optional<AttributeRecord>> attributes,
                          std::vector<TokenVocabulary> vocabularies);

  const std::vector<std::vector<int>>& entity_tokens() const { return tokens_; }

 private:
  ModelSpec spec_;
  Vocabulary entities_;
  Vocabulary relations_;
  std::vector<std::string> entity_types_;
  std::vector<std::optional<AttributeRecord>> attributes_;  // modality ids refer to spec_.modalities
  std::vector<ModalityId> modality_;
  std::vector<std::vector<int>> tokens_;  // per entity, empty for lookup entities
  LookupTable lookup_;
  std::vector<ModalityEncoder> encoders_;
};

}  // namespace mmkg
