#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "mmkg/params.hpp"

namespace mmkg {

using Rng = std::mt19937_64;

enum class EncoderKind {
  kSequenceMean,       // frozen token table, mean over the sequence, projection
  kSequenceAttention,  // frozen token table, one self-attention layer, BOS output, projection
  kText,               // trainable token table and attention blocks, BOS output, projection
};

std::string to_string(EncoderKind kind);
EncoderKind parse_encoder(std::string_view name);  // "mean", "attention", "text"

enum class Tokenizer { kCharacters, kWords };

Tokenizer tokenizer_for(EncoderKind kind);
// Characters: one token per byte. Words: whitespace-separated, lowercased.
std::vector<std::string> tokenize(std::string_view payload, Tokenizer tokenizer);

class TokenVocabulary {
 public:
  static constexpr int kBos = 0;
  static constexpr int kUnk = 1;

  TokenVocabulary() = default;
  TokenVocabulary(std::vector<std::string> tokens, Tokenizer tokenizer);

  // Reserved tokens first, then every distinct payload token in sorted order.
  static TokenVocabulary build(std::span<const std::string> payloads, Tokenizer tokenizer);

  // Throws kInvalidArgument if the payload has no tokens.
  std::vector<int> encode(std::string_view payload) const;

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  Tokenizer tokenizer() const { return tokenizer_; }

 private:
  std::vector<std::string> tokens_{"<bos>", "<unk>"};
  std::unordered_map<std::string, int> index_;
  Tokenizer tokenizer_ = Tokenizer::kCharacters;
};

// Fills with U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
Matrix uniform_fan_in(Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in, Rng& rng);

// y = W x + b, W is out x in.
struct ProjectionLayer {
  Parameter weight;
  Parameter bias;

  ProjectionLayer() = default;
  ProjectionLayer(const std::string& prefix, Eigen::Index out, Eigen::Index in, Rng& rng);

  Vector forward(const Vector& x) const;
  // Accumulates parameter gradients; returns d_x.
  Vector backward(const Vector& x, const Vector& d_out);
};

struct AttentionTrace {
  Matrix x, q, k, v, probs;
};

// Single-head scaled dot-product self-attention over the rows of x (L x d).
struct SelfAttentionLayer {
  Parameter wq, wk, wv;

  SelfAttentionLayer() = default;
  SelfAttentionLayer(const std::string& prefix, Eigen::Index width, Rng& rng);

  Matrix forward(const Matrix& x, AttentionTrace* trace) const;
  Matrix backward(const AttentionTrace& trace, const Matrix& d_out);
};

struct FeedForwardTrace {
  Matrix x, pre;
};

// relu(x W1 + b1) W2 + b2, row-wise.
struct FeedForward {
  Parameter w1, b1, w2, b2;

  FeedForward() = default;
  FeedForward(const std::string& prefix, Eigen::Index width, Eigen::Index hidden, Rng& rng);

  Matrix forward(const Matrix& x, FeedForwardTrace* trace) const;
  Matrix backward(const FeedForwardTrace& trace, const Matrix& d_out);
};

struct TextBlockTrace {
  AttentionTrace attention;
  FeedForwardTrace ffn;
};

// x + attn(x), then h + ffn(h).
struct TextBlock {
  SelfAttentionLayer attention;
  FeedForward ffn;
};

struct EncoderTrace {
  std::vector<int> tokens;  // as fed to the encoder (BOS included where used)
  Vector pooled;            // input to the projection
  AttentionTrace attention;
  std::vector<TextBlockTrace> blocks;
};

class SequenceMeanEncoder {
 public:
  Parameter frozen;  // |vocab| x n_e, never trained
  ProjectionLayer proj;

  SequenceMeanEncoder() = default;
  SequenceMeanEncoder(const std::string& prefix, std::size_t vocab, Eigen::Index token_dim,
                      Eigen::Index out_dim, Rng& rng);

  Vector forward(std::span<const int> tokens, EncoderTrace* trace) const;
  void backward(const EncoderTrace& trace, const Vector& d_out);
  ParameterList parameters();
};

class SequenceAttentionEncoder {
 public:
  Parameter frozen;
  SelfAttentionLayer attention;
  ProjectionLayer proj;

  SequenceAttentionEncoder() = default;
  SequenceAttentionEncoder(const std::string& prefix, std::size_t vocab, Eigen::Index token_dim,
                           Eigen::Index out_dim, Rng& rng);

  // BOS is prepended internally.
  Vector forward(std::span<const int> tokens, EncoderTrace* trace) const;
  void backward(const EncoderTrace& trace, const Vector& d_out);
  ParameterList parameters();
};

class TextEncoder {
 public:
  static constexpr std::size_t kDefaultMaxLen = 64;

  Parameter token_embedding;  // trainable, row-sparse
  std::vector<TextBlock> blocks;
  ProjectionLayer proj;
  std::size_t max_len = kDefaultMaxLen;

  TextEncoder() = default;
  TextEncoder(const std::string& prefix, std::size_t vocab, Eigen::Index token_dim,
              Eigen::Index hidden, std::size_t layers, std::size_t max_len, Eigen::Index out_dim,
              Rng& rng);

  // Truncates to max_len tokens, then prepends BOS.
  Vector forward(std::span<const int> tokens, EncoderTrace* trace) const;
  void backward(const EncoderTrace& trace, const Vector& d_out);
  ParameterList parameters();
};

using EncoderImpl = std::variant<SequenceMeanEncoder, SequenceAttentionEncoder, TextEncoder>;

// One attribute encoder per modality, with the vocabulary it tokenizes with.
struct ModalityEncoder {
  std::string modality;
  EncoderKind kind = EncoderKind::kSequenceMean;
  TokenVocabulary vocab;
  EncoderImpl impl;

  Vector forward(std::span<const int> tokens, EncoderTrace* trace) const;
  void backward(const EncoderTrace& trace, const Vector& d_out);
  ParameterList parameters();
};

struct EncoderShape {
  Eigen::Index token_dim = 0;
  Eigen::Index out_dim = 0;
  Eigen::Index ffn_hidden = 0;
  std::size_t text_layers = 1;
  std::size_t text_max_len = TextEncoder::kDefaultMaxLen;
};

ModalityEncoder make_encoder(const std::string& modality, EncoderKind kind, TokenVocabulary vocab,
                             const EncoderShape& shape, Rng& rng);

}  // namespace mmkg
