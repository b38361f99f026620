#include "mmkg/encoders.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

#include "mmkg/error.hpp"

namespace mmkg {

std::string to_string(EncoderKind kind) {
  switch (kind) {
    case EncoderKind::kSequenceMean: return "mean";
    case EncoderKind::kSequenceAttention: return "attention";
    case EncoderKind::kText: return "text";
  }
  return "?";
}

EncoderKind parse_encoder(std::string_view name) {
  if (name == "mean") return EncoderKind::kSequenceMean;
  if (name == "attention") return EncoderKind::kSequenceAttention;
  if (name == "text") return EncoderKind::kText;
  fail(ErrorCode::kInvalidArgument,
       "unknown encoder '" + std::string(name) + "' (expected mean, attention or text)");
}

Tokenizer tokenizer_for(EncoderKind kind) {
  return kind == EncoderKind::kText ? Tokenizer::kWords : Tokenizer::kCharacters;
}

std::vector<std::string> tokenize(std::string_view payload, Tokenizer tokenizer) {
  std::vector<std::string> out;
  if (tokenizer == Tokenizer::kCharacters) {
    for (char c : payload)
      if (!std::isspace(static_cast<unsigned char>(c))) out.emplace_back(1, c);
    return out;
  }
  std::string word;
  for (char c : payload) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!word.empty()) out.push_back(std::move(word));
      word.clear();
    } else {
      word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  if (!word.empty()) out.push_back(std::move(word));
  return out;
}

TokenVocabulary::TokenVocabulary(std::vector<std::string> tokens, Tokenizer tokenizer)
    : tokens_(std::move(tokens)), tokenizer_(tokenizer) {
  if (tokens_.size() < 2 || tokens_[kBos] != "<bos>" || tokens_[kUnk] != "<unk>")
    fail(ErrorCode::kInvalidArgument, "token vocabulary must start with <bos>, <unk>");
  for (std::size_t i = 2; i < tokens_.size(); ++i)
    if (!index_.emplace(tokens_[i], static_cast<int>(i)).second)
      fail(ErrorCode::kInvalidArgument, "duplicate token '" + tokens_[i] + "'");
}

TokenVocabulary TokenVocabulary::build(std::span<const std::string> payloads, Tokenizer tokenizer) {
  std::set<std::string> distinct;
  for (const auto& p : payloads)
    for (auto& tok : tokenize(p, tokenizer)) distinct.insert(std::move(tok));
  distinct.erase("<bos>");
  distinct.erase("<unk>");
  std::vector<std::string> tokens{"<bos>", "<unk>"};
  tokens.insert(tokens.end(), distinct.begin(), distinct.end());
  return TokenVocabulary(std::move(tokens), tokenizer);
}

std::vector<int> TokenVocabulary::encode(std::string_view payload) const {
  std::vector<int> ids;
  for (const auto& tok : tokenize(payload, tokenizer_)) {
    auto it = index_.find(tok);
    ids.push_back(it == index_.end() ? kUnk : it->second);
  }
  if (ids.empty()) fail(ErrorCode::kInvalidArgument, "payload has no tokens");
  return ids;
}

Matrix uniform_fan_in(Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

namespace {

Matrix standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

Matrix gather_rows(const Matrix& table, std::span<const int> ids) {
  Matrix x(static_cast<Eigen::Index>(ids.size()), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= table.rows())
      fail(ErrorCode::kInvalidArgument, "token id out of range");
    x.row(static_cast<Eigen::Index>(i)) = table.row(ids[i]);
  }
  return x;
}

std::vector<int> with_bos(std::span<const int> tokens, std::size_t max_len) {
  if (tokens.empty()) fail(ErrorCode::kInvalidArgument, "empty payload");
  std::vector<int> out{TokenVocabulary::kBos};
  const auto n = std::min(tokens.size(), max_len);
  out.insert(out.end(), tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(n));
  return out;
}

}  // namespace

ProjectionLayer::ProjectionLayer(const std::string& prefix, Eigen::Index out, Eigen::Index in,
                                 Rng& rng)
    : weight(prefix + ".weight", uniform_fan_in(out, in, in, rng)),
      bias(prefix + ".bias", Matrix::Zero(1, out)) {}

Vector ProjectionLayer::forward(const Vector& x) const {
  return weight.value * x + bias.value.row(0).transpose();
}

Vector ProjectionLayer::backward(const Vector& x, const Vector& d_out) {
  weight.grad.noalias() += d_out * x.transpose();
  bias.grad.row(0) += d_out.transpose();
  weight.touch();
  bias.touch();
  return weight.value.transpose() * d_out;
}

SelfAttentionLayer::SelfAttentionLayer(const std::string& prefix, Eigen::Index width, Rng& rng)
    : wq(prefix + ".wq", uniform_fan_in(width, width, width, rng)),
      wk(prefix + ".wk", uniform_fan_in(width, width, width, rng)),
      wv(prefix + ".wv", uniform_fan_in(width, width, width, rng)) {}

Matrix SelfAttentionLayer::forward(const Matrix& x, AttentionTrace* trace) const {
  Matrix q = x * wq.value;
  Matrix k = x * wk.value;
  Matrix v = x * wv.value;
  const double scale = 1.0 / std::sqrt(static_cast<double>(x.cols()));
  Matrix probs = (q * k.transpose()) * scale;
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    auto row = probs.row(i);
    row.array() -= row.maxCoeff();
    row = row.array().exp().matrix();
    row /= row.sum();
  }
  Matrix out = probs * v;
  if (trace) {
    trace->x = x;
    trace->q = std::move(q);
    trace->k = std::move(k);
    trace->v = std::move(v);
    trace->probs = std::move(probs);
  }
  return out;
}

Matrix SelfAttentionLayer::backward(const AttentionTrace& t, const Matrix& d_out) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(t.x.cols()));
  const Matrix d_v = t.probs.transpose() * d_out;
  const Matrix d_probs = d_out * t.v.transpose();
  Matrix d_scores = t.probs.cwiseProduct(d_probs);
  const Vector row_dot = d_scores.rowwise().sum();
  d_scores -= t.probs.cwiseProduct(row_dot.replicate(1, t.probs.cols()));
  d_scores *= scale;
  const Matrix d_q = d_scores * t.k;
  const Matrix d_k = d_scores.transpose() * t.q;

  wq.grad.noalias() += t.x.transpose() * d_q;
  wk.grad.noalias() += t.x.transpose() * d_k;
  wv.grad.noalias() += t.x.transpose() * d_v;
  wq.touch();
  wk.touch();
  wv.touch();
  return d_q * wq.value.transpose() + d_k * wk.value.transpose() + d_v * wv.value.transpose();
}

FeedForward::FeedForward(const std::string& prefix, Eigen::Index width, Eigen::Index hidden,
                         Rng& rng)
    : w1(prefix + ".w1", uniform_fan_in(width, hidden, width, rng)),
      b1(prefix + ".b1", Matrix::Zero(1, hidden)),
      w2(prefix + ".w2", uniform_fan_in(hidden, width, hidden, rng)),
      b2(prefix + ".b2", Matrix::Zero(1, width)) {}

Matrix FeedForward::forward(const Matrix& x, FeedForwardTrace* trace) const {
  Matrix pre = (x * w1.value).rowwise() + b1.value.row(0);
  Matrix out = (pre.cwiseMax(0.0) * w2.value).rowwise() + b2.value.row(0);
  if (trace) {
    trace->x = x;
    trace->pre = std::move(pre);
  }
  return out;
}

Matrix FeedForward::backward(const FeedForwardTrace& t, const Matrix& d_out) {
  const Matrix act = t.pre.cwiseMax(0.0);
  w2.grad.noalias() += act.transpose() * d_out;
  b2.grad.row(0) += d_out.colwise().sum();
  Matrix d_pre = d_out * w2.value.transpose();
  d_pre = d_pre.cwiseProduct((t.pre.array() > 0.0).cast<double>().matrix());
  w1.grad.noalias() += t.x.transpose() * d_pre;
  b1.grad.row(0) += d_pre.colwise().sum();
  for (auto* p : {&w1, &b1, &w2, &b2}) p->touch();
  return d_pre * w1.value.transpose();
}

SequenceMeanEncoder::SequenceMeanEncoder(const std::string& prefix, std::size_t vocab,
                                         Eigen::Index token_dim, Eigen::Index out_dim, Rng& rng)
    : frozen(prefix + ".frozen", standard_normal(static_cast<Eigen::Index>(vocab), token_dim, rng),
             /*trainable=*/false),
      proj(prefix + ".proj", out_dim, token_dim, rng) {}

Vector SequenceMeanEncoder::forward(std::span<const int> tokens, EncoderTrace* trace) const {
  if (tokens.empty()) fail(ErrorCode::kInvalidArgument, "empty payload");
  Vector pooled = gather_rows(frozen.value, tokens).colwise().mean().transpose();
  Vector out = proj.forward(pooled);
  if (trace) {
    trace->tokens.assign(tokens.begin(), tokens.end());
    trace->pooled = std::move(pooled);
  }
  return out;
}

void SequenceMeanEncoder::backward(const EncoderTrace& trace, const Vector& d_out) {
  proj.backward(trace.pooled, d_out);
}

ParameterList SequenceMeanEncoder::parameters() { return {&frozen, &proj.weight, &proj.bias}; }

SequenceAttentionEncoder::SequenceAttentionEncoder(const std::string& prefix, std::size_t vocab,
                                                   Eigen::Index token_dim, Eigen::Index out_dim,
                                                   Rng& rng)
    : frozen(prefix + ".frozen", standard_normal(static_cast<Eigen::Index>(vocab), token_dim, rng),
             /*trainable=*/false),
      attention(prefix + ".attn", token_dim, rng),
      proj(prefix + ".proj", out_dim, token_dim, rng) {}

Vector SequenceAttentionEncoder::forward(std::span<const int> tokens, EncoderTrace* trace) const {
  const auto ids = with_bos(tokens, tokens.size());
  AttentionTrace local;
  const Matrix attended = attention.forward(gather_rows(frozen.value, ids), trace ? &local : nullptr);
  Vector pooled = attended.row(0).transpose();
  Vector out = proj.forward(pooled);
  if (trace) {
    trace->tokens = ids;
    trace->pooled = std::move(pooled);
    trace->attention = std::move(local);
  }
  return out;
}

void SequenceAttentionEncoder::backward(const EncoderTrace& trace, const Vector& d_out) {
  const Vector d_pooled = proj.backward(trace.pooled, d_out);
  Matrix d_attended = Matrix::Zero(trace.attention.x.rows(), trace.attention.x.cols());
  d_attended.row(0) = d_pooled.transpose();
  attention.backward(trace.attention, d_attended);  // inputs are frozen
}

ParameterList SequenceAttentionEncoder::parameters() {
  return {&frozen, &attention.wq, &attention.wk, &attention.wv, &proj.weight, &proj.bias};
}

TextEncoder::TextEncoder(const std::string& prefix, std::size_t vocab, Eigen::Index token_dim,
                         Eigen::Index hidden, std::size_t layers, std::size_t max_length,
                         Eigen::Index out_dim, Rng& rng)
    : token_embedding(prefix + ".tokens",
                      uniform_fan_in(static_cast<Eigen::Index>(vocab), token_dim, 1, rng),
                      /*trainable=*/true, /*row_sparse=*/true),
      max_len(max_length) {
  for (std::size_t l = 0; l < layers; ++l) {
    const std::string p = prefix + ".block" + std::to_string(l);
    TextBlock block;
    block.attention = SelfAttentionLayer(p + ".attn", token_dim, rng);
    block.ffn = FeedForward(p + ".ffn", token_dim, hidden, rng);
    blocks.push_back(std::move(block));
  }
  proj = ProjectionLayer(prefix + ".proj", out_dim, token_dim, rng);
}

Vector TextEncoder::forward(std::span<const int> tokens, EncoderTrace* trace) const {
  const auto ids = with_bos(tokens, max_len);
  Matrix x = gather_rows(token_embedding.value, ids);
  std::vector<TextBlockTrace> traces(trace ? blocks.size() : 0);
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    const Matrix h =
        x + blocks[l].attention.forward(x, trace ? &traces[l].attention : nullptr);
    x = h + blocks[l].ffn.forward(h, trace ? &traces[l].ffn : nullptr);
  }
  Vector pooled = x.row(0).transpose();
  Vector out = proj.forward(pooled);
  if (trace) {
    trace->tokens = ids;
    trace->pooled = std::move(pooled);
    trace->blocks = std::move(traces);
  }
  return out;
}

void TextEncoder::backward(const EncoderTrace& trace, const Vector& d_out) {
  const Vector d_pooled = proj.backward(trace.pooled, d_out);
  const auto len = static_cast<Eigen::Index>(trace.tokens.size());
  Matrix d_x = Matrix::Zero(len, token_embedding.value.cols());
  d_x.row(0) = d_pooled.transpose();
  for (std::size_t l = blocks.size(); l-- > 0;) {
    const Matrix d_h = d_x + blocks[l].ffn.backward(trace.blocks[l].ffn, d_x);
    d_x = d_h + blocks[l].attention.backward(trace.blocks[l].attention, d_h);
  }
  for (Eigen::Index i = 0; i < len; ++i) {
    const int id = trace.tokens[static_cast<std::size_t>(i)];
    token_embedding.grad.row(id) += d_x.row(i);
    token_embedding.touch_row(id);
  }
}

ParameterList TextEncoder::parameters() {
  ParameterList out{&token_embedding};
  for (auto& b : blocks) {
    for (auto* p : {&b.attention.wq, &b.attention.wk, &b.attention.wv, &b.ffn.w1, &b.ffn.b1,
                    &b.ffn.w2, &b.ffn.b2})
      out.push_back(p);
  }
  out.push_back(&proj.weight);
  out.push_back(&proj.bias);
  return out;
}

Vector ModalityEncoder::forward(std::span<const int> tokens, EncoderTrace* trace) const {
  return std::visit([&](const auto& enc) { return enc.forward(tokens, trace); }, impl);
}

void ModalityEncoder::backward(const EncoderTrace& trace, const Vector& d_out) {
  std::visit([&](auto& enc) { enc.backward(trace, d_out); }, impl);
}

ParameterList ModalityEncoder::parameters() {
  return std::visit([](auto& enc) { return enc.parameters(); }, impl);
}

ModalityEncoder make_encoder(const std::string& modality, EncoderKind kind, TokenVocabulary vocab,
                             const EncoderShape& shape, Rng& rng) {
  if (shape.token_dim <= 0 || shape.out_dim <= 0)
    fail(ErrorCode::kInvalidArgument, "encoder dimensions must be positive");
  ModalityEncoder enc;
  enc.modality = modality;
  enc.kind = kind;
  const std::size_t v = vocab.size();
  const std::string prefix = "encoder." + modality;
  switch (kind) {
    case EncoderKind::kSequenceMean:
      enc.impl = SequenceMeanEncoder(prefix, v, shape.token_dim, shape.out_dim, rng);
      break;
    case EncoderKind::kSequenceAttention:
      enc.impl = SequenceAttentionEncoder(prefix, v, shape.token_dim, shape.out_dim, rng);
      break;
    case EncoderKind::kText: {
      const auto hidden = shape.ffn_hidden > 0 ? shape.ffn_hidden : 2 * shape.token_dim;
      enc.impl = TextEncoder(prefix, v, shape.token_dim, hidden, shape.text_layers,
                             shape.text_max_len, shape.out_dim, rng);
      break;
    }
  }
  enc.vocab = std::move(vocab);
  return enc;
}

}  // namespace mmkg
