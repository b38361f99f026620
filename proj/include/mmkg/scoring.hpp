#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mmkg {

enum class ScorerKind { kTransE, kComplEx, kRotatE };

std::string to_string(ScorerKind kind);
ScorerKind parse_scorer(std::string_view name);

// Real-valued storage width of an entity / relation vector for a scorer with
// embedding dimension n. Complex coordinates are stored interleaved
// (re0, im0, re1, im1, ...); RotatE relations are n phases.
std::size_t entity_width(ScorerKind kind, std::size_t dim);
std::size_t relation_width(ScorerKind kind, std::size_t dim);

enum class EmbeddingSpace { kReal, kComplex };

// A point in the shared embedding space. For complex spaces `values` holds
// 2n doubles in the interleaved layout.
struct EmbeddingVector {
  EmbeddingSpace space = EmbeddingSpace::kReal;
  std::vector<double> values;

  std::size_t dim() const {
    return space == EmbeddingSpace::kReal ? values.size() : values.size() / 2;
  }
  std::span<const std::complex<double>> as_complex() const;
};

using ComplexSpan = std::span<const std::complex<double>>;

ComplexSpan as_complex(std::span<const double> interleaved);

// -||h + r - t||_2
double score_transe(std::span<const double> h, std::span<const double> r,
                    std::span<const double> t);
// Re(sum_i h_i r_i conj(t_i))
double score_complex(ComplexSpan h, ComplexSpan r, ComplexSpan t);
// -||h o exp(i theta) - t||_2
double score_rotate(ComplexSpan h, std::span<const double> theta, ComplexSpan t);

struct ScoreGradient {
  std::vector<double> d_head;
  std::vector<double> d_relation;
  std::vector<double> d_tail;
};

// Score plus analytic partials, all in the flat real storage layout (for
// complex coordinates the partials w.r.t. the real and imaginary parts). At
// the kink of the norm the gradient is zero.
double score_grad(ScorerKind kind, std::span<const double> h, std::span<const double> r,
                  std::span<const double> t, ScoreGradient& grad);

// Allocation-free variant used by the training loop; outputs are overwritten.
double score_grad_into(ScorerKind kind, std::span<const double> h, std::span<const double> r,
                       std::span<const double> t, std::span<double> d_h, std::span<double> d_r,
                       std::span<double> d_t);

// Score on flat storage vectors, dispatching on the scorer kind.
double score(ScorerKind kind, std::span<const double> h, std::span<const double> r,
             std::span<const double> t);

}  // namespace mmkg
