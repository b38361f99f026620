#include "mmkg/scoring.hpp"

#include <cmath>

#include "mmkg/error.hpp"

namespace mmkg {

namespace {

void require_same(std::size_t a, std::size_t b, std::size_t c, const char* what) {
  if (a != b || b != c || a == 0)
    fail(ErrorCode::kInvalidArgument,
         std::string(what) + ": dimension mismatch (" + std::to_string(a) + ", " +
             std::to_string(b) + ", " + std::to_string(c) + ")");
}

std::span<std::complex<double>> as_complex_mut(std::span<double> v) {
  return {reinterpret_cast<std::complex<double>*>(v.data()), v.size() / 2};
}

void require_even(std::span<const double> v) {
  if (v.size() % 2 != 0)
    fail(ErrorCode::kInvalidArgument, "complex vector with odd storage width");
}

}  // namespace

std::string to_string(ScorerKind kind) {
  switch (kind) {
    case ScorerKind::kTransE: return "transe";
    case ScorerKind::kComplEx: return "complex";
    case ScorerKind::kRotatE: return "rotate";
  }
  return "?";
}

ScorerKind parse_scorer(std::string_view name) {
  if (name == "transe") return ScorerKind::kTransE;
  if (name == "complex") return ScorerKind::kComplEx;
  if (name == "rotate") return ScorerKind::kRotatE;
  fail(ErrorCode::kInvalidArgument,
       "unknown scorer '" + std::string(name) + "' (expected transe, complex or rotate)");
}

std::size_t entity_width(ScorerKind kind, std::size_t dim) {
  return kind == ScorerKind::kTransE ? dim : 2 * dim;
}

std::size_t relation_width(ScorerKind kind, std::size_t dim) {
  return kind == ScorerKind::kComplEx ? 2 * dim : dim;
}

std::span<const std::complex<double>> EmbeddingVector::as_complex() const {
  return mmkg::as_complex(values);
}

ComplexSpan as_complex(std::span<const double> interleaved) {
  require_even(interleaved);
  return {reinterpret_cast<const std::complex<double>*>(interleaved.data()),
          interleaved.size() / 2};
}

double score_transe(std::span<const double> h, std::span<const double> r,
                    std::span<const double> t) {
  require_same(h.size(), r.size(), t.size(), "transe");
  double ss = 0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double d = h[i] + r[i] - t[i];
    ss += d * d;
  }
  return -std::sqrt(ss);
}

double score_complex(ComplexSpan h, ComplexSpan r, ComplexSpan t) {
  require_same(h.size(), r.size(), t.size(), "complex");
  double s = 0;
  for (std::size_t i = 0; i < h.size(); ++i) s += (h[i] * r[i] * std::conj(t[i])).real();
  return s;
}

double score_rotate(ComplexSpan h, std::span<const double> theta, ComplexSpan t) {
  require_same(h.size(), theta.size(), t.size(), "rotate");
  double ss = 0;
  for (std::size_t i = 0; i < h.size(); ++i)
    ss += std::norm(h[i] * std::polar(1.0, theta[i]) - t[i]);
  return -std::sqrt(ss);
}

double score(ScorerKind kind, std::span<const double> h, std::span<const double> r,
             std::span<const double> t) {
  switch (kind) {
    case ScorerKind::kTransE: return score_transe(h, r, t);
    case ScorerKind::kComplEx: return score_complex(as_complex(h), as_complex(r), as_complex(t));
    case ScorerKind::kRotatE: return score_rotate(as_complex(h), r, as_complex(t));
  }
  return 0;
}

double score_grad_into(ScorerKind kind, std::span<const double> h, std::span<const double> r,
                       std::span<const double> t, std::span<double> d_h, std::span<double> d_r,
                       std::span<double> d_t) {
  if (d_h.size() != h.size() || d_r.size() != r.size() || d_t.size() != t.size())
    fail(ErrorCode::kInvalidArgument, "gradient buffers do not match input shapes");

  switch (kind) {
    case ScorerKind::kTransE: {
      const double s = score_transe(h, r, t);
      const double norm = -s;
      for (std::size_t i = 0; i < h.size(); ++i) {
        const double g = norm > 0 ? -(h[i] + r[i] - t[i]) / norm : 0.0;
        d_h[i] = g;
        d_r[i] = g;
        d_t[i] = -g;
      }
      return s;
    }
    case ScorerKind::kComplEx: {
      const auto hc = as_complex(h), rc = as_complex(r), tc = as_complex(t);
      const double s = score_complex(hc, rc, tc);
      auto dh = as_complex_mut(d_h), dr = as_complex_mut(d_r), dt = as_complex_mut(d_t);
      // With f = Re(h r conj(t)), the partials w.r.t. (re, im) of each factor
      // are the components of the conjugate of the product of the other two
      // (for t: the product itself).
      for (std::size_t i = 0; i < hc.size(); ++i) {
        dh[i] = std::conj(rc[i] * std::conj(tc[i]));
        dr[i] = std::conj(hc[i] * std::conj(tc[i]));
        dt[i] = hc[i] * rc[i];
      }
      return s;
    }
    case ScorerKind::kRotatE: {
      const auto hc = as_complex(h), tc = as_complex(t);
      const double s = score_rotate(hc, r, tc);
      const double norm = -s;
      auto dh = as_complex_mut(d_h), dt = as_complex_mut(d_t);
      for (std::size_t i = 0; i < hc.size(); ++i) {
        const std::complex<double> rot = std::polar(1.0, r[i]);
        const std::complex<double> u = hc[i] * rot;
        // g = d score / d (u - t), as a (re, im) pair
        const std::complex<double> g = norm > 0 ? -(u - tc[i]) / norm : 0.0;
        dh[i] = g * std::conj(rot);
        dt[i] = -g;
        d_r[i] = g.real() * (-u.imag()) + g.imag() * u.real();
      }
      return s;
    }
  }
  return 0;
}

double score_grad(ScorerKind kind, std::span<const double> h, std::span<const double> r,
                  std::span<const double> t, ScoreGradient& grad) {
  grad.d_head.assign(h.size(), 0.0);
  grad.d_relation.assign(r.size(), 0.0);
  grad.d_tail.assign(t.size(), 0.0);
  return score_grad_into(kind, h, r, t, grad.d_head, grad.d_relation, grad.d_tail);
}

}  // namespace mmkg
