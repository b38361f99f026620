#include "mmkg/params.hpp"

#include <algorithm>
#include <cmath>

#include "mmkg/error.hpp"

namespace mmkg {

Parameter::Parameter(std::string n, Matrix v, bool train, bool sparse)
    : name(std::move(n)), value(std::move(v)), trainable(train), row_sparse(sparse) {
  grad = Matrix::Zero(value.rows(), value.cols());
  if (row_sparse) touched_rows.assign(static_cast<std::size_t>(value.rows()), 0);
}

void Parameter::touch_row(Eigen::Index row) {
  if (!row_sparse) {
    touched = true;
    return;
  }
  if (!touched_rows[row]) {
    touched_rows[row] = 1;
    touched_list.push_back(row);
  }
  touched = true;
}

void Parameter::touch() {
  if (row_sparse)
    for (Eigen::Index r = 0; r < value.rows(); ++r) touch_row(r);
  touched = true;
}

void Parameter::zero_grad() {
  if (row_sparse) {
    for (auto r : touched_list) {
      grad.row(r).setZero();
      touched_rows[r] = 0;
    }
    touched_list.clear();
  } else if (touched) {
    grad.setZero();
  }
  touched = false;
}

void zero_grads(std::span<Parameter* const> params) {
  for (auto* p : params) p->zero_grad();
}

void check_finite_gradients(std::span<Parameter* const> params) {
  for (const auto* p : params) {
    if (!p->trainable || !p->touched) continue;
    const bool finite = p->row_sparse
                            ? std::all_of(p->touched_list.begin(), p->touched_list.end(),
                                          [&](Eigen::Index r) { return p->grad.row(r).allFinite(); })
                            : p->grad.allFinite();
    if (!finite) fail(ErrorCode::kNumeric, "non-finite gradient in parameter '" + p->name + "'");
  }
}

void sgd_step(std::span<Parameter* const> params, double learning_rate, double regularization) {
  check_finite_gradients(params);
  for (auto* p : params) {
    if (!p->trainable || !p->touched) continue;
    if (p->row_sparse) {
      for (auto r : p->touched_list)
        p->value.row(r) -= learning_rate * (p->grad.row(r) + 2.0 * regularization * p->value.row(r));
    } else {
      p->value -= learning_rate * (p->grad + 2.0 * regularization * p->value);
    }
  }
}

AdamOptimizer::AdamOptimizer(double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {}

void AdamOptimizer::step(std::span<Parameter* const> params, double learning_rate,
                         double regularization) {
  check_finite_gradients(params);
  if (state_.size() != params.size()) {
    state_.clear();
    for (auto* p : params) {
      Moments m;
      m.m = Matrix::Zero(p->value.rows(), p->value.cols());
      m.v = Matrix::Zero(p->value.rows(), p->value.cols());
      if (p->row_sparse) m.row_steps.assign(static_cast<std::size_t>(p->value.rows()), 0);
      state_.push_back(std::move(m));
    }
  }
  auto update = [&](auto&& value, auto&& g_raw, auto&& m, auto&& v,
                    std::int64_t t) {
    const RowVector g = g_raw + 2.0 * regularization * value;
    m = beta1_ * m + (1 - beta1_) * g;
    v = beta2_ * v + (1 - beta2_) * g.cwiseProduct(g);
    const double c1 = 1 - std::pow(beta1_, static_cast<double>(t));
    const double c2 = 1 - std::pow(beta2_, static_cast<double>(t));
    value -= (learning_rate * (m / c1).array() / ((v / c2).array().sqrt() + eps_)).matrix();
  };
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    auto& s = state_[i];
    if (!p.trainable || !p.touched) continue;
    if (p.row_sparse) {
      for (auto r : p.touched_list) {
        const auto t = ++s.row_steps[r];
        update(p.value.row(r), p.grad.row(r), s.m.row(r), s.v.row(r), t);
      }
    } else {
      const auto t = ++s.steps;
      Eigen::Map<RowVector> value(p.value.data(), p.value.size());
      Eigen::Map<const RowVector> g(p.grad.data(), p.grad.size());
      Eigen::Map<RowVector> m(s.m.data(), s.m.size());
      Eigen::Map<RowVector> v(s.v.data(), s.v.size());
      update(value, g, m, v, t);
    }
  }
}

Optimizer::Optimizer(OptimizerKind kind, double learning_rate, double regularization)
    : kind_(kind), learning_rate_(learning_rate), regularization_(regularization) {}

void Optimizer::step(std::span<Parameter* const> params) {
  if (kind_ == OptimizerKind::kSgd)
    sgd_step(params, learning_rate_, regularization_);
  else
    adam_.step(params, learning_rate_, regularization_);
}

}  // namespace mmkg
