#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace mmkg {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

// A named parameter group with its gradient accumulator.
//
// Row-sparse groups (lookup tables) track which rows a step touched, so that
// both the update and the regularization term apply only to those rows.
// Dense groups are either touched as a whole or not at all.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  bool trainable = true;
  bool row_sparse = false;
  std::vector<std::uint8_t> touched_rows;
  std::vector<Eigen::Index> touched_list;
  bool touched = false;

  Parameter() = default;
  Parameter(std::string name, Matrix value, bool trainable = true, bool row_sparse = false);

  void touch_row(Eigen::Index row);
  void touch();
  void zero_grad();
};

using ParameterList = std::vector<Parameter*>;

// theta <- theta - lr * (grad + 2 * reg * theta), over touched trainable
// entries. Throws kNumeric (and leaves every parameter unchanged) when any
// touched gradient entry is non-finite.
void sgd_step(std::span<Parameter* const> params, double learning_rate, double regularization);

void check_finite_gradients(std::span<Parameter* const> params);

enum class OptimizerKind { kSgd, kAdam };

// Adaptive first/second-moment update behind the same step interface as
// sgd_step; row-sparse groups get lazy per-row updates.
class AdamOptimizer {
 public:
  AdamOptimizer(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(std::span<Parameter* const> params, double learning_rate, double regularization);

 private:
  struct Moments {
    Matrix m, v;
    std::vector<std::int64_t> row_steps;
    std::int64_t steps = 0;
  };
  double beta1_, beta2_, eps_;
  std::vector<Moments> state_;
};

class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double learning_rate, double regularization);
  void step(std::span<Parameter* const> params);
  OptimizerKind kind() const { return kind_; }

 private:
  OptimizerKind kind_;
  double learning_rate_;
  double regularization_;
  AdamOptimizer adam_;
};

void zero_grads(std::span<Parameter* const> params);

}  // namespace mmkg
