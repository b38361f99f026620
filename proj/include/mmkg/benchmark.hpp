#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mmkg/encoders.hpp"
#include "mmkg/graph.hpp"
#include "mmkg/model.hpp"
#include "mmkg/params.hpp"

namespace mmkg {

struct PairInstance {
  std::string a;
  std::string b;
  int label = 0;
  bool sampled = false;  // negatives are sampled, positives come from the benchmark
};

struct PairDataset {
  std::vector<PairInstance> instances;
  std::vector<int> labels() const;
  std::size_t positives() const;
};

// Draws ratio * |positives| unordered pairs from the side pools. A side's pool
// is every graph entity carrying one of the types seen in that benchmark
// column, or all entities when the graph is untyped. Rejects self pairs,
// duplicates, positives and pairs joined by any graph triple.
PairDataset sample_negatives(const BenchmarkPairs& positives, const KnowledgeGraph& kg,
                             std::size_t ratio, std::uint64_t seed);

enum class FeatureSourceKind { kRandom, kStructural, kModel };

std::string to_string(FeatureSourceKind kind);

struct FeatureSource {
  std::string name;
  FeatureSourceKind kind = FeatureSourceKind::kRandom;
  std::size_t dim = 32;          // random / structural width
  const Model* model = nullptr;  // kModel
  std::uint64_t seed = 0;
};

// Stable per-entity N(0, 1) vector derived from (seed, name).
Vector random_feature(const std::string& name, std::size_t dim, std::uint64_t seed);

// One row per instance: features of a, then of b. Entities without a feature
// get the mean over their type's resolvable entities.
Matrix featurize(const PairDataset& data, const KnowledgeGraph& kg, const FeatureSource& source);

// Fold index per instance; classes are dealt round-robin after a per-class
// shuffle.
std::vector<int> stratified_kfold(std::span<const int> labels, std::size_t k, std::uint64_t seed);

struct ClassificationMetrics {
  double auprc = 0, auroc = 0, precision = 0, recall = 0, f1 = 0;
};

// Mann-Whitney with average ranks for ties.
double auroc(std::span<const double> scores, std::span<const int> labels);
// Step-wise average precision; tied scores enter the curve together.
double auprc(std::span<const double> scores, std::span<const int> labels);
ClassificationMetrics classification_metrics(std::span<const double> scores,
                                             std::span<const int> labels);

enum class ClassifierKind { kLogistic, kMlp };

std::string to_string(ClassifierKind kind);
ClassifierKind parse_classifier(std::string_view name);  // "logistic_regression", "mlp"

struct ClassifierParams {
  double regularization = 1e-3;
  double learning_rate = 0.5;
  std::size_t hidden = 32;  // mlp only
  std::size_t iterations = 300;
};

// Weighted logistic loss over standardized rows plus reg * |w|^2, and its
// gradient. Weights are per row.
double logistic_loss_grad(const Matrix& x, std::span<const int> labels,
                          std::span<const double> weights, const Vector& w, double b,
                          double regularization, Vector* grad_w, double* grad_b);

// n / (2 n_c) for every row of class c.
std::vector<double> balanced_weights(std::span<const int> labels);

class Classifier {
 public:
  Classifier() = default;
  Classifier(ClassifierKind kind, ClassifierParams params) : kind_(kind), params_(params) {}

  // Logistic regression balances with class weights, the MLP by undersampling
  // the majority class.
  void fit(const Matrix& x, std::span<const int> labels, std::uint64_t seed);
  std::vector<double> predict(const Matrix& x) const;  // P(label = 1)

  ClassifierKind kind() const { return kind_; }
  const ClassifierParams& params() const { return params_; }

 private:
  Matrix standardize(const Matrix& x) const;

  ClassifierKind kind_ = ClassifierKind::kLogistic;
  ClassifierParams params_;
  RowVector mean_, scale_;
  Vector w_;
  double b_ = 0;
  Matrix w1_;  // hidden x in
  Vector b1_, w2_;
};

struct TunedClassifier {
  Classifier classifier;
  double validation_auprc = 0;
  std::size_t trials = 0;
};

// Random search over ClassifierParams on a 10% stratified validation split,
// maximizing AUPRC, then a refit on all of `x`.
TunedClassifier train_classifier(ClassifierKind kind, const Matrix& x, std::span<const int> labels,
                                 std::size_t tuning_budget, std::uint64_t seed);

struct BenchmarkOptions {
  std::size_t ratio = 10;
  std::size_t folds = 5;
  std::size_t tuning_budget = 10;
  std::uint64_t seed = 0;
};

struct BenchmarkEntry {
  std::string source;
  ClassifierKind classifier = ClassifierKind::kLogistic;
  std::vector<ClassificationMetrics> folds;
  ClassificationMetrics mean, std;  // std is the sample standard deviation
};

struct BenchmarkReport {
  BenchmarkOptions options;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::vector<BenchmarkEntry> entries;
};

// Negatives and folds are fixed once and shared by every source and classifier.
BenchmarkReport run_benchmark(const BenchmarkPairs& pairs, const KnowledgeGraph& kg,
                              std::span<const FeatureSource> sources,
                              std::span<const ClassifierKind> classifiers,
                              const BenchmarkOptions& options);

// Same protocol over a prepared dataset and feature matrices (one per source).
BenchmarkReport run_benchmark_on(const PairDataset& data,
                                 const std::vector<std::pair<std::string, Matrix>>& features,
                                 std::span<const ClassifierKind> classifiers,
                                 const BenchmarkOptions& options);

std::string to_json(const BenchmarkReport& report);
// One row per (source, classifier): "mean (std)" cells.
std::string to_summary_tsv(const BenchmarkReport& report);

}  // namespace mmkg
