#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mmkg/graph.hpp"
#include "mmkg/model.hpp"
#include "mmkg/params.hpp"

namespace mmkg {

enum class LossKind { kMargin, kBce, kCe };

std::string to_string(LossKind kind);
LossKind parse_loss(std::string_view name);  // "margin", "bce", "ce"

struct LossResult {
  double value = 0;
  double d_pos = 0;
  std::vector<double> d_neg;
};

// max(0, neg - pos + m), averaged over the negatives. At the hinge the
// gradient is zero.
LossResult loss_margin(double pos, std::span<const double> negs, double margin);
LossResult loss_margin(double pos, double neg, double margin);
// -log sigmoid(pos) - mean_j log(1 - sigmoid(neg_j))
LossResult loss_bce(double pos, std::span<const double> negs);
// Softmax cross-entropy with the positive as the target among {pos} + negs.
LossResult loss_ce(double pos, std::span<const double> negs);
LossResult compute_loss(LossKind kind, double pos, std::span<const double> negs, double margin);

enum class CorruptSide { kHead, kTail, kUniform };

std::string to_string(CorruptSide side);
CorruptSide parse_corrupt_side(std::string_view name);  // "head", "tail", "uniform"

// Replaces the head or the tail with a uniformly drawn different entity.
Triple corrupt(const Triple& triple, std::size_t num_entities, CorruptSide side,
               std::mt19937_64& rng);

std::string to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(std::string_view name);  // "sgd", "adam"

struct TrainConfig {
  double learning_rate = 0.01;
  double regularization = 0.0;
  std::size_t batch_size = 128;
  LossKind loss = LossKind::kMargin;
  double margin = 1.0;
  std::size_t negatives = 1;
  std::size_t epochs = 100;
  std::size_t eval_interval = 10;  // in epochs; 0 disables validation
  std::size_t patience = 5;        // evaluations without improvement
  OptimizerKind optimizer = OptimizerKind::kSgd;
  CorruptSide corrupt = CorruptSide::kUniform;
  std::uint64_t seed = 0;
};

// Throws kConfig listing every problem, including a non-margin loss for TransE.
void validate(const TrainConfig& config, ScorerKind scorer);
std::vector<std::string> config_problems(const TrainConfig& config, ScorerKind scorer);

struct EvalPoint {
  std::int64_t step = 0;
  std::size_t epoch = 0;
  double val_mrr = 0;
  double seconds = 0;
};

struct EpochLog {
  std::size_t epoch = 0;
  std::int64_t step = 0;
  double loss = 0;
  double seconds = 0;
  bool evaluated = false;
  double val_mrr = 0;
};

struct TrainingData {
  const KnowledgeGraph* kg = nullptr;
  std::span<const Triple> train;
  std::span<const Triple> valid;
  const TripleSet* filter = nullptr;  // known triples for filtered validation ranking
};

struct TrainResult {
  Model model;  // best-validation parameters, or the final ones without validation
  std::int64_t steps = 0;
  std::int64_t best_step = 0;
  double best_val_mrr = std::numeric_limits<double>::quiet_NaN();
  std::vector<EvalPoint> history;
  std::vector<double> epoch_losses;  // mean loss per training triple
  double seconds = 0;
  bool early_stopped = false;
};

using EpochCallback = std::function<void(const EpochLog&)>;

// Mean loss over a batch whose negatives are laid out k per positive, in
// positive order. Accumulates the gradient into the model's parameters
// without zeroing them first.
double batch_loss_grad(Model& model, std::span<const Triple> positives,
                       std::span<const Triple> negatives, const TrainConfig& config);

TrainResult train(const TrainingData& data, const TrainConfig& config, Model model,
                  const EpochCallback& on_epoch = {});

struct PretrainResult {
  TrainResult stage1;  // lookup-only
  TrainResult stage2;  // encoders + lookups, initialized from stage 1
};

// Builds the attribute model for `spec`, copies the pretrained lookup rows of
// attribute-less entities and of all relations, then trains it.
TrainResult finetune(const TrainingData& data, const TrainConfig& config, const ModelSpec& spec,
                     const Model& pretrained, const EpochCallback& on_epoch = {});

PretrainResult pretrain_then_finetune(const TrainingData& data, const TrainConfig& stage1,
                                      const TrainConfig& stage2, const ModelSpec& spec,
                                      const EpochCallback& on_stage1 = {},
                                      const EpochCallback& on_stage2 = {});

struct HpoSpace {
  double learning_rate_min = 1e-3;
  double learning_rate_max = 1.0;
  double regularization_min = 1e-6;
  double regularization_max = 1e-3;
  std::vector<std::size_t> batch_sizes{128, 256, 512, 1024};
  ScorerKind scorer = ScorerKind::kRotatE;
};

// Log-uniform learning rate and regularization, uniform batch size; margin
// loss only for TransE, otherwise bce or ce. Other fields come from `base`.
TrainConfig sample_config(const HpoSpace& space, const TrainConfig& base, std::mt19937_64& rng);

struct HpoTrial {
  std::size_t index = 0;
  TrainConfig config;
  double objective = 0;
};

struct HpoResult {
  TrainConfig best;
  double best_objective = -std::numeric_limits<double>::infinity();
  std::vector<HpoTrial> trials;
};

using HpoObjective = std::function<double(const TrainConfig&)>;

HpoResult hpo_search(const HpoSpace& space, const TrainConfig& base, std::size_t budget,
                     std::uint64_t seed, const HpoObjective& objective,
                     const std::function<void(const HpoTrial&)>& on_trial = {});

}  // namespace mmkg
