#include "mmkg/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "mmkg/error.hpp"
#include "mmkg/evaluation.hpp"

namespace mmkg {

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::kMargin: return "margin";
    case LossKind::kBce: return "bce";
    case LossKind::kCe: return "ce";
  }
  return "?";
}

LossKind parse_loss(std::string_view name) {
  if (name == "margin") return LossKind::kMargin;
  if (name == "bce") return LossKind::kBce;
  if (name == "ce") return LossKind::kCe;
  fail(ErrorCode::kInvalidArgument,
       "unknown loss '" + std::string(name) + "' (expected margin, bce or ce)");
}

std::string to_string(CorruptSide side) {
  switch (side) {
    case CorruptSide::kHead: return "head";
    case CorruptSide::kTail: return "tail";
    case CorruptSide::kUniform: return "uniform";
  }
  return "?";
}

CorruptSide parse_corrupt_side(std::string_view name) {
  if (name == "head") return CorruptSide::kHead;
  if (name == "tail") return CorruptSide::kTail;
  if (name == "uniform") return CorruptSide::kUniform;
  fail(ErrorCode::kInvalidArgument,
       "unknown corruption side '" + std::string(name) + "' (expected head, tail or uniform)");
}

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::kSgd ? "sgd" : "adam"; }

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "adam") return OptimizerKind::kAdam;
  fail(ErrorCode::kInvalidArgument,
       "unknown optimizer '" + std::string(name) + "' (expected sgd or adam)");
}

namespace {

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void require_negatives(std::span<const double> negs) {
  if (negs.empty()) fail(ErrorCode::kInvalidArgument, "loss needs at least one negative score");
}

}  // namespace

LossResult loss_margin(double pos, std::span<const double> negs, double margin) {
  require_negatives(negs);
  if (margin < 0) fail(ErrorCode::kInvalidArgument, "margin must be non-negative");
  const double k = static_cast<double>(negs.size());
  LossResult r;
  r.d_neg.assign(negs.size(), 0.0);
  for (std::size_t j = 0; j < negs.size(); ++j) {
    const double gap = negs[j] - pos + margin;
    if (gap > 0) {
      r.value += gap / k;
      r.d_neg[j] = 1.0 / k;
      r.d_pos -= 1.0 / k;
    }
  }
  return r;
}

LossResult loss_margin(double pos, double neg, double margin) {
  return loss_margin(pos, std::span<const double>(&neg, 1), margin);
}

LossResult loss_bce(double pos, std::span<const double> negs) {
  require_negatives(negs);
  const double k = static_cast<double>(negs.size());
  LossResult r;
  r.value = softplus(-pos);
  r.d_pos = -sigmoid(-pos);
  r.d_neg.resize(negs.size());
  for (std::size_t j = 0; j < negs.size(); ++j) {
    r.value += softplus(negs[j]) / k;
    r.d_neg[j] = sigmoid(negs[j]) / k;
  }
  return r;
}

LossResult loss_ce(double pos, std::span<const double> negs) {
  require_negatives(negs);
  double top = pos;
  for (double s : negs) top = std::max(top, s);
  double z = std::exp(pos - top);
  for (double s : negs) z += std::exp(s - top);
  const double lse = top + std::log(z);
  LossResult r;
  r.value = lse - pos;
  r.d_pos = std::exp(pos - lse) - 1.0;
  r.d_neg.resize(negs.size());
  for (std::size_t j = 0; j < negs.size(); ++j) r.d_neg[j] = std::exp(negs[j] - lse);
  return r;
}

LossResult compute_loss(LossKind kind, double pos, std::span<const double> negs, double margin) {
  switch (kind) {
    case LossKind::kMargin: return loss_margin(pos, negs, margin);
    case LossKind::kBce: return loss_bce(pos, negs);
    case LossKind::kCe: return loss_ce(pos, negs);
  }
  return {};
}

Triple corrupt(const Triple& triple, std::size_t num_entities, CorruptSide side,
               std::mt19937_64& rng) {
  if (num_entities < 2)
    fail(ErrorCode::kInvalidArgument, "corruption needs at least two entities");
  bool head = side == CorruptSide::kHead;
  if (side == CorruptSide::kUniform) head = std::bernoulli_distribution(0.5)(rng);
  Triple out = triple;
  EntityIndex& slot = head ? out.head : out.tail;
  std::uniform_int_distribution<std::size_t> pick(0, num_entities - 2);
  auto e = static_cast<EntityIndex>(pick(rng));
  if (e >= slot) ++e;
  slot = e;
  return out;
}

std::vector<std::string> config_problems(const TrainConfig& c, ScorerKind scorer) {
  std::vector<std::string> out;
  if (!(c.learning_rate >= 0) || !std::isfinite(c.learning_rate))
    out.push_back("learning_rate must be a finite non-negative number");
  if (!(c.regularization >= 0) || !std::isfinite(c.regularization))
    out.push_back("regularization must be a finite non-negative number");
  if (c.batch_size == 0) out.push_back("batch_size must be positive");
  if (c.negatives == 0) out.push_back("negatives must be positive");
  if (!(c.margin >= 0)) out.push_back("margin must be non-negative");
  if (scorer == ScorerKind::kTransE && c.loss != LossKind::kMargin)
    out.push_back("loss '" + to_string(c.loss) + "' is not used with transe (margin only)");
  return out;
}

void validate(const TrainConfig& config, ScorerKind scorer) {
  const auto problems = config_problems(config, scorer);
  if (problems.empty()) return;
  std::string msg = "invalid training configuration:";
  for (const auto& p : problems) msg += "\n  " + p;
  fail(ErrorCode::kConfig, msg);
}

namespace {

struct EntitySlot {
  Vector value;
  EncoderTrace trace;
  Vector grad;
};

using Clock = std::chrono::steady_clock;

double elapsed(Clock::time_point since) {
  return std::chrono::duration<double>(Clock::now() - since).count();
}

}  // namespace

double batch_loss_grad(Model& model, std::span<const Triple> positives,
                       std::span<const Triple> negatives, const TrainConfig& config) {
  if (positives.empty()) fail(ErrorCode::kInvalidArgument, "empty batch");
  const std::size_t k = negatives.size() / positives.size();
  if (k == 0 || k * positives.size() != negatives.size())
    fail(ErrorCode::kInvalidArgument, "expected the same number of negatives per positive");

  const std::size_t ew = model.entity_width();
  const std::size_t rw = model.relation_width();
  const double weight = 1.0 / static_cast<double>(positives.size());

  // One forward pass per distinct entity; gradients w.r.t. each embedding are
  // summed over the batch, then pushed through its encoder once.
  std::unordered_map<EntityIndex, std::size_t> slot_of;
  std::vector<EntitySlot> slots;
  auto resolve = [&](EntityIndex e) {
    auto [it, inserted] = slot_of.emplace(e, slots.size());
    if (inserted) {
      EntitySlot s;
      s.value = model.forward_entity(e, &s.trace);
      s.grad = Vector::Zero(static_cast<Eigen::Index>(ew));
      slots.push_back(std::move(s));
    }
  };
  for (const auto& t : positives) {
    resolve(t.head);
    resolve(t.tail);
  }
  for (const auto& t : negatives) {
    resolve(t.head);
    resolve(t.tail);
  }
  auto at = [&](EntityIndex e) -> EntitySlot& { return slots[slot_of.at(e)]; };
  auto span_of = [](const Vector& v) { return std::span<const double>(v.data(), v.size()); };

  std::vector<double> neg_scores(k);
  std::vector<double> d_h(ew), d_t(ew), d_r(rw), rel_grad(rw);
  std::vector<std::vector<double>> nd_h(k, std::vector<double>(ew)),
      nd_t(k, std::vector<double>(ew)), nd_r(k, std::vector<double>(rw));

  double total = 0;
  for (std::size_t b = 0; b < positives.size(); ++b) {
    const Triple& pos = positives[b];
    const auto negs = negatives.subspan(b * k, k);
    auto& ph = at(pos.head);
    auto& pt = at(pos.tail);
    const auto rel = model.relation(pos.relation);
    const double pos_score =
        score_grad_into(model.scorer(), span_of(ph.value), rel, span_of(pt.value), d_h, d_r, d_t);
    for (std::size_t j = 0; j < k; ++j) {
      if (negs[j].relation != pos.relation)
        fail(ErrorCode::kInvalidArgument, "a negative must share its positive's relation");
      neg_scores[j] = score_grad_into(model.scorer(), span_of(at(negs[j].head).value), rel,
                                      span_of(at(negs[j].tail).value), nd_h[j], nd_r[j], nd_t[j]);
    }
    const LossResult loss = compute_loss(config.loss, pos_score, neg_scores, config.margin);
    total += loss.value;

    const double gp = weight * loss.d_pos;
    for (std::size_t i = 0; i < rw; ++i) rel_grad[i] = gp * d_r[i];
    for (std::size_t i = 0; i < ew; ++i) {
      ph.grad[static_cast<Eigen::Index>(i)] += gp * d_h[i];
      pt.grad[static_cast<Eigen::Index>(i)] += gp * d_t[i];
    }
    for (std::size_t j = 0; j < k; ++j) {
      const double gn = weight * loss.d_neg[j];
      if (gn == 0.0) continue;
      auto& nh = at(negs[j].head);
      auto& nt = at(negs[j].tail);
      for (std::size_t i = 0; i < ew; ++i) {
        nh.grad[static_cast<Eigen::Index>(i)] += gn * nd_h[j][i];
        nt.grad[static_cast<Eigen::Index>(i)] += gn * nd_t[j][i];
      }
      for (std::size_t i = 0; i < rw; ++i) rel_grad[i] += gn * nd_r[j][i];
    }
    model.accumulate_relation_grad(pos.relation, rel_grad);
  }
  const double mean = total * weight;
  if (!std::isfinite(mean)) fail(ErrorCode::kNumeric, "non-finite loss");
  for (const auto& [entity, index] : slot_of)
    model.backward_entity(entity, slots[index].trace, span_of(slots[index].grad));
  return mean;
}

TrainResult train(const TrainingData& data, const TrainConfig& config, Model model,
                  const EpochCallback& on_epoch) {
  validate(config, model.scorer());
  if (data.train.empty()) fail(ErrorCode::kInvalidArgument, "no training triples");
  if (data.kg && data.kg->num_entities() != model.num_entities())
    fail(ErrorCode::kInvalidArgument, "model and graph have different entity sets");

  const auto start = Clock::now();
  TrainResult result;
  std::mt19937_64 rng(config.seed);
  Optimizer optimizer(config.optimizer, config.learning_rate, config.regularization);
  const ParameterList params = model.parameters();
  zero_grads(params);

  const std::size_t k = config.negatives;
  const bool validate_runs = config.eval_interval > 0 && !data.valid.empty();

  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<Triple> positives, negatives;

  std::vector<Matrix> best_snapshot;
  std::size_t bad_evals = 0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      positives.clear();
      negatives.clear();
      for (std::size_t b = begin; b < end; ++b) {
        const Triple& pos = data.train[order[b]];
        positives.push_back(pos);
        for (std::size_t j = 0; j < k; ++j)
          negatives.push_back(corrupt(pos, model.num_entities(), config.corrupt, rng));
      }
      double loss = 0;
      try {
        loss = batch_loss_grad(model, positives, negatives, config);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kNumeric) throw;
        fail(ErrorCode::kNumeric, std::string(e.what()) + " at epoch " + std::to_string(epoch) +
                                      ", step " + std::to_string(result.steps + 1));
      }
      optimizer.step(params);
      zero_grads(params);
      ++result.steps;
      epoch_loss += loss * static_cast<double>(end - begin);
    }

    EpochLog log;
    log.epoch = epoch;
    log.step = result.steps;
    log.loss = epoch_loss / static_cast<double>(order.size());
    result.epoch_losses.push_back(log.loss);

    const bool last = epoch == config.epochs;
    if (validate_runs && (epoch % config.eval_interval == 0 || last)) {
      const double val = evaluate(model, data.valid, data.filter).mrr;
      log.evaluated = true;
      log.val_mrr = val;
      result.history.push_back({result.steps, epoch, val, elapsed(start)});
      if (best_snapshot.empty() || val > result.best_val_mrr) {
        result.best_val_mrr = val;
        result.best_step = result.steps;
        best_snapshot = model.snapshot();
        bad_evals = 0;
      } else {
        ++bad_evals;
      }
    }
    log.seconds = elapsed(start);
    if (on_epoch) on_epoch(log);
    if (validate_runs && config.patience > 0 && bad_evals >= config.patience) {
      result.early_stopped = true;
      break;
    }
  }

  if (!best_snapshot.empty()) {
    model.restore(best_snapshot);
  } else {
    result.best_step = result.steps;
  }
  result.model = std::move(model);
  result.seconds = elapsed(start);
  return result;
}

TrainResult finetune(const TrainingData& data, const TrainConfig& config, const ModelSpec& spec,
                     const Model& pretrained, const EpochCallback& on_epoch) {
  if (!data.kg) fail(ErrorCode::kInvalidArgument, "fine-tuning needs the knowledge graph");
  if (pretrained.spec().dim != spec.dim || pretrained.scorer() != spec.scorer)
    fail(ErrorCode::kInvalidArgument,
         "pretrained model (" + to_string(pretrained.scorer()) + ", dim " +
             std::to_string(pretrained.spec().dim) + ") does not match the fine-tuning model (" +
             to_string(spec.scorer) + ", dim " + std::to_string(spec.dim) + ")");
  ModelSpec attr_spec = spec;
  attr_spec.use_attributes = true;
  Model model = Model::create(*data.kg, attr_spec);
  model.copy_lookup_rows_from(pretrained);
  return train(data, config, std::move(model), on_epoch);
}

PretrainResult pretrain_then_finetune(const TrainingData& data, const TrainConfig& stage1,
                                      const TrainConfig& stage2, const ModelSpec& spec,
                                      const EpochCallback& on_stage1,
                                      const EpochCallback& on_stage2) {
  if (!data.kg) fail(ErrorCode::kInvalidArgument, "pretraining needs the knowledge graph");
  ModelSpec lookup_spec = spec;
  lookup_spec.use_attributes = false;
  PretrainResult out;
  out.stage1 = train(data, stage1, Model::create(*data.kg, lookup_spec), on_stage1);
  out.stage2 = finetune(data, stage2, spec, out.stage1.model, on_stage2);
  return out;
}

TrainConfig sample_config(const HpoSpace& space, const TrainConfig& base, std::mt19937_64& rng) {
  auto log_uniform = [&](double lo, double hi) {
    std::uniform_real_distribution<double> u(std::log(lo), std::log(hi));
    return std::clamp(std::exp(u(rng)), lo, hi);
  };
  if (space.batch_sizes.empty()) fail(ErrorCode::kInvalidArgument, "empty batch size set");
  TrainConfig c = base;
  c.learning_rate = log_uniform(space.learning_rate_min, space.learning_rate_max);
  c.regularization = log_uniform(space.regularization_min, space.regularization_max);
  std::uniform_int_distribution<std::size_t> pick(0, space.batch_sizes.size() - 1);
  c.batch_size = space.batch_sizes[pick(rng)];
  if (space.scorer == ScorerKind::kTransE) {
    c.loss = LossKind::kMargin;
  } else {
    c.loss = std::bernoulli_distribution(0.5)(rng) ? LossKind::kBce : LossKind::kCe;
  }
  return c;
}

HpoResult hpo_search(const HpoSpace& space, const TrainConfig& base, std::size_t budget,
                     std::uint64_t seed, const HpoObjective& objective,
                     const std::function<void(const HpoTrial&)>& on_trial) {
  if (budget == 0) fail(ErrorCode::kInvalidArgument, "search budget must be at least 1");
  std::mt19937_64 rng(seed);
  HpoResult result;
  for (std::size_t i = 0; i < budget; ++i) {
    HpoTrial trial;
    trial.index = i;
    trial.config = sample_config(space, base, rng);
    trial.objective = objective(trial.config);
    if (result.trials.empty() || trial.objective > result.best_objective) {
      result.best_objective = trial.objective;
      result.best = trial.config;
    }
    if (on_trial) on_trial(trial);
    result.trials.push_back(std::move(trial));
  }
  return result;
}

}  // namespace mmkg
