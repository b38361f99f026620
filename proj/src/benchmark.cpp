#include "mmkg/benchmark.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "mmkg/error.hpp"

namespace mmkg {

std::vector<int> PairDataset::labels() const {
  std::vector<int> out;
  out.reserve(instances.size());
  for (const auto& i : instances) out.push_back(i.label);
  return out;
}

std::size_t PairDataset::positives() const {
  return static_cast<std::size_t>(std::count_if(instances.begin(), instances.end(),
                                                [](const auto& i) { return i.label == 1; }));
}

namespace {

using NamePair = std::pair<std::string, std::string>;

NamePair unordered(const std::string& a, const std::string& b) {
  return a < b ? NamePair{a, b} : NamePair{b, a};
}

std::uint64_t fnv1a(std::uint64_t seed, std::string_view text) {
  std::uint64_t h = 1469598103934665603ull;
  for (int i = 0; i < 8; ++i) {
    h ^= (seed >> (8 * i)) & 0xff;
    h *= 1099511628211ull;
  }
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t mix(std::uint64_t seed, std::uint64_t salt) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(salt), static_cast<std::uint32_t>(salt >> 32)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

std::vector<EntityIndex> side_pool(const KnowledgeGraph& kg, const BenchmarkPairs& positives,
                                   bool first) {
  std::vector<EntityIndex> pool;
  std::set<std::string> types;
  if (kg.has_types()) {
    for (const auto& p : positives) {
      if (auto e = kg.entities.find(first ? p.a : p.b); e && !kg.entity_types[*e].empty())
        types.insert(kg.entity_types[*e]);
    }
  }
  for (EntityIndex e = 0; e < kg.num_entities(); ++e)
    if (types.empty() || types.count(kg.entity_types[e])) pool.push_back(e);
  return pool;
}

}  // namespace

PairDataset sample_negatives(const BenchmarkPairs& positives, const KnowledgeGraph& kg,
                             std::size_t ratio, std::uint64_t seed) {
  PairDataset out;
  std::set<NamePair> taken;
  for (const auto& p : positives) {
    if (p.a == p.b) continue;
    if (!taken.insert(unordered(p.a, p.b)).second) continue;
    out.instances.push_back({p.a, p.b, 1, false});
  }
  if (ratio == 0) return out;
  if (out.instances.empty()) fail(ErrorCode::kInvalidArgument, "no positive pairs to sample against");

  std::unordered_set<std::uint64_t> linked;
  auto key = [](EntityIndex x, EntityIndex y) {
    if (x > y) std::swap(x, y);
    return (static_cast<std::uint64_t>(x) << 32) | y;
  };
  for (const auto& t : kg.triples) linked.insert(key(t.head, t.tail));

  const auto pool_a = side_pool(kg, positives, true);
  const auto pool_b = side_pool(kg, positives, false);
  const std::size_t need = ratio * out.instances.size();

  auto acceptable = [&](EntityIndex x, EntityIndex y) {
    if (x == y || linked.count(key(x, y))) return false;
    return !taken.count(unordered(kg.entities.name(x), kg.entities.name(y)));
  };
  auto accept = [&](EntityIndex x, EntityIndex y) {
    taken.insert(unordered(kg.entities.name(x), kg.entities.name(y)));
    out.instances.push_back({kg.entities.name(x), kg.entities.name(y), 0, true});
  };

  std::mt19937_64 rng(seed);
  std::size_t drawn = 0;
  if (!pool_a.empty() && !pool_b.empty()) {
    std::uniform_int_distribution<std::size_t> pa(0, pool_a.size() - 1), pb(0, pool_b.size() - 1);
    const std::size_t max_attempts = 20 * need + 1000;
    for (std::size_t attempt = 0; attempt < max_attempts && drawn < need; ++attempt) {
      const EntityIndex x = pool_a[pa(rng)], y = pool_b[pb(rng)];
      if (!acceptable(x, y)) continue;
      accept(x, y);
      ++drawn;
    }
  }
  if (drawn < need) {
    // Dense candidate space: enumerate what is left.
    std::vector<std::pair<EntityIndex, EntityIndex>> rest;
    std::set<NamePair> seen;
    for (EntityIndex x : pool_a)
      for (EntityIndex y : pool_b)
        if (acceptable(x, y) && seen.insert(unordered(kg.entities.name(x), kg.entities.name(y))).second)
          rest.emplace_back(x, y);
    if (rest.size() < need - drawn)
      fail(ErrorCode::kInvalidArgument,
           "cannot sample " + std::to_string(need) + " negatives: only " +
               std::to_string(drawn + rest.size()) + " candidate pairs exist (short by " +
               std::to_string(need - drawn - rest.size()) + ")");
    std::shuffle(rest.begin(), rest.end(), rng);
    for (std::size_t i = 0; drawn < need; ++i, ++drawn) accept(rest[i].first, rest[i].second);
  }
  return out;
}

std::string to_string(FeatureSourceKind kind) {
  switch (kind) {
    case FeatureSourceKind::kRandom: return "random";
    case FeatureSourceKind::kStructural: return "structural";
    case FeatureSourceKind::kModel: return "model";
  }
  return "?";
}

Vector random_feature(const std::string& name, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(fnv1a(seed, name));
  std::normal_distribution<double> normal;
  Vector v(static_cast<Eigen::Index>(dim));
  for (auto& x : v) x = normal(rng);
  return v;
}

namespace {

// Mean-pooled rows of a frozen N(0, 1) token table, one table per modality.
class StructuralFeatures {
 public:
  StructuralFeatures(const KnowledgeGraph& kg, std::size_t dim, std::uint64_t seed) : kg_(kg) {
    const std::size_t mods = kg.modalities.size();
    std::vector<std::vector<std::string>> payloads(mods);
    for (EntityIndex e = 0; e < kg.num_entities(); ++e)
      if (kg.attributes[e]) payloads[kg.attributes[e]->modality - 1].push_back(kg.attributes[e]->payload);
    for (std::size_t m = 0; m < mods; ++m) {
      const auto& name = kg.modalities.name(static_cast<ModalityId>(m + 1));
      const Tokenizer tok = name == "text" ? Tokenizer::kWords : Tokenizer::kCharacters;
      vocabs_.push_back(TokenVocabulary::build(payloads[m], tok));
      std::mt19937_64 rng(fnv1a(seed, name));
      std::normal_distribution<double> normal;
      Matrix table(static_cast<Eigen::Index>(vocabs_.back().size()), static_cast<Eigen::Index>(dim));
      for (Eigen::Index i = 0; i < table.size(); ++i) table.data()[i] = normal(rng);
      tables_.push_back(std::move(table));
    }
  }

  std::optional<Vector> operator()(EntityIndex e) const {
    const auto& rec = kg_.attributes[e];
    if (!rec) return std::nullopt;
    const auto m = rec->modality - 1;
    const auto ids = vocabs_[m].encode(rec->payload);
    Vector sum = Vector::Zero(tables_[m].cols());
    for (int id : ids) sum += tables_[m].row(id).transpose();
    return sum / static_cast<double>(ids.size());
  }

 private:
  const KnowledgeGraph& kg_;
  std::vector<TokenVocabulary> vocabs_;
  std::vector<Matrix> tables_;
};

}  // namespace

Matrix featurize(const PairDataset& data, const KnowledgeGraph& kg, const FeatureSource& source) {
  // Resolves an entity name to its feature, or nullopt when the source has none.
  std::function<std::optional<Vector>(const std::string&)> resolve;
  // Every name with a type known to this source, for imputation pools.
  std::vector<std::pair<std::string, std::string>> universe;  // (name, type)
  std::optional<StructuralFeatures> structural;
  Matrix embeddings;

  for (EntityIndex e = 0; e < kg.num_entities(); ++e)
    universe.emplace_back(kg.entities.name(e), kg.entity_types[e]);

  switch (source.kind) {
    case FeatureSourceKind::kRandom:
      if (source.dim == 0) fail(ErrorCode::kInvalidArgument, "random feature width must be positive");
      resolve = [&](const std::string& name) -> std::optional<Vector> {
        return random_feature(name, source.dim, source.seed);
      };
      break;
    case FeatureSourceKind::kStructural:
      if (source.dim == 0) fail(ErrorCode::kInvalidArgument, "structural feature width must be positive");
      structural.emplace(kg, source.dim, source.seed);
      resolve = [&](const std::string& name) -> std::optional<Vector> {
        auto e = kg.entities.find(name);
        if (!e) return std::nullopt;
        return (*structural)(*e);
      };
      break;
    case FeatureSourceKind::kModel: {
      if (!source.model) fail(ErrorCode::kInvalidArgument, "model feature source without a model");
      embeddings = source.model->embed_all();
      const Model& model = *source.model;
      for (EntityIndex e = 0; e < model.num_entities(); ++e)
        if (!kg.entities.find(model.entities().name(e)))
          universe.emplace_back(model.entities().name(e), model.entity_types()[e]);
      resolve = [&](const std::string& name) -> std::optional<Vector> {
        auto e = source.model->entities().find(name);
        if (!e) return std::nullopt;
        return embeddings.row(*e).transpose();
      };
      break;
    }
  }

  std::map<std::string, std::string> types;
  for (const auto& [name, type] : universe) types.emplace(name, type);
  std::map<std::string, Vector> type_means;
  auto impute = [&](const std::string& name) -> Vector {
    auto t = types.find(name);
    if (t == types.end())
      fail(ErrorCode::kNotFound, "entity '" + name + "' has no " + source.name +
                                     " feature and no known type to impute from");
    auto cached = type_means.find(t->second);
    if (cached != type_means.end()) return cached->second;
    Vector sum;
    std::size_t n = 0;
    for (const auto& [other, type] : universe) {
      if (type != t->second) continue;
      auto v = resolve(other);
      if (!v) continue;
      if (n == 0) sum = Vector::Zero(v->size());
      sum += *v;
      ++n;
    }
    if (n == 0)
      fail(ErrorCode::kNotFound, "entity '" + name + "' has no " + source.name +
                                     " feature and no entity of type '" + t->second +
                                     "' has one to impute from");
    return type_means[t->second] = sum / static_cast<double>(n);
  };
  auto feature = [&](const std::string& name) {
    auto v = resolve(name);
    return v ? *v : impute(name);
  };

  Matrix out;
  for (std::size_t i = 0; i < data.instances.size(); ++i) {
    const auto& inst = data.instances[i];
    const Vector a = feature(inst.a);
    const Vector b = feature(inst.b);
    if (i == 0) out.resize(static_cast<Eigen::Index>(data.instances.size()), a.size() + b.size());
    out.row(static_cast<Eigen::Index>(i)) << a.transpose(), b.transpose();
  }
  return out;
}

std::vector<int> stratified_kfold(std::span<const int> labels, std::size_t k, std::uint64_t seed) {
  if (k < 2) fail(ErrorCode::kInvalidArgument, "cross-validation needs at least 2 folds");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  for (const auto& [label, members] : by_class)
    if (members.size() < k)
      fail(ErrorCode::kInvalidArgument, "class " + std::to_string(label) + " has " +
                                            std::to_string(members.size()) + " instances, fewer than " +
                                            std::to_string(k) + " folds");
  std::mt19937_64 rng(seed);
  std::vector<int> fold(labels.size(), 0);
  for (auto& [label, members] : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t j = 0; j < members.size(); ++j) fold[members[j]] = static_cast<int>(j % k);
  }
  return fold;
}

namespace {

void require_both_classes(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size())
    fail(ErrorCode::kInvalidArgument, "scores and labels differ in length");
  bool pos = false, neg = false;
  for (int y : labels) (y == 1 ? pos : neg) = true;
  if (!pos || !neg) fail(ErrorCode::kInvalidArgument, "metrics need both classes in the labels");
}

}  // namespace

double auroc(std::span<const double> scores, std::span<const int> labels) {
  require_both_classes(scores, labels);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto i, auto j) { return scores[i] < scores[j]; });
  double rank_sum = 0;
  double n_pos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t q = i; q < j; ++q)
      if (labels[order[q]] == 1) rank_sum += avg;
    i = j;
  }
  for (int y : labels) n_pos += y == 1;
  const double n_neg = static_cast<double>(labels.size()) - n_pos;
  return (rank_sum - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg);
}

double auprc(std::span<const double> scores, std::span<const int> labels) {
  require_both_classes(scores, labels);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto i, auto j) { return scores[i] > scores[j]; });
  double total_pos = 0;
  for (int y : labels) total_pos += y == 1;
  double tp = 0, fp = 0, prev_recall = 0, area = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] == 1 ? tp : fp) += 1;
      ++j;
    }
    const double recall = tp / total_pos;
    area += (recall - prev_recall) * tp / (tp + fp);
    prev_recall = recall;
    i = j;
  }
  return area;
}

ClassificationMetrics classification_metrics(std::span<const double> scores,
                                             std::span<const int> labels) {
  ClassificationMetrics m;
  m.auroc = auroc(scores, labels);
  m.auprc = auprc(scores, labels);
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= 0.5;
    if (predicted && labels[i] == 1) ++tp;
    if (predicted && labels[i] != 1) ++fp;
    if (!predicted && labels[i] == 1) ++fn;
  }
  m.precision = tp + fp > 0 ? tp / (tp + fp) : 0;
  m.recall = tp + fn > 0 ? tp / (tp + fn) : 0;
  m.f1 = m.precision + m.recall > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0;
  return m;
}

std::string to_string(ClassifierKind kind) {
  return kind == ClassifierKind::kLogistic ? "logistic_regression" : "mlp";
}

ClassifierKind parse_classifier(std::string_view name) {
  if (name == "logistic_regression" || name == "logistic") return ClassifierKind::kLogistic;
  if (name == "mlp") return ClassifierKind::kMlp;
  fail(ErrorCode::kInvalidArgument,
       "unknown classifier '" + std::string(name) + "' (expected logistic_regression or mlp)");
}

namespace {

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(1 + exp(x))
double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace

double logistic_loss_grad(const Matrix& x, std::span<const int> labels,
                          std::span<const double> weights, const Vector& w, double b,
                          double regularization, Vector* grad_w, double* grad_b) {
  const auto n = x.rows();
  if (static_cast<std::size_t>(n) != labels.size() || labels.size() != weights.size())
    fail(ErrorCode::kInvalidArgument, "features, labels and weights differ in length");
  const Vector z = (x * w).array() + b;
  Vector residual(n);
  double loss = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double y = labels[static_cast<std::size_t>(i)] == 1 ? 1.0 : 0.0;
    const double c = weights[static_cast<std::size_t>(i)];
    loss += c * (y * softplus(-z[i]) + (1 - y) * softplus(z[i]));
    residual[i] = c * (sigmoid(z[i]) - y);
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  if (grad_w) *grad_w = inv_n * (x.transpose() * residual) + 2 * regularization * w;
  if (grad_b) *grad_b = inv_n * residual.sum();
  return inv_n * loss + regularization * w.squaredNorm();
}

std::vector<double> balanced_weights(std::span<const int> labels) {
  double pos = 0;
  for (int y : labels) pos += y == 1;
  const double n = static_cast<double>(labels.size());
  const double neg = n - pos;
  if (pos == 0 || neg == 0) fail(ErrorCode::kInvalidArgument, "class weights need both classes");
  std::vector<double> out;
  out.reserve(labels.size());
  for (int y : labels) out.push_back(y == 1 ? n / (2 * pos) : n / (2 * neg));
  return out;
}

Matrix Classifier::standardize(const Matrix& x) const {
  return (x.rowwise() - mean_).array().rowwise() / scale_.array();
}

void Classifier::fit(const Matrix& x_raw, std::span<const int> labels, std::uint64_t seed) {
  if (static_cast<std::size_t>(x_raw.rows()) != labels.size())
    fail(ErrorCode::kInvalidArgument, "features and labels differ in length");
  std::size_t pos = 0;
  for (int y : labels) pos += y == 1;
  if (pos == 0 || pos == labels.size())
    fail(ErrorCode::kInvalidArgument, "training data contains a single class");

  mean_ = x_raw.colwise().mean();
  scale_ = ((x_raw.rowwise() - mean_).array().square().colwise().sum() /
            static_cast<double>(std::max<Eigen::Index>(1, x_raw.rows() - 1)))
               .sqrt();
  for (auto& s : scale_)
    if (!(s > 1e-12)) s = 1.0;
  const Matrix x = standardize(x_raw);
  const double lr = params_.learning_rate;
  const double reg = params_.regularization;

  if (kind_ == ClassifierKind::kLogistic) {
    const auto weights = balanced_weights(labels);
    w_ = Vector::Zero(x.cols());
    b_ = 0;
    Vector gw;
    double gb = 0;
    for (std::size_t it = 0; it < params_.iterations; ++it) {
      logistic_loss_grad(x, labels, weights, w_, b_, reg, &gw, &gb);
      w_ -= lr * gw;
      b_ -= lr * gb;
    }
    return;
  }

  // Undersample the majority class down to the minority count.
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> pos_idx, neg_idx;
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] == 1 ? pos_idx : neg_idx).push_back(i);
  auto& major = pos_idx.size() > neg_idx.size() ? pos_idx : neg_idx;
  const std::size_t keep = std::min(pos_idx.size(), neg_idx.size());
  std::shuffle(major.begin(), major.end(), rng);
  major.resize(keep);
  std::vector<std::size_t> rows(pos_idx);
  rows.insert(rows.end(), neg_idx.begin(), neg_idx.end());
  std::sort(rows.begin(), rows.end());
  Matrix xs(static_cast<Eigen::Index>(rows.size()), x.cols());
  Vector y(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    xs.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
    y[static_cast<Eigen::Index>(i)] = labels[rows[i]] == 1 ? 1.0 : 0.0;
  }

  const auto hidden = static_cast<Eigen::Index>(std::max<std::size_t>(1, params_.hidden));
  w1_ = uniform_fan_in(hidden, x.cols(), x.cols(), rng);
  b1_ = Vector::Zero(hidden);
  w2_ = uniform_fan_in(hidden, 1, hidden, rng).col(0);
  b_ = 0;
  const double inv_n = 1.0 / static_cast<double>(rows.size());
  for (std::size_t it = 0; it < params_.iterations; ++it) {
    const Matrix pre = (xs * w1_.transpose()).rowwise() + b1_.transpose();
    const Matrix act = pre.cwiseMax(0.0);
    const Vector z = (act * w2_).array() + b_;
    Vector dz(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) dz[i] = inv_n * (sigmoid(z[i]) - y[i]);
    const Vector g_w2 = act.transpose() * dz + 2 * reg * w2_;
    const double g_b = dz.sum();
    Matrix d_act = dz * w2_.transpose();
    d_act = d_act.cwiseProduct((pre.array() > 0).cast<double>().matrix());
    const Matrix g_w1 = d_act.transpose() * xs + 2 * reg * w1_;
    const Vector g_b1 = d_act.colwise().sum().transpose();
    w2_ -= lr * g_w2;
    b_ -= lr * g_b;
    w1_ -= lr * g_w1;
    b1_ -= lr * g_b1;
  }
}

std::vector<double> Classifier::predict(const Matrix& x_raw) const {
  if (mean_.size() != x_raw.cols())
    fail(ErrorCode::kInvalidArgument, "classifier is not fitted for this feature width");
  const Matrix x = standardize(x_raw);
  Vector z;
  if (kind_ == ClassifierKind::kLogistic) {
    z = (x * w_).array() + b_;
  } else {
    const Matrix act = ((x * w1_.transpose()).rowwise() + b1_.transpose()).cwiseMax(0.0);
    z = (act * w2_).array() + b_;
  }
  std::vector<double> out(static_cast<std::size_t>(z.size()));
  for (Eigen::Index i = 0; i < z.size(); ++i) out[static_cast<std::size_t>(i)] = sigmoid(z[i]);
  return out;
}

namespace {

Matrix take_rows(const Matrix& x, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

std::vector<int> take(std::span<const int> labels, std::span<const std::size_t> rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(labels[r]);
  return out;
}

ClassifierParams sample_params(ClassifierKind kind, std::mt19937_64& rng) {
  auto log_uniform = [&](double lo, double hi) {
    return std::exp(std::uniform_real_distribution<double>(std::log(lo), std::log(hi))(rng));
  };
  ClassifierParams p;
  p.regularization = log_uniform(1e-5, 1e-1);
  if (kind == ClassifierKind::kLogistic) {
    p.learning_rate = log_uniform(0.05, 2.0);
  } else {
    p.learning_rate = log_uniform(0.01, 0.5);
    static constexpr std::size_t widths[] = {16, 32, 64};
    p.hidden = widths[std::uniform_int_distribution<int>(0, 2)(rng)];
  }
  return p;
}

}  // namespace

TunedClassifier train_classifier(ClassifierKind kind, const Matrix& x, std::span<const int> labels,
                                 std::size_t tuning_budget, std::uint64_t seed) {
  if (static_cast<std::size_t>(x.rows()) != labels.size())
    fail(ErrorCode::kInvalidArgument, "features and labels differ in length");
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] == 1 ? pos : neg).push_back(i);
  if (pos.empty() || neg.empty())
    fail(ErrorCode::kInvalidArgument, "training data contains a single class");

  std::mt19937_64 rng(seed);
  TunedClassifier out;
  ClassifierParams best;
  if (tuning_budget > 0 && pos.size() >= 2 && neg.size() >= 2) {
    std::vector<std::size_t> fit_rows, val_rows;
    for (auto* members : {&pos, &neg}) {
      std::shuffle(members->begin(), members->end(), rng);
      const auto n_val = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(members->size()))));
      val_rows.insert(val_rows.end(), members->begin(), members->begin() + static_cast<long>(n_val));
      fit_rows.insert(fit_rows.end(), members->begin() + static_cast<long>(n_val), members->end());
    }
    std::sort(fit_rows.begin(), fit_rows.end());
    std::sort(val_rows.begin(), val_rows.end());
    const Matrix x_fit = take_rows(x, fit_rows), x_val = take_rows(x, val_rows);
    const auto y_fit = take(labels, fit_rows), y_val = take(labels, val_rows);
    double best_auprc = -1;
    for (std::size_t trial = 0; trial < tuning_budget; ++trial) {
      const ClassifierParams p = sample_params(kind, rng);
      Classifier c(kind, p);
      c.fit(x_fit, y_fit, mix(seed, trial));
      const double score = auprc(c.predict(x_val), y_val);
      if (score > best_auprc) {
        best_auprc = score;
        best = p;
      }
    }
    out.validation_auprc = best_auprc;
    out.trials = tuning_budget;
  }
  out.classifier = Classifier(kind, best);
  out.classifier.fit(x, labels, mix(seed, tuning_budget));
  return out;
}

namespace {

ClassificationMetrics combine(const std::vector<ClassificationMetrics>& folds, bool stddev) {
  auto field = [&](auto member) {
    double mean = 0;
    for (const auto& f : folds) mean += f.*member;
    mean /= static_cast<double>(folds.size());
    if (!stddev) return mean;
    double ss = 0;
    for (const auto& f : folds) ss += (f.*member - mean) * (f.*member - mean);
    return folds.size() > 1 ? std::sqrt(ss / static_cast<double>(folds.size() - 1)) : 0.0;
  };
  ClassificationMetrics m;
  m.auprc = field(&ClassificationMetrics::auprc);
  m.auroc = field(&ClassificationMetrics::auroc);
  m.precision = field(&ClassificationMetrics::precision);
  m.recall = field(&ClassificationMetrics::recall);
  m.f1 = field(&ClassificationMetrics::f1);
  return m;
}

}  // namespace

BenchmarkReport run_benchmark_on(const PairDataset& data,
                                 const std::vector<std::pair<std::string, Matrix>>& features,
                                 std::span<const ClassifierKind> classifiers,
                                 const BenchmarkOptions& options) {
  const auto labels = data.labels();
  const auto fold = stratified_kfold(labels, options.folds, options.seed);
  BenchmarkReport report;
  report.options = options;
  report.positives = data.positives();
  report.negatives = data.instances.size() - report.positives;
  for (const auto& [name, x] : features) {
    if (static_cast<std::size_t>(x.rows()) != labels.size())
      fail(ErrorCode::kInvalidArgument, "feature rows of '" + name + "' do not match the dataset");
    for (ClassifierKind kind : classifiers) {
      BenchmarkEntry entry;
      entry.source = name;
      entry.classifier = kind;
      for (std::size_t f = 0; f < options.folds; ++f) {
        std::vector<std::size_t> train_rows, test_rows;
        for (std::size_t i = 0; i < labels.size(); ++i)
          (static_cast<std::size_t>(fold[i]) == f ? test_rows : train_rows).push_back(i);
        const auto y_train = take(labels, train_rows);
        const auto y_test = take(labels, test_rows);
        const auto tuned = train_classifier(kind, take_rows(x, train_rows), y_train,
                                            options.tuning_budget, mix(options.seed, f));
        entry.folds.push_back(
            classification_metrics(tuned.classifier.predict(take_rows(x, test_rows)), y_test));
      }
      entry.mean = combine(entry.folds, false);
      entry.std = combine(entry.folds, true);
      report.entries.push_back(std::move(entry));
    }
  }
  return report;
}

BenchmarkReport run_benchmark(const BenchmarkPairs& pairs, const KnowledgeGraph& kg,
                              std::span<const FeatureSource> sources,
                              std::span<const ClassifierKind> classifiers,
                              const BenchmarkOptions& options) {
  if (sources.empty()) fail(ErrorCode::kInvalidArgument, "no feature sources given");
  if (classifiers.empty()) fail(ErrorCode::kInvalidArgument, "no classifiers given");
  const PairDataset data = sample_negatives(pairs, kg, options.ratio, options.seed);
  std::vector<std::pair<std::string, Matrix>> features;
  for (const auto& s : sources) features.emplace_back(s.name, featurize(data, kg, s));
  return run_benchmark_on(data, features, classifiers, options);
}

namespace {

nlohmann::ordered_json metrics_json(const ClassificationMetrics& m) {
  return {{"auprc", m.auprc}, {"auroc", m.auroc}, {"precision", m.precision},
          {"recall", m.recall}, {"f1", m.f1}};
}

}  // namespace

std::string to_json(const BenchmarkReport& report) {
  nlohmann::ordered_json j;
  j["ratio"] = report.options.ratio;
  j["folds"] = report.options.folds;
  j["tuning_budget"] = report.options.tuning_budget;
  j["seed"] = report.options.seed;
  j["positives"] = report.positives;
  j["negatives"] = report.negatives;
  auto& entries = j["results"] = nlohmann::ordered_json::array();
  for (const auto& e : report.entries) {
    nlohmann::ordered_json row;
    row["source"] = e.source;
    row["classifier"] = to_string(e.classifier);
    auto& folds = row["folds"] = nlohmann::ordered_json::array();
    for (const auto& f : e.folds) folds.push_back(metrics_json(f));
    row["mean"] = metrics_json(e.mean);
    row["std"] = metrics_json(e.std);
    entries.push_back(std::move(row));
  }
  return j.dump(2);
}

std::string to_summary_tsv(const BenchmarkReport& report) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(3);
  out << "source\tclassifier\tauprc\tauroc\tprecision\trecall\tf1\n";
  for (const auto& e : report.entries) {
    out << e.source << '\t' << to_string(e.classifier);
    const std::pair<double, double> cells[] = {{e.mean.auprc, e.std.auprc},
                                               {e.mean.auroc, e.std.auroc},
                                               {e.mean.precision, e.std.precision},
                                               {e.mean.recall, e.std.recall},
                                               {e.mean.f1, e.std.f1}};
    for (const auto& [m, s] : cells) out << '\t' << m << " (" << s << ")";
    out << '\n';
  }
  return out.str();
}

}  // namespace mmkg
