#include "mmkg/config.hpp"

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "mmkg/error.hpp"
#include "mmkg/evaluation.hpp"

namespace mmkg {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::optional<double> to_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(s.c_str(), &end);
  if (errno || *end != '\0') return std::nullopt;
  return v;
}

std::optional<std::uint64_t> to_u64(const std::string& s) {
  if (s.empty() || s[0] == '-' || s[0] == '+') return std::nullopt;
  char* end = nullptr;
  errno = 0;
  const auto v = std::strtoull(s.c_str(), &end, 10);
  if (errno || *end != '\0') return std::nullopt;
  return v;
}

std::optional<bool> to_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  return std::nullopt;
}

// Returns an error description, or "" when the value is acceptable.
using Check = std::function<std::string(const std::string&)>;

Check any() {
  return [](const std::string&) { return std::string(); };
}
Check non_empty() {
  return [](const std::string& v) { return v.empty() ? std::string("expected a value") : ""; };
}
Check non_negative() {
  return [](const std::string& v) {
    auto d = to_double(v);
    return d && std::isfinite(*d) && *d >= 0 ? std::string() : "expected a non-negative number";
  };
}
Check positive() {
  return [](const std::string& v) {
    auto d = to_double(v);
    return d && std::isfinite(*d) && *d > 0 ? std::string() : "expected a positive number";
  };
}
Check count(bool allow_zero) {
  return [allow_zero](const std::string& v) {
    auto n = to_u64(v);
    if (!n) return std::string("expected a non-negative integer");
    if (!allow_zero && *n == 0) return std::string("expected a positive integer");
    return std::string();
  };
}
Check boolean() {
  return [](const std::string& v) { return to_bool(v) ? std::string() : "expected true or false"; };
}
template <typename Parse>
Check parsed(Parse parse) {
  return [parse](const std::string& v) {
    try {
      parse(v);
      return std::string();
    } catch (const Error& e) {
      return std::string(e.what());
    }
  };
}
Check list_of(Check item) {
  return [item](const std::string& v) {
    auto items = split_list(v);
    if (items.empty()) return std::string("expected a comma-separated list");
    for (const auto& i : items) {
      auto err = item(i);
      if (!err.empty()) return "'" + i + "': " + err;
    }
    return std::string();
  };
}

const std::map<std::string, std::map<std::string, Check>>& schema() {
  static const auto table = [] {
    std::map<std::string, std::map<std::string, Check>> t;
    std::map<std::string, Check> train{
        {"learning_rate", non_negative()},
        {"regularization", non_negative()},
        {"batch_size", count(false)},
        {"loss", parsed([](const std::string& v) { parse_loss(v); })},
        {"margin", non_negative()},
        {"negatives", count(false)},
        {"epochs", count(true)},
        {"eval_interval", count(true)},
        {"patience", count(true)},
        {"optimizer", parsed([](const std::string& v) { parse_optimizer(v); })},
        {"corrupt", parsed([](const std::string& v) { parse_corrupt_side(v); })},
    };
    t["data"] = {{"train", non_empty()},  {"valid", non_empty()},
                    {"test", non_empty()},   {"triples", non_empty()},
                    {"types", non_empty()},  {"attributes", non_empty()},
                    {"benchmarks", non_empty()}};
    t["model"] = {{"scorer", parsed([](const std::string& v) { parse_scorer(v); })},
                     {"dim", count(false)},
                     {"token_dim", count(true)},
                     {"text_layers", count(false)},
                     {"text_max_len", count(false)},
                     {"ffn_hidden", count(true)},
                     {"use_attributes", boolean()}};
    t["train"] = train;
    t["stage1"] = train;
    t["stage2"] = train;
    t["pretrain"] = {{"compare_scratch", boolean()}};
    t["hpo"] = {{"budget", count(false)},
                   {"lr_min", positive()},
                   {"lr_max", positive()},
                   {"reg_min", positive()},
                   {"reg_max", positive()},
                   {"batch_sizes", list_of(count(false))}};
    t["split"] = {{"ratios", list_of(non_negative())}};
    t["evaluate"] = {{"checkpoint", non_empty()},
                        {"triples", non_empty()},
                        {"mode", parsed([](const std::string& v) { parse_rank_mode(v); })},
                        {"filter", list_of(any())}};
    t["analyze"] = {{"checkpoint_a", non_empty()},
                       {"checkpoint_b", non_empty()},
                       {"triples", non_empty()},
                       {"type", non_empty()}};
    t["benchmark"] = {{"pairs", non_empty()},
                         {"sources", list_of(any())},
                         {"classifiers", list_of(parsed([](const std::string& v) {
                            parse_classifier(v);
                          }))},
                         {"ratio", count(true)},
                         {"folds", count(false)},
                         {"tuning_budget", count(true)},
                         {"feature_dim", count(false)}};
    t["run"] = {{"seed", count(true)}, {"out", non_empty()}};
    return t;
  }();
  return table;
}

const Check* find_check(const std::string& section, const std::string& key) {
  const auto& s = schema();
  auto sec = s.find(section);
  if (sec == s.end()) return nullptr;
  auto k = sec->second.find(key);
  return k == sec->second.end() ? nullptr : &k->second;
}

[[noreturn]] void bad_value(const std::string& section, const std::string& key,
                            const std::string& what) {
  fail(ErrorCode::kConfig, section + "." + key + ": " + what);
}

}  // namespace

bool known_config_key(const std::string& section, const std::string& key) {
  if (section == "modalities") return !key.empty();
  return find_check(section, key) != nullptr;
}

RunConfig RunConfig::parse(const std::string& text, const std::string& origin) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    fail(ErrorCode::kParse, origin + ":" + std::to_string(e.line()) + ": " + e.message());
  }
  RunConfig config;
  std::vector<std::string> loose;
  for (const auto& [name, node] : tree) {
    if (node.empty() && !node.data().empty()) {
      loose.push_back(name);
      continue;
    }
    auto& section = config.values_[name];
    for (const auto& [key, value] : node) section[key] = trim(value.data());
  }
  auto problems = config.problems();
  for (const auto& key : loose) problems.insert(problems.begin(), key + ": key outside any section");
  if (!problems.empty()) {
    std::string msg = origin + ": invalid configuration:";
    for (const auto& p : problems) msg += "\n  " + p;
    fail(ErrorCode::kConfig, msg);
  }
  return config;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open config " + path.string());
  std::stringstream text;
  text << in.rdbuf();
  return parse(text.str(), path.string());
}

void RunConfig::set(const std::string& dotted_key, const std::string& value) {
  const auto dot = dotted_key.find('.');
  if (dot == std::string::npos)
    fail(ErrorCode::kConfig, "'" + dotted_key + "': expected section.key");
  set(dotted_key.substr(0, dot), dotted_key.substr(dot + 1), value);
}

void RunConfig::set(const std::string& section, const std::string& key, const std::string& value) {
  if (!known_config_key(section, key))
    fail(ErrorCode::kConfig, "unknown configuration key " + section + "." + key);
  values_[section][key] = trim(value);
}

bool RunConfig::has(const std::string& section, const std::string& key) const {
  return get(section, key).has_value();
}

std::optional<std::string> RunConfig::get(const std::string& section, const std::string& key) const {
  auto s = values_.find(section);
  if (s == values_.end()) return std::nullopt;
  auto k = s->second.find(key);
  if (k == s->second.end()) return std::nullopt;
  return k->second;
}

std::vector<std::string> RunConfig::problems() const {
  std::vector<std::string> out;
  for (const auto& [section, keys] : values_) {
    const bool modalities = section == "modalities";
    if (!modalities && !schema().count(section)) {
      for (const auto& [key, value] : keys) out.push_back(section + "." + key + ": unknown section");
      if (keys.empty()) out.push_back("[" + section + "]: unknown section");
      continue;
    }
    for (const auto& [key, value] : keys) {
      if (modalities) {
        try {
          parse_encoder(value);
        } catch (const Error& e) {
          out.push_back(section + "." + key + ": " + e.what());
        }
        continue;
      }
      const Check* check = find_check(section, key);
      if (!check) {
        out.push_back(section + "." + key + ": unknown key");
        continue;
      }
      const auto err = (*check)(value);
      if (!err.empty()) out.push_back(section + "." + key + ": " + err);
    }
  }
  if (out.empty()) {
    if (auto r = get("split", "ratios"); r && split_list(*r).size() != 3)
      out.push_back("split.ratios: expected three values (train, valid, test)");
    const auto scorer = parse_scorer(get("model", "scorer").value_or("rotate"));
    for (const char* section : {"train", "stage1", "stage2"}) {
      const auto loss = get(section, "loss");
      if (loss && scorer == ScorerKind::kTransE && parse_loss(*loss) != LossKind::kMargin)
        out.push_back(std::string(section) + ".loss: '" + *loss +
                      "' is not used with transe (margin only)");
    }
    auto lo = get("hpo", "lr_min"), hi = get("hpo", "lr_max");
    if (lo && hi && *to_double(*lo) > *to_double(*hi)) out.push_back("hpo.lr_min: exceeds hpo.lr_max");
    lo = get("hpo", "reg_min");
    hi = get("hpo", "reg_max");
    if (lo && hi && *to_double(*lo) > *to_double(*hi))
      out.push_back("hpo.reg_min: exceeds hpo.reg_max");
  }
  return out;
}

void RunConfig::validate() const {
  const auto list = problems();
  if (list.empty()) return;
  std::string msg = "invalid configuration:";
  for (const auto& p : list) msg += "\n  " + p;
  fail(ErrorCode::kConfig, msg);
}

std::string RunConfig::to_ini() const {
  std::ostringstream out;
  bool first = true;
  for (const auto& [section, keys] : values_) {
    if (!first) out << '\n';
    first = false;
    out << '[' << section << "]\n";
    for (const auto& [key, value] : keys) out << key << " = " << value << '\n';
  }
  return out.str();
}

std::filesystem::path resolve_data_path(const std::string& value) {
  std::filesystem::path p(value);
  if (p.is_relative()) {
    if (const char* root = std::getenv("MMKG_DATA_ROOT"); root && *root)
      return std::filesystem::path(root) / p;
  }
  return p;
}

namespace {

template <typename T, typename Parse>
T typed(const RunConfig& c, const std::string& section, const std::string& key, T fallback,
        Parse parse) {
  auto v = c.get(section, key);
  if (!v) return fallback;
  auto parsed_value = parse(*v);
  if (!parsed_value) bad_value(section, key, "malformed value '" + *v + "'");
  return static_cast<T>(*parsed_value);
}

double get_double(const RunConfig& c, const std::string& s, const std::string& k, double d) {
  return typed<double>(c, s, k, d, to_double);
}
std::size_t get_size(const RunConfig& c, const std::string& s, const std::string& k, std::size_t d) {
  return typed<std::size_t>(c, s, k, d, to_u64);
}
bool get_bool(const RunConfig& c, const std::string& s, const std::string& k, bool d) {
  return typed<bool>(c, s, k, d, to_bool);
}

}  // namespace

std::uint64_t config_seed(const RunConfig& config) {
  return typed<std::uint64_t>(config, "run", "seed", 0, to_u64);
}

bool config_flag(const RunConfig& c, const std::string& section, const std::string& key,
                 bool fallback) {
  return get_bool(c, section, key, fallback);
}

std::size_t config_size(const RunConfig& c, const std::string& section, const std::string& key,
                        std::size_t fallback) {
  return get_size(c, section, key, fallback);
}

std::vector<std::string> config_list(const RunConfig& c, const std::string& section,
                                     const std::string& key) {
  auto v = c.get(section, key);
  return v ? split_list(*v) : std::vector<std::string>{};
}

ModelSpec model_spec(const RunConfig& c) {
  ModelSpec s;
  s.scorer = parse_scorer(c.get("model", "scorer").value_or("rotate"));
  s.dim = get_size(c, "model", "dim", s.dim);
  s.token_dim = get_size(c, "model", "token_dim", s.token_dim);
  s.text_layers = get_size(c, "model", "text_layers", s.text_layers);
  s.text_max_len = get_size(c, "model", "text_max_len", s.text_max_len);
  s.ffn_hidden = get_size(c, "model", "ffn_hidden", s.ffn_hidden);
  s.use_attributes = get_bool(c, "model", "use_attributes", s.use_attributes);
  s.seed = config_seed(c);
  auto mods = c.sections().find("modalities");
  if (mods != c.sections().end())
    for (const auto& [name, encoder] : mods->second) s.modalities.push_back({name, parse_encoder(encoder)});
  return s;
}

TrainConfig train_config(const RunConfig& c, const std::string& section) {
  auto value = [&](const std::string& key) -> std::optional<std::string> {
    if (auto v = c.get(section, key)) return v;
    return c.get("train", key);
  };
  auto number = [&](const std::string& key, double fallback) {
    auto v = value(key);
    if (!v) return fallback;
    auto d = to_double(*v);
    if (!d) bad_value(section, key, "malformed value '" + *v + "'");
    return *d;
  };
  auto size = [&](const std::string& key, std::size_t fallback) {
    auto v = value(key);
    if (!v) return fallback;
    auto n = to_u64(*v);
    if (!n) bad_value(section, key, "malformed value '" + *v + "'");
    return static_cast<std::size_t>(*n);
  };
  TrainConfig t;
  t.learning_rate = number("learning_rate", t.learning_rate);
  t.regularization = number("regularization", t.regularization);
  t.batch_size = size("batch_size", t.batch_size);
  t.margin = number("margin", t.margin);
  t.negatives = size("negatives", t.negatives);
  t.epochs = size("epochs", t.epochs);
  t.eval_interval = size("eval_interval", t.eval_interval);
  t.patience = size("patience", t.patience);
  if (auto v = value("loss")) t.loss = parse_loss(*v);
  if (auto v = value("optimizer")) t.optimizer = parse_optimizer(*v);
  if (auto v = value("corrupt")) t.corrupt = parse_corrupt_side(*v);
  t.seed = config_seed(c);
  return t;
}

SplitRatios split_ratios(const RunConfig& c) {
  SplitRatios r;
  if (auto v = c.get("split", "ratios")) {
    const auto items = split_list(*v);
    if (items.size() != 3) bad_value("split", "ratios", "expected three values (train, valid, test)");
    r.train = *to_double(items[0]);
    r.valid = *to_double(items[1]);
    r.test = *to_double(items[2]);
  }
  validate_ratios(r);
  return r;
}

HpoSpace hpo_space(const RunConfig& c, ScorerKind scorer) {
  HpoSpace s;
  s.scorer = scorer;
  s.learning_rate_min = get_double(c, "hpo", "lr_min", s.learning_rate_min);
  s.learning_rate_max = get_double(c, "hpo", "lr_max", s.learning_rate_max);
  s.regularization_min = get_double(c, "hpo", "reg_min", s.regularization_min);
  s.regularization_max = get_double(c, "hpo", "reg_max", s.regularization_max);
  if (auto v = c.get("hpo", "batch_sizes")) {
    s.batch_sizes.clear();
    for (const auto& item : split_list(*v)) s.batch_sizes.push_back(*to_u64(item));
  }
  return s;
}

void write_train_config(RunConfig& c, const std::string& section, const TrainConfig& t) {
  auto num = [](double v) {
    std::ostringstream out;
    out.precision(17);
    out << v;
    return out.str();
  };
  c.set(section, "learning_rate", num(t.learning_rate));
  c.set(section, "regularization", num(t.regularization));
  c.set(section, "batch_size", std::to_string(t.batch_size));
  c.set(section, "loss", to_string(t.loss));
  c.set(section, "margin", num(t.margin));
  c.set(section, "negatives", std::to_string(t.negatives));
  c.set(section, "epochs", std::to_string(t.epochs));
  c.set(section, "eval_interval", std::to_string(t.eval_interval));
  c.set(section, "patience", std::to_string(t.patience));
  c.set(section, "optimizer", to_string(t.optimizer));
  c.set(section, "corrupt", to_string(t.corrupt));
}

}  // namespace mmkg
