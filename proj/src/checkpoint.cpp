#include "mmkg/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mmkg/error.hpp"

namespace mmkg {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr int kFormatVersion = 1;

std::uint64_t byteswap64(std::uint64_t v) {
  std::uint64_t out = 0;
  for (int i = 0; i < 8; ++i) out = (out << 8) | ((v >> (8 * i)) & 0xff);
  return out;
}

void write_blob(const Matrix& m, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(m.data()[i]);
    if constexpr (std::endian::native == std::endian::big) bits = byteswap64(bits);
    out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
  }
  if (!out) fail(ErrorCode::kIo, "failed writing " + path.string());
}

Matrix read_blob(const fs::path& path, Eigen::Index rows, Eigen::Index cols) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot read " + path.string());
  const auto expected = static_cast<std::uintmax_t>(rows * cols) * 8;
  if (fs::file_size(path) != expected)
    fail(ErrorCode::kParse, path.string() + ": expected " + std::to_string(expected) +
                                " bytes for a " + std::to_string(rows) + "x" +
                                std::to_string(cols) + " block, found " +
                                std::to_string(fs::file_size(path)));
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    std::uint64_t bits = 0;
    in.read(reinterpret_cast<char*>(&bits), sizeof bits);
    if constexpr (std::endian::native == std::endian::big) bits = byteswap64(bits);
    m.data()[i] = std::bit_cast<double>(bits);
  }
  if (!in) fail(ErrorCode::kIo, "failed reading " + path.string());
  return m;
}

ordered_json spec_json(const ModelSpec& s) {
  ordered_json j;
  j["scorer"] = to_string(s.scorer);
  j["dim"] = s.dim;
  j["token_dim"] = s.token_dim;
  j["text_layers"] = s.text_layers;
  j["text_max_len"] = s.text_max_len;
  j["ffn_hidden"] = s.ffn_hidden;
  j["use_attributes"] = s.use_attributes;
  j["seed"] = s.seed;
  auto& mods = j["modalities"] = ordered_json::array();
  for (const auto& m : s.modalities) mods.push_back({{"name", m.name}, {"encoder", to_string(m.encoder)}});
  return j;
}

ModelSpec spec_parse(const ordered_json& j) {
  ModelSpec s;
  s.scorer = parse_scorer(j.at("scorer").get<std::string>());
  s.dim = j.at("dim").get<std::size_t>();
  s.token_dim = j.at("token_dim").get<std::size_t>();
  s.text_layers = j.at("text_layers").get<std::size_t>();
  s.text_max_len = j.at("text_max_len").get<std::size_t>();
  s.ffn_hidden = j.at("ffn_hidden").get<std::size_t>();
  s.use_attributes = j.at("use_attributes").get<bool>();
  s.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& m : j.at("modalities"))
    s.modalities.push_back({m.at("name").get<std::string>(),
                            parse_encoder(m.at("encoder").get<std::string>())});
  return s;
}

std::string tokenizer_name(Tokenizer t) { return t == Tokenizer::kWords ? "words" : "characters"; }

Tokenizer parse_tokenizer(const std::string& name) {
  if (name == "words") return Tokenizer::kWords;
  if (name == "characters") return Tokenizer::kCharacters;
  fail(ErrorCode::kParse, "unknown tokenizer '" + name + "' in checkpoint");
}

}  // namespace

std::string spec_to_json(const ModelSpec& spec) { return spec_json(spec).dump(2); }

ModelSpec spec_from_json(const std::string& json) {
  try {
    return spec_parse(ordered_json::parse(json));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, std::string("bad model spec: ") + e.what());
  }
}

void save_checkpoint(const Model& model, const fs::path& dir, const std::string& info_json) {
  std::error_code ec;
  fs::create_directories(dir / "params", ec);
  if (ec) fail(ErrorCode::kIo, "cannot create " + (dir / "params").string() + ": " + ec.message());

  ordered_json m;
  m["format"] = "mmkg-checkpoint";
  m["version"] = kFormatVersion;
  m["spec"] = spec_json(model.spec());
  try {
    m["info"] = ordered_json::parse(info_json);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kInvalidArgument, std::string("run info is not valid JSON: ") + e.what());
  }
  m["entities"] = model.entities().names();
  m["entity_types"] = model.entity_types();
  m["relations"] = model.relations().names();
  auto& vocabs = m["vocabularies"] = ordered_json::array();
  for (const auto& enc : model.encoders())
    vocabs.push_back({{"modality", enc.modality},
                      {"tokenizer", tokenizer_name(enc.vocab.tokenizer())},
                      {"tokens", enc.vocab.tokens()}});

  std::ofstream attrs(dir / "attributes.tsv");
  if (!attrs) fail(ErrorCode::kIo, "cannot write " + (dir / "attributes.tsv").string());
  for (EntityIndex e = 0; e < model.num_entities(); ++e) {
    const auto& rec = model.attribute(e);
    if (!rec) continue;
    attrs << model.entities().name(e) << '\t' << model.spec().modalities[rec->modality - 1].name
          << '\t' << rec->payload << '\n';
  }

  auto& table = m["parameters"] = ordered_json::array();
  std::size_t i = 0;
  for (const auto* p : model.parameters()) {
    std::ostringstream file;
    file << "params/" << i++ << ".f64";
    write_blob(p->value, dir / file.str());
    table.push_back({{"name", p->name},
                     {"rows", p->value.rows()},
                     {"cols", p->value.cols()},
                     {"trainable", p->trainable},
                     {"file", file.str()}});
  }

  std::ofstream out(dir / "manifest.json");
  if (!out) fail(ErrorCode::kIo, "cannot write " + (dir / "manifest.json").string());
  out << m.dump(2) << '\n';
  if (!out) fail(ErrorCode::kIo, "failed writing " + (dir / "manifest.json").string());
}

Checkpoint load_checkpoint(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) fail(ErrorCode::kIo, "cannot read " + manifest_path.string());
  ordered_json m;
  try {
    m = ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, manifest_path.string() + ": " + e.what());
  }

  try {
    if (m.at("format") != "mmkg-checkpoint" || m.at("version") != kFormatVersion)
      fail(ErrorCode::kParse, manifest_path.string() + ": not a supported checkpoint");
    ModelSpec spec = spec_parse(m.at("spec"));

    Vocabulary entities, relations;
    for (const auto& name : m.at("entities")) entities.intern(name.get<std::string>());
    for (const auto& name : m.at("relations")) relations.intern(name.get<std::string>());
    auto types = m.at("entity_types").get<std::vector<std::string>>();

    std::vector<TokenVocabulary> vocabularies;
    for (const auto& v : m.at("vocabularies"))
      vocabularies.emplace_back(v.at("tokens").get<std::vector<std::string>>(),
                                parse_tokenizer(v.at("tokenizer").get<std::string>()));

    std::vector<std::optional<AttributeRecord>> attributes(entities.size());
    std::ifstream attrs(dir / "attributes.tsv");
    if (!attrs) fail(ErrorCode::kIo, "cannot read " + (dir / "attributes.tsv").string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(attrs, line)) {
      ++lineno;
      const auto a = line.find('\t');
      const auto b = a == std::string::npos ? a : line.find('\t', a + 1);
      if (b == std::string::npos)
        fail(ErrorCode::kParse, (dir / "attributes.tsv").string() + ":" + std::to_string(lineno) +
                                    ": expected entity, modality and payload");
      const auto e = entities.at(line.substr(0, a));
      const auto modality = line.substr(a + 1, b - a - 1);
      std::size_t k = 0;
      while (k < spec.modalities.size() && spec.modalities[k].name != modality) ++k;
      if (k == spec.modalities.size())
        fail(ErrorCode::kParse, "checkpoint attribute uses undeclared modality '" + modality + "'");
      attributes[e] = AttributeRecord{static_cast<ModalityId>(k + 1), line.substr(b + 1)};
    }

    Model model = Model::from_parts(std::move(spec), std::move(entities), std::move(relations),
                                    std::move(types), std::move(attributes),
                                    std::move(vocabularies));
    const auto& table = m.at("parameters");
    auto params = model.parameters();
    if (table.size() != params.size())
      fail(ErrorCode::kParse, "checkpoint holds " + std::to_string(table.size()) +
                                  " parameter groups, the model expects " +
                                  std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& entry = table[i];
      const auto name = entry.at("name").get<std::string>();
      if (name != params[i]->name)
        fail(ErrorCode::kParse, "checkpoint parameter '" + name + "' where '" + params[i]->name +
                                    "' was expected");
      const auto rows = entry.at("rows").get<Eigen::Index>();
      const auto cols = entry.at("cols").get<Eigen::Index>();
      if (rows != params[i]->value.rows() || cols != params[i]->value.cols())
        fail(ErrorCode::kParse, "shape mismatch for parameter '" + name + "'");
      params[i]->value = read_blob(dir / entry.at("file").get<std::string>(), rows, cols);
      params[i]->zero_grad();
    }
    return {std::move(model), m.at("info").dump(2)};
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kParse, manifest_path.string() + ": " + e.what());
  }
}

}  // namespace mmkg
