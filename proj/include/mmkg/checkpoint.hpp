#pragma once

#include <filesystem>
#include <string>

#include "mmkg/model.hpp"

namespace mmkg {

// A checkpoint is a directory: manifest.json (model spec, vocabularies,
// parameter table, free-form run info), attributes.tsv, and one raw
// little-endian float64 row-major blob per parameter group under params/.
struct Checkpoint {
  Model model;
  std::string info_json = "{}";  // training config, step, history, ...
};

void save_checkpoint(const Model& model, const std::filesystem::path& dir,
                     const std::string& info_json = "{}");
Checkpoint load_checkpoint(const std::filesystem::path& dir);

std::string spec_to_json(const ModelSpec& spec);
ModelSpec spec_from_json(const std::string& json);

}  // namespace mmkg
