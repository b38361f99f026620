#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mmkg/benchmark.hpp"
#include "mmkg/graph.hpp"
#include "mmkg/model.hpp"
#include "mmkg/training.hpp"

namespace mmkg {

// Sectioned key/value run configuration (INI syntax). Every key must belong
// to the known schema; [modalities] maps modality names to encoder kinds.
class RunConfig {
 public:
  using Section = std::map<std::string, std::string>;

  static RunConfig load(const std::filesystem::path& path);
  static RunConfig parse(const std::string& text, const std::string& origin = "<config>");

  // "section.key" = value; unknown keys are kConfig errors.
  void set(const std::string& dotted_key, const std::string& value);
  void set(const std::string& section, const std::string& key, const std::string& value);
  bool has(const std::string& section, const std::string& key) const;
  std::optional<std::string> get(const std::string& section, const std::string& key) const;
  const std::map<std::string, Section>& sections() const { return values_; }

  // Throws kConfig listing every unknown key and malformed value.
  void validate() const;
  std::vector<std::string> problems() const;

  std::string to_ini() const;

 private:
  std::map<std::string, Section> values_;
};

bool known_config_key(const std::string& section, const std::string& key);

// Relative paths resolve against $MMKG_DATA_ROOT when it is set.
std::filesystem::path resolve_data_path(const std::string& value);

// Typed views over a validated configuration.
std::uint64_t config_seed(const RunConfig& config);
bool config_flag(const RunConfig& config, const std::string& section, const std::string& key,
                 bool fallback);
std::size_t config_size(const RunConfig& config, const std::string& section,
                        const std::string& key, std::size_t fallback);
// Comma-separated items, trimmed; empty when the key is absent.
std::vector<std::string> config_list(const RunConfig& config, const std::string& section,
                                     const std::string& key);
ModelSpec model_spec(const RunConfig& config);
// Keys of `section`, falling back to [train], then to the defaults.
TrainConfig train_config(const RunConfig& config, const std::string& section = "train");
SplitRatios split_ratios(const RunConfig& config);
HpoSpace hpo_space(const RunConfig& config, ScorerKind scorer);

void write_train_config(RunConfig& config, const std::string& section, const TrainConfig& train);

}  // namespace mmkg
