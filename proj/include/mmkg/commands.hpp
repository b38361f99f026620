#pragma once

#include <string>

#include "mmkg/config.hpp"

namespace mmkg {

// Pipeline commands. Each one validates the configuration, writes its
// artifacts, a JSON-lines log (log.jsonl) and resolved_config.ini under
// run.out, and returns a JSON summary.
std::string cmd_split(const RunConfig& config);
std::string cmd_train(const RunConfig& config);
std::string cmd_pretrain(const RunConfig& config);
std::string cmd_hpo(const RunConfig& config);
std::string cmd_evaluate(const RunConfig& config);
std::string cmd_analyze_degree(const RunConfig& config);
std::string cmd_benchmark(const RunConfig& config);

}  // namespace mmkg
