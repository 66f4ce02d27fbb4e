#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "tda/benchmark.hpp"

namespace tda::cli {

namespace fs = std::filesystem;

/// Parsed form of the evaluate --config file.
struct RunConfig {
  std::vector<fs::path> bundles;
  std::vector<GenerateConfig> generate;  // materialized under <out>/bundles/
  std::vector<ExplainerConfig> explainers;
  std::size_t repeat = 1;
  std::uint64_t seed_stride = 1;
  std::vector<std::string> formats = {"json", "csv"};

  void validate() const;
};

RunConfig run_config_from_json(const Json& j);
Json to_json(const RunConfig& cfg);

struct EvaluateOptions {
  std::vector<fs::path> bundles;
  std::optional<fs::path> config;
  std::vector<fs::path> explainers;    // single-explainer JSON files
  std::optional<fs::path> attributions;
  fs::path out;
  std::optional<std::size_t> repeat;
  std::optional<std::uint64_t> seed;
};

int cmd_generate(const fs::path& config, const fs::path& out, std::optional<std::uint64_t> seed,
                 std::ostream& log);
int cmd_evaluate(const EvaluateOptions& opts, std::ostream& log);
int cmd_attribute(const fs::path& bundle, const fs::path& explainer, const fs::path& out,
                  std::optional<std::uint64_t> seed, std::ostream& log);

/// Full command line entry point; returns the process exit status.
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace tda::cli
