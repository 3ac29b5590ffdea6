#pragma once

#include <map>
#include <string>
#include <vector>

#include "riskcast/ablation.hpp"
#include "riskcast/scene.hpp"
#include "riskcast/trainer.hpp"

namespace riskcast::cli {

inline constexpr const char* kToolVersion = "riskcast 1.0.0";
inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitUsage = 2;

// Flat key = value configuration with a mandatory schema_version. Unknown
// keys are errors. Environment variables with the RISKCAST_ prefix (key
// uppercased, dots replaced by underscores) override file values; command
// line flags override both.
struct FileConfig {
  scene::ScenarioConfig scenario;
  train::TrainConfig train;
  // Grid description for the ablate command.
  std::string grid_family;                            // modules|smooth|decay|beta|collision_mode
  std::vector<double> grid_betas;
  std::vector<std::vector<int>> grid_smooth_sets;
  std::vector<std::pair<std::optional<double>, std::optional<double>>> grid_decay_pairs;
};

FileConfig parse_config_file(const std::string& path);
// Applies one key/value pair; throws InputError for unknown keys/bad values.
void apply_config_entry(FileConfig& cfg, const std::string& key, const std::string& value);

// Entry point used by main() and by in-process tests. Returns an exit code;
// never throws.
int run(const std::vector<std::string>& args);

}  // namespace riskcast::cli
