#pragma once

#include <optional>
#include <string>
#include <vector>

#include "riskcast/trainer.hpp"

namespace riskcast::train {

// One named experiment: a complete config (base + overrides already applied).
struct Experiment {
  std::string name;
  TrainConfig config;
};

struct AblationGrid {
  std::vector<Experiment> experiments;
  // When set, scatter rows (per half-epoch AP/mTTA points) are collected for
  // every experiment (the 2D-vs-3D protocol).
  bool collect_scatter = false;
  // When nonempty, summary mean/variance rows are appended per group label
  // (the beta-sweep layout).
  std::vector<std::string> variance_groups;
};

struct AblationRow {
  std::string name;
  std::string group;
  bool failed = false;
  std::string error;
  double ap = 0.0;
  double mtta = 0.0;
  double tta_at_r80 = 0.0;  // 0 when unreachable
  bool tta_r80_unreachable = false;
  double final_ap = 0.0;
};

struct ScatterPoint {
  std::string name;
  double epoch = 0.0;
  double ap = 0.0;
  double mtta = 0.0;
};

struct AblationResult {
  std::vector<AblationRow> rows;
  std::vector<ScatterPoint> scatter;
  // group -> (mean_ap, var_ap, mean_mtta, var_mtta) over final-epoch metrics
  struct GroupStats {
    std::string group;
    double mean_ap = 0.0, var_ap = 0.0;
    double mean_mtta = 0.0, var_mtta = 0.0;
  };
  std::vector<GroupStats> group_stats;

  std::string rows_csv() const;
  std::string rows_json() const;
  std::string scatter_csv() const;
};

// Runs every experiment in isolation; individual failures are recorded and
// the grid continues. Results depend only on each experiment's own config.
AblationResult run_ablation(const AblationGrid& grid,
                            const std::vector<scene::VideoSample>& train_split,
                            const std::vector<scene::VideoSample>& test_split);

// Grid builders mirroring the paper-style studies.
AblationGrid module_toggle_grid(const TrainConfig& base);  // original + six single-module drops
AblationGrid smooth_field_grid(const TrainConfig& base, const std::vector<std::vector<int>>& sets);
// Entries use nullopt for a disabled coefficient ("-" rows).
AblationGrid decay_grid(const TrainConfig& base,
                        const std::vector<std::pair<std::optional<double>, std::optional<double>>>& pairs);
AblationGrid beta_sweep_grid(const TrainConfig& base, const std::vector<double>& betas);
AblationGrid collision_mode_grid(const TrainConfig& base);

}  // namespace riskcast::train
