#include "riskcast/ablation.hpp"

#include <cmath>
#include <sstream>

#include "json.hpp"

namespace riskcast::train {

namespace {

void stats_of(const std::vector<double>& xs, double& mean, double& var) {
  mean = 0.0;
  var = 0.0;
  if (xs.empty()) return;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= static_cast<double>(xs.size());
}

}  // namespace

AblationResult run_ablation(const AblationGrid& grid,
                            const std::vector<scene::VideoSample>& train_split,
                            const std::vector<scene::VideoSample>& test_split) {
  AblationResult res;
  for (const auto& exp : grid.experiments) {
    AblationRow row;
    row.name = exp.name;
    const auto colon = exp.name.find(':');
    row.group = colon == std::string::npos ? exp.name : exp.name.substr(0, colon);
    try {
      TrainResult tr = train(train_split, test_split, exp.config);
      row.ap = tr.best_ap;
      row.mtta = tr.best_mtta;
      row.final_ap = tr.evals.empty() ? 0.0 : tr.evals.back().report.ap;
      // TTA@R80 at the best-AP eval point.
      double best = -1.0;
      for (const auto& pt : tr.evals) {
        if (pt.report.ap > best) {
          best = pt.report.ap;
          if (pt.report.tta_at_r80) {
            row.tta_at_r80 = *pt.report.tta_at_r80;
            row.tta_r80_unreachable = false;
          } else {
            row.tta_at_r80 = 0.0;
            row.tta_r80_unreachable = true;
          }
        }
      }
      if (grid.collect_scatter) {
        for (const auto& pt : tr.evals)
          res.scatter.push_back(ScatterPoint{exp.name, pt.epoch, pt.report.ap, pt.report.mtta});
      }
    } catch (const std::exception& e) {
      row.failed = true;
      row.error = e.what();
    }
    res.rows.push_back(std::move(row));
  }

  for (const auto& group : grid.variance_groups) {
    std::vector<double> aps, mttas;
    for (const auto& row : res.rows)
      if (!row.failed && row.group == group) {
        aps.push_back(row.final_ap);
        mttas.push_back(row.mtta);
      }
    AblationResult::GroupStats st;
    st.group = group;
    stats_of(aps, st.mean_ap, st.var_ap);
    stats_of(mttas, st.mean_mtta, st.var_mtta);
    res.group_stats.push_back(st);
  }
  return res;
}

std::string AblationResult::rows_csv() const {
  std::ostringstream out;
  out << "name,ap,mtta,tta_at_r80,final_ap,failed,error\n";
  for (const auto& r : rows) {
    out << r.name << "," << r.ap << "," << r.mtta << ",";
    if (r.tta_r80_unreachable)
      out << "unreachable";
    else
      out << r.tta_at_r80;
    out << "," << r.final_ap << "," << (r.failed ? 1 : 0) << "," << r.error << "\n";
  }
  for (const auto& g : group_stats) {
    out << g.group << ":average," << g.mean_ap << "," << g.mean_mtta << ",,,0,\n";
    out << g.group << ":variance," << g.var_ap << "," << g.var_mtta << ",,,0,\n";
  }
  return out.str();
}

std::string AblationResult::rows_json() const {
  nlohmann::json j;
  nlohmann::json rws = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json e;
    e["name"] = r.name;
    e["ap"] = r.ap;
    e["mtta"] = r.mtta;
    if (r.tta_r80_unreachable)
      e["tta_at_r80"] = "unreachable";
    else
      e["tta_at_r80"] = r.tta_at_r80;
    e["final_ap"] = r.final_ap;
    e["failed"] = r.failed;
    if (r.failed) e["error"] = r.error;
    rws.push_back(e);
  }
  j["rows"] = rws;
  nlohmann::json gs = nlohmann::json::array();
  for (const auto& g : group_stats) {
    gs.push_back({{"group", g.group},
                  {"mean_ap", g.mean_ap},
                  {"var_ap", g.var_ap},
                  {"mean_mtta", g.mean_mtta},
                  {"var_mtta", g.var_mtta}});
  }
  j["group_stats"] = gs;
  return j.dump(2);
}

std::string AblationResult::scatter_csv() const {
  std::ostringstream out;
  out << "name,epoch,ap,mtta\n";
  for (const auto& p : scatter)
    out << p.name << "," << p.epoch << "," << p.ap << "," << p.mtta << "\n";
  return out.str();
}

AblationGrid module_toggle_grid(const TrainConfig& base) {
  AblationGrid grid;
  struct Entry {
    const char* name;
    bool net::ModelConfig::* flag;
  };
  const Entry entries[] = {
      {"A_no_context_attn", &net::ModelConfig::context_attn},
      {"B_no_object_attn", &net::ModelConfig::object_attn},
      {"C_no_collision", &net::ModelConfig::collision},
      {"D_no_temporal_attn", &net::ModelConfig::temporal_attn},
      {"E_no_smooth", &net::ModelConfig::smooth},
      {"F_no_accident_head", &net::ModelConfig::accident_head},
  };
  for (const auto& e : entries) {
    Experiment exp{e.name, base};
    exp.config.model.*(e.flag) = false;
    grid.experiments.push_back(std::move(exp));
  }
  grid.experiments.push_back(Experiment{"original", base});
  return grid;
}

AblationGrid smooth_field_grid(const TrainConfig& base,
                               const std::vector<std::vector<int>>& sets) {
  AblationGrid grid;
  for (const auto& fields : sets) {
    std::ostringstream name;
    name << "fields";
    for (int f : fields) name << "_" << f;
    Experiment exp{name.str(), base};
    exp.config.model.smooth_fields = fields;
    grid.experiments.push_back(std::move(exp));
  }
  return grid;
}

AblationGrid decay_grid(
    const TrainConfig& base,
    const std::vector<std::pair<std::optional<double>, std::optional<double>>>& pairs) {
  AblationGrid grid;
  for (const auto& [f1, f2] : pairs) {
    std::ostringstream name;
    name << "f1_" << (f1 ? std::to_string(static_cast<int>(*f1)) : std::string("off")) << "_f2_"
         << (f2 ? std::to_string(static_cast<int>(*f2)) : std::string("off"));
    Experiment exp{name.str(), base};
    exp.config.loss.force_lambda1_one = !f1.has_value();
    exp.config.loss.force_lambda2_one = !f2.has_value();
    if (f1) exp.config.loss.f1 = *f1;
    if (f2) exp.config.loss.f2 = *f2;
    grid.experiments.push_back(std::move(exp));
  }
  return grid;
}

AblationGrid beta_sweep_grid(const TrainConfig& base, const std::vector<double>& betas) {
  AblationGrid grid;
  for (bool adaptive : {false, true}) {
    for (double beta : betas) {
      std::ostringstream name;
      name << (adaptive ? "adaptive" : "fixed") << ":beta_" << beta;
      Experiment exp{name.str(), base};
      exp.config.loss.adaptive = adaptive;
      exp.config.loss.gamma = beta;
      grid.experiments.push_back(std::move(exp));
    }
  }
  grid.variance_groups = {"fixed", "adaptive"};
  return grid;
}

AblationGrid collision_mode_grid(const TrainConfig& base) {
  AblationGrid grid;
  Experiment three{"mode_3d", base};
  three.config.model.collision_mode = geometry::GraphMode::k3D;
  Experiment two{"mode_2d", base};
  two.config.model.collision_mode = geometry::GraphMode::k2D;
  grid.experiments.push_back(std::move(three));
  grid.experiments.push_back(std::move(two));
  grid.collect_scatter = true;
  return grid;
}

}  // namespace riskcast::train
