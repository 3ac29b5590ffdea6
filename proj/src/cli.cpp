#include "riskcast/cli.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "riskcast/dataset_io.hpp"
#include "riskcast/plot.hpp"

namespace riskcast::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// --- flat key=value config --------------------------------------------------

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw InputError("config key '" + key + "': expected a number, got '" + v + "'");
  }
}

int parse_int(const std::string& key, const std::string& v) {
  const double d = parse_double(key, v);
  const int i = static_cast<int>(d);
  if (static_cast<double>(i) != d)
    throw InputError("config key '" + key + "': expected an integer, got '" + v + "'");
  return i;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "on" || v == "1") return true;
  if (v == "false" || v == "off" || v == "0") return false;
  throw InputError("config key '" + key + "': expected true/false/on/off, got '" + v + "'");
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(trim(cur));
  return out;
}

}  // namespace

void apply_config_entry(FileConfig& cfg, const std::string& key, const std::string& value) {
  auto& sc = cfg.scenario;
  auto& tr = cfg.train;
  auto& mc = tr.model;
  auto& lc = tr.loss;

  if (key == "schema_version") {
    if (parse_int(key, value) != 1) throw InputError("config: unsupported schema_version " + value);
    return;
  }
  // scenario
  if (key == "scenario.num_videos") { sc.num_videos = parse_int(key, value); return; }
  if (key == "scenario.frames_per_video") { sc.frames_per_video = parse_int(key, value); return; }
  if (key == "scenario.image_width") { sc.image_width = parse_int(key, value); return; }
  if (key == "scenario.image_height") { sc.image_height = parse_int(key, value); return; }
  if (key == "scenario.min_objects") { sc.min_objects = parse_int(key, value); return; }
  if (key == "scenario.max_objects") { sc.max_objects = parse_int(key, value); return; }
  if (key == "scenario.accident_fraction") { sc.accident_fraction = parse_double(key, value); return; }
  if (key == "scenario.trap_fraction") { sc.trap_fraction = parse_double(key, value); return; }
  if (key == "scenario.feature_dim") { sc.feature_dim = parse_int(key, value); return; }
  if (key == "scenario.noise_level") { sc.noise_level = parse_double(key, value); return; }
  if (key == "scenario.seed") { sc.seed = static_cast<std::uint64_t>(parse_double(key, value)); return; }
  if (key == "scenario.collision_radius") { sc.collision_radius = parse_double(key, value); return; }
  if (key == "scenario.depth_min") { sc.depth_min = parse_double(key, value); return; }
  if (key == "scenario.depth_max") { sc.depth_max = parse_double(key, value); return; }
  if (key == "scenario.frame_rate") { sc.frame_rate = parse_double(key, value); return; }
  // model
  if (key == "model.feature_dim") { mc.feature_dim = parse_int(key, value); return; }
  if (key == "model.context_dim") { mc.context_dim = parse_int(key, value); return; }
  if (key == "model.object_dim") { mc.object_dim = parse_int(key, value); return; }
  if (key == "model.graph_dim") { mc.graph_dim = parse_int(key, value); return; }
  if (key == "model.temporal_hidden") { mc.temporal_hidden = parse_int(key, value); return; }
  if (key == "model.accident_hidden") { mc.accident_hidden = parse_int(key, value); return; }
  if (key == "model.heads") { mc.heads = parse_int(key, value); return; }
  if (key == "model.obj_attn_hidden") { mc.obj_attn_hidden = parse_int(key, value); return; }
  if (key == "model.head_hidden") { mc.head_hidden = parse_int(key, value); return; }
  if (key == "model.graph_layers") { mc.graph_layers = parse_int(key, value); return; }
  if (key == "model.dropout1") { mc.dropout1 = parse_double(key, value); return; }
  if (key == "model.dropout2") { mc.dropout2 = parse_double(key, value); return; }
  if (key == "model.smooth_mix") { mc.smooth_mix = parse_double(key, value); return; }
  if (key == "model.smooth_fields") {
    mc.smooth_fields.clear();
    for (const auto& part : split(value, ','))
      mc.smooth_fields.push_back(parse_int(key, part));
    return;
  }
  if (key == "model.context_attn") { mc.context_attn = parse_bool(key, value); return; }
  if (key == "model.object_attn") { mc.object_attn = parse_bool(key, value); return; }
  if (key == "model.collision") { mc.collision = parse_bool(key, value); return; }
  if (key == "model.temporal_attn") { mc.temporal_attn = parse_bool(key, value); return; }
  if (key == "model.smooth") { mc.smooth = parse_bool(key, value); return; }
  if (key == "model.accident_head") { mc.accident_head = parse_bool(key, value); return; }
  if (key == "model.accident_from_scores") { mc.accident_from_scores = parse_bool(key, value); return; }
  if (key == "model.collision_mode") {
    if (value == "3d") mc.collision_mode = geometry::GraphMode::k3D;
    else if (value == "2d") mc.collision_mode = geometry::GraphMode::k2D;
    else throw InputError("config key 'model.collision_mode': expected 2d or 3d");
    return;
  }
  if (key == "model.edge.alpha_d") { mc.edge.alpha_d = parse_double(key, value); return; }
  if (key == "model.edge.alpha_m") { mc.edge.alpha_m = parse_double(key, value); return; }
  if (key == "model.edge.epsilon") { mc.edge.epsilon = parse_double(key, value); return; }
  if (key == "model.edge.squared") { mc.edge.squared_distance = parse_bool(key, value); return; }
  if (key == "model.edge.scaling") {
    const auto parts = split(value, ',');
    if (parts.size() != 3) throw InputError("config key 'model.edge.scaling': expected sx,sy,sz");
    for (int i = 0; i < 3; ++i) mc.edge.coordinate_scaling[i] = parse_double(key, parts[i]);
    return;
  }
  // train
  if (key == "train.learning_rate") { tr.learning_rate = parse_double(key, value); return; }
  if (key == "train.batch_size") { tr.batch_size = parse_int(key, value); return; }
  if (key == "train.epochs") { tr.epochs = parse_int(key, value); return; }
  if (key == "train.plateau_patience") { tr.plateau_patience = parse_int(key, value); return; }
  if (key == "train.plateau_factor") { tr.plateau_factor = parse_double(key, value); return; }
  if (key == "train.seed") { tr.seed = static_cast<std::uint64_t>(parse_double(key, value)); return; }
  if (key == "train.frame_rate") { tr.frame_rate = parse_double(key, value); return; }
  // loss
  if (key == "loss.f1") { lc.f1 = parse_double(key, value); return; }
  if (key == "loss.f2") { lc.f2 = parse_double(key, value); return; }
  if (key == "loss.gamma") { lc.gamma = parse_double(key, value); return; }
  if (key == "loss.adaptive") { lc.adaptive = parse_bool(key, value); return; }
  if (key == "loss.force_lambda1_one") { lc.force_lambda1_one = parse_bool(key, value); return; }
  if (key == "loss.force_lambda2_one") { lc.force_lambda2_one = parse_bool(key, value); return; }
  // grid
  if (key == "grid.family") {
    for (const char* fam : {"modules", "smooth", "decay", "beta", "collision_mode"})
      if (value == fam) {
        cfg.grid_family = value;
        return;
      }
    throw InputError("config key 'grid.family': unknown family '" + value + "'");
  }
  if (key == "grid.beta.values") {
    cfg.grid_betas.clear();
    for (const auto& part : split(value, ',')) cfg.grid_betas.push_back(parse_double(key, part));
    return;
  }
  if (key == "grid.smooth.sets") {
    // semicolon-separated sets, slash-separated fields: "20/10/5;10/5"
    cfg.grid_smooth_sets.clear();
    for (const auto& set : split(value, ';')) {
      std::vector<int> fields;
      for (const auto& part : split(set, '/')) fields.push_back(parse_int(key, part));
      cfg.grid_smooth_sets.push_back(std::move(fields));
    }
    return;
  }
  if (key == "grid.decay.pairs") {
    // comma-separated f1:f2 pairs, '-' disables a coefficient: "20:150,-:150"
    cfg.grid_decay_pairs.clear();
    for (const auto& pair : split(value, ',')) {
      const auto parts = split(pair, ':');
      if (parts.size() != 2)
        throw InputError("config key 'grid.decay.pairs': expected f1:f2 entries");
      std::optional<double> f1, f2;
      if (parts[0] != "-") f1 = parse_double(key, parts[0]);
      if (parts[1] != "-") f2 = parse_double(key, parts[1]);
      cfg.grid_decay_pairs.emplace_back(f1, f2);
    }
    return;
  }
  throw InputError("config: unknown key '" + key + "'");
}

namespace {

std::vector<std::string> known_keys() {
  return {
      "schema_version",
      "scenario.num_videos", "scenario.frames_per_video", "scenario.image_width",
      "scenario.image_height", "scenario.min_objects", "scenario.max_objects",
      "scenario.accident_fraction", "scenario.trap_fraction", "scenario.feature_dim",
      "scenario.noise_level", "scenario.seed", "scenario.collision_radius",
      "scenario.depth_min", "scenario.depth_max", "scenario.frame_rate",
      "model.feature_dim", "model.context_dim", "model.object_dim", "model.graph_dim",
      "model.temporal_hidden", "model.accident_hidden", "model.heads", "model.obj_attn_hidden",
      "model.head_hidden", "model.graph_layers", "model.dropout1", "model.dropout2",
      "model.smooth_mix", "model.smooth_fields", "model.context_attn", "model.object_attn",
      "model.collision", "model.temporal_attn", "model.smooth", "model.accident_head",
      "model.accident_from_scores", "model.collision_mode", "model.edge.alpha_d",
      "model.edge.alpha_m", "model.edge.epsilon", "model.edge.squared", "model.edge.scaling",
      "train.learning_rate", "train.batch_size", "train.epochs", "train.plateau_patience",
      "train.plateau_factor", "train.seed", "train.frame_rate",
      "loss.f1", "loss.f2", "loss.gamma", "loss.adaptive", "loss.force_lambda1_one",
      "loss.force_lambda2_one",
      "grid.family", "grid.beta.values", "grid.smooth.sets", "grid.decay.pairs",
  };
}

std::string env_name_of(const std::string& key) {
  std::string name = "RISKCAST_";
  for (char c : key) name.push_back(c == '.' ? '_' : static_cast<char>(std::toupper(c)));
  return name;
}

}  // namespace

FileConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config file: " + path);
  FileConfig cfg;
  bool saw_version = false;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    const auto eq = s.find('=');
    if (eq == std::string::npos)
      throw InputError(path + ":" + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(s.substr(0, eq));
    const std::string value = trim(s.substr(eq + 1));
    if (key == "schema_version") saw_version = true;
    apply_config_entry(cfg, key, value);
  }
  if (!saw_version) throw InputError("config " + path + " lacks schema_version");
  // Environment overrides.
  for (const auto& key : known_keys()) {
    if (key == "schema_version") continue;
    if (const char* v = std::getenv(env_name_of(key).c_str())) apply_config_entry(cfg, key, v);
  }
  return cfg;
}

namespace {

// --- run manifest -----------------------------------------------------------

json train_config_json(const train::TrainConfig& t) {
  json j;
  j["learning_rate"] = t.learning_rate;
  j["batch_size"] = t.batch_size;
  j["epochs"] = t.epochs;
  j["plateau_patience"] = t.plateau_patience;
  j["plateau_factor"] = t.plateau_factor;
  j["seed"] = t.seed;
  j["frame_rate"] = t.frame_rate;
  j["model"] = {{"feature_dim", t.model.feature_dim},
                {"context_dim", t.model.context_dim},
                {"object_dim", t.model.object_dim},
                {"graph_dim", t.model.graph_dim},
                {"temporal_hidden", t.model.temporal_hidden},
                {"accident_hidden", t.model.accident_hidden},
                {"heads", t.model.heads},
                {"obj_attn_hidden", t.model.obj_attn_hidden},
                {"head_hidden", t.model.head_hidden},
                {"graph_layers", t.model.graph_layers},
                {"dropout1", t.model.dropout1},
                {"dropout2", t.model.dropout2},
                {"smooth_fields", t.model.smooth_fields},
                {"smooth_mix", t.model.smooth_mix},
                {"context_attn", t.model.context_attn},
                {"object_attn", t.model.object_attn},
                {"collision", t.model.collision},
                {"temporal_attn", t.model.temporal_attn},
                {"smooth", t.model.smooth},
                {"accident_head", t.model.accident_head},
                {"collision_mode",
                 t.model.collision_mode == geometry::GraphMode::k3D ? "3d" : "2d"},
                {"edge_alpha_d", t.model.edge.alpha_d},
                {"edge_alpha_m", t.model.edge.alpha_m},
                {"edge_scaling", t.model.edge.coordinate_scaling}};
  j["loss"] = {{"f1", t.loss.f1},
               {"f2", t.loss.f2},
               {"gamma", t.loss.gamma},
               {"adaptive", t.loss.adaptive},
               {"force_lambda1_one", t.loss.force_lambda1_one},
               {"force_lambda2_one", t.loss.force_lambda2_one}};
  return j;
}

json scenario_json(const scene::ScenarioConfig& s) {
  json j;
  j["num_videos"] = s.num_videos;
  j["frames_per_video"] = s.frames_per_video;
  j["image_width"] = s.image_width;
  j["image_height"] = s.image_height;
  j["min_objects"] = s.min_objects;
  j["max_objects"] = s.max_objects;
  j["accident_fraction"] = s.accident_fraction;
  j["trap_fraction"] = s.trap_fraction;
  j["feature_dim"] = s.feature_dim;
  j["noise_level"] = s.noise_level;
  j["seed"] = s.seed;
  j["collision_radius"] = s.collision_radius;
  j["depth_min"] = s.depth_min;
  j["depth_max"] = s.depth_max;
  j["frame_rate"] = s.frame_rate;
  return j;
}

void write_run_manifest(const std::string& out_dir, const std::string& command,
                        const std::vector<std::string>& args, std::uint64_t seed,
                        const json& resolved_config,
                        const std::vector<std::string>& artifacts) {
  fs::create_directories(out_dir);
  json j;
  j["tool_version"] = kToolVersion;
  j["command"] = command;
  j["args"] = args;
  j["seed"] = seed;
  j["resolved_config"] = resolved_config;
  j["artifacts"] = artifacts;
  std::time_t now = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  j["timestamp"] = buf;
  std::ofstream out((fs::path(out_dir) / "run_manifest.json").string());
  out << j.dump(2) << "\n";
  if (!out) throw InputError("cannot write run manifest under " + out_dir);
}

// --- shared command helpers --------------------------------------------------

struct SplitData {
  std::vector<scene::VideoSample> train;
  std::vector<scene::VideoSample> test;
};

SplitData split_dataset(std::vector<scene::VideoSample> samples, const std::string& dir) {
  const scene::SplitLists sp = scene::load_splits(dir, samples);
  SplitData out;
  auto in_list = [](const std::vector<std::string>& ids, const std::string& id) {
    return std::find(ids.begin(), ids.end(), id) != ids.end();
  };
  for (auto& s : samples) {
    if (in_list(sp.test, s.sample_id))
      out.test.push_back(std::move(s));
    else if (in_list(sp.train, s.sample_id))
      out.train.push_back(std::move(s));
  }
  return out;
}

void apply_toggles(net::ModelConfig& mc, const std::vector<std::string>& toggles) {
  for (const auto& entry : toggles) {
    const auto eq = entry.find('=');
    if (eq == std::string::npos)
      throw InputError("--toggle expects <name>=<on|off>, got '" + entry + "'");
    const std::string name = entry.substr(0, eq);
    const bool on = parse_bool("--toggle " + name, entry.substr(eq + 1));
    if (name == "context_attn") mc.context_attn = on;
    else if (name == "object_attn") mc.object_attn = on;
    else if (name == "collision") mc.collision = on;
    else if (name == "temporal_attn") mc.temporal_attn = on;
    else if (name == "smooth") mc.smooth = on;
    else if (name == "accident_head") mc.accident_head = on;
    else throw InputError("--toggle: unknown module '" + name + "'");
  }
}

// --- commands ----------------------------------------------------------------

int cmd_gen_data(const std::string& config_path, const std::string& out_dir,
                 std::optional<std::uint64_t> seed, const std::vector<std::string>& args) {
  FileConfig cfg = parse_config_file(config_path);
  if (seed) cfg.scenario.seed = *seed;
  cfg.scenario.validate();
  write_run_manifest(out_dir, "gen-data", args, cfg.scenario.seed, scenario_json(cfg.scenario),
                     {"manifest.json", "splits.json"});
  const auto samples = scene::generate_dataset(cfg.scenario);
  const std::string manifest = scene::save_dataset(samples, out_dir);
  int positives = 0;
  for (const auto& s : samples) positives += s.label;
  std::cout << "wrote " << samples.size() << " samples (" << positives << " positive) to "
            << out_dir << "\n";
  std::cout << "manifest: " << manifest << "\n";
  return kExitOk;
}

int cmd_train(const std::string& config_path, const std::string& dataset_dir,
              const std::string& out_dir, std::optional<std::uint64_t> seed,
              const std::string& mode, const std::vector<std::string>& toggles,
              const std::vector<std::string>& args) {
  FileConfig cfg = parse_config_file(config_path);
  if (seed) cfg.train.seed = *seed;
  if (mode == "2d") cfg.train.model.collision_mode = geometry::GraphMode::k2D;
  else if (mode == "3d") cfg.train.model.collision_mode = geometry::GraphMode::k3D;
  else if (!mode.empty()) throw InputError("--mode expects 2d or 3d");
  apply_toggles(cfg.train.model, toggles);

  const scene::DatasetMeta meta = scene::read_manifest(dataset_dir);
  cfg.train.model.feature_dim = meta.feature_dim;
  cfg.train.frame_rate = meta.frame_rate;
  cfg.train.validate();
  write_run_manifest(out_dir, "train", args, cfg.train.seed, train_config_json(cfg.train),
                     {"checkpoint_best.bin", "checkpoint_final.bin", "train_log.jsonl",
                      "eval_history.csv", "eval_report.json"});

  SplitData data = split_dataset(scene::load_dataset(dataset_dir), dataset_dir);
  if (data.test.empty())
    throw InputError("dataset " + dataset_dir + " has no test split; half-epoch evals need one");

  std::ofstream log((fs::path(out_dir) / "train_log.jsonl").string());
  std::ofstream hist((fs::path(out_dir) / "eval_history.csv").string());
  hist << "epoch,step,ap,auc,mtta,tta_at_r80,tta_at_r50\n";
  auto step_sink = [&](const train::StepRecord& r) {
    json j = {{"step", r.step},          {"frame_loss", r.frame_loss},
              {"video_loss", r.video_loss}, {"combined", r.combined},
              {"sigma1", r.sigma1},      {"sigma2", r.sigma2},
              {"learning_rate", r.learning_rate}};
    log << j.dump() << "\n";
  };
  auto eval_sink = [&](const train::EvalPoint& p) {
    hist << p.epoch << "," << p.step << "," << p.report.ap << "," << p.report.auc << ","
         << p.report.mtta << ",";
    if (p.report.tta_at_r80) hist << *p.report.tta_at_r80;
    else hist << "unreachable";
    hist << ",";
    if (p.report.tta_at_r50) hist << *p.report.tta_at_r50;
    else hist << "unreachable";
    hist << "\n";
  };

  train::TrainResult result = train::train(data.train, data.test, cfg.train, step_sink, eval_sink);

  net::Model best(cfg.train.model, cfg.train.seed);
  for (int i = 0; i < best.params().count(); ++i) best.params().at(i) = result.best_params[i];
  train::save_checkpoint((fs::path(out_dir) / "checkpoint_best.bin").string(), cfg.train.model,
                         best.params(), result.final_sigmas);
  net::Model fin(cfg.train.model, cfg.train.seed);
  for (int i = 0; i < fin.params().count(); ++i) fin.params().at(i) = result.final_params[i];
  train::save_checkpoint((fs::path(out_dir) / "checkpoint_final.bin").string(), cfg.train.model,
                         fin.params(), result.final_sigmas);

  const eval::EvalReport report = train::evaluate(best, data.test, cfg.train.frame_rate);
  std::ofstream rep((fs::path(out_dir) / "eval_report.json").string());
  rep << report.to_json() << "\n";
  std::cout << "trained " << cfg.train.epochs << " epochs; best AP " << result.best_ap
            << ", mTTA " << result.best_mtta << " s\n";
  return kExitOk;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& dataset_dir,
             const std::string& split, const std::string& out_dir,
             const std::vector<std::string>& args) {
  const train::Checkpoint ck = train::load_checkpoint(checkpoint_path);
  write_run_manifest(out_dir, "eval", args, 0, json{{"checkpoint", checkpoint_path}},
                     {"eval_report.json", "threshold_table.csv"});
  const scene::DatasetMeta meta = scene::read_manifest(dataset_dir);
  SplitData data = split_dataset(scene::load_dataset(dataset_dir), dataset_dir);
  const std::vector<scene::VideoSample>* chosen;
  std::vector<scene::VideoSample> all;
  if (split == "train") chosen = &data.train;
  else if (split == "test") chosen = &data.test;
  else if (split == "all") {
    all = std::move(data.train);
    for (auto& s : data.test) all.push_back(std::move(s));
    chosen = &all;
  } else {
    throw InputError("--split expects train, test or all");
  }
  if (chosen->empty()) throw InputError("selected split is empty");

  net::Model model = train::model_from_checkpoint(ck);
  const eval::EvalReport report = train::evaluate(model, *chosen, meta.frame_rate);
  std::ofstream rep((fs::path(out_dir) / "eval_report.json").string());
  rep << report.to_json() << "\n";
  std::ofstream csv((fs::path(out_dir) / "threshold_table.csv").string());
  csv << report.table_csv();
  std::cout << report.to_json() << "\n";
  return kExitOk;
}

int cmd_ablate(const std::string& config_path, const std::string& dataset_dir,
               const std::string& out_dir, std::optional<std::uint64_t> seed,
               const std::vector<std::string>& args) {
  FileConfig cfg = parse_config_file(config_path);
  if (seed) cfg.train.seed = *seed;
  if (cfg.grid_family.empty())
    throw InputError("ablate: config must set grid.family");
  const scene::DatasetMeta meta = scene::read_manifest(dataset_dir);
  cfg.train.model.feature_dim = meta.feature_dim;
  cfg.train.frame_rate = meta.frame_rate;
  cfg.train.validate();
  write_run_manifest(out_dir, "ablate", args, cfg.train.seed,
                     train_config_json(cfg.train), {"comparison.csv", "comparison.json"});

  train::AblationGrid grid;
  if (cfg.grid_family == "modules") {
    grid = train::module_toggle_grid(cfg.train);
  } else if (cfg.grid_family == "smooth") {
    if (cfg.grid_smooth_sets.empty())
      throw InputError("ablate: grid.smooth.sets required for the smooth family");
    grid = train::smooth_field_grid(cfg.train, cfg.grid_smooth_sets);
  } else if (cfg.grid_family == "decay") {
    if (cfg.grid_decay_pairs.empty())
      throw InputError("ablate: grid.decay.pairs required for the decay family");
    grid = train::decay_grid(cfg.train, cfg.grid_decay_pairs);
  } else if (cfg.grid_family == "beta") {
    if (cfg.grid_betas.empty())
      throw InputError("ablate: grid.beta.values required for the beta family");
    grid = train::beta_sweep_grid(cfg.train, cfg.grid_betas);
  } else {
    grid = train::collision_mode_grid(cfg.train);
  }

  SplitData data = split_dataset(scene::load_dataset(dataset_dir), dataset_dir);
  if (data.test.empty()) throw InputError("ablate: dataset has no test split");
  const train::AblationResult result = train::run_ablation(grid, data.train, data.test);

  std::ofstream csv((fs::path(out_dir) / "comparison.csv").string());
  csv << result.rows_csv();
  std::ofstream js((fs::path(out_dir) / "comparison.json").string());
  js << result.rows_json() << "\n";
  if (!result.scatter.empty()) {
    std::ofstream sc((fs::path(out_dir) / "scatter.csv").string());
    sc << result.scatter_csv();
  }
  int failed = 0;
  for (const auto& row : result.rows) failed += row.failed ? 1 : 0;
  std::cout << "ablation grid: " << result.rows.size() << " experiments, " << failed
            << " failed\n";
  return kExitOk;
}

int cmd_plot_curve(const std::string& checkpoint_path, const std::string& dataset_dir,
                   const std::string& ids_csv, double threshold, const std::string& out_dir,
                   const std::string& ext, const std::vector<std::string>& args) {
  if (ext != "svg" && ext != "png") throw InputError("--ext expects svg or png");
  const train::Checkpoint ck = train::load_checkpoint(checkpoint_path);
  write_run_manifest(out_dir, "plot-curve", args, 0,
                     json{{"checkpoint", checkpoint_path}, {"threshold", threshold}}, {});
  const auto samples = scene::load_dataset(dataset_dir);
  net::Model model = train::model_from_checkpoint(ck);

  for (const auto& id : split(ids_csv, ',')) {
    const auto it = std::find_if(samples.begin(), samples.end(),
                                 [&](const scene::VideoSample& s) { return s.sample_id == id; });
    if (it == samples.end())
      throw InputError("unknown sample id '" + id + "' in dataset " + dataset_dir);
    std::vector<geometry::CollisionGraph> graphs;
    if (model.config().collision)
      graphs = geometry::build_graph_sequence(*it, model.config().collision_mode,
                                              model.config().edge);
    const net::RiskCurve curve = model.predict(*it, model.config().collision ? &graphs : nullptr);
    const std::string path = (fs::path(out_dir) / (id + "." + ext)).string();
    plot::write_curve(path, id, curve.scores, threshold, it->accident_frame);
    std::cout << "wrote " << path << "\n";
  }
  return kExitOk;
}

int cmd_dump_weights(const std::string& dataset_dir, const std::string& id,
                     const std::string& mode, const std::string& out_dir,
                     const std::vector<std::string>& args) {
  write_run_manifest(out_dir, "dump-weights", args, 0, json{{"sample", id}, {"mode", mode}},
                     {id + "_weights.csv"});
  const auto samples = scene::load_dataset(dataset_dir);
  const auto it = std::find_if(samples.begin(), samples.end(),
                               [&](const scene::VideoSample& s) { return s.sample_id == id; });
  if (it == samples.end())
    throw InputError("unknown sample id '" + id + "' in dataset " + dataset_dir);
  geometry::EdgeWeightConfig cfg;
  const auto graphs = geometry::build_graph_sequence(
      *it, mode == "2d" ? geometry::GraphMode::k2D : geometry::GraphMode::k3D, cfg);
  std::ofstream out((fs::path(out_dir) / (id + "_weights.csv")).string());
  out << "frame,i,j,weight\n";
  for (std::size_t f = 0; f < graphs.size(); ++f)
    for (const auto& [i, j] : graphs[f].edges)
      out << f + 1 << "," << i << "," << j << "," << graphs[f].weights(i, j) << "\n";
  std::cout << "wrote per-frame weights for " << id << "\n";
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Dashcam risk anticipation pipeline: synthetic scenes, 3D collision graphs, "
               "temporally weighted training and TTA metrics"};
  app.require_subcommand(1);

  std::string config_path, dataset_dir, out_dir, checkpoint, split = "test", ids, mode, ext = "svg";
  std::optional<std::uint64_t> seed;
  double threshold = 0.5;
  std::vector<std::string> toggles;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  gen->add_option("--config", config_path, "flat key=value config")->required();
  gen->add_option("--out", out_dir, "output directory")->required();
  gen->add_option("--seed", seed, "override scenario.seed");

  auto* tr = app.add_subcommand("train", "Train a model on a dataset");
  tr->add_option("--config", config_path)->required();
  tr->add_option("--dataset", dataset_dir)->required();
  tr->add_option("--out", out_dir)->required();
  tr->add_option("--seed", seed, "override train.seed");
  tr->add_option("--mode", mode, "collision mode: 2d or 3d");
  tr->add_option("--toggle", toggles, "module toggle <name>=<on|off>");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
  ev->add_option("--checkpoint", checkpoint)->required();
  ev->add_option("--dataset", dataset_dir)->required();
  ev->add_option("--split", split, "train, test or all");
  ev->add_option("--out", out_dir)->required();

  auto* ab = app.add_subcommand("ablate", "Run an ablation grid");
  ab->add_option("--config", config_path)->required();
  ab->add_option("--dataset", dataset_dir)->required();
  ab->add_option("--out", out_dir)->required();
  ab->add_option("--seed", seed, "override train.seed");

  auto* pl = app.add_subcommand("plot-curve", "Render per-frame risk curves");
  pl->add_option("--checkpoint", checkpoint)->required();
  pl->add_option("--dataset", dataset_dir)->required();
  pl->add_option("--ids", ids, "comma-separated sample ids")->required();
  pl->add_option("--threshold", threshold, "decision threshold (default 0.5)");
  pl->add_option("--out", out_dir)->required();
  pl->add_option("--ext", ext, "svg or png");

  auto* dw = app.add_subcommand("dump-weights", "Dump per-frame edge weights as CSV");
  dw->add_option("--dataset", dataset_dir)->required();
  dw->add_option("--ids", ids, "sample id")->required();
  dw->add_option("--mode", mode, "2d or 3d (default 3d)");
  dw->add_option("--out", out_dir)->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(config_path, out_dir, seed, args);
    if (tr->parsed()) return cmd_train(config_path, dataset_dir, out_dir, seed, mode, toggles, args);
    if (ev->parsed()) return cmd_eval(checkpoint, dataset_dir, split, out_dir, args);
    if (ab->parsed()) return cmd_ablate(config_path, dataset_dir, out_dir, seed, args);
    if (pl->parsed()) return cmd_plot_curve(checkpoint, dataset_dir, ids, threshold, out_dir, ext, args);
    if (dw->parsed())
      return cmd_dump_weights(dataset_dir, ids, mode.empty() ? "3d" : mode, out_dir, args);
    std::cerr << "error: no subcommand selected\n";
    return kExitUsage;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}

}  // namespace riskcast::cli
