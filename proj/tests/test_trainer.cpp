#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "riskcast/ablation.hpp"
#include "riskcast/dataset_io.hpp"
#include "riskcast/trainer.hpp"
#include "test_util.hpp"

using namespace riskcast;
namespace fs = std::filesystem;

namespace {

scene::ScenarioConfig tiny_scenario(std::uint64_t seed, int videos = 16, int frames = 24) {
  scene::ScenarioConfig cfg;
  cfg.num_videos = videos;
  cfg.frames_per_video = frames;
  cfg.image_width = 48;
  cfg.image_height = 36;
  cfg.min_objects = 3;
  cfg.max_objects = 3;
  cfg.accident_fraction = 0.5;
  cfg.trap_fraction = 0.3;
  cfg.feature_dim = 6;
  cfg.seed = seed;
  return cfg;
}

train::TrainConfig tiny_train(std::uint64_t seed) {
  train::TrainConfig cfg;
  cfg.learning_rate = 3e-3;
  cfg.batch_size = 4;
  cfg.epochs = 2;
  cfg.seed = seed;
  cfg.model.feature_dim = 6;
  cfg.model.context_dim = 8;
  cfg.model.object_dim = 6;
  cfg.model.graph_dim = 6;
  cfg.model.temporal_hidden = 10;
  cfg.model.accident_hidden = 5;
  cfg.model.heads = 2;
  cfg.model.obj_attn_hidden = 6;
  cfg.model.head_hidden = 6;
  cfg.model.smooth_fields = {5, 2};
  cfg.model.dropout1 = 0.2;
  cfg.model.dropout2 = 0.1;
  return cfg;
}

std::uint64_t params_checksum(const std::vector<Eigen::MatrixXd>& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& m : params) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(m.data());
    const std::size_t n = static_cast<std::size_t>(m.size()) * sizeof(double);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

struct Splits {
  std::vector<scene::VideoSample> train, test;
};

Splits split_samples(std::vector<scene::VideoSample> samples) {
  Splits out;
  const auto sp = scene::make_splits(samples);
  for (auto& s : samples) {
    const bool test = std::find(sp.test.begin(), sp.test.end(), s.sample_id) != sp.test.end();
    (test ? out.test : out.train).push_back(std::move(s));
  }
  return out;
}

}  // namespace

TEST_CASE("train: same seed reproduces checksums and eval reports") {
  const auto data = split_samples(scene::generate_dataset(tiny_scenario(5)));
  const auto cfg = tiny_train(11);
  const auto a = train::train(data.train, data.test, cfg);
  const auto b = train::train(data.train, data.test, cfg);
  CHECK(params_checksum(a.final_params) == params_checksum(b.final_params));
  CHECK(params_checksum(a.best_params) == params_checksum(b.best_params));
  REQUIRE(a.evals.size() == b.evals.size());
  for (std::size_t i = 0; i < a.evals.size(); ++i)
    CHECK(a.evals[i].report.to_json() == b.evals[i].report.to_json());
  CHECK(a.evals.size() == static_cast<std::size_t>(2 * cfg.epochs));

  auto other = cfg;
  other.seed = 12;
  const auto c = train::train(data.train, data.test, other);
  CHECK(params_checksum(a.final_params) != params_checksum(c.final_params));
}

TEST_CASE("train: loss is finite and its running mean decreases") {
  auto scenario = tiny_scenario(6, 24, 24);
  const auto data = split_samples(scene::generate_dataset(scenario));
  auto cfg = tiny_train(13);
  cfg.epochs = 16;  // ~96 steps with batch 4 on ~24*0.7 videos
  const auto result = train::train(data.train, data.test, cfg);
  REQUIRE(result.steps.size() >= 60);
  double early = 0.0, late = 0.0;
  const std::size_t third = result.steps.size() / 3;
  for (std::size_t i = 0; i < third; ++i) early += result.steps[i].combined;
  for (std::size_t i = result.steps.size() - third; i < result.steps.size(); ++i)
    late += result.steps[i].combined;
  early /= third;
  late /= third;
  for (const auto& s : result.steps) CHECK(std::isfinite(s.combined));
  CHECK(late < early);
}

TEST_CASE("train: learning rate only decays, by the plateau factor") {
  const auto data = split_samples(scene::generate_dataset(tiny_scenario(7)));
  auto cfg = tiny_train(17);
  cfg.epochs = 6;
  cfg.plateau_patience = 2;
  const auto result = train::train(data.train, data.test, cfg);
  double prev = cfg.learning_rate;
  bool decayed = false;
  for (const auto& s : result.steps) {
    CHECK(s.learning_rate > 0.0);
    CHECK(s.learning_rate <= prev + 1e-18);
    if (s.learning_rate < prev) {
      CHECK(s.learning_rate == doctest::Approx(prev * cfg.plateau_factor).epsilon(1e-12));
      decayed = true;
    }
    prev = s.learning_rate;
  }
  // With patience 2 over 12 evals and a tiny model, at least one decay fires.
  CHECK(decayed);
}

TEST_CASE("train: non-finite loss aborts naming the batch") {
  auto data = split_samples(scene::generate_dataset(tiny_scenario(8)));
  data.train[0].frames[3].context[0] = std::numeric_limits<double>::quiet_NaN();
  const auto cfg = tiny_train(19);
  CHECK_THROWS_AS(train::train(data.train, data.test, cfg), ComputeError);
}

TEST_CASE("evaluate: deterministic, and exact under checkpoint round-trip") {
  const auto data = split_samples(scene::generate_dataset(tiny_scenario(9)));
  const auto cfg = tiny_train(23);
  const auto result = train::train(data.train, data.test, cfg);

  net::Model model(cfg.model, cfg.seed);
  for (int i = 0; i < model.params().count(); ++i) model.params().at(i) = result.best_params[i];

  const auto r1 = train::evaluate(model, data.test, 20.0);
  const auto r2 = train::evaluate(model, data.test, 20.0);
  CHECK(r1.to_json() == r2.to_json());

  const std::string dir =
      (fs::temp_directory_path() / "riskcast_test_ckpt").string();
  fs::create_directories(dir);
  const std::string path = dir + "/model.bin";
  train::save_checkpoint(path, cfg.model, model.params(), result.final_sigmas);
  const auto ck = train::load_checkpoint(path);
  net::Model reloaded = train::model_from_checkpoint(ck);
  // Float64 storage: the reloaded model evaluates bit-identically.
  const auto r3 = train::evaluate(reloaded, data.test, 20.0);
  CHECK(r1.to_json() == r3.to_json());
  CHECK(ck.sigmas.log_sigma1 == result.final_sigmas.log_sigma1);

  // Saving the reloaded parameters reproduces the file byte for byte.
  const std::string path2 = dir + "/model2.bin";
  train::save_checkpoint(path2, ck.config, reloaded.params(), ck.sigmas);
  CHECK(fnv1a64_file(path) == fnv1a64_file(path2));
  fs::remove_all(dir);
}

TEST_CASE("evaluate: perfect oracle scores give AP 1 and AUC 1") {
  std::vector<eval::VideoScore> vs;
  for (int v = 0; v < 6; ++v) {
    net::RiskCurve c;
    c.scores = Eigen::VectorXd::Constant(20, v < 3 ? 0.95 : 0.05);
    vs.push_back(eval::VideoScore::from_curve(c, v < 3 ? 1 : 0, v < 3 ? 18 : 0));
  }
  const auto r = eval::evaluate_videos(vs, 20.0);
  CHECK(r.ap == 1.0);
  CHECK(r.auc == 1.0);
}

TEST_CASE("evaluate: random-init models average near chance AUC") {
  auto scenario = tiny_scenario(10, 40, 20);
  scenario.accident_fraction = 0.5;
  const auto samples = scene::generate_dataset(scenario);
  const auto cfg = tiny_train(29);
  double mean_auc = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    net::Model model(cfg.model, seed * 1000 + 7);
    mean_auc += train::evaluate(model, samples, 20.0).auc;
  }
  mean_auc /= 5.0;
  CHECK(mean_auc > 0.4);
  CHECK(mean_auc < 0.6);
}

TEST_CASE("run_ablation: table schema, isolation, failure capture") {
  const auto data = split_samples(scene::generate_dataset(tiny_scenario(11)));
  auto base = tiny_train(31);
  base.epochs = 1;

  SUBCASE("module toggle grid has seven rows matching the component layout") {
    const auto grid = train::module_toggle_grid(base);
    REQUIRE(grid.experiments.size() == 7);
    CHECK(grid.experiments.back().name == "original");
    const auto result = train::run_ablation(grid, data.train, data.test);
    REQUIRE(result.rows.size() == 7);
    for (const auto& row : result.rows) {
      CHECK_FALSE(row.failed);
      CHECK(row.ap >= 0.0);
      CHECK(row.ap <= 1.0);
    }
    const std::string csv = result.rows_csv();
    CHECK(csv.rfind("name,ap,mtta,tta_at_r80", 0) == 0);
  }

  SUBCASE("experiment order does not change per-experiment results") {
    train::AblationGrid fwd;
    fwd.experiments.push_back({"x", base});
    auto alt = base;
    alt.model.smooth = false;
    fwd.experiments.push_back({"y", alt});
    train::AblationGrid rev;
    rev.experiments.push_back(fwd.experiments[1]);
    rev.experiments.push_back(fwd.experiments[0]);

    const auto a = train::run_ablation(fwd, data.train, data.test);
    const auto b = train::run_ablation(rev, data.train, data.test);
    CHECK(a.rows[0].ap == b.rows[1].ap);
    CHECK(a.rows[1].ap == b.rows[0].ap);
    CHECK(a.rows[0].mtta == b.rows[1].mtta);
  }

  SUBCASE("a failing experiment is recorded and the grid continues") {
    train::AblationGrid grid;
    auto bad = base;
    bad.model.smooth_fields = {64};  // longer than T: every forward fails
    grid.experiments.push_back({"bad", bad});
    grid.experiments.push_back({"good", base});
    const auto result = train::run_ablation(grid, data.train, data.test);
    REQUIRE(result.rows.size() == 2);
    CHECK(result.rows[0].failed);
    CHECK_FALSE(result.rows[1].failed);
    CHECK(result.rows[0].error.find("receptive field") != std::string::npos);
  }

  SUBCASE("collision-mode grid collects one scatter point per half epoch") {
    auto fast = base;
    fast.epochs = 2;
    const auto grid = train::collision_mode_grid(fast);
    const auto result = train::run_ablation(grid, data.train, data.test);
    int three = 0, two = 0;
    for (const auto& p : result.scatter) (p.name == "mode_3d" ? three : two)++;
    CHECK(three == 4);  // 2 epochs, eval every half epoch
    CHECK(two == 4);
  }

  SUBCASE("beta sweep emits average and variance rows per family") {
    auto fast = base;
    const auto grid = train::beta_sweep_grid(fast, {1.0, 1e-2});
    const auto result = train::run_ablation(grid, data.train, data.test);
    REQUIRE(result.rows.size() == 4);
    REQUIRE(result.group_stats.size() == 2);
    CHECK(result.group_stats[0].group == "fixed");
    CHECK(result.group_stats[1].group == "adaptive");
    CHECK(result.rows_json().find("group_stats") != std::string::npos);
  }
}
