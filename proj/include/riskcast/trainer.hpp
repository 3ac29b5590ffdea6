#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "riskcast/metrics.hpp"
#include "riskcast/net.hpp"
#include "riskcast/objective.hpp"
#include "riskcast/scene.hpp"

namespace riskcast::train {

struct TrainConfig {
  double learning_rate = 1e-4;
  int batch_size = 16;
  int epochs = 50;          // the run always completes this many epochs
  int plateau_patience = 5; // half-epoch evals without AP improvement
  double plateau_factor = 0.5;
  double min_learning_rate = 0.0;  // plateau decay floor
  double clip_norm = 500.0;        // global gradient-norm clip; <= 0 disables
  std::uint64_t seed = 0;
  double frame_rate = 20.0;
  net::ModelConfig model;
  loss::LossConfig loss;

  void validate() const;
};

// One structured record per optimization step.
struct StepRecord {
  int step = 0;
  double frame_loss = 0.0;
  double video_loss = 0.0;
  double combined = 0.0;
  double sigma1 = 1.0;
  double sigma2 = 1.0;
  double learning_rate = 0.0;
};

// One half-epoch evaluation point.
struct EvalPoint {
  int step = 0;
  double epoch = 0.0;
  eval::EvalReport report;
};

struct TrainResult {
  net::ModelConfig config;
  std::vector<Eigen::MatrixXd> final_params;
  std::vector<Eigen::MatrixXd> best_params;  // best validation AP, mTTA tiebreak
  loss::UncertaintyParams final_sigmas;
  std::vector<StepRecord> steps;
  std::vector<EvalPoint> evals;
  double best_ap = 0.0;
  double best_mtta = 0.0;
};

// First-order adaptive-moment optimizer (default hyperparameters) with
// global gradient-norm clipping.
class Adam {
 public:
  explicit Adam(double lr, double clip_norm = 500.0) : lr_(lr), clip_norm_(clip_norm) {}
  void set_learning_rate(double lr) { lr_ = lr; }
  double learning_rate() const { return lr_; }
  void step(std::vector<Eigen::MatrixXd>& params, std::vector<Eigen::MatrixXd>& grads);

 private:
  double lr_;
  double clip_norm_;
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  int t_ = 0;
  std::vector<Eigen::MatrixXd> m_, v_;
};

// Trains on the train split, evaluating the test split every half epoch.
// Deterministic given config.seed (shuffles, init, dropout). Non-finite loss
// aborts with a diagnostic naming the batch's sample ids.
TrainResult train(const std::vector<scene::VideoSample>& train_split,
                  const std::vector<scene::VideoSample>& test_split, const TrainConfig& config,
                  const std::function<void(const StepRecord&)>& step_sink = nullptr,
                  const std::function<void(const EvalPoint&)>& eval_sink = nullptr);

// Dropout-free deterministic evaluation of a parameter set on a split.
eval::EvalReport evaluate(const net::Model& model, const std::vector<scene::VideoSample>& split,
                          double frame_rate);

// Checkpoint: versioned container of named float64 parameter arrays plus the
// ModelConfig echo and the uncertainty parameters.
void save_checkpoint(const std::string& path, const net::ModelConfig& cfg,
                     const net::ParamSet& params, const loss::UncertaintyParams& sigmas);
struct Checkpoint {
  net::ModelConfig config;
  std::vector<std::pair<std::string, Eigen::MatrixXd>> params;
  loss::UncertaintyParams sigmas;
};
Checkpoint load_checkpoint(const std::string& path);

// Builds a model from a checkpoint (names must match the config's layout).
net::Model model_from_checkpoint(const Checkpoint& ck);

// Pre-builds per-sample collision graphs for the configured mode.
std::vector<std::vector<geometry::CollisionGraph>> build_graph_cache(
    const std::vector<scene::VideoSample>& samples, const net::ModelConfig& cfg);

}  // namespace riskcast::train
