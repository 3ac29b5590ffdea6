#pragma once

#include <Eigen/Core>
#include <cmath>
#include <vector>

#include "riskcast/net.hpp"
#include "riskcast/tape.hpp"

namespace riskcast::loss {

struct LossConfig {
  double f1 = 20.0;     // positive-side decay factor
  double f2 = 150.0;    // negative-side ramp factor
  double gamma = 1e-3;  // fixed video-loss coefficient
  bool adaptive = true; // uncertainty-weighted combine vs fixed-gamma sum
  bool force_lambda1_one = false;  // ablation override: lambda1 == 1
  bool force_lambda2_one = false;  // ablation override: lambda2 == 1

  void validate() const;
};

// Learnable uncertainty weights, stored in log space so sigma stays positive.
struct UncertaintyParams {
  double log_sigma1 = 0.0;
  double log_sigma2 = 0.0;

  double sigma1() const { return std::exp(log_sigma1); }
  double sigma2() const { return std::exp(log_sigma2); }
};

struct LossBreakdown {
  double frame_loss = 0.0;  // L_S
  double video_loss = 0.0;  // L_p
  double combined = 0.0;    // L
  double sigma1 = 1.0;
  double sigma2 = 1.0;
  // Per-video coefficient trace: lambda1^t for positives, lambda2^t for
  // negatives (diagnostics).
  std::vector<std::vector<double>> coefficient_traces;
};

inline constexpr double kScoreClamp = 1e-7;

// Temporal weights of the frame-level loss. t and tau are 1-based.
double lambda1_at(int t, int tau, double f1);
double lambda2_at(int t, double f2);

// Frame-level loss over a batch of curves. taus are 1-based and must lie in
// [1, T] for positive videos.
double ba_lea_loss(const std::vector<net::RiskCurve>& curves, const std::vector<int>& labels,
                   const std::vector<int>& taus, const LossConfig& cfg,
                   std::vector<std::vector<double>>* traces = nullptr);

// Video-level binary cross-entropy.
double prediction_loss(const std::vector<double>& video_probs, const std::vector<int>& labels);

// Eq.-style combine: adaptive uses L_S/(2 s1^2) + gamma L_p/(2 s2^2) +
// log(s1 s2); otherwise L_S + gamma L_p.
LossBreakdown multitask_combine(double frame_loss, double video_loss,
                                const UncertaintyParams& params, const LossConfig& cfg);

// Tape-side construction used by the trainer: builds the combined batch loss
// from per-sample score/probability vars. log_sigma vars may be invalid when
// cfg.adaptive is false.
struct BatchLossVars {
  ad::Var combined;
  double frame_loss = 0.0;
  double video_loss = 0.0;
};
BatchLossVars batch_loss(ad::Tape& t, const std::vector<net::Model::Outputs>& outputs,
                         const std::vector<int>& labels, const std::vector<int>& taus,
                         const LossConfig& cfg, ad::Var log_sigma1, ad::Var log_sigma2);

}  // namespace riskcast::loss
