#include "riskcast/objective.hpp"

#include <algorithm>
#include <cmath>

namespace riskcast::loss {

void LossConfig::validate() const {
  if (!(f1 > 0.0) || !(f2 > 0.0)) throw InputError("loss config: f1 and f2 must be positive");
  if (!(gamma > 0.0)) throw InputError("loss config: gamma must be positive");
}

double lambda1_at(int t, int tau, double f1) {
  return std::exp(-std::max(static_cast<double>(tau - t) / f1, 0.0));
}

double lambda2_at(int t, double f2) { return static_cast<double>(t) / f2; }

namespace {
double clamped(double s) { return std::clamp(s, kScoreClamp, 1.0 - kScoreClamp); }
}  // namespace

double ba_lea_loss(const std::vector<net::RiskCurve>& curves, const std::vector<int>& labels,
                   const std::vector<int>& taus, const LossConfig& cfg,
                   std::vector<std::vector<double>>* traces) {
  cfg.validate();
  if (curves.empty() || curves.size() != labels.size() || curves.size() != taus.size())
    throw InputError("ba_lea_loss: batch arrays must be nonempty and equally sized");
  if (traces) traces->clear();

  double total = 0.0;
  for (std::size_t v = 0; v < curves.size(); ++v) {
    const Eigen::VectorXd& s = curves[v].scores;
    const int frames = static_cast<int>(s.size());
    if (labels[v] == 1 && (taus[v] < 1 || taus[v] > frames))
      throw InputError("ba_lea_loss: accident frame out of range for positive video " +
                       std::to_string(v));
    std::vector<double> trace(frames);
    double acc = 0.0;
    for (int t = 1; t <= frames; ++t) {
      if (labels[v] == 1) {
        const double w = cfg.force_lambda1_one ? 1.0 : lambda1_at(t, taus[v], cfg.f1);
        trace[t - 1] = w;
        acc -= w * std::log(clamped(s[t - 1]));
      } else {
        const double w = cfg.force_lambda2_one ? 1.0 : lambda2_at(t, cfg.f2);
        trace[t - 1] = w;
        acc -= w * std::log(1.0 - clamped(s[t - 1]));
      }
    }
    total += acc;
    if (traces) traces->push_back(std::move(trace));
  }
  return total / static_cast<double>(curves.size());
}

double prediction_loss(const std::vector<double>& video_probs, const std::vector<int>& labels) {
  if (video_probs.empty() || video_probs.size() != labels.size())
    throw InputError("prediction_loss: batch arrays must be nonempty and equally sized");
  double total = 0.0;
  for (std::size_t v = 0; v < video_probs.size(); ++v) {
    const double p = clamped(video_probs[v]);
    total -= labels[v] == 1 ? std::log(p) : std::log(1.0 - p);
  }
  return total / static_cast<double>(video_probs.size());
}

LossBreakdown multitask_combine(double frame_loss, double video_loss,
                                const UncertaintyParams& params, const LossConfig& cfg) {
  cfg.validate();
  if (!std::isfinite(frame_loss) || !std::isfinite(video_loss))
    throw ComputeError("multitask_combine: non-finite loss input");
  LossBreakdown out;
  out.frame_loss = frame_loss;
  out.video_loss = video_loss;
  out.sigma1 = params.sigma1();
  out.sigma2 = params.sigma2();
  if (cfg.adaptive) {
    out.combined = frame_loss / (2.0 * out.sigma1 * out.sigma1) +
                   cfg.gamma * video_loss / (2.0 * out.sigma2 * out.sigma2) +
                   std::log(out.sigma1 * out.sigma2);
  } else {
    out.combined = frame_loss + cfg.gamma * video_loss;
  }
  return out;
}

BatchLossVars batch_loss(ad::Tape& t, const std::vector<net::Model::Outputs>& outputs,
                         const std::vector<int>& labels, const std::vector<int>& taus,
                         const LossConfig& cfg, ad::Var log_sigma1, ad::Var log_sigma2) {
  cfg.validate();
  if (outputs.empty() || outputs.size() != labels.size() || outputs.size() != taus.size())
    throw InputError("batch_loss: batch arrays must be nonempty and equally sized");

  const double inv_v = 1.0 / static_cast<double>(outputs.size());
  ad::Var frame_sum, video_sum;
  for (std::size_t v = 0; v < outputs.size(); ++v) {
    const int frames = static_cast<int>(t.value(outputs[v].scores).rows());
    if (labels[v] == 1 && (taus[v] < 1 || taus[v] > frames))
      throw InputError("batch_loss: accident frame out of range for positive video " +
                       std::to_string(v));
    Eigen::MatrixXd weights(frames, 1);
    for (int f = 1; f <= frames; ++f) {
      if (labels[v] == 1)
        weights(f - 1, 0) = cfg.force_lambda1_one ? 1.0 : lambda1_at(f, taus[v], cfg.f1);
      else
        weights(f - 1, 0) = cfg.force_lambda2_one ? 1.0 : lambda2_at(f, cfg.f2);
    }
    ad::Var sc = t.clamp(outputs[v].scores, kScoreClamp, 1.0 - kScoreClamp);
    ad::Var log_term =
        labels[v] == 1 ? t.log(sc) : t.log(t.affine(sc, -1.0, 1.0));
    ad::Var contrib = t.affine(t.sum(t.cwise_mul(t.constant(std::move(weights)), log_term)), -1.0);
    frame_sum = v == 0 ? contrib : t.add(frame_sum, contrib);

    ad::Var lp = t.clamp(outputs[v].video_prob, kScoreClamp, 1.0 - kScoreClamp);
    ad::Var vterm = labels[v] == 1 ? t.affine(t.log(lp), -1.0)
                                   : t.affine(t.log(t.affine(lp, -1.0, 1.0)), -1.0);
    video_sum = v == 0 ? vterm : t.add(video_sum, vterm);
  }
  ad::Var frame_loss = t.affine(frame_sum, inv_v);
  ad::Var video_loss = t.affine(video_sum, inv_v);

  BatchLossVars out;
  out.frame_loss = t.scalar_value(frame_loss);
  out.video_loss = t.scalar_value(video_loss);
  if (cfg.adaptive) {
    if (!log_sigma1.valid() || !log_sigma2.valid())
      throw ComputeError("batch_loss: adaptive combine requires log-sigma vars");
    // L_S / (2 s1^2) = L_S * exp(-2 u1) / 2, with u = log sigma.
    ad::Var w1 = t.affine(t.exp(t.affine(log_sigma1, -2.0)), 0.5);
    ad::Var w2 = t.affine(t.exp(t.affine(log_sigma2, -2.0)), 0.5 * cfg.gamma);
    ad::Var combined = t.add(t.add(t.cwise_mul(frame_loss, w1), t.cwise_mul(video_loss, w2)),
                             t.add(log_sigma1, log_sigma2));
    out.combined = combined;
  } else {
    out.combined = t.add(frame_loss, t.affine(video_loss, cfg.gamma));
  }
  return out;
}

}  // namespace riskcast::loss
