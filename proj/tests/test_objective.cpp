#include <cmath>

#include "doctest.h"
#include "riskcast/objective.hpp"
#include "test_util.hpp"

using namespace riskcast;
using loss::LossConfig;
using loss::UncertaintyParams;
using net::RiskCurve;

namespace {

RiskCurve curve_of(std::initializer_list<double> scores) {
  RiskCurve c;
  c.scores = Eigen::VectorXd(static_cast<int>(scores.size()));
  int i = 0;
  for (double s : scores) c.scores[i++] = s;
  return c;
}

RiskCurve random_curve(std::mt19937_64& rng, int frames) {
  RiskCurve c;
  c.scores = Eigen::VectorXd(frames);
  for (int i = 0; i < frames; ++i) c.scores[i] = testutil::uniform(rng, 0.02, 0.98);
  return c;
}

}  // namespace

TEST_CASE("lambda coefficients: spot values and shape invariants") {
  // Positive side, f1 = 20.
  CHECK(loss::lambda1_at(90, 90, 20.0) == 1.0);                       // t = tau
  CHECK(loss::lambda1_at(70, 90, 20.0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
  CHECK(loss::lambda1_at(95, 90, 20.0) == 1.0);                       // t > tau clamps at 1
  // Negative side, f2 = 150.
  CHECK(loss::lambda2_at(150, 150.0) == 1.0);
  CHECK(loss::lambda2_at(75, 150.0) == 0.5);

  // Monotone urgency: nondecreasing up to tau, equal to 1 afterwards.
  double prev = 0.0;
  for (int t = 1; t <= 90; ++t) {
    const double w = loss::lambda1_at(t, 90, 20.0);
    CHECK(w >= prev);
    prev = w;
  }
  for (int t = 90; t <= 100; ++t) CHECK(loss::lambda1_at(t, 90, 20.0) == 1.0);
  // Strictly increasing linear ramp; unclipped past f2.
  for (int t = 1; t < 200; ++t)
    CHECK(loss::lambda2_at(t + 1, 150.0) > loss::lambda2_at(t, 150.0));
  CHECK(loss::lambda2_at(300, 150.0) == 2.0);
}

TEST_CASE("ba_lea_loss: coefficient traces and tau validation") {
  LossConfig cfg;
  std::vector<RiskCurve> curves{curve_of({0.5, 0.5, 0.5, 0.5}), curve_of({0.5, 0.5, 0.5, 0.5})};
  std::vector<int> labels{1, 0};
  std::vector<int> taus{3, 0};
  std::vector<std::vector<double>> traces;
  const double L = loss::ba_lea_loss(curves, labels, taus, cfg, &traces);
  CHECK(std::isfinite(L));
  REQUIRE(traces.size() == 2);
  CHECK(traces[0][2] == 1.0);                                   // t = tau
  CHECK(traces[0][1] == doctest::Approx(std::exp(-1.0 / 20.0)));
  CHECK(traces[1][0] == doctest::Approx(1.0 / 150.0));
  CHECK(traces[1][3] == doctest::Approx(4.0 / 150.0));

  taus[0] = 9;  // out of range for T=4
  CHECK_THROWS_AS(loss::ba_lea_loss(curves, labels, taus, cfg), InputError);
}

TEST_CASE("ba_lea_loss: override reduces to plain frame-wise cross-entropy") {
  std::mt19937_64 rng(17);
  LossConfig cfg;
  cfg.force_lambda1_one = true;
  cfg.force_lambda2_one = true;
  for (int trial = 0; trial < 50; ++trial) {
    const int frames = 5 + static_cast<int>(rng() % 20);
    const int batch = 1 + static_cast<int>(rng() % 6);
    std::vector<RiskCurve> curves;
    std::vector<int> labels, taus;
    for (int b = 0; b < batch; ++b) {
      curves.push_back(random_curve(rng, frames));
      labels.push_back(static_cast<int>(rng() % 2));
      taus.push_back(labels.back() ? 1 + static_cast<int>(rng() % frames) : 0);
    }
    const double L = loss::ba_lea_loss(curves, labels, taus, cfg);
    // Independent cross-entropy computation.
    double expect = 0.0;
    for (int b = 0; b < batch; ++b) {
      for (int t = 0; t < frames; ++t) {
        const double s = curves[b].scores[t];
        expect -= labels[b] == 1 ? std::log(s) : std::log(1.0 - s);
      }
    }
    expect /= batch;
    CHECK(std::abs(L - expect) < 1e-9);
  }
}

TEST_CASE("ba_lea_loss: gradient signs through scores") {
  LossConfig cfg;
  std::mt19937_64 rng(23);
  const int frames = 12;
  // Positive video: raising any score lowers the loss.
  {
    RiskCurve c = random_curve(rng, frames);
    std::vector<int> labels{1}, taus{8};
    for (int t = 0; t < frames; ++t) {
      auto up = c, down = c;
      up.scores[t] += 1e-6;
      down.scores[t] -= 1e-6;
      const double lu = loss::ba_lea_loss({up}, labels, taus, cfg);
      const double ld = loss::ba_lea_loss({down}, labels, taus, cfg);
      CHECK(lu < ld);
    }
  }
  // Negative video: raising any score (t >= 1) raises the loss.
  {
    RiskCurve c = random_curve(rng, frames);
    std::vector<int> labels{0}, taus{0};
    for (int t = 0; t < frames; ++t) {
      auto up = c, down = c;
      up.scores[t] += 1e-6;
      down.scores[t] -= 1e-6;
      const double lu = loss::ba_lea_loss({up}, labels, taus, cfg);
      const double ld = loss::ba_lea_loss({down}, labels, taus, cfg);
      CHECK(lu > ld);
    }
  }
}

TEST_CASE("prediction_loss: analytic anchor points") {
  // Perfect predictions vanish to clamp precision.
  CHECK(loss::prediction_loss({1.0, 0.0}, {1, 0}) < 2e-7);
  // Coin-flip predictions give ln 2.
  CHECK(loss::prediction_loss({0.5, 0.5, 0.5}, {1, 0, 1}) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  // Single positive at 1/e gives exactly 1.
  CHECK(loss::prediction_loss({std::exp(-1.0)}, {1}) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("multitask_combine: fixed and adaptive paths") {
  LossConfig cfg;
  UncertaintyParams sigmas;  // sigma1 = sigma2 = 1

  SUBCASE("unit sigmas halve the losses and drop the log term") {
    cfg.adaptive = true;
    const auto out = loss::multitask_combine(2.0, 1.0, sigmas, cfg);
    CHECK(out.combined == doctest::Approx(2.0 / 2.0 + cfg.gamma * 1.0 / 2.0).epsilon(1e-15));
    CHECK(out.sigma1 == 1.0);
  }

  SUBCASE("fixed combine is L_S + gamma L_p") {
    cfg.adaptive = false;
    cfg.gamma = 1e-3;
    const auto out = loss::multitask_combine(2.0, 1.0, sigmas, cfg);
    CHECK(out.combined == doctest::Approx(2.001).epsilon(1e-15));
  }

  SUBCASE("sigma gradient vanishes at the analytic stationary point") {
    cfg.adaptive = true;
    cfg.gamma = 1.0;
    const double frame_loss = 1.7, video_loss = 0.9;
    // d/ds1 [L_S/(2 s1^2) + log s1] = -L_S/s1^3 + 1/s1, zero at s1 = sqrt(L_S).
    UncertaintyParams opt;
    opt.log_sigma1 = 0.5 * std::log(frame_loss);
    opt.log_sigma2 = 0.5 * std::log(cfg.gamma * video_loss);
    auto combined_at = [&](double ls1, double ls2) {
      UncertaintyParams u;
      u.log_sigma1 = ls1;
      u.log_sigma2 = ls2;
      return loss::multitask_combine(frame_loss, video_loss, u, cfg).combined;
    };
    const double h = 1e-6;
    const double g1 =
        (combined_at(opt.log_sigma1 + h, opt.log_sigma2) -
         combined_at(opt.log_sigma1 - h, opt.log_sigma2)) / (2 * h);
    const double g2 =
        (combined_at(opt.log_sigma1, opt.log_sigma2 + h) -
         combined_at(opt.log_sigma1, opt.log_sigma2 - h)) / (2 * h);
    CHECK(std::abs(g1) < 1e-9);
    CHECK(std::abs(g2) < 1e-9);
    // Analytic derivative in sigma matches finite differences away from the optimum.
    const double s1 = 1.3;
    const double analytic = -frame_loss / (s1 * s1 * s1) + 1.0 / s1;
    auto by_sigma = [&](double sig) {
      UncertaintyParams u;
      u.log_sigma1 = std::log(sig);
      u.log_sigma2 = 0.0;
      return loss::multitask_combine(frame_loss, video_loss, u, cfg).combined;
    };
    const double fd = (by_sigma(s1 + 1e-6) - by_sigma(s1 - 1e-6)) / 2e-6;
    CHECK(testutil::rel_err(analytic, fd) < 1e-7);
  }

  SUBCASE("combined loss diverges as sigma approaches zero or infinity") {
    cfg.adaptive = true;
    auto at = [&](double log_s) {
      UncertaintyParams u;
      u.log_sigma1 = log_s;
      return loss::multitask_combine(1.0, 1.0, u, cfg).combined;
    };
    CHECK(at(-8.0) > at(0.0));
    CHECK(at(8.0) > at(0.0));
  }
}

TEST_CASE("batch_loss tape path agrees with the plain computation") {
  std::mt19937_64 rng(31);
  LossConfig cfg;
  cfg.adaptive = true;
  for (int trial = 0; trial < 10; ++trial) {
    const int frames = 6 + static_cast<int>(rng() % 8);
    const int batch = 1 + static_cast<int>(rng() % 4);
    std::vector<RiskCurve> curves;
    std::vector<double> probs;
    std::vector<int> labels, taus;
    ad::Tape t;
    std::vector<net::Model::Outputs> outs;
    for (int b = 0; b < batch; ++b) {
      curves.push_back(random_curve(rng, frames));
      probs.push_back(testutil::uniform(rng, 0.05, 0.95));
      labels.push_back(static_cast<int>(rng() % 2));
      taus.push_back(labels.back() ? 1 + static_cast<int>(rng() % frames) : 0);
      net::Model::Outputs o;
      o.scores = t.constant(Eigen::MatrixXd(curves.back().scores));
      o.video_prob = t.constant(Eigen::MatrixXd::Constant(1, 1, probs.back()));
      outs.push_back(o);
    }
    Eigen::MatrixXd ls1 = Eigen::MatrixXd::Constant(1, 1, 0.2);
    Eigen::MatrixXd ls2 = Eigen::MatrixXd::Constant(1, 1, -0.1);
    Eigen::MatrixXd g1, g2;
    const auto batch_vars = loss::batch_loss(t, outs, labels, taus, cfg,
                                             t.param(&ls1, &g1), t.param(&ls2, &g2));

    const double frame_ref = loss::ba_lea_loss(curves, labels, taus, cfg);
    const double video_ref = loss::prediction_loss(probs, labels);
    UncertaintyParams u;
    u.log_sigma1 = 0.2;
    u.log_sigma2 = -0.1;
    const auto ref = loss::multitask_combine(frame_ref, video_ref, u, cfg);
    CHECK(std::abs(batch_vars.frame_loss - frame_ref) < 1e-12);
    CHECK(std::abs(batch_vars.video_loss - video_ref) < 1e-12);
    CHECK(std::abs(t.scalar_value(batch_vars.combined) - ref.combined) < 1e-12);

    // Log-sigma gradients from the tape match the closed form.
    t.backward(batch_vars.combined);
    const double s1 = std::exp(0.2), s2 = std::exp(-0.1);
    CHECK(testutil::rel_err(g1(0, 0), -frame_ref / (s1 * s1) + 1.0) < 1e-10);
    CHECK(testutil::rel_err(g2(0, 0), -cfg.gamma * video_ref / (s2 * s2) + 1.0) < 1e-10);
  }
}
