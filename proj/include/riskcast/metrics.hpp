#pragma once

#include <optional>
#include <string>
#include <vector>

#include "riskcast/net.hpp"

namespace riskcast::eval {

// One evaluated video: its curve, the max-over-frames video score, label and
// (1-based) accident frame.
struct VideoScore {
  net::RiskCurve curve;
  double video_score = 0.0;
  int label = 0;
  int tau = 0;

  static VideoScore from_curve(net::RiskCurve curve, int label, int tau);
};

struct ThresholdRow {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double mean_tta = 0.0;
};

struct EvalReport {
  double ap = 0.0;
  double auc = 0.0;
  double mtta = 0.0;               // never-detected positives count as TTA 0
  double mtta_detected_only = 0.0; // alternative reported side by side
  std::optional<double> tta_at_r80;
  std::optional<double> tta_at_r50;
  std::vector<ThresholdRow> table;
  double frame_rate = 20.0;
  int num_positives = 0;
  int num_negatives = 0;
  bool ap_trivial_all_positive = false;  // accuracy-substitute flag

  std::string to_json() const;
  std::string table_csv() const;
};

// Earliest (1-based) frame whose score meets the threshold; nullopt if the
// curve never crosses.
std::optional<int> detect_time(const net::RiskCurve& curve, double threshold);

// (tau - t_theta) / frame_rate, floored at zero; zero when never detected.
// Calling on a negative video (tau == 0) is an error.
double tta(const net::RiskCurve& curve, int tau, double threshold, double frame_rate);

// Threshold grid used wherever "all thresholds" is required: 0.01 .. 0.99.
std::vector<double> threshold_grid();

// Mean over the grid of the per-threshold mean TTA over positive videos.
// include_missed=false excludes never-detected positives from each
// per-threshold mean (empty means contribute 0).
double mtta(const std::vector<VideoScore>& videos, double frame_rate, bool include_missed = true);

// Step-integrated area under the precision-recall curve over video scores.
// Ties form one rank group with group-level precision. No positives is an
// error; no negatives yields the trivial 1.0 (flag reported via EvalReport).
double average_precision(const std::vector<double>& scores, const std::vector<int>& labels);

// Mann-Whitney statistic; ties count one half. Requires both classes.
double auc(const std::vector<double>& scores, const std::vector<int>& labels);

// Mean TTA over positives at the largest grid threshold whose recall still
// meets the target; nullopt when the target is unreachable.
std::optional<double> tta_at_recall(const std::vector<VideoScore>& videos, double target_recall,
                                    double frame_rate);

EvalReport evaluate_videos(const std::vector<VideoScore>& videos, double frame_rate);

}  // namespace riskcast::eval
