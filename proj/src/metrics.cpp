#include "riskcast/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace riskcast::eval {

VideoScore VideoScore::from_curve(net::RiskCurve curve, int label, int tau) {
  VideoScore v;
  v.video_score = curve.scores.size() > 0 ? curve.scores.maxCoeff() : 0.0;
  v.curve = std::move(curve);
  v.label = label;
  v.tau = tau;
  return v;
}

std::optional<int> detect_time(const net::RiskCurve& curve, double threshold) {
  for (int t = 0; t < curve.scores.size(); ++t)
    if (curve.scores[t] >= threshold) return t + 1;
  return std::nullopt;
}

double tta(const net::RiskCurve& curve, int tau, double threshold, double frame_rate) {
  if (tau < 1) throw InputError("tta: defined only for positive videos (tau >= 1)");
  const auto t_theta = detect_time(curve, threshold);
  if (!t_theta) return 0.0;
  return std::max(0.0, static_cast<double>(tau - *t_theta) / frame_rate);
}

std::vector<double> threshold_grid() {
  std::vector<double> grid;
  grid.reserve(99);
  for (int k = 1; k <= 99; ++k) grid.push_back(k / 100.0);
  return grid;
}

double mtta(const std::vector<VideoScore>& videos, double frame_rate, bool include_missed) {
  std::vector<const VideoScore*> positives;
  for (const auto& v : videos)
    if (v.label == 1) positives.push_back(&v);
  if (positives.empty()) throw InputError("mtta: no positive videos");

  double acc = 0.0;
  for (double theta : threshold_grid()) {
    double sum = 0.0;
    int counted = 0;
    for (const auto* v : positives) {
      const bool detected = detect_time(v->curve, theta).has_value();
      if (!detected && !include_missed) continue;
      sum += tta(v->curve, v->tau, theta, frame_rate);
      ++counted;
    }
    acc += counted > 0 ? sum / counted : 0.0;
  }
  return acc / 99.0;
}

double average_precision(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.empty() || scores.size() != labels.size())
    throw InputError("average_precision: scores and labels must be nonempty and equally sized");
  const int num_pos = static_cast<int>(std::count(labels.begin(), labels.end(), 1));
  const int num_neg = static_cast<int>(labels.size()) - num_pos;
  if (num_pos == 0) throw InputError("average_precision: undefined without positive videos");
  if (num_neg == 0) return 1.0;  // trivial ranking; callers flag this case

  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return scores[a] > scores[b]; });

  // Tied scores form one rank group evaluated with the precision after the
  // whole group is admitted.
  double ap = 0.0;
  int tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    int group_tp = 0, group_fp = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] == 1 ? group_tp : group_fp)++;
      ++j;
    }
    tp += group_tp;
    fp += group_fp;
    const double precision = static_cast<double>(tp) / (tp + fp);
    const double delta_recall = static_cast<double>(group_tp) / num_pos;
    ap += precision * delta_recall;
    i = j;
  }
  return ap;
}

double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.empty() || scores.size() != labels.size())
    throw InputError("auc: scores and labels must be nonempty and equally sized");
  std::vector<double> pos, neg;
  for (std::size_t i = 0; i < scores.size(); ++i)
    (labels[i] == 1 ? pos : neg).push_back(scores[i]);
  if (pos.empty() || neg.empty()) throw InputError("auc: needs both classes");

  // Rank-based Mann-Whitney; O(n log n).
  std::sort(pos.begin(), pos.end());
  std::sort(neg.begin(), neg.end());
  double correct = 0.0;
  for (double p : pos) {
    const auto lo = std::lower_bound(neg.begin(), neg.end(), p) - neg.begin();
    const auto hi = std::upper_bound(neg.begin(), neg.end(), p) - neg.begin();
    correct += static_cast<double>(lo) + 0.5 * static_cast<double>(hi - lo);
  }
  return correct / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

namespace {

struct GridPoint {
  double threshold, precision, recall, mean_tta;
};

std::vector<GridPoint> grid_scan(const std::vector<VideoScore>& videos, double frame_rate) {
  std::vector<GridPoint> rows;
  int num_pos = 0, num_neg = 0;
  for (const auto& v : videos) (v.label == 1 ? num_pos : num_neg)++;
  for (double theta : threshold_grid()) {
    int tp = 0, fp = 0;
    double tta_sum = 0.0;
    for (const auto& v : videos) {
      const bool flagged = v.video_score >= theta;
      if (v.label == 1) {
        if (flagged) ++tp;
        tta_sum += tta(v.curve, v.tau, theta, frame_rate);
      } else if (flagged) {
        ++fp;
      }
    }
    GridPoint g;
    g.threshold = theta;
    g.precision = (tp + fp) > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
    g.recall = num_pos > 0 ? static_cast<double>(tp) / num_pos : 0.0;
    g.mean_tta = num_pos > 0 ? tta_sum / num_pos : 0.0;
    rows.push_back(g);
  }
  return rows;
}

}  // namespace

std::optional<double> tta_at_recall(const std::vector<VideoScore>& videos, double target_recall,
                                    double frame_rate) {
  int num_pos = 0;
  for (const auto& v : videos) num_pos += v.label == 1 ? 1 : 0;
  if (num_pos == 0) throw InputError("tta_at_recall: no positive videos");

  const auto rows = grid_scan(videos, frame_rate);
  // Largest threshold whose recall still meets the target; no interpolation.
  for (auto it = rows.rbegin(); it != rows.rend(); ++it)
    if (it->recall >= target_recall) return it->mean_tta;
  return std::nullopt;
}

EvalReport evaluate_videos(const std::vector<VideoScore>& videos, double frame_rate) {
  EvalReport r;
  r.frame_rate = frame_rate;
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& v : videos) {
    scores.push_back(v.video_score);
    labels.push_back(v.label);
    (v.label == 1 ? r.num_positives : r.num_negatives)++;
  }
  if (r.num_positives == 0) throw InputError("evaluate_videos: no positive videos in split");
  r.ap_trivial_all_positive = r.num_negatives == 0;
  r.ap = average_precision(scores, labels);
  r.auc = r.ap_trivial_all_positive ? 1.0 : auc(scores, labels);
  r.mtta = mtta(videos, frame_rate, true);
  r.mtta_detected_only = mtta(videos, frame_rate, false);
  r.tta_at_r80 = tta_at_recall(videos, 0.8, frame_rate);
  r.tta_at_r50 = tta_at_recall(videos, 0.5, frame_rate);
  for (const auto& g : grid_scan(videos, frame_rate))
    r.table.push_back(ThresholdRow{g.threshold, g.precision, g.recall, g.mean_tta});
  return r;
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["ap"] = ap;
  j["auc"] = auc;
  j["mtta"] = mtta;
  j["mtta_detected_only"] = mtta_detected_only;
  if (tta_at_r80)
    j["tta_at_r80"] = *tta_at_r80;
  else
    j["tta_at_r80"] = "unreachable";
  if (tta_at_r50)
    j["tta_at_r50"] = *tta_at_r50;
  else
    j["tta_at_r50"] = "unreachable";
  j["frame_rate"] = frame_rate;
  j["num_positives"] = num_positives;
  j["num_negatives"] = num_negatives;
  j["ap_trivial_all_positive"] = ap_trivial_all_positive;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : table) {
    rows.push_back({{"threshold", row.threshold},
                    {"precision", row.precision},
                    {"recall", row.recall},
                    {"mean_tta", row.mean_tta}});
  }
  j["threshold_table"] = rows;
  return j.dump(2);
}

std::string EvalReport::table_csv() const {
  std::ostringstream out;
  out << "threshold,precision,recall,mean_tta\n";
  for (const auto& row : table) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%.2f,%.9g,%.9g,%.9g\n", row.threshold, row.precision,
                  row.recall, row.mean_tta);
    out << buf;
  }
  return out.str();
}

}  // namespace riskcast::eval
