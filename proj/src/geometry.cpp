#include "riskcast/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace riskcast::geometry {

void EdgeWeightConfig::validate() const {
  if (alpha_d < 0.0 || alpha_m < 0.0)
    throw InputError("edge weight config: alpha_d and alpha_m must be nonnegative");
  if (std::abs(alpha_d + alpha_m - 1.0) > 1e-12)
    throw InputError("edge weight config: alpha_d + alpha_m must equal 1");
  if (!(epsilon > 0.0)) throw InputError("edge weight config: epsilon must be positive");
  for (double s : coordinate_scaling)
    if (!std::isfinite(s)) throw InputError("edge weight config: non-finite coordinate scaling");
}

std::pair<double, double> box_center(const scene::BoundingBox& box) {
  if (box.is_sentinel())
    throw ComputeError("box_center: padded (sentinel) box; mask absent objects before use");
  return {(box.x1 + box.x2) / 2.0, (box.y1 + box.y2) / 2.0};
}

Point3D lift_to_3d(const scene::BoundingBox& box, const scene::DepthMap& depth) {
  const auto [cx, cy] = box_center(box);
  const long ix = std::lround(cx);
  const long iy = std::lround(cy);
  if (ix < 0 || iy < 0 || ix >= depth.width || iy >= depth.height) {
    throw ComputeError("lift_to_3d: box center (" + std::to_string(cx) + ", " + std::to_string(cy) +
                       ") falls outside the " + std::to_string(depth.width) + "x" +
                       std::to_string(depth.height) + " depth grid");
  }
  return Point3D{cx, cy, depth.at(static_cast<int>(ix), static_cast<int>(iy))};
}

double pair_distance(const Point3D& a, const Point3D& b, const EdgeWeightConfig& cfg) {
  const double dx = (a.cx - b.cx) * cfg.coordinate_scaling[0];
  const double dy = (a.cy - b.cy) * cfg.coordinate_scaling[1];
  const double dz = (a.z - b.z) * cfg.coordinate_scaling[2];
  const double sq = dx * dx + dy * dy + dz * dz;
  return cfg.squared_distance ? sq : std::sqrt(sq);
}

Velocity velocity(const Point3D& current, const std::optional<Point3D>& previous) {
  Velocity v;
  if (!previous.has_value()) return v;  // zero delta, no history
  v.delta = Eigen::Vector3d(current.cx - previous->cx, current.cy - previous->cy,
                            current.z - previous->z);
  v.has_history = true;
  return v;
}

double motion_difference(const Eigen::Vector3d& v_i, const Eigen::Vector3d& v_j, double epsilon) {
  const Eigen::Vector3d ui = v_i / (v_i.norm() + epsilon);
  const Eigen::Vector3d uj = v_j / (v_j.norm() + epsilon);
  return (ui - uj).norm();
}

double edge_weight(double distance, double motion, const EdgeWeightConfig& cfg) {
  return cfg.alpha_d * distance + cfg.alpha_m * motion;
}

Eigen::MatrixXd normalize_weights(const Eigen::MatrixXd& raw,
                                  const std::vector<std::uint8_t>& present) {
  const int n = static_cast<int>(present.size());
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
  double qmax = -std::numeric_limits<double>::infinity();
  int pairs = 0;
  for (int i = 0; i < n; ++i) {
    if (!present[i]) continue;
    for (int j = 0; j < n; ++j) {
      if (i == j || !present[j]) continue;
      if (!std::isfinite(raw(i, j)))
        throw ComputeError("normalize_weights: non-finite raw weight at (" + std::to_string(i) +
                           ", " + std::to_string(j) + ")");
      qmax = std::max(qmax, raw(i, j));
      ++pairs;
    }
  }
  if (pairs == 0) return w;  // fewer than two present objects: empty graph
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    if (!present[i]) continue;
    for (int j = 0; j < n; ++j) {
      if (i == j || !present[j]) continue;
      w(i, j) = std::exp(raw(i, j) - qmax);
      total += w(i, j);
    }
  }
  w /= total;
  return w;
}

namespace {

// Center points for the present objects of one frame; 2D mode never reads the
// depth grid and carries z = 0.
std::vector<std::optional<Point3D>> frame_points(const scene::FrameObservation& frame,
                                                 GraphMode mode) {
  const int n = frame.num_objects();
  std::vector<std::optional<Point3D>> pts(n);
  for (int i = 0; i < n; ++i) {
    if (!frame.present[i]) continue;
    if (mode == GraphMode::k3D) {
      pts[i] = lift_to_3d(frame.boxes[i], frame.depth);
    } else {
      const auto [cx, cy] = box_center(frame.boxes[i]);
      pts[i] = Point3D{cx, cy, 0.0};
    }
  }
  return pts;
}

}  // namespace

CollisionGraph build_graph(const scene::FrameObservation& frame,
                           const scene::FrameObservation* prev,
                           const Eigen::VectorXd& context_vec,
                           GraphMode mode,
                           const EdgeWeightConfig& cfg) {
  cfg.validate();
  if (mode == GraphMode::k3D && frame.depth.empty())
    throw ComputeError("build_graph: 3D mode requires a depth map; sample is depth-free");

  const int n = frame.num_objects();
  CollisionGraph g;
  g.present = frame.present;
  g.weights = Eigen::MatrixXd::Zero(n, n);

  const auto pts = frame_points(frame, mode);
  std::vector<std::optional<Point3D>> prev_pts(n);
  if (prev) prev_pts = frame_points(*prev, mode);

  // Velocities; absent in the previous frame (or no previous frame) means no
  // history and therefore a zero velocity.
  std::vector<Eigen::Vector3d> vel(n, Eigen::Vector3d::Zero());
  for (int i = 0; i < n; ++i) {
    if (!frame.present[i]) continue;
    vel[i] = velocity(*pts[i], prev_pts[i]).delta;
  }

  Eigen::MatrixXd raw = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    if (!frame.present[i]) continue;
    ++g.num_present;
    for (int j = 0; j < n; ++j) {
      if (i == j || !frame.present[j]) continue;
      const double d = pair_distance(*pts[i], *pts[j], cfg);
      const double m = motion_difference(vel[i], vel[j], cfg.epsilon);
      raw(i, j) = edge_weight(d, m, cfg);
      g.edges.emplace_back(i, j);
    }
  }
  g.weights = normalize_weights(raw, frame.present);

  const int ctx_dim = static_cast<int>(context_vec.size());
  const int obj_dim = n > 0 ? static_cast<int>(frame.objects[0].size()) : 0;
  g.node_features = Eigen::MatrixXd::Zero(n, ctx_dim + obj_dim);
  for (int i = 0; i < n; ++i) {
    if (!frame.present[i]) continue;
    g.node_features.row(i).head(ctx_dim) = context_vec.transpose();
    g.node_features.row(i).tail(obj_dim) = frame.objects[i].transpose();
  }
  return g;
}

std::vector<CollisionGraph> build_graph_sequence(const scene::VideoSample& sample,
                                                 GraphMode mode,
                                                 const EdgeWeightConfig& cfg) {
  std::vector<CollisionGraph> out;
  out.reserve(sample.frames.size());
  const scene::FrameObservation* prev = nullptr;
  for (const auto& frame : sample.frames) {
    out.push_back(build_graph(frame, prev, frame.context, mode, cfg));
    prev = &frame;
  }
  return out;
}

}  // namespace riskcast::geometry
