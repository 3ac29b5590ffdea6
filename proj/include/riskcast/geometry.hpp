#pragma once

#include <Eigen/Core>
#include <array>
#include <optional>
#include <utility>
#include <vector>

#include "riskcast/scene.hpp"

namespace riskcast::geometry {

struct Point3D {
  double cx = 0.0;
  double cy = 0.0;
  double z = 0.0;
};

struct EdgeWeightConfig {
  double alpha_d = 0.6;  // weight of the distance term
  double alpha_m = 0.4;  // weight of the motion-difference term
  std::array<double, 3> coordinate_scaling{1.0, 1.0, 1.0};
  double epsilon = 1e-8;        // unit-vector normalization guard
  bool squared_distance = true; // ||.||^2 as written; plain norm behind the flag

  void validate() const;
};

enum class GraphMode { k3D, k2D };

// Per-frame collision graph. weights is NxN, zero on the diagonal and on
// absent-object rows/columns; entries over present ordered pairs sum to 1
// when at least two objects are present.
struct CollisionGraph {
  Eigen::MatrixXd node_features;             // N x (context_dim + object_dim)
  Eigen::MatrixXd weights;                   // N x N
  std::vector<std::pair<int, int>> edges;    // ordered present pairs (i, j), i != j
  std::vector<std::uint8_t> present;
  int num_present = 0;
};

// Velocity between consecutive frames; has_history is false at t=0 or after
// an absence gap (delta is then zero).
struct Velocity {
  Eigen::Vector3d delta = Eigen::Vector3d::Zero();
  bool has_history = false;
};

// Midpoint of a box. Sentinel (padded) boxes are an error; callers mask first.
std::pair<double, double> box_center(const scene::BoundingBox& box);

// (cx, cy, depth at the rounded center). Errors if the rounded center falls
// outside the grid.
Point3D lift_to_3d(const scene::BoundingBox& box, const scene::DepthMap& depth);

// Squared (default) Euclidean distance after per-axis scaling.
double pair_distance(const Point3D& a, const Point3D& b, const EdgeWeightConfig& cfg);

Velocity velocity(const Point3D& current, const std::optional<Point3D>& previous);

// || v_i/(|v_i|+eps) - v_j/(|v_j|+eps) ||; zero vectors normalize to zero.
double motion_difference(const Eigen::Vector3d& v_i, const Eigen::Vector3d& v_j, double epsilon);

double edge_weight(double distance, double motion, const EdgeWeightConfig& cfg);

// Softmax over present off-diagonal pairs, max-subtracted for stability.
// Fewer than two present objects yields the all-zero matrix.
Eigen::MatrixXd normalize_weights(const Eigen::MatrixXd& raw,
                                  const std::vector<std::uint8_t>& present);

// Full Eq.-chain graph assembly for one frame. prev may be null (first frame).
// 2D mode zeroes the depth coordinate throughout and never touches the depth
// grid; 3D mode on a depth-free frame is an error.
CollisionGraph build_graph(const scene::FrameObservation& frame,
                           const scene::FrameObservation* prev,
                           const Eigen::VectorXd& context_vec,
                           GraphMode mode,
                           const EdgeWeightConfig& cfg);

// Graphs for every frame of a sample (velocities chain across frames).
std::vector<CollisionGraph> build_graph_sequence(const scene::VideoSample& sample,
                                                 GraphMode mode,
                                                 const EdgeWeightConfig& cfg);

}  // namespace riskcast::geometry
