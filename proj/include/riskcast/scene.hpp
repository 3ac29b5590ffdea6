#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "riskcast/common.hpp"

namespace riskcast::scene {

// Axis-aligned box in image pixels, origin top-left. Padded object slots use
// the sentinel (all coordinates -1).
struct BoundingBox {
  double x1 = -1.0, y1 = -1.0, x2 = -1.0, y2 = -1.0;

  bool is_sentinel() const { return x1 == -1.0 && y1 == -1.0 && x2 == -1.0 && y2 == -1.0; }
  static BoundingBox sentinel() { return BoundingBox{}; }
};

// Per-frame depth grid. Values are nonnegative, stored as float32 to match
// the on-disk record format. Empty (0x0) means "no depth available".
struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<float> values;  // row-major, values[y * width + x]

  bool empty() const { return width == 0 || height == 0; }
  double at(int x, int y) const { return static_cast<double>(values[static_cast<std::size_t>(y) * width + x]); }
  float& ref(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
};

// One frame: a scene-level context feature, N fixed object slots (features,
// boxes, presence), and the frame's depth map.
struct FrameObservation {
  Eigen::VectorXd context;                   // length D
  std::vector<Eigen::VectorXd> objects;      // N entries, each length D
  std::vector<BoundingBox> boxes;            // N entries
  std::vector<std::uint8_t> present;         // N entries; 0 = padded slot
  DepthMap depth;

  int num_objects() const { return static_cast<int>(objects.size()); }
  int num_present() const;
};

// Generator ground truth kept alongside synthetic samples so label and
// parallax-trap properties can be re-verified geometrically.
struct ObjectState {
  double cx = 0.0, cy = 0.0, z = 0.0;
  bool present = false;
};

struct GroundTruth {
  double collision_radius = 0.0;
  double separation_floor = 0.0;  // minimum 3D distance promised for trap pairs
  bool parallax_trap = false;
  std::vector<std::vector<ObjectState>> states;  // [frame][object_slot]
};

// One labeled clip.
struct VideoSample {
  std::string sample_id;
  std::vector<FrameObservation> frames;
  int label = 0;           // 1 if the clip contains an accident
  int accident_frame = 0;  // tau, 1-based; 0 for negatives
  bool has_depth = true;
  std::optional<GroundTruth> ground_truth;

  int num_frames() const { return static_cast<int>(frames.size()); }
};

struct ScenarioConfig {
  int num_videos = 50;
  int frames_per_video = 100;
  int image_width = 64;
  int image_height = 48;
  int min_objects = 3;
  int max_objects = 5;
  double accident_fraction = 0.3;
  double trap_fraction = 0.3;  // fraction of negatives that are parallax traps
  int feature_dim = 16;
  double noise_level = 0.05;
  std::uint64_t seed = 0;

  // Geometry constants of the synthetic world.
  double collision_radius = 2.0;
  double depth_min = 5.0;
  double depth_max = 50.0;
  double frame_rate = 20.0;

  void validate() const;
};

// Deterministic synthetic dataset. Same config (incl. seed) => bit-identical
// samples. Positives plant a 3D collision at tau; a trap_fraction of the
// negatives are parallax traps (2D centers meet within <=5 px while 3D
// separation never drops below separation_floor).
std::vector<VideoSample> generate_dataset(const ScenarioConfig& config);

}  // namespace riskcast::scene
