#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <random>

#include "riskcast/scene.hpp"

namespace riskcast::scene {

void ScenarioConfig::validate() const {
  if (num_videos < 1) throw InputError("scenario: num_videos must be >= 1");
  if (frames_per_video < 2) throw InputError("scenario: frames_per_video must be >= 2");
  if (accident_fraction < 0.0 || accident_fraction > 1.0)
    throw InputError("scenario: accident_fraction must lie in [0, 1]");
  if (trap_fraction < 0.0 || trap_fraction > 1.0)
    throw InputError("scenario: trap_fraction must lie in [0, 1]");
  if (min_objects < 2 || max_objects < min_objects)
    throw InputError("scenario: need 2 <= min_objects <= max_objects");
  if (feature_dim < 1) throw InputError("scenario: feature_dim must be >= 1");
  if (noise_level < 0.0) throw InputError("scenario: noise_level must be >= 0");
  if (depth_max <= depth_min || depth_min < 0.0)
    throw InputError("scenario: depth range must satisfy 0 <= depth_min < depth_max");
  // Objects must fit with a margin wide enough that box centers always round
  // inside the depth grid and crossing points stay clear of the border.
  if (std::min(image_width, image_height) < 32)
    throw InputError("scenario: image too small to place objects (min dimension 32 px)");
}

namespace {

struct ObjectTrack {
  double x0 = 0, y0 = 0, z0 = 0;  // center at frame 0
  double vx = 0, vy = 0, vz = 0;  // per-frame deltas
  double w = 0, h = 0;            // box size, constant per object

  ObjectState at(int t) const {
    return ObjectState{x0 + vx * t, y0 + vy * t, z0 + vz * t, true};
  }
};

struct WorldLimits {
  double xmin, xmax, ymin, ymax;  // admissible center range
  double zmin, zmax;
};

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
}

double gauss(std::mt19937_64& rng) {
  // Box-Muller; avoids the implementation-defined std::normal_distribution.
  const double u1 = std::max(uniform(rng, 0.0, 1.0), 1e-300);
  const double u2 = uniform(rng, 0.0, 1.0);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

WorldLimits limits_for(const ScenarioConfig& cfg, double w, double h) {
  // Keep centers two pixels clear of the border so rounded lookups stay valid.
  return WorldLimits{w / 2.0 + 2.0, cfg.image_width - w / 2.0 - 3.0,
                     h / 2.0 + 2.0, cfg.image_height - h / 2.0 - 3.0,
                     cfg.depth_min, cfg.depth_max};
}

// Boxes are kept small relative to the image so that the occlusion window
// around a 2D crossing (where the nearer box paints over the farther box's
// center and corrupts its lifted depth) lasts only a few frames.
double sample_side(std::mt19937_64& rng, const ScenarioConfig& cfg) {
  const double hi = std::clamp(std::min(cfg.image_width, cfg.image_height) / 8.0, 3.0, 5.0);
  return uniform(rng, 3.0, hi);
}

// Straight line fully inside the limits: endpoints are sampled in-range and
// the velocity follows.
ObjectTrack random_track(std::mt19937_64& rng, const ScenarioConfig& cfg, int frames) {
  ObjectTrack tr;
  tr.w = sample_side(rng, cfg);
  tr.h = sample_side(rng, cfg);
  const WorldLimits lim = limits_for(cfg, tr.w, tr.h);
  const double x1 = uniform(rng, lim.xmin, lim.xmax), x2 = uniform(rng, lim.xmin, lim.xmax);
  const double y1 = uniform(rng, lim.ymin, lim.ymax), y2 = uniform(rng, lim.ymin, lim.ymax);
  const double z1 = uniform(rng, lim.zmin, lim.zmax), z2 = uniform(rng, lim.zmin, lim.zmax);
  tr.x0 = x1;
  tr.y0 = y1;
  tr.z0 = z1;
  tr.vx = (x2 - x1) / (frames - 1);
  tr.vy = (y2 - y1) / (frames - 1);
  tr.vz = (z2 - z1) / (frames - 1);
  return tr;
}

// Track passing through (mx, my, mz) at frame tm, in-bounds over the whole
// clip. The per-axis velocity is drawn from the exact interval that keeps
// both endpoints inside the limits (always nonempty when the meeting point
// is in bounds), so no rejection is needed.
ObjectTrack track_through(std::mt19937_64& rng, const ScenarioConfig& cfg, int frames, int tm,
                          double mx, double my, double mz) {
  ObjectTrack tr;
  tr.w = sample_side(rng, cfg);
  tr.h = sample_side(rng, cfg);
  const WorldLimits lim = limits_for(cfg, tr.w, tr.h);
  auto draw = [&](double m, double lo, double hi, double cap) {
    if (m < lo || m > hi)
      throw InputError("scenario: meeting point outside admissible bounds; enlarge dims");
    double vlo = -cap, vhi = cap;
    if (tm > 0) {
      vlo = std::max(vlo, (m - hi) / tm);
      vhi = std::min(vhi, (m - lo) / tm);
    }
    const int rest = frames - 1 - tm;
    if (rest > 0) {
      vlo = std::max(vlo, (lo - m) / rest);
      vhi = std::min(vhi, (hi - m) / rest);
    }
    return uniform(rng, vlo, vhi);
  };
  tr.vx = draw(mx, lim.xmin, lim.xmax, 1.5);
  tr.vy = draw(my, lim.ymin, lim.ymax, 1.5);
  tr.vz = draw(mz, lim.zmin, lim.zmax, 1.0);
  tr.x0 = mx - tr.vx * tm;
  tr.y0 = my - tr.vy * tm;
  tr.z0 = mz - tr.vz * tm;
  return tr;
}

double dist3(const ObjectState& a, const ObjectState& b) {
  const double dx = a.cx - b.cx, dy = a.cy - b.cy, dz = a.z - b.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

double dist2(const ObjectState& a, const ObjectState& b) {
  const double dx = a.cx - b.cx, dy = a.cy - b.cy;
  return std::sqrt(dx * dx + dy * dy);
}

double min_pair_dist3(const std::vector<ObjectTrack>& tracks, int frames, int skip_until = -1) {
  double best = std::numeric_limits<double>::infinity();
  for (int t = skip_until + 1; t < frames; ++t)
    for (std::size_t i = 0; i < tracks.size(); ++i)
      for (std::size_t j = i + 1; j < tracks.size(); ++j)
        best = std::min(best, dist3(tracks[i].at(t), tracks[j].at(t)));
  return best;
}

BoundingBox box_of(const ObjectState& st, double w, double h) {
  return BoundingBox{st.cx - w / 2.0, st.cy - h / 2.0, st.cx + w / 2.0, st.cy + h / 2.0};
}

void render_depth(DepthMap& depth, const std::vector<ObjectTrack>& tracks,
                  const std::vector<ObjectState>& states, double background) {
  std::fill(depth.values.begin(), depth.values.end(), static_cast<float>(background));
  // Painter's algorithm: draw far-to-near so nearer objects occlude.
  std::vector<int> order(tracks.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return states[a].z > states[b].z; });
  for (int idx : order) {
    const BoundingBox b = box_of(states[idx], tracks[idx].w, tracks[idx].h);
    const int x1 = std::max(0, static_cast<int>(std::floor(b.x1)));
    const int y1 = std::max(0, static_cast<int>(std::floor(b.y1)));
    const int x2 = std::min(depth.width - 1, static_cast<int>(std::ceil(b.x2)));
    const int y2 = std::min(depth.height - 1, static_cast<int>(std::ceil(b.y2)));
    const float z = static_cast<float>(quantize_f32(states[idx].z));
    for (int y = y1; y <= y2; ++y)
      for (int x = x1; x <= x2; ++x) depth.ref(x, y) = z;
  }
}

// Fixed random linear maps shared by the whole dataset. Features encode the
// 2D-observable kinematic state only; depth reaches the pipeline through the
// depth maps.
struct FeatureMaps {
  Eigen::MatrixXd object_map;   // D x 6
  Eigen::MatrixXd context_map;  // D x 6

  FeatureMaps(int d, std::mt19937_64& rng) : object_map(d, 6), context_map(d, 6) {
    for (int r = 0; r < d; ++r)
      for (int c = 0; c < 6; ++c) object_map(r, c) = uniform(rng, -1.0, 1.0);
    for (int r = 0; r < d; ++r)
      for (int c = 0; c < 6; ++c) context_map(r, c) = uniform(rng, -1.0, 1.0);
  }
};

enum class Kind { kPositive, kTrapNegative, kPlainNegative };

VideoSample make_sample(const ScenarioConfig& cfg, const FeatureMaps& maps, Kind kind, int index,
                        std::uint64_t video_seed) {
  std::mt19937_64 rng(video_seed);
  const int frames = cfg.frames_per_video;
  const int slots = cfg.max_objects;
  const double depth_range = cfg.depth_max - cfg.depth_min;
  const double sep_floor = 0.3 * depth_range;

  VideoSample sample;
  char idbuf[32];
  std::snprintf(idbuf, sizeof(idbuf), "v%05d", index);
  sample.sample_id = idbuf;

  int count = uniform_int(rng, cfg.min_objects, cfg.max_objects);
  std::vector<ObjectTrack> tracks;
  int tau = 0;

  if (kind == Kind::kPositive) {
    tau = uniform_int(rng, static_cast<int>(0.55 * frames), static_cast<int>(0.92 * frames));
    for (int attempt = 0;; ++attempt) {
      if (attempt > 512) throw InputError("scenario: failed to plant a clean collision");
      tracks.clear();
      // Meeting point for the colliding pair (tau is 1-based; frame index tau-1).
      const double mx = uniform(rng, 12.0, cfg.image_width - 13.0);
      const double my = uniform(rng, 12.0, cfg.image_height - 13.0);
      const double mz = uniform(rng, cfg.depth_min + 2.0, cfg.depth_max - 2.0);
      const int tm = tau - 1;
      tracks.push_back(track_through(rng, cfg, frames, tm, mx, my, mz));
      ObjectTrack second = track_through(rng, cfg, frames, tm, mx, my, mz);
      // Offset the second object slightly so the pair meets inside, but not
      // exactly at, the collision radius.
      const double off = uniform(rng, 0.1, 0.35) * cfg.collision_radius;
      second.x0 += off;
      tracks.push_back(second);
      for (int k = 2; k < count; ++k) tracks.push_back(random_track(rng, cfg, frames));

      if (dist3(tracks[0].at(tm), tracks[1].at(tm)) >= cfg.collision_radius) continue;
      bool clean = true;
      // The planted pair approaches gradually; require it to stay clear of
      // the radius until shortly before tau so the accident is localized.
      for (int t = 0; t < tm - 5 && clean; ++t)
        if (dist3(tracks[0].at(t), tracks[1].at(t)) < cfg.collision_radius) clean = false;
      // Every other pair keeps twice the radius for the whole clip, so the
      // planted collision is the only accident.
      for (int t = 0; t < frames && clean; ++t)
        for (std::size_t i = 0; i < tracks.size() && clean; ++i)
          for (std::size_t j = i + 1; j < tracks.size(); ++j) {
            if (i == 0 && j == 1) continue;
            if (dist3(tracks[i].at(t), tracks[j].at(t)) < 2.0 * cfg.collision_radius) {
              clean = false;
              break;
            }
          }
      // Near tau no bystander box may cover a planted center, so the lifted
      // depths at the collision are the pair's own.
      for (int t = std::max(0, tm - 2); t <= tm && clean; ++t)
        for (int k = 2; k < count && clean; ++k) {
          const ObjectState bys = tracks[k].at(t);
          const BoundingBox bb = box_of(bys, tracks[k].w, tracks[k].h);
          for (int p = 0; p < 2; ++p) {
            const ObjectState st = tracks[p].at(t);
            if (st.cx >= bb.x1 - 1.0 && st.cx <= bb.x2 + 1.0 && st.cy >= bb.y1 - 1.0 &&
                st.cy <= bb.y2 + 1.0) {
              clean = false;
              break;
            }
          }
        }
      if (!clean) continue;
      break;
    }
  } else if (kind == Kind::kTrapNegative) {
    for (int attempt = 0;; ++attempt) {
      if (attempt > 512) throw InputError("scenario: failed to plant a parallax trap");
      tracks.clear();
      // 2D crossing point; the pair stays separated in depth by >= sep_floor.
      // Crossing times follow the same window as planted accidents, so the
      // crossing instant itself carries no label information.
      const int tm =
          uniform_int(rng, static_cast<int>(0.55 * frames), static_cast<int>(0.92 * frames)) - 1;
      const double mx = uniform(rng, 12.0, cfg.image_width - 13.0);
      const double my = uniform(rng, 12.0, cfg.image_height - 13.0);
      const double z_near = uniform(rng, cfg.depth_min, cfg.depth_min + 0.25 * depth_range);
      const double z_far = z_near + uniform(rng, sep_floor * 1.15, depth_range * 0.9);
      if (z_far > cfg.depth_max) continue;
      ObjectTrack a = track_through(rng, cfg, frames, tm, mx, my, z_near);
      ObjectTrack b = track_through(rng, cfg, frames, tm, mx, my, z_far);
      // The same pixel offset planted collisions carry, so the 2D closest
      // approach carries no label information either.
      const double off = uniform(rng, 0.1, 0.35) * cfg.collision_radius;
      b.x0 += off;
      // Flatten depth motion so the separation holds at every frame.
      a.vz = 0.0;
      a.z0 = z_near;
      b.vz = 0.0;
      b.z0 = z_far;
      tracks.push_back(a);
      tracks.push_back(b);
      for (int k = 2; k < count; ++k) tracks.push_back(random_track(rng, cfg, frames));
      // No pair may ever violate 2x the collision radius in 3D.
      if (min_pair_dist3(tracks, frames) < 2.0 * cfg.collision_radius) continue;
      // The trap pair must actually meet in pixels.
      double best2d = std::numeric_limits<double>::infinity();
      for (int t = 0; t < frames; ++t) best2d = std::min(best2d, dist2(a.at(t), b.at(t)));
      if (best2d > 5.0) continue;
      // Same bystander-clearance rule as planted collisions, so clear or
      // cluttered crossings are equally likely under either label.
      bool clear = true;
      for (int t = std::max(0, tm - 2); t <= tm && clear; ++t)
        for (int k = 2; k < count && clear; ++k) {
          const ObjectState bys = tracks[k].at(t);
          const BoundingBox bb = box_of(bys, tracks[k].w, tracks[k].h);
          for (int p = 0; p < 2; ++p) {
            const ObjectState st = tracks[p].at(t);
            if (st.cx >= bb.x1 - 1.0 && st.cx <= bb.x2 + 1.0 && st.cy >= bb.y1 - 1.0 &&
                st.cy <= bb.y2 + 1.0) {
              clear = false;
              break;
            }
          }
        }
      if (!clear) continue;
      break;
    }
  } else {
    for (int attempt = 0;; ++attempt) {
      if (attempt > 512) throw InputError("scenario: failed to sample a clean negative");
      tracks.clear();
      for (int k = 0; k < count; ++k) tracks.push_back(random_track(rng, cfg, frames));
      if (min_pair_dist3(tracks, frames) >= 2.0 * cfg.collision_radius) break;
    }
  }

  sample.label = kind == Kind::kPositive ? 1 : 0;
  sample.accident_frame = tau;
  sample.has_depth = true;

  GroundTruth gt;
  gt.collision_radius = cfg.collision_radius;
  gt.separation_floor = sep_floor;
  gt.parallax_trap = kind == Kind::kTrapNegative;
  gt.states.resize(frames);

  sample.frames.resize(frames);
  for (int t = 0; t < frames; ++t) {
    FrameObservation& fr = sample.frames[t];
    fr.depth.width = cfg.image_width;
    fr.depth.height = cfg.image_height;
    fr.depth.values.resize(static_cast<std::size_t>(cfg.image_width) * cfg.image_height);
    fr.objects.assign(slots, Eigen::VectorXd::Zero(cfg.feature_dim));
    fr.boxes.assign(slots, BoundingBox::sentinel());
    fr.present.assign(slots, 0);
    gt.states[t].assign(slots, ObjectState{});

    std::vector<ObjectState> states(count);
    for (int k = 0; k < count; ++k) states[k] = tracks[k].at(t);
    render_depth(fr.depth, tracks, states, cfg.depth_max);

    // Scene-level context: object density, mean position/speed, and the
    // minimum pairwise pixel distance (2D-observable risk cue).
    double min2d = std::hypot(cfg.image_width, cfg.image_height);
    double mean_cx = 0, mean_cy = 0, mean_speed = 0;
    for (int i = 0; i < count; ++i) {
      mean_cx += states[i].cx;
      mean_cy += states[i].cy;
      mean_speed += std::hypot(tracks[i].vx, tracks[i].vy);
      for (int j = i + 1; j < count; ++j) min2d = std::min(min2d, dist2(states[i], states[j]));
    }
    mean_cx /= count;
    mean_cy /= count;
    mean_speed /= count;

    Eigen::VectorXd ctx_state(6);
    ctx_state << 1.0, static_cast<double>(count) / slots, mean_cx / cfg.image_width,
        mean_cy / cfg.image_height, mean_speed,
        min2d / std::hypot(cfg.image_width, cfg.image_height);
    Eigen::VectorXd ctx = maps.context_map * ctx_state;
    for (int d = 0; d < cfg.feature_dim; ++d)
      ctx[d] = quantize_f32(ctx[d] + cfg.noise_level * gauss(rng));
    fr.context = ctx;

    for (int k = 0; k < count; ++k) {
      fr.present[k] = 1;
      fr.boxes[k] = box_of(states[k], tracks[k].w, tracks[k].h);
      fr.boxes[k].x1 = quantize_f32(fr.boxes[k].x1);
      fr.boxes[k].y1 = quantize_f32(fr.boxes[k].y1);
      fr.boxes[k].x2 = quantize_f32(fr.boxes[k].x2);
      fr.boxes[k].y2 = quantize_f32(fr.boxes[k].y2);
      Eigen::VectorXd state(6);
      state << states[k].cx / cfg.image_width, states[k].cy / cfg.image_height, tracks[k].vx,
          tracks[k].vy, tracks[k].w / cfg.image_width, tracks[k].h / cfg.image_height;
      Eigen::VectorXd feat = maps.object_map * state;
      for (int d = 0; d < cfg.feature_dim; ++d)
        feat[d] = quantize_f32(feat[d] + cfg.noise_level * gauss(rng));
      fr.objects[k] = feat;
      gt.states[t][k] = ObjectState{quantize_f32(states[k].cx), quantize_f32(states[k].cy),
                                    quantize_f32(states[k].z), true};
    }
  }
  sample.ground_truth = std::move(gt);
  return sample;
}

}  // namespace

std::vector<VideoSample> generate_dataset(const ScenarioConfig& config) {
  config.validate();
  std::mt19937_64 map_rng(derive_seed(config.seed, 0xfeedULL));
  const FeatureMaps maps(config.feature_dim, map_rng);

  const int num_pos = static_cast<int>(std::lround(config.accident_fraction * config.num_videos));
  const int num_neg = config.num_videos - num_pos;
  const int num_trap = static_cast<int>(std::lround(config.trap_fraction * num_neg));

  std::vector<VideoSample> out;
  out.reserve(config.num_videos);
  for (int v = 0; v < config.num_videos; ++v) {
    Kind kind = Kind::kPositive;
    if (v >= num_pos) kind = (v - num_pos) < num_trap ? Kind::kTrapNegative : Kind::kPlainNegative;
    out.push_back(make_sample(config, maps, kind, v, derive_seed(config.seed, 100 + v)));
  }
  return out;
}

int FrameObservation::num_present() const {
  int k = 0;
  for (auto p : present) k += p ? 1 : 0;
  return k;
}

}  // namespace riskcast::scene
