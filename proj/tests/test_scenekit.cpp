#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "riskcast/dataset_io.hpp"
#include "riskcast/geometry.hpp"
#include "riskcast/scene.hpp"

using namespace riskcast;
using scene::ScenarioConfig;
using scene::VideoSample;

namespace fs = std::filesystem;

namespace {

ScenarioConfig small_config(std::uint64_t seed) {
  ScenarioConfig cfg;
  cfg.num_videos = 12;
  cfg.frames_per_video = 60;
  cfg.image_width = 64;
  cfg.image_height = 48;
  cfg.min_objects = 3;
  cfg.max_objects = 4;
  cfg.accident_fraction = 0.34;
  cfg.trap_fraction = 0.4;
  cfg.feature_dim = 8;
  cfg.seed = seed;
  return cfg;
}

bool samples_equal(const VideoSample& a, const VideoSample& b) {
  if (a.sample_id != b.sample_id || a.label != b.label || a.accident_frame != b.accident_frame ||
      a.has_depth != b.has_depth || a.num_frames() != b.num_frames())
    return false;
  for (int t = 0; t < a.num_frames(); ++t) {
    const auto& fa = a.frames[t];
    const auto& fb = b.frames[t];
    if (fa.context != fb.context || fa.present != fb.present) return false;
    for (int n = 0; n < fa.num_objects(); ++n) {
      if (fa.objects[n] != fb.objects[n]) return false;
      if (fa.boxes[n].x1 != fb.boxes[n].x1 || fa.boxes[n].y1 != fb.boxes[n].y1 ||
          fa.boxes[n].x2 != fb.boxes[n].x2 || fa.boxes[n].y2 != fb.boxes[n].y2)
        return false;
    }
    if (fa.depth.values != fb.depth.values) return false;
  }
  if (a.ground_truth.has_value() != b.ground_truth.has_value()) return false;
  if (a.ground_truth) {
    if (a.ground_truth->parallax_trap != b.ground_truth->parallax_trap) return false;
    for (int t = 0; t < a.num_frames(); ++t)
      for (std::size_t n = 0; n < a.ground_truth->states[t].size(); ++n) {
        const auto& sa = a.ground_truth->states[t][n];
        const auto& sb = b.ground_truth->states[t][n];
        if (sa.cx != sb.cx || sa.cy != sb.cy || sa.z != sb.z || sa.present != sb.present)
          return false;
      }
  }
  return true;
}

double gt_dist3(const scene::ObjectState& a, const scene::ObjectState& b) {
  return std::sqrt((a.cx - b.cx) * (a.cx - b.cx) + (a.cy - b.cy) * (a.cy - b.cy) +
                   (a.z - b.z) * (a.z - b.z));
}

double gt_dist2(const scene::ObjectState& a, const scene::ObjectState& b) {
  return std::sqrt((a.cx - b.cx) * (a.cx - b.cx) + (a.cy - b.cy) * (a.cy - b.cy));
}

std::string temp_dir(const char* tag) {
  const auto dir = fs::temp_directory_path() / (std::string("riskcast_test_") + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

}  // namespace

TEST_CASE("generate_dataset: identical config gives bit-identical datasets") {
  const auto a = scene::generate_dataset(small_config(7));
  const auto b = scene::generate_dataset(small_config(7));
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(samples_equal(a[i], b[i]));

  const auto c = scene::generate_dataset(small_config(8));
  CHECK_FALSE(samples_equal(a[0], c[0]));
}

TEST_CASE("generate_dataset: label consistency against ground truth") {
  const auto samples = scene::generate_dataset(small_config(21));
  int positives = 0, traps = 0;
  for (const auto& s : samples) {
    REQUIRE(s.ground_truth.has_value());
    const auto& gt = *s.ground_truth;
    const int frames = s.num_frames();
    if (s.label == 1) {
      ++positives;
      REQUIRE(s.accident_frame >= 1);
      REQUIRE(s.accident_frame <= frames);
      // The planted pair violates the collision radius at tau.
      double best = 1e300;
      const auto& st = gt.states[s.accident_frame - 1];
      for (std::size_t i = 0; i < st.size(); ++i)
        for (std::size_t j = i + 1; j < st.size(); ++j)
          if (st[i].present && st[j].present) best = std::min(best, gt_dist3(st[i], st[j]));
      CHECK(best < gt.collision_radius);
    } else {
      CHECK(s.accident_frame == 0);
      if (gt.parallax_trap) ++traps;
      // Negatives never violate the radius, at any frame.
      for (int t = 0; t < frames; ++t) {
        const auto& st = gt.states[t];
        for (std::size_t i = 0; i < st.size(); ++i)
          for (std::size_t j = i + 1; j < st.size(); ++j)
            if (st[i].present && st[j].present)
              CHECK(gt_dist3(st[i], st[j]) >= gt.collision_radius);
      }
    }
  }
  CHECK(positives == 4);  // round(0.34 * 12)
  CHECK(traps == 3);      // round(0.4 * 8)
}

TEST_CASE("generate_dataset: parallax traps meet in pixels, never in depth") {
  const auto samples = scene::generate_dataset(small_config(33));
  int checked = 0;
  for (const auto& s : samples) {
    if (!s.ground_truth || !s.ground_truth->parallax_trap) continue;
    ++checked;
    const auto& gt = *s.ground_truth;
    double min2d = 1e300, min3d = 1e300;
    for (const auto& st : gt.states) {
      min2d = std::min(min2d, gt_dist2(st[0], st[1]));
      min3d = std::min(min3d, gt_dist3(st[0], st[1]));
    }
    CHECK(min2d <= 5.0);
    CHECK(min3d >= gt.separation_floor);
  }
  CHECK(checked > 0);
}

TEST_CASE("generate_dataset: planted collision is visible through depth lifting") {
  auto cfg = small_config(44);
  cfg.frames_per_video = 100;
  const auto samples = scene::generate_dataset(cfg);
  geometry::EdgeWeightConfig ecfg;
  int checked = 0;
  for (const auto& s : samples) {
    if (s.label != 1) continue;
    ++checked;
    const auto& fr = s.frames[s.accident_frame - 1];
    const auto p0 = geometry::lift_to_3d(fr.boxes[0], fr.depth);
    const auto p1 = geometry::lift_to_3d(fr.boxes[1], fr.depth);
    const double dist = std::sqrt(geometry::pair_distance(p0, p1, ecfg));
    CHECK(dist < s.ground_truth->collision_radius);
  }
  CHECK(checked > 0);
}

TEST_CASE("generate_dataset: depth maps render nearer objects over farther ones") {
  const auto samples = scene::generate_dataset(small_config(50));
  // At every frame, the depth at a present object's center equals the minimum
  // ground-truth z among objects covering that pixel.
  const auto& s = samples[0];
  for (int t = 0; t < s.num_frames(); t += 7) {
    const auto& fr = s.frames[t];
    const auto& st = s.ground_truth->states[t];
    for (int n = 0; n < fr.num_objects(); ++n) {
      if (!fr.present[n]) continue;
      const auto [cx, cy] = geometry::box_center(fr.boxes[n]);
      const int ix = static_cast<int>(std::lround(cx));
      const int iy = static_cast<int>(std::lround(cy));
      double expect = 1e300;
      for (int m = 0; m < fr.num_objects(); ++m) {
        if (!fr.present[m]) continue;
        const auto& b = fr.boxes[m];
        if (ix >= std::floor(b.x1) && ix <= std::ceil(b.x2) && iy >= std::floor(b.y1) &&
            iy <= std::ceil(b.y2))
          expect = std::min(expect, st[m].z);
      }
      CHECK(fr.depth.at(ix, iy) == doctest::Approx(expect).epsilon(1e-6));
    }
  }
}

TEST_CASE("generate_dataset: rejects configs that cannot fit objects") {
  auto cfg = small_config(1);
  cfg.image_width = 16;
  cfg.image_height = 16;
  CHECK_THROWS_AS(scene::generate_dataset(cfg), InputError);
}

TEST_CASE("save/load round-trip is exact") {
  const auto samples = scene::generate_dataset(small_config(90));
  const std::string dir = temp_dir("roundtrip");
  const std::string manifest = scene::save_dataset(samples, dir);
  CHECK(fs::exists(manifest));
  CHECK(fs::exists(fs::path(dir) / "splits.json"));

  const auto loaded = scene::load_dataset(dir);
  REQUIRE(loaded.size() == samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) CHECK(samples_equal(samples[i], loaded[i]));
  fs::remove_all(dir);
}

TEST_CASE("load_dataset: missing manifest and shape mismatches are named") {
  const std::string dir = temp_dir("badload");
  CHECK_THROWS_WITH_AS(scene::load_dataset(dir),
                       doctest::Contains("missing manifest"), InputError);

  const auto samples = scene::generate_dataset(small_config(91));
  scene::save_dataset(samples, dir);
  // Truncate one record: load must fail naming the file.
  const std::string victim = (fs::path(dir) / (samples[2].sample_id + ".bin")).string();
  {
    std::ofstream out(victim, std::ios::binary | std::ios::trunc);
    out << "short";
  }
  try {
    scene::load_dataset(dir);
    FAIL("expected shape mismatch");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find(samples[2].sample_id) != std::string::npos);
  }
  fs::remove_all(dir);
}

TEST_CASE("splits: stratified, deterministic, no overlap") {
  const auto samples = scene::generate_dataset(small_config(92));
  const auto sp1 = scene::make_splits(samples);
  const auto sp2 = scene::make_splits(samples);
  CHECK(sp1.train == sp2.train);
  CHECK(sp1.test == sp2.test);
  CHECK(sp1.train.size() + sp1.test.size() == samples.size());
  for (const auto& id : sp1.test)
    CHECK(std::find(sp1.train.begin(), sp1.train.end(), id) == sp1.train.end());
}

TEST_CASE("ingest_precomputed: schema checks, depth-free handling, zero-row demotion") {
  auto cfg = small_config(93);
  cfg.num_videos = 4;
  auto samples = scene::generate_dataset(cfg);
  // Strip depth and plant an all-zero feature row marked present.
  for (auto& s : samples) {
    s.has_depth = false;
    for (auto& fr : s.frames) fr.depth = scene::DepthMap{};
    s.ground_truth.reset();
  }
  samples[0].frames[5].objects[0].setZero();
  const std::string dir = temp_dir("ingest");
  scene::save_dataset(samples, dir);

  scene::SchemaDescriptor schema{cfg.frames_per_video, cfg.max_objects, cfg.feature_dim, false};
  const auto res = scene::ingest_precomputed(dir, schema);
  CHECK(res.samples.size() == 4);
  CHECK(res.zero_feature_rows_demoted == 1);
  CHECK_FALSE(res.samples[0].has_depth);
  CHECK(res.samples[0].frames[5].present[0] == 0);

  // Depth-free samples cannot build a 3D graph, 2D works.
  geometry::EdgeWeightConfig ecfg;
  CHECK_THROWS_AS(geometry::build_graph_sequence(res.samples[0], geometry::GraphMode::k3D, ecfg),
                  ComputeError);
  CHECK_NOTHROW(geometry::build_graph_sequence(res.samples[0], geometry::GraphMode::k2D, ecfg));

  // Schema mismatches name expected vs found shapes.
  scene::SchemaDescriptor wrong = schema;
  wrong.object_slots = schema.object_slots + 1;
  CHECK_THROWS_WITH_AS(scene::ingest_precomputed(dir, wrong),
                       doctest::Contains("object slots"), InputError);
  scene::SchemaDescriptor need_depth = schema;
  need_depth.require_depth = true;
  CHECK_THROWS_WITH_AS(scene::ingest_precomputed(dir, need_depth),
                       doctest::Contains("depth"), InputError);
  fs::remove_all(dir);
}

TEST_CASE("ingest_precomputed: DAD-shaped archive carries tau through") {
  // T=100, N=19, D=4096, accident at frame 90.
  scene::VideoSample s;
  s.sample_id = "dad0";
  s.label = 1;
  s.accident_frame = 90;
  s.has_depth = false;
  s.frames.resize(100);
  std::mt19937_64 rng(4096);
  for (auto& fr : s.frames) {
    fr.context = Eigen::VectorXd::Constant(4096, 0.25);
    fr.objects.assign(19, Eigen::VectorXd::Constant(4096, 0.5));
    fr.boxes.assign(19, scene::BoundingBox{1, 1, 5, 5});
    fr.present.assign(19, 1);
  }
  const std::string dir = temp_dir("dad");
  scene::save_dataset({s}, dir);
  const auto res = scene::ingest_precomputed(dir, scene::SchemaDescriptor{100, 19, 4096, false});
  REQUIRE(res.samples.size() == 1);
  CHECK(res.samples[0].accident_frame == 90);
  CHECK(res.samples[0].label == 1);
  CHECK_FALSE(res.samples[0].has_depth);
  fs::remove_all(dir);
}
