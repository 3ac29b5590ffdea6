#include "riskcast/dataset_io.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "riskcast/common.hpp"

namespace riskcast::scene {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kSchemaVersion = 1;
constexpr std::uint32_t kFlagHasDepth = 1u << 0;
constexpr std::uint32_t kFlagHasGroundTruth = 1u << 1;
constexpr std::uint32_t kFlagParallaxTrap = 1u << 2;

// Record layout, all little-endian:
//   u32 label, u32 accident_frame, u32 flags
//   per frame: context f32[D]; objects f32[N*D]; boxes f32[N*4] (x1,y1,x2,y2);
//              presence f32[N]; depth f32[X*Y] row-major (only when flagged)
//   when ground truth is flagged: f32 collision_radius, f32 separation_floor,
//              per frame per slot f32[4] (cx, cy, z, present)
const char* kRecordLayout =
    "u32 label; u32 accident_frame; u32 flags(bit0 depth, bit1 ground_truth, bit2 trap); "
    "per frame: context[D] f32, objects[N*D] f32, boxes[N*4] f32 (x1,y1,x2,y2), "
    "presence[N] f32, depth[Y*X] f32 row-major if bit0; "
    "if bit1: collision_radius f32, separation_floor f32, states[T*N*4] f32 (cx,cy,z,present)";

class Writer {
 public:
  explicit Writer(const std::string& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw InputError("cannot open for writing: " + path);
  }
  void u32(std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out_.write(reinterpret_cast<const char*>(b), 4);
  }
  void f32(double v) {
    float f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    u32(bits);
  }
  void f32_block(const float* data, std::size_t count) {
    // Little-endian host: raw block write.
    out_.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * 4));
  }
  void close() {
    out_.close();
    if (!out_) throw InputError("write failed: " + path_);
  }

 private:
  std::string path_;
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw InputError("cannot open record: " + path);
    in_.seekg(0, std::ios::end);
    size_ = static_cast<std::size_t>(in_.tellg());
    in_.seekg(0);
  }
  std::size_t size() const { return size_; }
  const std::string& path() const { return path_; }
  std::uint32_t u32() {
    unsigned char b[4];
    read(b, 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  }
  double f32() {
    std::uint32_t bits = u32();
    float f;
    std::memcpy(&f, &bits, 4);
    return static_cast<double>(f);
  }
  void f32_block(float* data, std::size_t count) {
    read(data, count * 4);
  }
  bool at_end() {
    return static_cast<std::size_t>(in_.tellg()) == size_;
  }

 private:
  void read(void* dst, std::size_t n) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (!in_) throw InputError("corrupt record (truncated read): " + path_);
  }
  std::string path_;
  std::ifstream in_;
  std::size_t size_ = 0;
};

struct Shapes {
  int T = 0, N = 0, D = 0, X = 0, Y = 0;
  double frame_rate = 20.0;
};

Shapes shapes_of(const std::vector<VideoSample>& samples) {
  if (samples.empty()) throw InputError("save_dataset: empty sample collection");
  Shapes s;
  const VideoSample& first = samples.front();
  s.T = first.num_frames();
  if (s.T == 0) throw InputError("save_dataset: sample with zero frames");
  s.N = first.frames[0].num_objects();
  s.D = static_cast<int>(first.frames[0].context.size());
  for (const auto& sm : samples) {
    if (sm.num_frames() != s.T)
      throw InputError("save_dataset: inconsistent frame count in sample " + sm.sample_id);
    for (const auto& fr : sm.frames) {
      if (fr.num_objects() != s.N || static_cast<int>(fr.context.size()) != s.D)
        throw InputError("save_dataset: inconsistent shapes in sample " + sm.sample_id);
      if (sm.has_depth && !fr.depth.empty()) {
        if (s.X == 0) {
          s.X = fr.depth.width;
          s.Y = fr.depth.height;
        } else if (fr.depth.width != s.X || fr.depth.height != s.Y) {
          throw InputError("save_dataset: inconsistent depth dims in sample " + sm.sample_id);
        }
      }
    }
  }
  return s;
}

void write_record(const std::string& path, const VideoSample& s, const Shapes& sh) {
  Writer w(path);
  std::uint32_t flags = 0;
  if (s.has_depth) flags |= kFlagHasDepth;
  if (s.ground_truth.has_value()) flags |= kFlagHasGroundTruth;
  if (s.ground_truth && s.ground_truth->parallax_trap) flags |= kFlagParallaxTrap;
  w.u32(static_cast<std::uint32_t>(s.label));
  w.u32(static_cast<std::uint32_t>(s.accident_frame));
  w.u32(flags);
  for (const auto& fr : s.frames) {
    for (int d = 0; d < sh.D; ++d) w.f32(fr.context[d]);
    for (int n = 0; n < sh.N; ++n)
      for (int d = 0; d < sh.D; ++d) w.f32(fr.objects[n][d]);
    for (int n = 0; n < sh.N; ++n) {
      w.f32(fr.boxes[n].x1);
      w.f32(fr.boxes[n].y1);
      w.f32(fr.boxes[n].x2);
      w.f32(fr.boxes[n].y2);
    }
    for (int n = 0; n < sh.N; ++n) w.f32(fr.present[n] ? 1.0 : 0.0);
    if (s.has_depth) w.f32_block(fr.depth.values.data(), fr.depth.values.size());
  }
  if (s.ground_truth) {
    const GroundTruth& gt = *s.ground_truth;
    w.f32(gt.collision_radius);
    w.f32(gt.separation_floor);
    for (const auto& frame_states : gt.states)
      for (const auto& st : frame_states) {
        w.f32(st.cx);
        w.f32(st.cy);
        w.f32(st.z);
        w.f32(st.present ? 1.0 : 0.0);
      }
  }
  w.close();
}

VideoSample read_record(const std::string& path, const std::string& id, const Shapes& sh) {
  Reader r(path);
  VideoSample s;
  s.sample_id = id;
  s.label = static_cast<int>(r.u32());
  s.accident_frame = static_cast<int>(r.u32());
  const std::uint32_t flags = r.u32();
  s.has_depth = (flags & kFlagHasDepth) != 0;

  if (s.label != 0 && s.label != 1)
    throw InputError("corrupt record (label not 0/1): " + path);
  if (s.label == 1 && (s.accident_frame < 1 || s.accident_frame > sh.T))
    throw InputError("corrupt record (accident_frame out of range): " + path);
  if (s.label == 0 && s.accident_frame != 0)
    throw InputError("corrupt record (negative with nonzero accident_frame): " + path);

  // Validate total size against the manifest-declared shapes before parsing.
  const std::size_t per_frame =
      static_cast<std::size_t>(sh.D) + static_cast<std::size_t>(sh.N) * sh.D +
      static_cast<std::size_t>(sh.N) * 4 + sh.N +
      (s.has_depth ? static_cast<std::size_t>(sh.X) * sh.Y : 0);
  std::size_t expect = 12 + 4 * per_frame * sh.T;
  if (flags & kFlagHasGroundTruth)
    expect += 4 * (2 + static_cast<std::size_t>(sh.T) * sh.N * 4);
  if (r.size() != expect)
    throw InputError("shape mismatch against manifest in " + path + ": expected " +
                     std::to_string(expect) + " bytes, found " + std::to_string(r.size()));

  s.frames.resize(sh.T);
  for (int t = 0; t < sh.T; ++t) {
    FrameObservation& fr = s.frames[t];
    fr.context.resize(sh.D);
    for (int d = 0; d < sh.D; ++d) fr.context[d] = r.f32();
    fr.objects.assign(sh.N, Eigen::VectorXd::Zero(sh.D));
    for (int n = 0; n < sh.N; ++n)
      for (int d = 0; d < sh.D; ++d) fr.objects[n][d] = r.f32();
    fr.boxes.resize(sh.N);
    for (int n = 0; n < sh.N; ++n) {
      fr.boxes[n].x1 = r.f32();
      fr.boxes[n].y1 = r.f32();
      fr.boxes[n].x2 = r.f32();
      fr.boxes[n].y2 = r.f32();
    }
    fr.present.resize(sh.N);
    for (int n = 0; n < sh.N; ++n) fr.present[n] = r.f32() != 0.0 ? 1 : 0;
    if (s.has_depth) {
      fr.depth.width = sh.X;
      fr.depth.height = sh.Y;
      fr.depth.values.resize(static_cast<std::size_t>(sh.X) * sh.Y);
      r.f32_block(fr.depth.values.data(), fr.depth.values.size());
    }
  }
  if (flags & kFlagHasGroundTruth) {
    GroundTruth gt;
    gt.parallax_trap = (flags & kFlagParallaxTrap) != 0;
    gt.collision_radius = r.f32();
    gt.separation_floor = r.f32();
    gt.states.resize(sh.T);
    for (int t = 0; t < sh.T; ++t) {
      gt.states[t].resize(sh.N);
      for (int n = 0; n < sh.N; ++n) {
        ObjectState& st = gt.states[t][n];
        st.cx = r.f32();
        st.cy = r.f32();
        st.z = r.f32();
        st.present = r.f32() != 0.0;
      }
    }
    s.ground_truth = std::move(gt);
  }
  if (!r.at_end()) throw InputError("corrupt record (trailing bytes): " + path);
  return s;
}

json read_json_file(const std::string& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw InputError(std::string("missing ") + what + ": " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw InputError(std::string("unparsable ") + what + " " + path + ": " + e.what());
  }
  return j;
}

}  // namespace

SplitLists make_splits(const std::vector<VideoSample>& samples) {
  SplitLists sp;
  // Stratified, deterministic in the ids themselves: an id goes to test when
  // its hash lands in the lowest 30% of the hash space.
  for (const auto& s : samples) {
    const std::uint64_t h = fnv1a64(s.sample_id.data(), s.sample_id.size());
    const bool test = (h % 1000) < 300;
    (test ? sp.test : sp.train).push_back(s.sample_id);
  }
  if (sp.test.empty() && !sp.train.empty()) {
    sp.test.push_back(sp.train.back());
    sp.train.pop_back();
  }
  return sp;
}

std::string save_dataset(const std::vector<VideoSample>& samples, const std::string& directory) {
  const Shapes sh = shapes_of(samples);
  fs::create_directories(directory);

  for (const auto& s : samples)
    write_record((fs::path(directory) / (s.sample_id + ".bin")).string(), s, sh);

  json manifest;
  manifest["schema_version"] = kSchemaVersion;
  manifest["frames"] = sh.T;
  manifest["object_slots"] = sh.N;
  manifest["feature_dim"] = sh.D;
  manifest["image_width"] = sh.X;
  manifest["image_height"] = sh.Y;
  manifest["frame_rate"] = sh.frame_rate;
  manifest["num_samples"] = static_cast<int>(samples.size());
  manifest["record_layout"] = kRecordLayout;
  json ids = json::array();
  for (const auto& s : samples) ids.push_back(s.sample_id);
  manifest["sample_ids"] = ids;

  const std::string manifest_path = (fs::path(directory) / "manifest.json").string();
  std::ofstream mf(manifest_path);
  mf << manifest.dump(2) << "\n";
  if (!mf) throw InputError("cannot write manifest: " + manifest_path);

  const SplitLists sp = make_splits(samples);
  json splits;
  splits["train"] = sp.train;
  splits["test"] = sp.test;
  std::ofstream sf((fs::path(directory) / "splits.json").string());
  sf << splits.dump(2) << "\n";
  if (!sf) throw InputError("cannot write splits.json in " + directory);
  return manifest_path;
}

DatasetMeta read_manifest(const std::string& directory) {
  const std::string path = (fs::path(directory) / "manifest.json").string();
  const json j = read_json_file(path, "manifest");
  for (const char* key : {"schema_version", "frames", "object_slots", "feature_dim",
                          "image_width", "image_height", "num_samples", "sample_ids"})
    if (!j.contains(key)) throw InputError("manifest " + path + " lacks key '" + key + "'");
  if (j["schema_version"].get<int>() != kSchemaVersion)
    throw InputError("manifest " + path + ": unsupported schema_version");
  DatasetMeta m;
  m.frames = j["frames"].get<int>();
  m.object_slots = j["object_slots"].get<int>();
  m.feature_dim = j["feature_dim"].get<int>();
  m.image_width = j["image_width"].get<int>();
  m.image_height = j["image_height"].get<int>();
  m.frame_rate = j.value("frame_rate", 20.0);
  m.num_samples = j["num_samples"].get<int>();
  return m;
}

std::vector<VideoSample> load_dataset(const std::string& directory) {
  const std::string path = (fs::path(directory) / "manifest.json").string();
  const json j = read_json_file(path, "manifest");
  const DatasetMeta m = read_manifest(directory);
  Shapes sh{m.frames, m.object_slots, m.feature_dim, m.image_width, m.image_height, m.frame_rate};

  std::vector<VideoSample> out;
  for (const auto& idj : j["sample_ids"]) {
    const std::string id = idj.get<std::string>();
    out.push_back(read_record((fs::path(directory) / (id + ".bin")).string(), id, sh));
  }
  if (static_cast<int>(out.size()) != m.num_samples)
    throw InputError("manifest " + path + " num_samples disagrees with sample_ids");
  return out;
}

SplitLists load_splits(const std::string& directory, const std::vector<VideoSample>& samples) {
  const std::string path = (fs::path(directory) / "splits.json").string();
  std::ifstream in(path);
  if (!in) {
    SplitLists sp;
    for (const auto& s : samples) sp.train.push_back(s.sample_id);
    return sp;
  }
  const json j = read_json_file(path, "splits");
  SplitLists sp;
  for (const auto& v : j.value("train", json::array())) sp.train.push_back(v.get<std::string>());
  for (const auto& v : j.value("test", json::array())) sp.test.push_back(v.get<std::string>());
  return sp;
}

IngestResult ingest_precomputed(const std::string& archive_dir, const SchemaDescriptor& schema) {
  const DatasetMeta m = read_manifest(archive_dir);
  auto mismatch = [&](const std::string& what, int expected, int found) {
    throw InputError("archive schema mismatch in " + archive_dir + ": " + what + " expected " +
                     std::to_string(expected) + ", found " + std::to_string(found));
  };
  if (m.frames != schema.frames) mismatch("frames (T)", schema.frames, m.frames);
  if (m.object_slots != schema.object_slots) mismatch("object slots (N)", schema.object_slots, m.object_slots);
  if (m.feature_dim != schema.feature_dim) mismatch("feature dim (D)", schema.feature_dim, m.feature_dim);

  IngestResult res;
  res.samples = load_dataset(archive_dir);
  for (auto& s : res.samples) {
    if (schema.require_depth && !s.has_depth)
      throw InputError("archive schema mismatch in " + archive_dir + ": depth required but sample " +
                       s.sample_id + " is depth-free");
    // Feature rows that are all-zero while flagged present are treated as
    // absent objects (DAD-style padding).
    for (auto& fr : s.frames)
      for (int n = 0; n < fr.num_objects(); ++n)
        if (fr.present[n] && fr.objects[n].isZero(0.0)) {
          fr.present[n] = 0;
          fr.boxes[n] = BoundingBox::sentinel();
          ++res.zero_feature_rows_demoted;
        }
  }
  return res;
}

}  // namespace riskcast::scene
