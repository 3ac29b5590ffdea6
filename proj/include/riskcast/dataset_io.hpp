#pragma once

#include <string>
#include <vector>

#include "riskcast/scene.hpp"

namespace riskcast::scene {

// Train/test membership by sample_id.
struct SplitLists {
  std::vector<std::string> train;
  std::vector<std::string> test;
};

// Shape expectations for ingesting a precomputed-feature archive.
struct SchemaDescriptor {
  int frames = 0;       // T
  int object_slots = 0; // N
  int feature_dim = 0;  // D
  bool require_depth = false;
};

// Writes manifest.json, splits.json and one <sample_id>.bin record per
// sample. Returns the manifest path. Floats are little-endian float32,
// row-major, field order documented in the manifest's record_layout entry.
std::string save_dataset(const std::vector<VideoSample>& samples, const std::string& directory);

// Loads a dataset saved by save_dataset. Shape mismatches and corrupt
// records fail with messages naming the offending file.
std::vector<VideoSample> load_dataset(const std::string& directory);

// Reads splits.json; if absent, every sample id lands in train.
SplitLists load_splits(const std::string& directory, const std::vector<VideoSample>& samples);

// Deterministic stratified 70/30 split by id hash (strata: positives,
// trap negatives, plain negatives).
SplitLists make_splits(const std::vector<VideoSample>& samples);

// Ingests an archive in the manifest-described layout after validating it
// against the expected schema. Depth-free archives yield samples usable only
// with the 2D collision variant. Feature rows that are all-zero while marked
// present are demoted to absent (flagged via the return count).
struct IngestResult {
  std::vector<VideoSample> samples;
  int zero_feature_rows_demoted = 0;
};
IngestResult ingest_precomputed(const std::string& archive_dir, const SchemaDescriptor& schema);

// Dataset-level shape info recovered from the manifest.
struct DatasetMeta {
  int frames = 0, object_slots = 0, feature_dim = 0;
  int image_width = 0, image_height = 0;
  double frame_rate = 20.0;
  int num_samples = 0;
};
DatasetMeta read_manifest(const std::string& directory);

}  // namespace riskcast::scene
