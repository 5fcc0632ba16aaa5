#pragma once

#include "sst/scenegen/render.hpp"

#include <filesystem>
#include <functional>
#include <string>

namespace sst::scenegen {

// Errors are thrown as one of these so callers can distinguish the failure
// mode named in the message.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct TruncationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Point-map file: magic "S3DP", u32 LE version=1, u32 H, u32 W, then
// H*W*3 float32 LE points (row-major, x,y,z meters), then H*W u8 valid flags.
void write_pointmap(const std::filesystem::path& path, const geom::PointMap& pm);
geom::PointMap read_pointmap(const std::filesystem::path& path);

// One directory per sample: left.png, right.png, pointmap_left.s3dp,
// pointmap_right.s3dp, meta.json.
void write_sample(const Sample& sample, const std::filesystem::path& dir);
Sample read_sample(const std::filesystem::path& dir);

std::filesystem::path sample_dir(const std::filesystem::path& root, int64_t index);
int64_t count_samples(const std::filesystem::path& root);

// Per-frame model output used for pseudo-labeling: dense predicted point
// maps (left frame) and per-pixel confidences (>= 1 by parameterization).
struct PredictedMaps {
  geom::PointMap left, right;  // valid flags all set (dense prediction)
  std::vector<float> conf_left, conf_right;
};
using Predictor = std::function<PredictedMaps(const util::Image& left,
                                              const util::Image& right)>;

struct PseudoLabelStats {
  int64_t retained = 0;
  int64_t discarded = 0;  // samples with < 5% valid pixels after thresholding
};

// Re-labels frames with model predictions, keeping only pixels whose
// confidence reaches the threshold. Samples retaining fewer than 5% of
// their pixels are dropped and counted.
PseudoLabelStats pseudo_label(const Predictor& model,
                              const std::filesystem::path& frames_dir,
                              const std::filesystem::path& out_dir,
                              double confidence_threshold);

// Thresholds one frame in place; returns fraction of valid pixels.
double apply_confidence_threshold(Sample& sample, const PredictedMaps& pred,
                                  double confidence_threshold);

}  // namespace sst::scenegen
