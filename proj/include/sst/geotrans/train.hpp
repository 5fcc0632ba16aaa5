#pragma once

// Training, evaluation, checkpointing and point-cloud export for the
// geometry transformer.

#include "sst/geotrans/loss.hpp"
#include "sst/geotrans/model.hpp"
#include "sst/scenegen/dataset.hpp"

#include <filesystem>
#include <memory>

namespace sst::geotrans {

struct TrainGeoConfig {
  GeoConfig model;
  double lr = 3e-4;
  int epochs = 100;
  uint64_t seed = 0;
  int64_t max_samples = 0;  // 0 = whole dataset
  int log_every = 1;        // metrics line every N steps
};

struct TrainGeoResult {
  int64_t steps = 0;
  double initial_loss_conf = 0;
  double final_loss_conf = 0;
  bool diverged = false;
};

// Minimizes the confidence-aware objective with per-sample gradient steps.
// Writes the checkpoint (embedding config, seed and step count) and JSONL
// metrics {"step", "loss_conf", "loss_reg_mean"}. On divergence the last
// finite parameter state is saved and the run aborts with diverged = true.
TrainGeoResult train_geo(const std::filesystem::path& data_dir, const TrainGeoConfig& cfg,
                         const std::filesystem::path& ckpt_out,
                         const std::filesystem::path& metrics_out);

void save_geo_checkpoint(const std::filesystem::path& path,
                         const GeometryTransformer<float>& model, uint64_t seed,
                         int64_t steps);
std::unique_ptr<GeometryTransformer<float>> load_geo_checkpoint(
    const std::filesystem::path& path);

struct GeoEval {
  double median_error_m = 0;  // pooled over all valid pixels, scale-aligned
  double mean_error_m = 0;
  int64_t pixels = 0;
  int64_t samples = 0;
};

// Scale-aligned point error: each sample's prediction is rescaled by
// z_gt / z_pred (mean-norm ratio over ground-truth-valid pixels) before the
// per-pixel Euclidean error is taken.
GeoEval eval_geo(const GeometryTransformer<float>& model,
                 const std::filesystem::path& data_dir, int64_t max_samples = 0);

// Adapts a model to the pseudo-labeling interface.
scenegen::Predictor make_predictor(std::shared_ptr<GeometryTransformer<float>> model);

// ASCII PLY with per-vertex color sampled from the source images; pixels
// below the confidence threshold are omitted. Returns the vertex count.
int64_t export_pointcloud(const PointPrediction& pred, const util::Image& left,
                          const util::Image& right, double conf_threshold,
                          const std::filesystem::path& path);

}  // namespace sst::geotrans
