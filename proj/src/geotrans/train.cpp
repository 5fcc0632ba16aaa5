#include "sst/geotrans/train.hpp"

#include "sst/nn/checkpoint.hpp"
#include "sst/util/rng.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace sst::geotrans {

namespace {

struct CachedSample {
  util::Image left, right;
  geom::PointMap gt_left, gt_right;
};

std::vector<CachedSample> load_dataset(const fs::path& data_dir, int64_t max_samples) {
  int64_t n = scenegen::count_samples(data_dir);
  if (n == 0) throw std::runtime_error("no samples found in " + data_dir.string());
  if (max_samples > 0) n = std::min(n, max_samples);
  std::vector<CachedSample> out;
  out.reserve(n);
  for (int64_t i = 0; i < n; ++i) {
    scenegen::Sample s = scenegen::read_sample(scenegen::sample_dir(data_dir, i));
    out.push_back({std::move(s.left), std::move(s.right), std::move(s.pointmap_left),
                   std::move(s.pointmap_right)});
  }
  return out;
}

std::vector<nn::Mat<float>> snapshot_params(const nn::ParamStore<float>& ps) {
  std::vector<nn::Mat<float>> snap;
  snap.reserve(ps.params.size());
  for (auto& [n, p] : ps.params) snap.push_back(p->val);
  return snap;
}

void restore_params(nn::ParamStore<float>& ps, const std::vector<nn::Mat<float>>& snap) {
  for (size_t i = 0; i < ps.params.size(); ++i) ps.params[i].second->val = snap[i];
}

}  // namespace

void save_geo_checkpoint(const fs::path& path, const GeometryTransformer<float>& model,
                         uint64_t seed, int64_t steps) {
  json meta = {{"kind", "geo"},
               {"config", model.cfg.to_json()},
               {"seed", seed},
               {"steps", steps}};
  nn::write_checkpoint(path, meta, model.ps);
}

std::unique_ptr<GeometryTransformer<float>> load_geo_checkpoint(const fs::path& path) {
  json meta = nn::read_checkpoint_meta(path);
  if (meta.value("kind", "") != "geo")
    throw std::runtime_error("not a geometry checkpoint: " + path.string());
  GeoConfig cfg = GeoConfig::from_json(meta.at("config"));
  auto model = std::make_unique<GeometryTransformer<float>>(cfg, 0);
  nn::read_checkpoint(path, model->ps);
  return model;
}

TrainGeoResult train_geo(const fs::path& data_dir, const TrainGeoConfig& cfg,
                         const fs::path& ckpt_out, const fs::path& metrics_out) {
  auto data = load_dataset(data_dir, cfg.max_samples);
  GeometryTransformer<float> model(cfg.model, cfg.seed);

  nn::Adam<float> opt;
  opt.lr = (float)cfg.lr;
  opt.total_steps = (int64_t)cfg.epochs * (int64_t)data.size();
  opt.init(model.ps);

  std::ofstream metrics(metrics_out);
  if (!metrics) throw std::runtime_error("cannot open " + metrics_out.string());
  metrics.precision(10);

  util::Rng rng(util::mix_seed(cfg.seed, 0x7261696e));
  std::vector<int> order(data.size());
  for (size_t i = 0; i < data.size(); ++i) order[i] = (int)i;

  TrainGeoResult res;
  auto last_finite = snapshot_params(model.ps);
  int64_t last_finite_step = 0;
  const float alpha = (float)cfg.model.alpha;

  for (int epoch = 0; epoch < cfg.epochs && !res.diverged; ++epoch) {
    // deterministic shuffle per epoch
    for (int i = (int)order.size() - 1; i > 0; --i)
      std::swap(order[i], order[rng.uniform_int(0, i)]);
    for (int idx : order) {
      const CachedSample& s = data[(size_t)idx];
      auto lp = nn::constant<float>(patchify<float>(s.left, cfg.model.patch_size));
      auto rp = nn::constant<float>(patchify<float>(s.right, cfg.model.patch_size));
      auto out = model.forward(lp, rp);
      auto loss = build_geo_loss<float>(out.left, out.right, s.gt_left, s.gt_right, alpha);
      double lv = loss.total->val(0, 0);
      if (!std::isfinite(lv)) {
        res.diverged = true;
        std::cerr << "train-geo: non-finite loss at step " << res.steps
                  << "; keeping checkpoint from step " << last_finite_step << "\n";
        restore_params(model.ps, last_finite);
        break;
      }
      if (res.steps == 0) res.initial_loss_conf = lv;
      res.final_loss_conf = lv;
      model.ps.zero_grad();
      nn::backward(loss.total);
      opt.step(model.ps);
      ++res.steps;
      if (cfg.log_every > 0 && (res.steps % cfg.log_every == 0))
        metrics << json{{"step", res.steps},
                        {"loss_conf", lv},
                        {"loss_reg_mean", loss.reg_mean}}
                       .dump()
                << "\n";
      bool finite = true;
      for (auto& [n, p] : model.ps.params)
        if (!p->val.allFinite()) {
          finite = false;
          break;
        }
      if (finite) {
        last_finite = snapshot_params(model.ps);
        last_finite_step = res.steps;
      } else {
        res.diverged = true;
        std::cerr << "train-geo: non-finite parameters at step " << res.steps
                  << "; keeping checkpoint from step " << last_finite_step << "\n";
        restore_params(model.ps, last_finite);
        break;
      }
    }
  }
  metrics.flush();
  save_geo_checkpoint(ckpt_out, model, cfg.seed, last_finite_step);
  return res;
}

GeoEval eval_geo(const GeometryTransformer<float>& model, const fs::path& data_dir,
                 int64_t max_samples) {
  auto data = load_dataset(data_dir, max_samples);
  GeoEval ev;
  std::vector<double> errors;
  for (const auto& s : data) {
    PointPrediction pred = run_prediction(model, s.left, s.right);
    const geom::PointMap* gts[2] = {&s.gt_left, &s.gt_right};
    const geom::PointMap* preds[2] = {&pred.left, &pred.right};
    double zg = 0, zp = 0;
    int64_t n = 0;
    for (int v = 0; v < 2; ++v)
      for (size_t i = 0; i < gts[v]->valid.size(); ++i)
        if (gts[v]->valid[i]) {
          zg += gts[v]->points[i].cast<double>().norm();
          zp += preds[v]->points[i].cast<double>().norm();
          ++n;
        }
    if (n == 0) continue;
    double scale = zg / zp;
    for (int v = 0; v < 2; ++v)
      for (size_t i = 0; i < gts[v]->valid.size(); ++i)
        if (gts[v]->valid[i])
          errors.push_back((preds[v]->points[i].cast<double>() * scale -
                            gts[v]->points[i].cast<double>())
                               .norm());
    ++ev.samples;
  }
  if (errors.empty()) throw std::runtime_error("eval_geo: no valid pixels in dataset");
  ev.pixels = (int64_t)errors.size();
  for (double e : errors) ev.mean_error_m += e;
  ev.mean_error_m /= (double)errors.size();
  size_t mid = errors.size() / 2;
  std::nth_element(errors.begin(), errors.begin() + mid, errors.end());
  ev.median_error_m = errors[mid];
  return ev;
}

scenegen::Predictor make_predictor(std::shared_ptr<GeometryTransformer<float>> model) {
  return [model](const util::Image& left, const util::Image& right) {
    PointPrediction p = run_prediction(*model, left, right);
    scenegen::PredictedMaps maps;
    maps.left = std::move(p.left);
    maps.right = std::move(p.right);
    maps.conf_left = std::move(p.conf_left);
    maps.conf_right = std::move(p.conf_right);
    return maps;
  };
}

int64_t export_pointcloud(const PointPrediction& pred, const util::Image& left,
                          const util::Image& right, double conf_threshold,
                          const fs::path& path) {
  const geom::PointMap* maps[2] = {&pred.left, &pred.right};
  const std::vector<float>* confs[2] = {&pred.conf_left, &pred.conf_right};
  const util::Image* imgs[2] = {&left, &right};
  struct Vertex {
    Eigen::Vector3f p;
    uint8_t rgb[3];
  };
  std::vector<Vertex> verts;
  for (int v = 0; v < 2; ++v) {
    const auto& pm = *maps[v];
    if (imgs[v]->height != pm.height || imgs[v]->width != pm.width)
      throw std::invalid_argument("export_pointcloud: image/map size mismatch");
    for (int r = 0; r < pm.height; ++r)
      for (int c = 0; c < pm.width; ++c) {
        size_t i = pm.idx(r, c);
        if (!pm.valid[i] || (*confs[v])[i] < conf_threshold) continue;
        const uint8_t* px = imgs[v]->px(r, c);
        verts.push_back({pm.points[i], {px[0], px[1], px[2]}});
      }
  }
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  f << "ply\nformat ascii 1.0\nelement vertex " << verts.size()
    << "\nproperty float x\nproperty float y\nproperty float z\n"
       "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
  f.precision(8);
  for (const auto& v : verts)
    f << v.p.x() << " " << v.p.y() << " " << v.p.z() << " " << (int)v.rgb[0] << " "
      << (int)v.rgb[1] << " " << (int)v.rgb[2] << "\n";
  if (!f) throw std::runtime_error("short write: " + path.string());
  return (int64_t)verts.size();
}

}  // namespace sst::geotrans
