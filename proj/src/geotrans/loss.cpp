#include "sst/geotrans/loss.hpp"

namespace sst::geotrans {

namespace {
void accumulate_norms(const geom::PointMap& pm, double& sum, int64_t& n) {
  for (size_t i = 0; i < pm.valid.size(); ++i)
    if (pm.valid[i]) {
      sum += pm.points[i].cast<double>().norm();
      ++n;
    }
}
}  // namespace

double normalize_scale(const geom::PointMap& pm) {
  double sum = 0;
  int64_t n = 0;
  accumulate_norms(pm, sum, n);
  if (n == 0) throw std::invalid_argument("normalize_scale: no valid pixels");
  return sum / (double)n;
}

double normalize_scale(const geom::PointMap& left, const geom::PointMap& right) {
  double sum = 0;
  int64_t n = 0;
  accumulate_norms(left, sum, n);
  accumulate_norms(right, sum, n);
  if (n == 0) throw std::invalid_argument("normalize_scale: no valid pixels");
  return sum / (double)n;
}

RegLossValue loss_reg(const geom::PointMap& pred_left, const geom::PointMap& pred_right,
                      const geom::PointMap& gt_left, const geom::PointMap& gt_right) {
  // scales pooled over both views, prediction and GT independent; the
  // prediction scale is taken over the ground-truth-valid pixels it is
  // compared against
  double zg = 0, zp = 0;
  int64_t n = 0;
  const geom::PointMap* gts[2] = {&gt_left, &gt_right};
  const geom::PointMap* preds[2] = {&pred_left, &pred_right};
  for (int v = 0; v < 2; ++v)
    for (size_t i = 0; i < gts[v]->valid.size(); ++i)
      if (gts[v]->valid[i]) {
        zg += gts[v]->points[i].cast<double>().norm();
        zp += preds[v]->points[i].cast<double>().norm();
        ++n;
      }
  if (n == 0) throw std::invalid_argument("loss_reg: no valid pixels");
  zg /= (double)n;
  zp /= (double)n;
  if (zg <= 0 || zp <= 0) throw std::invalid_argument("loss_reg: degenerate scale");

  RegLossValue out;
  out.pixels = n;
  out.per_pixel_left.assign(gt_left.valid.size(), 0.0);
  out.per_pixel_right.assign(gt_right.valid.size(), 0.0);
  std::vector<double>* maps[2] = {&out.per_pixel_left, &out.per_pixel_right};
  for (int v = 0; v < 2; ++v)
    for (size_t i = 0; i < gts[v]->valid.size(); ++i)
      if (gts[v]->valid[i]) {
        double l = (preds[v]->points[i].cast<double>() / zp -
                    gts[v]->points[i].cast<double>() / zg)
                       .norm();
        (*maps[v])[i] = l;
        out.sum += l;
      }
  out.mean = out.sum / (double)n;
  return out;
}

double loss_conf(const geom::PointMap& pred_left, const geom::PointMap& pred_right,
                 const std::vector<float>& conf_left, const std::vector<float>& conf_right,
                 const geom::PointMap& gt_left, const geom::PointMap& gt_right,
                 double alpha) {
  if (alpha <= 0) throw std::invalid_argument("loss_conf: alpha must be > 0");
  RegLossValue reg = loss_reg(pred_left, pred_right, gt_left, gt_right);
  const geom::PointMap* gts[2] = {&gt_left, &gt_right};
  const std::vector<double>* maps[2] = {&reg.per_pixel_left, &reg.per_pixel_right};
  const std::vector<float>* confs[2] = {&conf_left, &conf_right};
  double total = 0;
  for (int v = 0; v < 2; ++v) {
    if (confs[v]->size() != gts[v]->valid.size())
      throw std::invalid_argument("loss_conf: confidence map size mismatch");
    for (size_t i = 0; i < gts[v]->valid.size(); ++i)
      if (gts[v]->valid[i]) {
        double c = (*confs[v])[i];
        if (c < 1.0) throw std::invalid_argument("loss_conf: confidence below 1");
        total += c * (*maps[v])[i] - alpha * std::log(c);
      }
  }
  return total;
}

}  // namespace sst::geotrans
