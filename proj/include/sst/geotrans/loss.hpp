#pragma once

// Confidence-aware scale-normalized point-map losses.
//
// Regression term, per valid pixel i of view v:
//   L_i = || X_i / z  -  Xhat_i / zhat ||_2
// where z (prediction) and zhat (ground truth) are the mean Euclidean norms
// of the valid points pooled over both views, computed independently for
// prediction and ground truth. Total objective:
//   sum_i C_i * L_i - alpha * log C_i,   C_i = 1 + exp(logit_i)  (>= 1).
//
// Graph builders construct the autodiff graph for training; the plain
// functions are independent oracles used by the test suite.

#include "sst/geom.hpp"
#include "sst/nn/tensor.hpp"

namespace sst::geotrans {

// Mean Euclidean norm of the valid points of one map. Throws if empty.
double normalize_scale(const geom::PointMap& pm);
// Pooled over both views (the form used by the loss).
double normalize_scale(const geom::PointMap& left, const geom::PointMap& right);

struct RegLossValue {
  double sum = 0;   // summed over valid pixels of both views
  double mean = 0;  // per-pixel mean
  int64_t pixels = 0;
  // per-pixel values, indexed [view (0=left,1=right)][row-major pixel];
  // invalid pixels hold 0
  std::vector<double> per_pixel_left, per_pixel_right;
};

// Plain Eq.-1 oracle. The ground-truth masks select the pixels; the
// prediction must cover them (dense predictions always do).
RegLossValue loss_reg(const geom::PointMap& pred_left, const geom::PointMap& pred_right,
                      const geom::PointMap& gt_left, const geom::PointMap& gt_right);

// Plain Eq.-2 oracle; conf_* are dense per-pixel confidences (>= 1).
double loss_conf(const geom::PointMap& pred_left, const geom::PointMap& pred_right,
                 const std::vector<float>& conf_left, const std::vector<float>& conf_right,
                 const geom::PointMap& gt_left, const geom::PointMap& gt_right,
                 double alpha);

template <class T>
struct GeoLoss {
  nn::Var<T> total;    // Eq. 2, summed over valid pixels of both views
  nn::Var<T> reg_sum;  // Eq. 1 component of the same graph
  double reg_mean = 0;
  int64_t valid_count = 0;
};

// Builds the training loss from the two raw head outputs ((H*W) x 4 each,
// columns xyz + confidence logit). Only ground-truth-valid pixels enter the
// graph, so masked pixels receive exactly zero gradient.
template <class T>
GeoLoss<T> build_geo_loss(const nn::Var<T>& out_left, const nn::Var<T>& out_right,
                          const geom::PointMap& gt_left, const geom::PointMap& gt_right,
                          T alpha) {
  if (alpha <= T(0)) throw std::invalid_argument("alpha must be > 0");
  const geom::PointMap* gts[2] = {&gt_left, &gt_right};
  const nn::Var<T>* outs[2] = {&out_left, &out_right};

  std::vector<nn::Var<T>> pred_rows, logit_rows;
  std::vector<Eigen::Vector3d> gt_points;
  for (int v = 0; v < 2; ++v) {
    const auto& gt = *gts[v];
    if ((int64_t)(*outs[v])->val.rows() != (int64_t)gt.height * gt.width ||
        (*outs[v])->val.cols() != 4)
      throw std::invalid_argument("loss: head output shape does not match ground truth");
    std::vector<int> idx;
    for (int i = 0; i < (int)gt.valid.size(); ++i)
      if (gt.valid[i]) {
        idx.push_back(i);
        gt_points.push_back(gt.points[i].template cast<double>());
      }
    if (idx.empty()) continue;
    pred_rows.push_back(nn::gather_rows(nn::slice_cols(*outs[v], 0, 3), idx));
    logit_rows.push_back(nn::gather_rows(nn::slice_cols(*outs[v], 3, 1), idx));
  }
  if (gt_points.empty())
    throw std::invalid_argument("loss: no valid pixels in either view");

  double z = 0;
  for (auto& p : gt_points) z += p.norm();
  z /= (double)gt_points.size();
  if (z <= 0) throw std::invalid_argument("loss: ground-truth scale is zero");
  nn::Mat<T> gtn((int)gt_points.size(), 3);
  for (int i = 0; i < (int)gt_points.size(); ++i)
    gtn.row(i) = (gt_points[i] / z).template cast<T>();

  nn::Var<T> pred = pred_rows.size() == 1 ? pred_rows[0] : nn::concat_rows(pred_rows);
  nn::Var<T> logits =
      logit_rows.size() == 1 ? logit_rows[0] : nn::concat_rows(logit_rows);

  nn::Var<T> zhat = nn::mean_all(nn::rowwise_norm(pred));
  nn::Var<T> predn = nn::mul_scalar(pred, nn::recip(zhat));
  nn::Var<T> per_pixel = nn::rowwise_norm(nn::sub(predn, nn::constant(std::move(gtn))));

  GeoLoss<T> out;
  out.reg_sum = nn::sum_all(per_pixel);
  // C*L = L + exp(logit)*L ; log C = softplus(logit)
  nn::Var<T> weighted = nn::sum_all(nn::hadamard(nn::exp(logits), per_pixel));
  nn::Var<T> log_c = nn::sum_all(nn::softplus(logits));
  out.total = nn::sub(nn::add(out.reg_sum, weighted), nn::scale(log_c, alpha));
  out.valid_count = (int64_t)gt_points.size();
  out.reg_mean = (double)out.reg_sum->val(0, 0) / (double)out.valid_count;
  return out;
}

}  // namespace sst::geotrans
