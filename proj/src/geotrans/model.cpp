#include "sst/geotrans/model.hpp"

using nlohmann::json;

namespace sst::geotrans {

json GeoConfig::to_json() const {
  return {{"image_height", image_height},
          {"image_width", image_width},
          {"patch_size", patch_size},
          {"enc_depth", enc_depth},
          {"enc_width", enc_width},
          {"enc_heads", enc_heads},
          {"dec_depth", dec_depth},
          {"dec_width", dec_width},
          {"dec_heads", dec_heads},
          {"pyramid_taps", pyramid_taps},
          {"alpha", alpha},
          {"head_channels", head_channels},
          {"mlp_ratio", mlp_ratio}};
}

GeoConfig GeoConfig::from_json(const json& j) {
  GeoConfig c;
  json known = c.to_json();
  for (auto& [k, v] : j.items())
    if (!known.contains(k))
      throw std::invalid_argument("unknown geometry config key: " + k);
  c.image_height = j.value("image_height", c.image_height);
  c.image_width = j.value("image_width", c.image_width);
  c.patch_size = j.value("patch_size", c.patch_size);
  c.enc_depth = j.value("enc_depth", c.enc_depth);
  c.enc_width = j.value("enc_width", c.enc_width);
  c.enc_heads = j.value("enc_heads", c.enc_heads);
  c.dec_depth = j.value("dec_depth", c.dec_depth);
  c.dec_width = j.value("dec_width", c.dec_width);
  c.dec_heads = j.value("dec_heads", c.dec_heads);
  if (j.contains("pyramid_taps")) {
    auto t = j.at("pyramid_taps");
    if (t.size() != 4) throw std::invalid_argument("pyramid_taps must list 4 layers");
    for (int i = 0; i < 4; ++i) c.pyramid_taps[i] = t.at(i).get<int>();
  }
  c.alpha = j.value("alpha", c.alpha);
  c.head_channels = j.value("head_channels", c.head_channels);
  c.mlp_ratio = j.value("mlp_ratio", c.mlp_ratio);
  c.validate();
  return c;
}

LatentPyramid run_pyramid(const GeometryTransformer<float>& model,
                          const util::Image& left, const util::Image& right) {
  if (left.height != model.cfg.image_height || left.width != model.cfg.image_width ||
      right.height != model.cfg.image_height || right.width != model.cfg.image_width)
    throw std::invalid_argument("run_pyramid: image size does not match model config");
  auto lp = nn::constant<float>(patchify<float>(left, model.cfg.patch_size));
  auto rp = nn::constant<float>(patchify<float>(right, model.cfg.patch_size));
  auto taps = model.decode(model.encode(lp, rp));
  LatentPyramid out;
  out.grid_h = model.cfg.grid_h();
  out.grid_w = model.cfg.grid_w();
  for (int k = 0; k < 4; ++k) {
    out.levels[k][0] = taps[k].left->val;
    out.levels[k][1] = taps[k].right->val;
  }
  return out;
}

PointPrediction run_prediction(const GeometryTransformer<float>& model,
                               const util::Image& left, const util::Image& right) {
  auto lp = nn::constant<float>(patchify<float>(left, model.cfg.patch_size));
  auto rp = nn::constant<float>(patchify<float>(right, model.cfg.patch_size));
  auto out = model.forward(lp, rp);

  const int H = model.cfg.image_height, W = model.cfg.image_width;
  PointPrediction pred;
  const nn::Var<float>* views[2] = {&out.left, &out.right};
  geom::PointMap* maps[2] = {&pred.left, &pred.right};
  std::vector<float>* confs[2] = {&pred.conf_left, &pred.conf_right};
  for (int v = 0; v < 2; ++v) {
    *maps[v] = geom::PointMap(H, W);
    confs[v]->resize((size_t)H * W);
    const auto& m = (*views[v])->val;
    for (int i = 0; i < H * W; ++i) {
      maps[v]->points[i] = Eigen::Vector3f(m(i, 0), m(i, 1), m(i, 2));
      maps[v]->valid[i] = 1;
      (*confs[v])[i] = 1.0f + std::exp(std::min(m(i, 3), 30.0f));
    }
  }
  return pred;
}

}  // namespace sst::geotrans
