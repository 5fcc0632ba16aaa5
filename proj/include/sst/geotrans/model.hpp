#pragma once

// Geometry transformer: shared ViT encoder over both views, cross-attention
// decoder, multi-level fusion head regressing per-pixel 3D points plus a
// confidence logit. Confidence is parameterized as C = 1 + exp(logit).

#include "sst/geom.hpp"
#include "sst/nn/image_ops.hpp"
#include "sst/nn/modules.hpp"
#include "sst/util/image.hpp"

#include <array>

#include "json.hpp"

namespace sst::geotrans {

struct GeoConfig {
  int image_height = 96, image_width = 96;
  int patch_size = 8;
  int enc_depth = 6, enc_width = 192, enc_heads = 3;
  int dec_depth = 6, dec_width = 192, dec_heads = 3;
  std::array<int, 4> pyramid_taps = {2, 3, 4, 6};  // 1-based decoder layers
  double alpha = 0.2;  // confidence regularizer weight
  int head_channels = 24;
  int mlp_ratio = 4;

  int grid_h() const { return image_height / patch_size; }
  int grid_w() const { return image_width / patch_size; }
  int tokens_per_view() const { return grid_h() * grid_w(); }

  void validate() const {
    if (image_height % patch_size || image_width % patch_size)
      throw std::invalid_argument("image dims must be divisible by patch size");
    if (alpha <= 0) throw std::invalid_argument("alpha must be > 0");
    for (int i = 1; i < 4; ++i)
      if (pyramid_taps[i] <= pyramid_taps[i - 1])
        throw std::invalid_argument("pyramid taps must be strictly increasing");
    if (pyramid_taps[3] != dec_depth)
      throw std::invalid_argument("last pyramid tap must be the final decoder layer");
    if (pyramid_taps[0] < 1) throw std::invalid_argument("pyramid taps are 1-based");
  }

  nlohmann::json to_json() const;
  static GeoConfig from_json(const nlohmann::json& j);
};

// Plain (graph-free) latent pyramid: 4 levels x 2 views of token matrices.
struct LatentPyramid {
  // level -> {left, right}, each tokens_per_view x dec_width
  std::array<std::array<nn::Mat<float>, 2>, 4> levels;
  int grid_h = 0, grid_w = 0;
};

struct PointPrediction {
  geom::PointMap left, right;                // dense, valid all set
  std::vector<float> conf_left, conf_right;  // >= 1 by parameterization
};

// Flattens an image into per-patch rows: tokens_per_view x (3*patch^2),
// values scaled to [0, 1].
template <class T>
nn::Mat<T> patchify(const util::Image& img, int patch) {
  const int gh = img.height / patch, gw = img.width / patch;
  nn::Mat<T> m(gh * gw, 3 * patch * patch);
  for (int pr = 0; pr < gh; ++pr)
    for (int pc = 0; pc < gw; ++pc) {
      int tok = pr * gw + pc;
      int f = 0;
      for (int r = 0; r < patch; ++r)
        for (int c = 0; c < patch; ++c) {
          const uint8_t* px = img.px(pr * patch + r, pc * patch + c);
          for (int k = 0; k < 3; ++k) m(tok, f++) = T(px[k]) / T(255);
        }
    }
  return m;
}

template <class T>
struct GeometryTransformer {
  GeoConfig cfg;
  nn::ParamStore<T> ps;

  nn::Linear<T> patch_embed;
  nn::Var<T> enc_pos;  // learned, tokens_per_view x enc_width
  std::vector<nn::EncoderBlock<T>> enc_blocks;
  nn::LayerNorm<T> enc_norm;

  nn::Linear<T> dec_proj;
  nn::Var<T> view_embed;  // 2 x dec_width
  std::vector<nn::DecoderBlock<T>> dec_blocks;

  std::array<nn::Linear<T>, 4> head_proj;
  nn::Var<T> refine_w, refine_b;  // 3x3 conv
  nn::Linear<T> head_out;         // 1x1 conv to xyz + confidence logit

  GeometryTransformer(const GeoConfig& config, uint64_t init_seed)
      : cfg(config) {
    cfg.validate();
    std::mt19937_64 rng(init_seed);
    const int pdim = 3 * cfg.patch_size * cfg.patch_size;
    patch_embed = nn::Linear<T>(ps, "enc.patch_embed", pdim, cfg.enc_width, rng);
    enc_pos = ps.add("enc.pos", nn::trunc_normal<T>(cfg.tokens_per_view(), cfg.enc_width, rng));
    for (int i = 0; i < cfg.enc_depth; ++i)
      enc_blocks.emplace_back(ps, "enc.block" + std::to_string(i), cfg.enc_width,
                              cfg.enc_heads, cfg.enc_width * cfg.mlp_ratio, rng);
    enc_norm = nn::LayerNorm<T>(ps, "enc.norm", cfg.enc_width);

    dec_proj = nn::Linear<T>(ps, "dec.proj", cfg.enc_width, cfg.dec_width, rng);
    view_embed = ps.add("dec.view_embed", nn::trunc_normal<T>(2, cfg.dec_width, rng));
    for (int i = 0; i < cfg.dec_depth; ++i)
      dec_blocks.emplace_back(ps, "dec.block" + std::to_string(i), cfg.dec_width,
                              cfg.dec_heads, cfg.dec_width * cfg.mlp_ratio, rng);

    for (int l = 0; l < 4; ++l)
      head_proj[l] = nn::Linear<T>(ps, "head.proj" + std::to_string(l), cfg.dec_width,
                                   cfg.head_channels, rng);
    refine_w = ps.add("head.refine_w",
                      nn::trunc_normal<T>(9 * cfg.head_channels, cfg.head_channels, rng));
    refine_b = ps.add("head.refine_b", nn::Mat<T>::Zero(1, cfg.head_channels));
    head_out = nn::Linear<T>(ps, "head.out", cfg.head_channels, 4, rng);
  }

  void set_trainable(bool trainable) {
    for (auto& [n, p] : ps.params) p->requires_grad = trainable;
  }

  // Shared encoder applied independently to one view.
  nn::Var<T> encode_view(const nn::Var<T>& patches) const {
    if ((int)patches->val.cols() != 3 * cfg.patch_size * cfg.patch_size ||
        (int)patches->val.rows() != cfg.tokens_per_view())
      throw std::invalid_argument("encode: input does not match configured dimensions");
    nn::Var<T> x = nn::add(patch_embed(patches), enc_pos);
    for (auto& b : enc_blocks) x = b(x);
    return enc_norm(x);
  }

  struct ViewPair {
    nn::Var<T> left, right;
  };

  ViewPair encode(const nn::Var<T>& left_patches, const nn::Var<T>& right_patches) const {
    return {encode_view(left_patches), encode_view(right_patches)};
  }

  // Decoder with per-layer cross-attention between views; returns the four
  // tapped levels, each as a {left, right} pair.
  std::array<ViewPair, 4> decode(const ViewPair& enc_tokens) const {
    nn::Var<T> l = nn::add_rowvec(dec_proj(enc_tokens.left),
                                  nn::slice_rows(view_embed, 0, 1));
    nn::Var<T> r = nn::add_rowvec(dec_proj(enc_tokens.right),
                                  nn::slice_rows(view_embed, 1, 1));
    std::array<ViewPair, 4> taps;
    int tap = 0;
    for (int i = 0; i < cfg.dec_depth; ++i) {
      nn::Var<T> nl = dec_blocks[i](l, r);
      nn::Var<T> nr = dec_blocks[i](r, l);
      l = nl;
      r = nr;
      if (tap < 4 && cfg.pyramid_taps[tap] == i + 1) taps[tap++] = {l, r};
    }
    return taps;
  }

  // Fusion head for one view: 4 tapped token grids -> (H*W) x 4 map.
  nn::Var<T> head_view(const std::array<nn::Var<T>, 4>& levels) const {
    const int gh = cfg.grid_h(), gw = cfg.grid_w();
    const int H = cfg.image_height, W = cfg.image_width;
    // three progressive upsampling stages from the token grid to full res
    std::array<int, 4> hs, ws;
    for (int k = 0; k < 4; ++k) {
      hs[k] = (int)std::lround(gh * std::pow((double)H / gh, k / 3.0));
      ws[k] = (int)std::lround(gw * std::pow((double)W / gw, k / 3.0));
    }
    hs[3] = H;
    ws[3] = W;
    nn::Var<T> f = head_proj[3](levels[3]);
    int ch = gh, cw = gw;
    for (int step = 1; step <= 3; ++step) {
      int lev = 3 - step;
      f = nn::add(nn::bilinear_resize(f, ch, cw, hs[step], ws[step]),
                  nn::bilinear_resize(head_proj[lev](levels[lev]), gh, gw, hs[step],
                                      ws[step]));
      ch = hs[step];
      cw = ws[step];
    }
    f = nn::relu(nn::conv3x3(f, refine_w, refine_b, H, W));
    return head_out(f);  // xyz + confidence logit
  }

  struct Output {
    nn::Var<T> left, right;  // (H*W) x 4
    std::array<ViewPair, 4> pyramid;
  };

  Output forward(const nn::Var<T>& left_patches, const nn::Var<T>& right_patches) const {
    Output out;
    out.pyramid = decode(encode(left_patches, right_patches));
    std::array<nn::Var<T>, 4> lv, rv;
    for (int k = 0; k < 4; ++k) {
      lv[k] = out.pyramid[k].left;
      rv[k] = out.pyramid[k].right;
    }
    out.left = head_view(lv);
    out.right = head_view(rv);
    return out;
  }
};

// Graph-free inference helpers (float model).
LatentPyramid run_pyramid(const GeometryTransformer<float>& model,
                          const util::Image& left, const util::Image& right);
PointPrediction run_prediction(const GeometryTransformer<float>& model,
                               const util::Image& left, const util::Image& right);

}  // namespace sst::geotrans
