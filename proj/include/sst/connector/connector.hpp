#pragma once

// Spatial feature connectors aligning the geometry transformer's latent
// pyramid with the policy decoder's feature space.
//
//   msfc — per-level linear projection to a reduced width, concatenation of
//          the 4 levels along features, then a one-hidden-layer MLP to the
//          policy width (the default connector).
//   lfc  — only the final pyramid level, through the same MLP shape.
//   msc  — each level independently projected to the policy width; the
//          policy decoder routes level l to blocks {l, l+4, ...}.
//
// All variants are strictly token-wise: no spatial mixing. Output tokens are
// laid out as the two stereo grids concatenated along the width axis before
// row-major flattening: token (r, c) of the combined (gh x 2*gw) grid.

#include "sst/nn/modules.hpp"

#include <array>
#include <string>

namespace sst::connector {

enum class Variant { Msfc, Lfc, Msc };

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::Msfc: return "msfc";
    case Variant::Lfc: return "lfc";
    case Variant::Msc: return "msc";
  }
  throw std::logic_error("unknown connector variant");
}

inline Variant variant_from_string(const std::string& s) {
  if (s == "msfc") return Variant::Msfc;
  if (s == "lfc") return Variant::Lfc;
  if (s == "msc") return Variant::Msc;
  throw std::invalid_argument("unknown connector variant: " + s);
}

struct ConnectorConfig {
  Variant variant = Variant::Msfc;
  int dec_width = 192;    // pyramid token width
  int policy_width = 256; // output token width
  int d_low = 0;          // msfc per-level reduced width; 0 = policy_width / 4

  int low_width() const { return d_low > 0 ? d_low : policy_width / 4; }
  void validate() const {
    if (dec_width <= 0 || policy_width <= 0)
      throw std::invalid_argument("connector: widths must be positive");
    if (low_width() <= 0) throw std::invalid_argument("connector: d_low must be positive");
  }
};

// Interleaves per-view token grids into the stereo-concatenated layout:
// row-major over the (gh x 2*gw) combined grid, left view in columns
// [0, gw), right view in [gw, 2*gw).
template <class T>
nn::Var<T> stereo_concat(const nn::Var<T>& left, const nn::Var<T>& right, int gh,
                         int gw) {
  if ((int)left->val.rows() != gh * gw || (int)right->val.rows() != gh * gw)
    throw std::invalid_argument("stereo_concat: grid size mismatch");
  std::vector<int> idx;
  idx.reserve(2 * gh * gw);
  const int n = gh * gw;
  for (int r = 0; r < gh; ++r) {
    for (int c = 0; c < gw; ++c) idx.push_back(r * gw + c);
    for (int c = 0; c < gw; ++c) idx.push_back(n + r * gw + c);
  }
  return nn::gather_rows(nn::concat_rows<T>({left, right}), idx);
}

// Spatial tokens handed to the policy: one set for msfc/lfc, four (one per
// pyramid level) for msc.
template <class T>
struct SpatialTokens {
  Variant variant = Variant::Msfc;
  std::vector<nn::Var<T>> sets;
  int grid_h = 0, grid_w = 0;  // per-view grid; combined width is 2*grid_w
};

template <class T>
struct Connector {
  ConnectorConfig cfg;
  std::array<nn::Linear<T>, 4> level_proj;  // msfc: -> d_low; msc: -> policy width
  nn::Linear<T> fc1, fc2;                   // msfc/lfc alignment MLP

  Connector() = default;
  Connector(nn::ParamStore<T>& ps, const std::string& name, const ConnectorConfig& config,
            std::mt19937_64& rng)
      : cfg(config) {
    cfg.validate();
    switch (cfg.variant) {
      case Variant::Msfc:
        for (int l = 0; l < 4; ++l)
          level_proj[l] = nn::Linear<T>(ps, name + ".proj" + std::to_string(l),
                                        cfg.dec_width, cfg.low_width(), rng);
        fc1 = nn::Linear<T>(ps, name + ".fc1", 4 * cfg.low_width(), cfg.policy_width, rng);
        fc2 = nn::Linear<T>(ps, name + ".fc2", cfg.policy_width, cfg.policy_width, rng);
        break;
      case Variant::Lfc:
        fc1 = nn::Linear<T>(ps, name + ".fc1", cfg.dec_width, cfg.policy_width, rng);
        fc2 = nn::Linear<T>(ps, name + ".fc2", cfg.policy_width, cfg.policy_width, rng);
        break;
      case Variant::Msc:
        for (int l = 0; l < 4; ++l)
          level_proj[l] = nn::Linear<T>(ps, name + ".proj" + std::to_string(l),
                                        cfg.dec_width, cfg.policy_width, rng);
        break;
    }
  }

  // levels: 4 stereo-concatenated token sets, each (2*gh*gw) x dec_width.
  std::vector<nn::Var<T>> operator()(const std::array<nn::Var<T>, 4>& levels) const {
    for (auto& l : levels)
      if ((int)l->val.cols() != cfg.dec_width)
        throw std::invalid_argument("connector: token width mismatch");
    switch (cfg.variant) {
      case Variant::Msfc: {
        std::vector<nn::Var<T>> projected;
        projected.reserve(4);
        for (int l = 0; l < 4; ++l) projected.push_back(level_proj[l](levels[l]));
        return {fc2(nn::gelu(fc1(nn::concat_cols(projected))))};
      }
      case Variant::Lfc:
        return {fc2(nn::gelu(fc1(levels[3])))};
      case Variant::Msc: {
        std::vector<nn::Var<T>> out;
        out.reserve(4);
        for (int l = 0; l < 4; ++l) out.push_back(level_proj[l](levels[l]));
        return out;
      }
    }
    throw std::logic_error("unknown connector variant");
  }
};

// Which token set policy block `block` cross-attends to.
inline int msc_level_for_block(int block) { return block % 4; }

}  // namespace sst::connector
