#pragma once

// Action-chunking policy decoder: k learnable queries pass through L
// transformer blocks (self-attention over queries, cross-attention to the
// connector's spatial tokens plus one proprioception token); a linear head
// emits k x 14 relative actions with the jaw channels squashed into
// [0, jaw_max]. Includes exponential-weight temporal ensembling of
// overlapping chunks.

#include "sst/connector/connector.hpp"
#include "sst/geom.hpp"
#include "sst/nn/modules.hpp"

#include <array>
#include <deque>

#include "json.hpp"

namespace sst::policy {

struct PolicyConfig {
  int depth = 4;
  int width = 256;
  int heads = 4;
  int chunk = 20;      // k: actions predicted per query
  double m = 0.1;      // temporal-ensembling decay
  double jaw_max = 1.0;  // radians
  int mlp_ratio = 4;

  void validate() const {
    if (depth < 1) throw std::invalid_argument("policy: depth must be >= 1");
    if (chunk < 1) throw std::invalid_argument("policy: chunk must be >= 1");
    if (m < 0) throw std::invalid_argument("policy: m must be >= 0");
    if (width <= 0 || heads <= 0 || width % heads != 0)
      throw std::invalid_argument("policy: width must be a positive multiple of heads");
    if (jaw_max <= 0) throw std::invalid_argument("policy: jaw_max must be > 0");
  }
  nlohmann::json to_json() const;
  static PolicyConfig from_json(const nlohmann::json& j);
};

using ActionChunk = std::vector<geom::ActionStep>;  // length k

// Per-channel standardization statistics over the training demonstrations.
struct ActionStats {
  std::array<double, 14> mu{}, sigma{};

  static ActionStats compute(const std::vector<std::array<double, 14>>& actions);
  nlohmann::json to_json() const;
  static ActionStats from_json(const nlohmann::json& j);
};

// Fixed 2-D sinusoidal encodings over the stereo-concatenated token grid
// (gh rows x gw_combined columns); first half of the width encodes the row,
// second half the column. Throws on odd width.
nn::Mat<float> positional_encoding(int gh, int gw_combined, int width);

// Proprioception vector: per arm position (3) + first two rotation-matrix
// columns (6), then both jaw angles and both gripper contact flags (a real
// gripper reports when something is held between its jaws). 22 dimensions.
constexpr int kProprioDim = 22;
Eigen::Matrix<double, kProprioDim, 1> proprio_vector(const geom::ArmState& measured,
                                                     bool contact_left,
                                                     bool contact_right);

template <class T>
struct Policy {
  PolicyConfig cfg;
  connector::ConnectorConfig conn_cfg;
  int grid_h = 0, grid_w = 0;  // per-view token grid
  nn::ParamStore<T> ps;

  connector::Connector<T> conn;
  nn::Var<T> queries;  // k x width, learned
  nn::Linear<T> proprio_proj;
  std::vector<nn::DecoderBlock<T>> blocks;
  nn::Linear<T> head;
  nn::Mat<T> pos;  // fixed positional encodings, (2*gh*gw) x width

  Policy(const PolicyConfig& config, const connector::ConnectorConfig& cconfig,
         int gh, int gw, uint64_t init_seed)
      : cfg(config), conn_cfg(cconfig), grid_h(gh), grid_w(gw) {
    cfg.validate();
    conn_cfg.validate();
    if (conn_cfg.policy_width != cfg.width)
      throw std::invalid_argument("policy: connector output width must match policy width");
    std::mt19937_64 rng(init_seed);
    conn = connector::Connector<T>(ps, "conn", conn_cfg, rng);
    queries = ps.add("queries", nn::trunc_normal<T>(cfg.chunk, cfg.width, rng));
    proprio_proj = nn::Linear<T>(ps, "proprio", kProprioDim, cfg.width, rng);
    for (int i = 0; i < cfg.depth; ++i)
      blocks.emplace_back(ps, "block" + std::to_string(i), cfg.width, cfg.heads,
                          cfg.width * cfg.mlp_ratio, rng);
    head = nn::Linear<T>(ps, "head", cfg.width, 14, rng);
    pos = positional_encoding(gh, 2 * gw, cfg.width).template cast<T>();
  }

  // levels: 4 stereo-concatenated pyramid levels, each (2*gh*gw) x dec_width.
  // proprio: 1 x kProprioDim. Returns k x 14 physical actions
  // (meters/radians; jaw absolute in [0, jaw_max]).
  nn::Var<T> forward(const std::array<nn::Var<T>, 4>& levels,
                     const nn::Var<T>& proprio) const {
    if ((int)proprio->val.cols() != kProprioDim || proprio->val.rows() != 1)
      throw std::invalid_argument("policy: proprio dimension mismatch");
    auto sets = conn(levels);
    nn::Var<T> penc = nn::constant<T>(pos);
    nn::Var<T> ptok = proprio_proj(proprio);
    std::vector<nn::Var<T>> mems;
    mems.reserve(sets.size());
    for (auto& s : sets) {
      if ((int)s->val.rows() != 2 * grid_h * grid_w)
        throw std::invalid_argument("policy: spatial token count mismatch");
      mems.push_back(nn::concat_rows<T>({nn::add(s, penc), ptok}));
    }
    nn::Var<T> x = queries;
    for (int i = 0; i < cfg.depth; ++i) {
      const nn::Var<T>& mem =
          mems.size() == 1 ? mems[0] : mems[connector::msc_level_for_block(i)];
      x = blocks[i](x, mem);
    }
    nn::Var<T> y = head(x);
    auto squash = [&](const nn::Var<T>& col) {
      return nn::scale(nn::sigmoid(col), T(cfg.jaw_max));
    };
    return nn::concat_cols<T>({nn::slice_cols(y, 0, 6), squash(nn::slice_cols(y, 6, 1)),
                               nn::slice_cols(y, 7, 6),
                               squash(nn::slice_cols(y, 13, 1))});
  }

  ActionChunk to_chunk(const nn::Mat<T>& out) const {
    ActionChunk chunk((size_t)cfg.chunk);
    for (int i = 0; i < cfg.chunk; ++i) {
      std::array<double, 14> v;
      for (int j = 0; j < 14; ++j) v[j] = (double)out(i, j);
      chunk[i] = geom::ActionStep::unflatten(v);
    }
    return chunk;
  }
};

// MSE over standardized channels and non-padded steps. pred is k x 14 in
// physical units, target likewise; pad_mask[i] == 0 excludes step i. Throws
// if every step is padded.
template <class T>
nn::Var<T> loss_mse(const nn::Var<T>& pred, const nn::Mat<T>& target,
                    const std::vector<uint8_t>& pad_mask, const ActionStats& stats) {
  const int k = (int)pred->val.rows();
  if ((int)target.rows() != k || target.cols() != 14 || pred->val.cols() != 14 ||
      (int)pad_mask.size() != (size_t)k)
    throw std::invalid_argument("loss_mse: shape mismatch");
  int64_t n = 0;
  nn::Mat<T> w(k, 14);
  for (int i = 0; i < k; ++i) {
    n += pad_mask[i] ? 1 : 0;
    for (int j = 0; j < 14; ++j)
      w(i, j) = pad_mask[i] ? T(1) / T(stats.sigma[j]) : T(0);
  }
  if (n == 0) throw std::invalid_argument("loss_mse: all steps padded");
  nn::Var<T> d = nn::hadamard(nn::sub(pred, nn::constant<T>(target)),
                              nn::constant<T>(std::move(w)));
  return nn::scale(nn::sum_all(nn::hadamard(d, d)), T(1) / T(14 * n));
}

// Ring buffer of recent chunk predictions for temporal ensembling.
struct EnsembleBuffer {
  int chunk = 0;  // k
  struct Entry {
    int64_t issued = 0;  // timestep at which the chunk was predicted
    ActionChunk actions;
  };
  std::deque<Entry> entries;

  explicit EnsembleBuffer(int k) : chunk(k) {}
  void push(int64_t timestep, ActionChunk actions);
  // Drops entries too old to cover `timestep`.
  void prune(int64_t timestep);
};

// Weighted average of every buffered chunk's prediction for `timestep`,
// weights exp(-m * age) normalized to sum 1 (age = timestep - issued).
geom::ActionStep ensemble(const EnsembleBuffer& buffer, int64_t timestep, double m);

}  // namespace sst::policy
