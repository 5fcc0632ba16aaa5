#include "sst/policy/policy.hpp"

using nlohmann::json;

namespace sst::policy {

json PolicyConfig::to_json() const {
  return {{"depth", depth},   {"width", width},     {"heads", heads},
          {"chunk", chunk},   {"m", m},             {"jaw_max", jaw_max},
          {"mlp_ratio", mlp_ratio}};
}

PolicyConfig PolicyConfig::from_json(const json& j) {
  PolicyConfig c;
  json known = c.to_json();
  for (auto& [k, v] : j.items())
    if (!known.contains(k))
      throw std::invalid_argument("unknown policy config key: " + k);
  c.depth = j.value("depth", c.depth);
  c.width = j.value("width", c.width);
  c.heads = j.value("heads", c.heads);
  c.chunk = j.value("chunk", c.chunk);
  c.m = j.value("m", c.m);
  c.jaw_max = j.value("jaw_max", c.jaw_max);
  c.mlp_ratio = j.value("mlp_ratio", c.mlp_ratio);
  c.validate();
  return c;
}

ActionStats ActionStats::compute(const std::vector<std::array<double, 14>>& actions) {
  if (actions.empty()) throw std::invalid_argument("ActionStats: no actions");
  ActionStats s;
  for (const auto& a : actions)
    for (int j = 0; j < 14; ++j) s.mu[j] += a[j];
  for (int j = 0; j < 14; ++j) s.mu[j] /= (double)actions.size();
  for (const auto& a : actions)
    for (int j = 0; j < 14; ++j) s.sigma[j] += (a[j] - s.mu[j]) * (a[j] - s.mu[j]);
  for (int j = 0; j < 14; ++j)
    // floor keeps near-constant channels (e.g. rotations the expert never
    // commands) from dominating the standardized loss
    s.sigma[j] = std::max(std::sqrt(s.sigma[j] / (double)actions.size()), 1e-3);
  return s;
}

json ActionStats::to_json() const { return {{"mu", mu}, {"sigma", sigma}}; }

ActionStats ActionStats::from_json(const json& j) {
  ActionStats s;
  for (int i = 0; i < 14; ++i) {
    s.mu[i] = j.at("mu").at(i).get<double>();
    s.sigma[i] = j.at("sigma").at(i).get<double>();
  }
  return s;
}

nn::Mat<float> positional_encoding(int gh, int gw_combined, int width) {
  if (width % 2 != 0)
    throw std::invalid_argument("positional_encoding: width must be even");
  const int half = width / 2;
  auto axis = [&](int pos, int d, float* out) {
    for (int i = 0; 2 * i < d; ++i) {
      double freq = std::pow(10000.0, -2.0 * i / (double)d);
      out[2 * i] = (float)std::sin(pos * freq);
      if (2 * i + 1 < d) out[2 * i + 1] = (float)std::cos(pos * freq);
    }
  };
  nn::Mat<float> pe(gh * gw_combined, width);
  for (int r = 0; r < gh; ++r)
    for (int c = 0; c < gw_combined; ++c) {
      float* row = pe.data() + (size_t)(r * gw_combined + c) * width;
      axis(r, half, row);
      axis(c, width - half, row + half);
    }
  return pe;
}

Eigen::Matrix<double, kProprioDim, 1> proprio_vector(const geom::ArmState& measured,
                                                     bool contact_left,
                                                     bool contact_right) {
  Eigen::Matrix<double, kProprioDim, 1> x;
  int o = 0;
  for (const geom::Pose* p : {&measured.pose_left, &measured.pose_right}) {
    x.segment<3>(o) = p->t;
    x.segment<3>(o + 3) = p->R.col(0);
    x.segment<3>(o + 6) = p->R.col(1);
    o += 9;
  }
  x(18) = measured.jaw_left;
  x(19) = measured.jaw_right;
  x(20) = contact_left ? 1.0 : 0.0;
  x(21) = contact_right ? 1.0 : 0.0;
  return x;
}

void EnsembleBuffer::push(int64_t timestep, ActionChunk actions) {
  if ((int)actions.size() != chunk)
    throw std::invalid_argument("EnsembleBuffer: chunk length mismatch");
  entries.push_back({timestep, std::move(actions)});
  prune(timestep);
}

void EnsembleBuffer::prune(int64_t timestep) {
  while (!entries.empty() && timestep - entries.front().issued >= chunk)
    entries.pop_front();
}

geom::ActionStep ensemble(const EnsembleBuffer& buffer, int64_t timestep, double m) {
  if (m < 0) throw std::invalid_argument("ensemble: m must be >= 0");
  std::array<double, 14> acc{};
  double wsum = 0;
  for (const auto& e : buffer.entries) {
    int64_t age = timestep - e.issued;
    if (age < 0 || age >= buffer.chunk) continue;
    double w = std::exp(-m * (double)age);
    auto v = e.actions[(size_t)age].flatten();
    for (int j = 0; j < 14; ++j) acc[j] += w * v[j];
    wsum += w;
  }
  if (wsum == 0)
    throw std::invalid_argument("ensemble: no buffered chunk covers this timestep");
  for (int j = 0; j < 14; ++j) acc[j] /= wsum;
  return geom::ActionStep::unflatten(acc);
}

}  // namespace sst::policy
