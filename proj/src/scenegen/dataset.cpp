#include "sst/scenegen/dataset.hpp"

#include <cstring>
#include <fstream>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace sst::scenegen {

namespace {
constexpr char kMagic[4] = {'S', '3', 'D', 'P'};
constexpr uint32_t kVersion = 1;

void put_u32le(std::ofstream& f, uint32_t v) {
  uint8_t b[4] = {(uint8_t)(v & 0xff), (uint8_t)((v >> 8) & 0xff),
                  (uint8_t)((v >> 16) & 0xff), (uint8_t)((v >> 24) & 0xff)};
  f.write((const char*)b, 4);
}

uint32_t get_u32le(std::ifstream& f, const std::string& path) {
  uint8_t b[4];
  if (!f.read((char*)b, 4)) throw TruncationError("truncated point-map file: " + path);
  return (uint32_t)b[0] | ((uint32_t)b[1] << 8) | ((uint32_t)b[2] << 16) |
         ((uint32_t)b[3] << 24);
}
}  // namespace

void write_pointmap(const fs::path& path, const geom::PointMap& pm) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
  f.write(kMagic, 4);
  put_u32le(f, kVersion);
  put_u32le(f, (uint32_t)pm.height);
  put_u32le(f, (uint32_t)pm.width);
  static_assert(sizeof(Eigen::Vector3f) == 12);
  f.write((const char*)pm.points.data(), (std::streamsize)pm.points.size() * 12);
  f.write((const char*)pm.valid.data(), (std::streamsize)pm.valid.size());
  if (!f) throw std::runtime_error("short write: " + path.string());
}

geom::PointMap read_pointmap(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path.string());
  char magic[4];
  if (!f.read(magic, 4)) throw TruncationError("truncated point-map file: " + path.string());
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("bad magic bytes in point-map file: " + path.string());
  uint32_t version = get_u32le(f, path.string());
  if (version != kVersion)
    throw FormatError("unsupported point-map version " + std::to_string(version) +
                      " in " + path.string());
  uint32_t h = get_u32le(f, path.string());
  uint32_t w = get_u32le(f, path.string());
  if (h == 0 || w == 0 || h > 1 << 16 || w > 1 << 16)
    throw DimensionError("implausible dimensions in " + path.string());
  geom::PointMap pm((int)h, (int)w);
  if (!f.read((char*)pm.points.data(), (std::streamsize)pm.points.size() * 12))
    throw TruncationError("point payload shorter than H*W*3 in " + path.string());
  if (!f.read((char*)pm.valid.data(), (std::streamsize)pm.valid.size()))
    throw TruncationError("valid-mask payload shorter than H*W in " + path.string());
  return pm;
}

namespace {

json rig_to_json(const geom::StereoRig& r) {
  return {{"fx", r.fx},
          {"fy", r.fy},
          {"cx", r.cx},
          {"cy", r.cy},
          {"baseline", r.baseline},
          {"width", r.width},
          {"height", r.height},
          {"pose_right_in_left", r.pose_right_in_left.to_json()}};
}

geom::StereoRig rig_from_json(const json& j) {
  geom::StereoRig r;
  r.fx = j.at("fx");
  r.fy = j.at("fy");
  r.cx = j.at("cx");
  r.cy = j.at("cy");
  r.baseline = j.at("baseline");
  r.width = j.at("width");
  r.height = j.at("height");
  r.pose_right_in_left = geom::Pose::from_json(j.at("pose_right_in_left"));
  return r;
}

}  // namespace

void write_sample(const Sample& sample, const fs::path& dir) {
  fs::create_directories(dir);
  util::write_png((dir / "left.png").string(), sample.left);
  util::write_png((dir / "right.png").string(), sample.right);
  write_pointmap(dir / "pointmap_left.s3dp", sample.pointmap_left);
  write_pointmap(dir / "pointmap_right.s3dp", sample.pointmap_right);
  json meta = {{"generator_version", 1},
               {"seed", sample.seed},
               {"scene_id", sample.scene_id},
               {"rig", rig_to_json(sample.rig)}};
  std::ofstream f(dir / "meta.json");
  f << meta.dump(2) << "\n";
}

Sample read_sample(const fs::path& dir) {
  Sample s;
  s.left = util::read_png((dir / "left.png").string());
  s.right = util::read_png((dir / "right.png").string());
  s.pointmap_left = read_pointmap(dir / "pointmap_left.s3dp");
  s.pointmap_right = read_pointmap(dir / "pointmap_right.s3dp");
  std::ifstream f(dir / "meta.json");
  if (!f) throw std::runtime_error("missing meta.json in " + dir.string());
  json meta = json::parse(f);
  s.seed = meta.at("seed");
  s.scene_id = meta.at("scene_id");
  s.rig = rig_from_json(meta.at("rig"));
  if (s.pointmap_left.height != s.rig.height || s.pointmap_left.width != s.rig.width)
    throw DimensionError("point map does not match rig dimensions in " + dir.string());
  return s;
}

fs::path sample_dir(const fs::path& root, int64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "sample_%06lld", (long long)index);
  return root / buf;
}

int64_t count_samples(const fs::path& root) {
  int64_t n = 0;
  while (fs::exists(sample_dir(root, n))) ++n;
  return n;
}

double apply_confidence_threshold(Sample& sample, const PredictedMaps& pred,
                                  double confidence_threshold) {
  sample.pointmap_left = pred.left;
  sample.pointmap_right = pred.right;
  int64_t total = 0, kept = 0;
  auto thresh = [&](geom::PointMap& pm, const std::vector<float>& conf) {
    for (size_t i = 0; i < pm.valid.size(); ++i) {
      pm.valid[i] = conf[i] >= confidence_threshold ? 1 : 0;
      ++total;
      kept += pm.valid[i];
    }
  };
  thresh(sample.pointmap_left, pred.conf_left);
  thresh(sample.pointmap_right, pred.conf_right);
  return total ? (double)kept / (double)total : 0.0;
}

PseudoLabelStats pseudo_label(const Predictor& model, const fs::path& frames_dir,
                              const fs::path& out_dir, double confidence_threshold) {
  PseudoLabelStats stats;
  int64_t n = count_samples(frames_dir);
  fs::create_directories(out_dir);
  for (int64_t i = 0; i < n; ++i) {
    Sample s = read_sample(sample_dir(frames_dir, i));
    PredictedMaps pred = model(s.left, s.right);
    double frac = apply_confidence_threshold(s, pred, confidence_threshold);
    if (frac < 0.05) {
      ++stats.discarded;
      continue;
    }
    write_sample(s, sample_dir(out_dir, stats.retained));
    ++stats.retained;
  }
  return stats;
}

}  // namespace sst::scenegen
