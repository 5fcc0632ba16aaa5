#include "sst/nn/checkpoint.hpp"

#include <cstring>
#include <fstream>

using nlohmann::json;
namespace fs = std::filesystem;

namespace sst::nn {

namespace {
constexpr char kMagic[4] = {'S', 'S', 'T', 'C'};
constexpr uint32_t kVersion = 1;

template <class T>
void put(std::ofstream& f, const T& v) {
  f.write((const char*)&v, sizeof(T));
}
template <class T>
void get(std::ifstream& f, T& v, const std::string& path) {
  if (!f.read((char*)&v, sizeof(T)))
    throw std::runtime_error("truncated checkpoint: " + path);
}
}  // namespace

void write_checkpoint(const fs::path& path, const json& meta, const ParamStore<float>& ps) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
  f.write(kMagic, 4);
  put(f, kVersion);
  std::string m = meta.dump();
  put(f, (uint64_t)m.size());
  f.write(m.data(), (std::streamsize)m.size());
  put(f, (uint64_t)ps.params.size());
  for (auto& [name, p] : ps.params) {
    put(f, (uint32_t)name.size());
    f.write(name.data(), (std::streamsize)name.size());
    put(f, (uint32_t)p->val.rows());
    put(f, (uint32_t)p->val.cols());
    f.write((const char*)p->val.data(), (std::streamsize)p->val.size() * 4);
  }
  if (!f) throw std::runtime_error("short write: " + path.string());
}

namespace {
json read_header(std::ifstream& f, const std::string& path) {
  char magic[4];
  if (!f.read(magic, 4)) throw std::runtime_error("truncated checkpoint: " + path);
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  uint32_t version;
  get(f, version, path);
  if (version != kVersion)
    throw std::runtime_error("unsupported checkpoint version in " + path);
  uint64_t mlen;
  get(f, mlen, path);
  std::string m(mlen, '\0');
  if (!f.read(m.data(), (std::streamsize)mlen))
    throw std::runtime_error("truncated checkpoint meta: " + path);
  return json::parse(m);
}
}  // namespace

json read_checkpoint_meta(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path.string());
  return read_header(f, path.string());
}

json read_checkpoint(const fs::path& path, ParamStore<float>& ps) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path.string());
  json meta = read_header(f, path.string());
  uint64_t n;
  get(f, n, path.string());
  if (n != ps.params.size())
    throw std::runtime_error("checkpoint parameter count mismatch in " + path.string());
  for (auto& [name, p] : ps.params) {
    uint32_t len;
    get(f, len, path.string());
    std::string nm(len, '\0');
    if (!f.read(nm.data(), len))
      throw std::runtime_error("truncated checkpoint: " + path.string());
    if (nm != name)
      throw std::runtime_error("checkpoint parameter name mismatch: expected " + name +
                               ", found " + nm);
    uint32_t r, c;
    get(f, r, path.string());
    get(f, c, path.string());
    if ((int)r != p->val.rows() || (int)c != p->val.cols())
      throw std::runtime_error("checkpoint shape mismatch for " + name);
    if (!f.read((char*)p->val.data(), (std::streamsize)p->val.size() * 4))
      throw std::runtime_error("truncated tensor data in " + path.string());
  }
  return meta;
}

std::string checkpoint_fingerprint(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path.string());
  uint64_t h = 1469598103934665603ull;
  char buf[65536];
  while (f.read(buf, sizeof(buf)) || f.gcount() > 0) {
    for (std::streamsize i = 0; i < f.gcount(); ++i) {
      h ^= (uint8_t)buf[i];
      h *= 1099511628211ull;
    }
    if (f.eof()) break;
  }
  char out[17];
  std::snprintf(out, sizeof(out), "%016llx", (unsigned long long)h);
  return out;
}

}  // namespace sst::nn
