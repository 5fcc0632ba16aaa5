#include "sst/util/image.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace sst::util {

namespace {

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back((v >> 24) & 0xff);
  out.push_back((v >> 16) & 0xff);
  out.push_back((v >> 8) & 0xff);
  out.push_back(v & 0xff);
}

uint32_t get_u32(const uint8_t* p) {
  return ((uint32_t)p[0] << 24) | ((uint32_t)p[1] << 16) | ((uint32_t)p[2] << 8) | p[3];
}

void write_chunk(std::ofstream& f, const char type[4], const std::vector<uint8_t>& data) {
  std::vector<uint8_t> hdr;
  put_u32(hdr, (uint32_t)data.size());
  f.write((const char*)hdr.data(), 4);
  f.write(type, 4);
  if (!data.empty()) f.write((const char*)data.data(), data.size());
  std::vector<uint8_t> crcbuf(type, type + 4);
  crcbuf.insert(crcbuf.end(), data.begin(), data.end());
  uint32_t crc = crc32(0, crcbuf.data(), (uInt)crcbuf.size());
  std::vector<uint8_t> crcb;
  put_u32(crcb, crc);
  f.write((const char*)crcb.data(), 4);
}

int paeth(int a, int b, int c) {
  int p = a + b - c;
  int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

}  // namespace

void write_png(const std::string& path, const Image& img) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_png: cannot open " + path);
  static const uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
  f.write((const char*)sig, 8);

  std::vector<uint8_t> ihdr;
  put_u32(ihdr, (uint32_t)img.width);
  put_u32(ihdr, (uint32_t)img.height);
  ihdr.insert(ihdr.end(), {8, 2, 0, 0, 0});  // 8-bit, RGB, non-interlaced
  write_chunk(f, "IHDR", ihdr);

  // filter 0 on every scanline
  const size_t stride = (size_t)img.width * 3;
  std::vector<uint8_t> raw((stride + 1) * img.height);
  for (int r = 0; r < img.height; ++r) {
    raw[r * (stride + 1)] = 0;
    std::memcpy(&raw[r * (stride + 1) + 1], &img.rgb[r * stride], stride);
  }
  uLongf bound = compressBound((uLong)raw.size());
  std::vector<uint8_t> comp(bound);
  if (compress2(comp.data(), &bound, raw.data(), (uLong)raw.size(), 6) != Z_OK)
    throw std::runtime_error("write_png: deflate failed");
  comp.resize(bound);
  write_chunk(f, "IDAT", comp);
  write_chunk(f, "IEND", {});
}

Image read_png(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_png: cannot open " + path);
  std::vector<uint8_t> buf((std::istreambuf_iterator<char>(f)),
                           std::istreambuf_iterator<char>());
  static const uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
  if (buf.size() < 8 || std::memcmp(buf.data(), sig, 8) != 0)
    throw std::runtime_error("read_png: not a PNG file: " + path);

  uint32_t w = 0, h = 0;
  int bit_depth = 0, color_type = 0;
  std::vector<uint8_t> idat;
  size_t pos = 8;
  while (pos + 8 <= buf.size()) {
    uint32_t len = get_u32(&buf[pos]);
    if (pos + 12 + len > buf.size())
      throw std::runtime_error("read_png: truncated chunk in " + path);
    const char* type = (const char*)&buf[pos + 4];
    const uint8_t* data = &buf[pos + 8];
    if (!std::memcmp(type, "IHDR", 4)) {
      w = get_u32(data);
      h = get_u32(data + 4);
      bit_depth = data[8];
      color_type = data[9];
      if (data[12] != 0) throw std::runtime_error("read_png: interlaced PNG unsupported");
    } else if (!std::memcmp(type, "IDAT", 4)) {
      idat.insert(idat.end(), data, data + len);
    } else if (!std::memcmp(type, "IEND", 4)) {
      break;
    }
    pos += 12 + len;
  }
  if (w == 0 || h == 0) throw std::runtime_error("read_png: missing IHDR in " + path);
  if (bit_depth != 8 || color_type != 2)
    throw std::runtime_error("read_png: only 8-bit RGB supported");

  const size_t stride = (size_t)w * 3;
  std::vector<uint8_t> raw((stride + 1) * h);
  uLongf rawlen = (uLongf)raw.size();
  if (uncompress(raw.data(), &rawlen, idat.data(), (uLong)idat.size()) != Z_OK ||
      rawlen != raw.size())
    throw std::runtime_error("read_png: inflate failed for " + path);

  Image img((int)w, (int)h);
  std::vector<uint8_t> prev(stride, 0);
  for (uint32_t r = 0; r < h; ++r) {
    uint8_t filter = raw[r * (stride + 1)];
    uint8_t* line = &raw[r * (stride + 1) + 1];
    for (size_t i = 0; i < stride; ++i) {
      int a = i >= 3 ? line[i - 3] : 0;
      int b = prev[i];
      int c = i >= 3 ? prev[i - 3] : 0;
      switch (filter) {
        case 0: break;
        case 1: line[i] = (uint8_t)(line[i] + a); break;
        case 2: line[i] = (uint8_t)(line[i] + b); break;
        case 3: line[i] = (uint8_t)(line[i] + (a + b) / 2); break;
        case 4: line[i] = (uint8_t)(line[i] + paeth(a, b, c)); break;
        default: throw std::runtime_error("read_png: bad filter byte");
      }
    }
    std::memcpy(&img.rgb[r * stride], line, stride);
    std::memcpy(prev.data(), line, stride);
  }
  return img;
}

}  // namespace sst::util
