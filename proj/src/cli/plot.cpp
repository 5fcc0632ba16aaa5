#include "sst/cli/plot.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sst::cli {

namespace {

constexpr uint8_t kBg[3] = {245, 245, 248};
constexpr uint8_t kAxis[3] = {70, 70, 80};
constexpr uint8_t kLine[3] = {30, 90, 200};
constexpr uint8_t kBar[3] = {60, 140, 90};

void put(util::Image& img, int r, int c, const uint8_t rgb[3]) {
  if (r < 0 || r >= img.height || c < 0 || c >= img.width) return;
  uint8_t* p = img.px(r, c);
  p[0] = rgb[0];
  p[1] = rgb[1];
  p[2] = rgb[2];
}

void line(util::Image& img, int r0, int c0, int r1, int c1, const uint8_t rgb[3]) {
  int steps = std::max({std::abs(r1 - r0), std::abs(c1 - c0), 1});
  for (int i = 0; i <= steps; ++i) {
    double t = (double)i / steps;
    put(img, (int)std::lround(r0 + t * (r1 - r0)), (int)std::lround(c0 + t * (c1 - c0)),
        rgb);
  }
}

void fill(util::Image& img, int r0, int c0, int r1, int c1, const uint8_t rgb[3]) {
  for (int r = r0; r <= r1; ++r)
    for (int c = c0; c <= c1; ++c) put(img, r, c, rgb);
}

util::Image blank(int width, int height) {
  util::Image img(width, height);
  fill(img, 0, 0, height - 1, width - 1, kBg);
  return img;
}

}  // namespace

util::Image render_loss_curve(const std::vector<double>& xs, const std::vector<double>& ys,
                              int width, int height) {
  if (xs.size() != ys.size() || xs.empty())
    throw std::invalid_argument("loss curve: need matching, non-empty x/y series");
  util::Image img = blank(width, height);
  const int m = 32;  // margin
  line(img, height - m, m, height - m, width - m, kAxis);  // x axis
  line(img, m, m, height - m, m, kAxis);                   // y axis

  double xlo = *std::min_element(xs.begin(), xs.end());
  double xhi = *std::max_element(xs.begin(), xs.end());
  double ylo = *std::min_element(ys.begin(), ys.end());
  double yhi = *std::max_element(ys.begin(), ys.end());
  if (xhi == xlo) xhi = xlo + 1;
  if (yhi == ylo) yhi = ylo + 1;
  auto col = [&](double x) {
    return m + (int)std::lround((x - xlo) / (xhi - xlo) * (width - 2 * m));
  };
  auto row = [&](double y) {
    return height - m - (int)std::lround((y - ylo) / (yhi - ylo) * (height - 2 * m));
  };
  for (size_t i = 1; i < xs.size(); ++i)
    line(img, row(ys[i - 1]), col(xs[i - 1]), row(ys[i]), col(xs[i]), kLine);
  return img;
}

util::Image render_success_bars(const std::vector<std::pair<std::string, double>>& bars,
                                int width, int height) {
  if (bars.empty()) throw std::invalid_argument("success bars: need at least one bar");
  util::Image img = blank(width, height);
  const int m = 32;
  line(img, height - m, m, height - m, width - m, kAxis);
  line(img, m, m, height - m, m, kAxis);
  int span = width - 2 * m;
  int slot = span / (int)bars.size();
  for (size_t i = 0; i < bars.size(); ++i) {
    double rate = std::clamp(bars[i].second, 0.0, 1.0);
    int c0 = m + (int)i * slot + slot / 6;
    int c1 = m + (int)(i + 1) * slot - slot / 6;
    int top = height - m - (int)std::lround(rate * (height - 2 * m));
    if (top < height - m) fill(img, top, c0, height - m - 1, c1, kBar);
  }
  return img;
}

}  // namespace sst::cli
