#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dacount/image_io.hpp"
#include "dacount/plots.hpp"

namespace dacount {

namespace {

struct Rgb {
  double r, g, b;
};

void put_pixel(Tensor& img, int x, int y, Rgb c) {
  const int h = img.dim(1), w = img.dim(2);
  if (x < 0 || x >= w || y < 0 || y >= h) return;
  img[int64_t(0) * h * w + int64_t(y) * w + x] = c.r;
  img[int64_t(1) * h * w + int64_t(y) * w + x] = c.g;
  img[int64_t(2) * h * w + int64_t(y) * w + x] = c.b;
}

void draw_line(Tensor& img, double x0, double y0, double x1, double y1, Rgb c) {
  const double dx = x1 - x0, dy = y1 - y0;
  const int steps = std::max(1, static_cast<int>(std::ceil(std::max(std::abs(dx), std::abs(dy)))));
  for (int i = 0; i <= steps; ++i) {
    const double t = static_cast<double>(i) / steps;
    put_pixel(img, static_cast<int>(std::lround(x0 + t * dx)),
              static_cast<int>(std::lround(y0 + t * dy)), c);
  }
}

Rgb heat(double v) {
  v = std::clamp(v, 0.0, 1.0);
  const auto seg = [&](double center) { return std::clamp(1.5 - std::abs(4.0 * v - center), 0.0, 1.0); };
  return {seg(3.0), seg(2.0), seg(1.0)};
}

}  // namespace

void plot_loss_curves(const std::vector<StepLog>& log, const std::string& path) {
  if (log.empty()) throw std::invalid_argument("plot_loss_curves: empty log");
  const int w = 720, h = 420, ml = 50, mr = 15, mt = 15, mb = 35;
  Tensor img = Tensor::full({3, h, w}, 1.0);

  struct Series {
    Rgb color;
    std::vector<double> values;
  };
  std::vector<Series> series(5, Series{});
  series[0].color = {0.1, 0.3, 0.9};  // counting
  series[1].color = {0.0, 0.0, 0.0};  // total
  series[2].color = {0.85, 0.1, 0.1};  // discriminators
  series[3].color = {0.95, 0.6, 0.05};  // adversarial
  series[4].color = {0.1, 0.6, 0.2};  // pyramid
  double vmax = 0.0;
  for (const auto& l : log) {
    series[0].values.push_back(l.l_cnt);
    series[1].values.push_back(l.l_total);
    series[2].values.push_back(l.l_d_feat1 + l.l_d_feat2 + l.l_d_map);
    series[3].values.push_back(l.l_adv_feat + l.l_adv_map);
    series[4].values.push_back(l.l_spr);
  }
  for (const auto& s : series)
    for (double v : s.values)
      if (std::isfinite(v)) vmax = std::max(vmax, v);
  if (vmax <= 0.0) vmax = 1.0;

  const Rgb axis{0.2, 0.2, 0.2};
  draw_line(img, ml, h - mb, w - mr, h - mb, axis);
  draw_line(img, ml, mt, ml, h - mb, axis);
  const auto px = [&](size_t i) {
    return ml + (w - ml - mr - 1) * (log.size() == 1 ? 0.0
                                                     : static_cast<double>(i) / (log.size() - 1));
  };
  const auto py = [&](double v) {
    return (h - mb) - (h - mt - mb - 1) * std::clamp(v / vmax, 0.0, 1.0);
  };
  for (const auto& s : series)
    for (size_t i = 1; i < s.values.size(); ++i)
      if (std::isfinite(s.values[i - 1]) && std::isfinite(s.values[i]))
        draw_line(img, px(i - 1), py(s.values[i - 1]), px(i), py(s.values[i]), s.color);

  // Legend swatches, in series order, top-left.
  for (size_t s = 0; s < series.size(); ++s)
    for (int y = 0; y < 6; ++y)
      for (int x = 0; x < 18; ++x)
        put_pixel(img, ml + 8 + x, mt + 4 + static_cast<int>(s) * 10 + y, series[s].color);

  write_png_rgb(path, img);
}

void plot_map_grid(const std::vector<std::vector<Tensor>>& rows, const std::string& path,
                   int zoom) {
  if (rows.empty() || rows[0].empty()) throw std::invalid_argument("plot_map_grid: empty grid");
  if (zoom < 1) throw std::invalid_argument("plot_map_grid: zoom must be >= 1");
  int mh = 0, mw = 0;
  size_t cols = 0;
  for (const auto& row : rows) {
    cols = std::max(cols, row.size());
    for (const auto& m : row) {
      if (m.rank() != 2) throw std::invalid_argument("plot_map_grid: maps must be (H,W)");
      mh = std::max(mh, m.dim(0));
      mw = std::max(mw, m.dim(1));
    }
  }
  const int sep = 2;
  const int ch = mh * zoom, cw = mw * zoom;
  const int H = static_cast<int>(rows.size()) * (ch + sep) + sep;
  const int W = static_cast<int>(cols) * (cw + sep) + sep;
  Tensor img = Tensor::full({3, H, W}, 1.0);

  for (size_t r = 0; r < rows.size(); ++r) {
    double rmax = 0.0;
    for (const auto& m : rows[r]) rmax = std::max(rmax, m.max());
    if (rmax <= 0.0) rmax = 1.0;
    for (size_t c = 0; c < rows[r].size(); ++c) {
      const Tensor& m = rows[r][c];
      const int oy = sep + static_cast<int>(r) * (ch + sep);
      const int ox = sep + static_cast<int>(c) * (cw + sep);
      for (int y = 0; y < m.dim(0) * zoom; ++y)
        for (int x = 0; x < m.dim(1) * zoom; ++x) {
          const double v = std::max(0.0, m.at(y / zoom, x / zoom)) / rmax;
          put_pixel(img, ox + x, oy + y, heat(v));
        }
    }
  }
  write_png_rgb(path, img);
}

}  // namespace dacount
