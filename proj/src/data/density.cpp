#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "dacount/data.hpp"

namespace dacount {

namespace {

int grid_dim(int image_dim, double out_scale, const char* axis) {
  const double f = image_dim * out_scale;
  const int d = static_cast<int>(std::llround(f));
  if (d < 1 || std::abs(f - d) > 1e-9)
    throw std::invalid_argument(std::string("density_from_points: image ") + axis + " " +
                                std::to_string(image_dim) + " is not divisible by 1/" +
                                std::to_string(out_scale));
  return d;
}

}  // namespace

DensityMap density_from_points(const PointAnnotation& ann, int image_h, int image_w, double sigma,
                               double out_scale) {
  if (!(sigma > 0.0) || !std::isfinite(sigma))
    throw std::invalid_argument("density_from_points: sigma must be positive");
  if (out_scale != 1.0 && out_scale != 0.5 && out_scale != 0.25 && out_scale != 0.125)
    throw std::invalid_argument("density_from_points: out_scale must be 1, 1/2, 1/4 or 1/8, got " +
                                std::to_string(out_scale));
  const int hd = grid_dim(image_h, out_scale, "height");
  const int wd = grid_dim(image_w, out_scale, "width");

  Tensor grid({hd, wd});
  const double s = out_scale;
  const double inv_s = 1.0 / s;
  const double r = 4.0 * sigma;  // truncation radius, image pixels
  const double inv_two_sig2 = 1.0 / (2.0 * sigma * sigma);

  for (size_t pi = 0; pi < ann.points.size(); ++pi) {
    const double x = ann.points[pi][0], y = ann.points[pi][1];
    if (!std::isfinite(x) || !std::isfinite(y) || x < 0.0 || x >= image_w || y < 0.0 ||
        y >= image_h)
      throw std::invalid_argument("density_from_points: point " + std::to_string(pi) + " at (" +
                                  std::to_string(x) + ", " + std::to_string(y) + ") outside " +
                                  std::to_string(image_w) + "x" + std::to_string(image_h) +
                                  " image bounds");
    const int j0 = std::max(0, static_cast<int>(std::floor((x - r) * s)));
    const int j1 = std::min(wd - 1, static_cast<int>(std::ceil((x + r) * s)));
    const int i0 = std::max(0, static_cast<int>(std::floor((y - r) * s)));
    const int i1 = std::min(hd - 1, static_cast<int>(std::ceil((y + r) * s)));

    std::vector<double> w(static_cast<size_t>(i1 - i0 + 1) * (j1 - j0 + 1), 0.0);
    double z = 0.0;
    for (int i = i0; i <= i1; ++i)
      for (int j = j0; j <= j1; ++j) {
        const double cx = (j + 0.5) * inv_s, cy = (i + 0.5) * inv_s;
        const double d2 = (cx - x) * (cx - x) + (cy - y) * (cy - y);
        if (d2 > r * r) continue;
        const double v = std::exp(-d2 * inv_two_sig2);
        w[static_cast<size_t>(i - i0) * (j1 - j0 + 1) + (j - j0)] = v;
        z += v;
      }
    if (z <= 0.0) {
      // Kernel narrower than a cell: deposit the whole unit on the nearest cell.
      const int j = std::min(wd - 1, std::max(0, static_cast<int>(std::floor(x * s))));
      const int i = std::min(hd - 1, std::max(0, static_cast<int>(std::floor(y * s))));
      grid.at(i, j) += 1.0;
      continue;
    }
    const double inv_z = 1.0 / z;
    for (int i = i0; i <= i1; ++i)
      for (int j = j0; j <= j1; ++j)
        grid.at(i, j) += w[static_cast<size_t>(i - i0) * (j1 - j0 + 1) + (j - j0)] * inv_z;
  }
  return DensityMap{std::move(grid), out_scale};
}

void densify(Dataset& ds, double sigma, double out_scale) {
  for (auto& s : ds.samples) {
    if (s.image.rank() != 3)
      throw std::invalid_argument("densify: sample '" + s.name + "' image must be (C,H,W)");
    s.gt = density_from_points(s.ann, s.image.dim(1), s.image.dim(2), sigma, out_scale);
  }
}

}  // namespace dacount
