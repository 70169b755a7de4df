#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "dacount/data.hpp"

namespace dacount {

namespace {

// Source-domain appearance; the target shifts away from these per GapConfig.
constexpr double kBackground = 0.25;
constexpr double kBlobAmp = 0.5;
constexpr double kSourceTexture = 0.04;
constexpr double kSourceNoise = 0.01;
constexpr double kMargin = 3.0;       // blob centers stay this far from borders
constexpr int kMinCount = 4, kMaxCount = 20;
constexpr double kBlobSigmaLo = 1.5, kBlobSigmaHi = 2.5;
constexpr int kTextureWaves = 3;

Sample render_sample(RngStream& rng, const std::string& name, int h, int w, double brightness,
                     bool invert_blobs, double texture_amp, double noise_sigma) {
  Sample s;
  s.name = name;

  // Layout first (shared statistics across domains), then appearance.
  const int count = rng.uniform_int(kMinCount, kMaxCount);
  std::vector<double> sigmas(static_cast<size_t>(count));
  s.ann.points.resize(static_cast<size_t>(count));
  for (int k = 0; k < count; ++k) {
    s.ann.points[static_cast<size_t>(k)] = {rng.uniform(kMargin, w - kMargin),
                                            rng.uniform(kMargin, h - kMargin)};
    sigmas[static_cast<size_t>(k)] = rng.uniform(kBlobSigmaLo, kBlobSigmaHi);
  }

  struct Wave {
    double amp, fx, fy, phase;
  };
  Wave waves[kTextureWaves];
  for (auto& wv : waves)
    wv = {texture_amp * rng.uniform(0.5, 1.0), rng.uniform(0.02, 0.12), rng.uniform(0.02, 0.12),
          rng.uniform(0.0, 2.0 * M_PI)};

  s.image = Tensor({1, h, w});
  const double base = kBackground + brightness;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double v = base;
      for (const auto& wv : waves)
        v += wv.amp * std::sin(2.0 * M_PI * (wv.fx * x + wv.fy * y) + wv.phase);
      s.image[int64_t(y) * w + x] = v;
    }

  const double blob_amp = invert_blobs ? -kBlobAmp : kBlobAmp;
  for (int k = 0; k < count; ++k) {
    const double px = s.ann.points[static_cast<size_t>(k)][0];
    const double py = s.ann.points[static_cast<size_t>(k)][1];
    const double sig = sigmas[static_cast<size_t>(k)];
    const double r = 4.0 * sig;
    const int x0 = std::max(0, static_cast<int>(std::floor(px - r)));
    const int x1 = std::min(w - 1, static_cast<int>(std::ceil(px + r)));
    const int y0 = std::max(0, static_cast<int>(std::floor(py - r)));
    const int y1 = std::min(h - 1, static_cast<int>(std::ceil(py + r)));
    const double inv_two_sig2 = 1.0 / (2.0 * sig * sig);
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const double d2 = (x - px) * (x - px) + (y - py) * (y - py);
        if (d2 <= r * r)
          s.image[int64_t(y) * w + x] += blob_amp * std::exp(-d2 * inv_two_sig2);
      }
  }

  for (int64_t i = 0; i < s.image.numel(); ++i) {
    double v = s.image[i] + noise_sigma * rng.normal();
    v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    // Pre-quantize to the 8-bit grid so a PNG round trip is the identity.
    s.image[i] = std::lround(v * 255.0) / 255.0;
  }
  return s;
}

}  // namespace

GapConfig GapConfig::zero_shift() {
  return GapConfig{0.0, false, kSourceTexture, kSourceNoise};
}

GapConfig GapConfig::standard() {
  return GapConfig{};
}

std::pair<Dataset, Dataset> gen_toy_domains(uint64_t seed, int n_images, int h, int w,
                                            const GapConfig& gap) {
  if (n_images < 1) throw std::invalid_argument("gen_toy_domains: n_images must be >= 1");
  if (h < 32 || w < 32)
    throw std::invalid_argument("gen_toy_domains: size must be at least 32x32, got " +
                                std::to_string(h) + "x" + std::to_string(w));

  Dataset src, tgt;
  src.samples.reserve(static_cast<size_t>(n_images));
  tgt.samples.reserve(static_cast<size_t>(n_images));
  char name[16];
  for (int i = 0; i < n_images; ++i) {
    std::snprintf(name, sizeof(name), "img%04d", i);
    RngStream rs(seed, std::string("toy.src.") + name);
    src.samples.push_back(
        render_sample(rs, name, h, w, 0.0, false, kSourceTexture, kSourceNoise));
    RngStream rt(seed, std::string("toy.tgt.") + name);
    tgt.samples.push_back(render_sample(rt, name, h, w, gap.brightness, gap.invert_blobs,
                                        gap.texture_amp, gap.noise_sigma));
  }
  return {std::move(src), std::move(tgt)};
}

}  // namespace dacount
