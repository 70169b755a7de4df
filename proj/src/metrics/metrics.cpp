#include <cmath>
#include <limits>
#include <stdexcept>

#include "dacount/metrics.hpp"

namespace dacount {

namespace {

void check_counts(const std::vector<double>& gt, const std::vector<double>& pred,
                  const char* what) {
  if (gt.empty()) throw std::invalid_argument(std::string(what) + ": empty count lists");
  if (gt.size() != pred.size())
    throw std::invalid_argument(std::string(what) + ": length mismatch " +
                                std::to_string(gt.size()) + " vs " + std::to_string(pred.size()));
}

void check_maps(const Tensor& pred, const Tensor& gt, const char* what) {
  if (!pred.same_shape(gt))
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + pred.shape_str() +
                                " vs " + gt.shape_str());
  if (pred.numel() == 0) throw std::invalid_argument(std::string(what) + ": empty maps");
}

double default_range(const Tensor& gt) { return std::max(gt.max(), 1e-6); }

constexpr int kWin = 11;
constexpr double kWinSigma = 1.5;

}  // namespace

double mae(const std::vector<double>& gt_counts, const std::vector<double>& pred_counts) {
  check_counts(gt_counts, pred_counts, "mae");
  double s = 0.0;
  for (size_t i = 0; i < gt_counts.size(); ++i) s += std::abs(gt_counts[i] - pred_counts[i]);
  return s / static_cast<double>(gt_counts.size());
}

double mse(const std::vector<double>& gt_counts, const std::vector<double>& pred_counts) {
  check_counts(gt_counts, pred_counts, "mse");
  double s = 0.0;
  for (size_t i = 0; i < gt_counts.size(); ++i) {
    const double d = gt_counts[i] - pred_counts[i];
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(gt_counts.size()));
}

double psnr(const Tensor& pred, const Tensor& gt, double data_range) {
  check_maps(pred, gt, "psnr");
  if (!(data_range > 0.0)) throw std::invalid_argument("psnr: data_range must be positive");
  double s = 0.0;
  for (int64_t i = 0; i < pred.numel(); ++i) {
    const double d = pred[i] - gt[i];
    s += d * d;
  }
  const double m = s / static_cast<double>(pred.numel());
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(data_range * data_range / m);
}

double psnr(const Tensor& pred, const Tensor& gt) { return psnr(pred, gt, default_range(gt)); }

double ssim(const Tensor& a, const Tensor& b, double data_range) {
  check_maps(a, b, "ssim");
  if (!(data_range > 0.0)) throw std::invalid_argument("ssim: data_range must be positive");
  int h = 0, w = 0;
  if (a.rank() == 2) {
    h = a.dim(0);
    w = a.dim(1);
  } else if (a.rank() == 3 && a.dim(0) == 1) {
    h = a.dim(1);
    w = a.dim(2);
  } else {
    throw std::invalid_argument("ssim: expects (H,W) or (1,H,W), got " + a.shape_str());
  }
  if (h < kWin || w < kWin)
    throw std::invalid_argument("ssim: maps must be at least " + std::to_string(kWin) + "x" +
                                std::to_string(kWin) + ", got " + std::to_string(h) + "x" +
                                std::to_string(w));

  // Normalized Gaussian window.
  double win[kWin];
  double wsum = 0.0;
  for (int i = 0; i < kWin; ++i) {
    const double d = i - (kWin - 1) / 2.0;
    win[i] = std::exp(-d * d / (2.0 * kWinSigma * kWinSigma));
    wsum += win[i];
  }
  for (double& v : win) v /= wsum;

  const double c1 = (0.01 * data_range) * (0.01 * data_range);
  const double c2 = (0.03 * data_range) * (0.03 * data_range);
  const double* pa = a.data();
  const double* pb = b.data();
  const int half = kWin / 2;

  double total = 0.0;
  int64_t count = 0;
  for (int y = half; y < h - half; ++y)
    for (int x = half; x < w - half; ++x) {
      double ma = 0, mb = 0, maa = 0, mbb = 0, mab = 0;
      for (int dy = -half; dy <= half; ++dy) {
        const double wy = win[dy + half];
        const double* ra = pa + int64_t(y + dy) * w + x;
        const double* rb = pb + int64_t(y + dy) * w + x;
        for (int dx = -half; dx <= half; ++dx) {
          const double wgt = wy * win[dx + half];
          const double va = ra[dx], vb = rb[dx];
          ma += wgt * va;
          mb += wgt * vb;
          maa += wgt * va * va;
          mbb += wgt * vb * vb;
          mab += wgt * va * vb;
        }
      }
      const double va = maa - ma * ma;
      const double vb = mbb - mb * mb;
      const double cov = mab - ma * mb;
      total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
               ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  return total / static_cast<double>(count);
}

double ssim(const Tensor& pred, const Tensor& gt) { return ssim(pred, gt, default_range(gt)); }

}  // namespace dacount
