#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

#include "dacount/counter.hpp"
#include "dacount/data.hpp"
#include "dacount/refiner.hpp"
#include "dacount/tensor.hpp"

namespace dacount {

// Counting errors over per-image counts.
double mae(const std::vector<double>& gt_counts, const std::vector<double>& pred_counts);
// Root of the mean squared count error (the counting literature's "MSE").
double mse(const std::vector<double>& gt_counts, const std::vector<double>& pred_counts);

// Map-quality metrics over equal-shape 2-D grids. `data_range` is the
// dynamic range MAX in PSNR = 10*log10(MAX^2/mse) and in the SSIM
// stabilizers C1=(0.01*MAX)^2, C2=(0.03*MAX)^2. The two-argument
// overloads use MAX = max(max(gt), 1e-6). psnr returns +infinity for
// identical maps. ssim uses the standard 11x11 Gaussian window (sigma
// 1.5) evaluated where the window fits entirely inside the map.
double psnr(const Tensor& pred, const Tensor& gt, double data_range);
double psnr(const Tensor& pred, const Tensor& gt);
double ssim(const Tensor& pred, const Tensor& gt, double data_range);
double ssim(const Tensor& pred, const Tensor& gt);

struct SampleEval {
  std::string name;
  double gt_count = 0.0;
  double pred_count = 0.0;
  double psnr_db = 0.0;
  double ssim = 0.0;
};

struct EvalReport {
  double mae = 0.0;
  double mse = 0.0;
  double psnr_db = 0.0;  // mean over samples
  double ssim = 0.0;     // mean over samples
  int n_samples = 0;
  std::vector<SampleEval> samples;

  nlohmann::json to_json() const;
  void write_csv(std::ostream& os) const;  // per-sample dump
};

struct EvalConfig {
  double sigma = 4.0;  // ground-truth kernel width for the full-resolution reference maps
};

// Runs the counter (optionally followed by the refiner) over a labeled
// dataset. Predicted maps are mass-conservingly upsampled to image
// resolution, clamped at 0, and compared against full-resolution
// ground-truth maps; counts are clamped map sums.
EvalReport evaluate(CounterNet& counter, const Dataset& ds, MapRefiner* refiner = nullptr,
                    const EvalConfig& cfg = {});

}  // namespace dacount
