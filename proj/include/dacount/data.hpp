#pragma once

#include <array>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "dacount/rng.hpp"
#include "dacount/tensor.hpp"

namespace dacount {

struct PointAnnotation {
  std::vector<std::array<double, 2>> points;  // (x, y) in image pixels
  int count() const { return static_cast<int>(points.size()); }
};

// Per-person density on a (possibly sub-resolution) grid. `scale` is grid
// resolution divided by image resolution, e.g. 0.125 for a 1/8 grid.
struct DensityMap {
  Tensor grid;  // (H_d, W_d), cells >= 0 for ground truth
  double scale = 1.0;
  double sum() const { return grid.sum(); }
};

struct SceneMeta {
  int level = 0;    // category 0..8
  int time = 0;     // minutes since midnight
  int weather = 0;  // 0 clear, 1 clouds, 2 rain, 3 foggy, 4 thunder, 5 overcast, 6 extra sunny
  int count = 0;
  double ratio = 0.0;  // congestion ratio in [0,1]
  void validate() const;
};

// Scene-regularization filter; all bounds inclusive.
struct FilterRule {
  std::set<int> levels;
  int time_start = 0, time_end = 1439;  // minutes since midnight
  std::set<int> weathers;
  int count_lo = 0, count_hi = 1 << 30;
  double ratio_lo = 0.0, ratio_hi = 1.0;
  void validate() const;
  // Presets for the supported surveillance targets: "shtb", "worldexpo",
  // "mall", "ucsd".
  static FilterRule preset(const std::string& name);
};

bool scene_filter(const SceneMeta& meta, const FilterRule& rule);
int parse_time_hhmm(const std::string& s);  // "HH:MM" -> minutes since midnight
std::string format_time_hhmm(int minutes);

struct Sample {
  std::string name;  // file stem, e.g. "img0003"
  Tensor image;      // (1,H,W) in [0,1]
  PointAnnotation ann;
  std::optional<SceneMeta> meta;
  DensityMap gt;  // empty until densify()
};

struct Dataset {
  std::vector<Sample> samples;
  int size() const { return static_cast<int>(samples.size()); }
  bool empty() const { return samples.empty(); }
};

// One training batch: labeled source images plus unlabeled target images.
struct SamplePair {
  Tensor source_images;  // (N,1,H,W)
  Tensor source_gts;     // (N,1,Hd,Wd)
  Tensor target_images;  // (M,1,H,W)
};

// Renders point annotations as a density map at out_scale (one of 1, 1/2,
// 1/4, 1/8): each point contributes a truncated (4*sigma), renormalized
// Gaussian of unit mass, so the map sums to the point count.
DensityMap density_from_points(const PointAnnotation& points, int image_h, int image_w,
                               double sigma, double out_scale);

// Fills sample.gt for every sample.
void densify(Dataset& ds, double sigma, double out_scale);

// Appearance shift applied to the target domain of the toy generator.
struct GapConfig {
  double brightness = 0.25;   // background offset
  bool invert_blobs = true;   // people darker instead of brighter than background
  double texture_amp = 0.12;  // background texture amplitude (source uses 0.04)
  double noise_sigma = 0.08;  // additive pixel noise (source uses 0.01)
  static GapConfig zero_shift();
  static GapConfig standard();
};

// Procedural two-domain toy data: Gaussian-blob "people" on a textured
// background, same layout statistics in both domains, appearance shifted
// in the target per `gap`. Deterministic in (seed, n_images, size, gap);
// images are pre-quantized to the 8-bit grid so PNG round trips are exact.
std::pair<Dataset, Dataset> gen_toy_domains(uint64_t seed, int n_images, int h, int w,
                                            const GapConfig& gap);

// Reads `<root>/images/*.png` + `<root>/ann/*.json` in lexicographic
// order. Annotation JSON: {"points": [[x,y],...], "meta": {...}} with meta
// optional.
Dataset load_dataset(const std::string& root);
void save_dataset(const std::string& root, const Dataset& ds);

// Batching helpers: stack the selected samples' images / ground-truth
// grids into (N,1,H,W) tensors.
Tensor stack_images(const Dataset& ds, const std::vector<int>& idx);
Tensor stack_gts(const Dataset& ds, const std::vector<int>& idx);

}  // namespace dacount
