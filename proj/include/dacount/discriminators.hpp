#pragma once

#include <vector>

#include "dacount/module.hpp"

namespace dacount {

// Pixel-wise domain classifier over a feature map: four stride-1 padded
// convolutions with leaky-ReLU between them, final layer linear. Emits a
// 2-channel score map at exactly the input's spatial size (channel 0 =
// source, channel 1 = target).
struct FeatureDiscConfig {
  int in_channels = 0;  // must match the tap it scores
  std::vector<int> widths = {64, 64, 64};
  int kernel = 3;
  double leaky_slope = 0.2;
};

class FeatureDiscriminator : public Module {
 public:
  FeatureDiscriminator(FeatureDiscConfig cfg, RngStream rng);
  Var forward(Tape& t, Var features, bool frozen = false);
  const FeatureDiscConfig& config() const { return cfg_; }

 private:
  FeatureDiscConfig cfg_;
  std::vector<Conv2dLayer> convs_;
};

// Whole-map domain classifier over a 1-channel density map: three strided
// convolutions with leaky-ReLU, global average pooling, then a
// fully-connected layer to 2 logits. The pooling makes it input-size
// agnostic.
struct MapDiscConfig {
  std::vector<int> widths = {32, 64, 64};
  int kernel = 4;
  int stride = 2;
  double leaky_slope = 0.2;
};

class MapDiscriminator : public Module {
 public:
  MapDiscriminator(MapDiscConfig cfg, RngStream rng);
  Var forward(Tape& t, Var density, bool frozen = false);  // -> (N,2)
  const MapDiscConfig& config() const { return cfg_; }

 private:
  MapDiscConfig cfg_;
  std::vector<Conv2dLayer> convs_;
  Parameter* fc_w_ = nullptr;
  Parameter* fc_b_ = nullptr;
};

}  // namespace dacount
