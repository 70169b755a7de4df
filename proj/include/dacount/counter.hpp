#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dacount/module.hpp"

namespace dacount {

// Fully-convolutional density regressor. A VGG-style backbone (stacked
// conv blocks with 2x pooling) feeds a dilated-convolution module and a
// large-kernel directional ("spatial") module; a 1x1 head regresses the
// density map at the backbone's output stride. The outputs of the
// dilation and spatial modules are exposed as feature taps for the
// domain discriminators.
struct CounterConfig {
  struct Block {
    int channels = 0;
    int convs = 2;
    bool pool = true;
  };
  int in_channels = 1;
  std::vector<Block> blocks = {{32, 2, true}, {64, 2, true}, {128, 2, true}};
  int dilation_channels = 0;  // 0 -> last backbone width
  int spatial_channels = 0;   // 0 -> dilation width
  int spatial_kernel = 9;
  bool pad_inputs = false;  // pad non-divisible inputs instead of rejecting

  int pools() const {
    int n = 0;
    for (const auto& b : blocks) n += b.pool ? 1 : 0;
    return n;
  }
  int stride() const { return 1 << pools(); }          // input pixels per output cell
  double out_scale() const { return 1.0 / stride(); }  // density grid / image resolution

  static CounterConfig preset(const std::string& name);  // "default", "toy", "vgg16"
};

struct TapBundle {
  Var f1;       // dilation-module output features
  Var f2;       // spatial-module output features
  Var density;  // (N,1,H/stride,W/stride); may contain negatives pre-refinement
  int pad_h = 0, pad_w = 0;  // right/bottom padding applied to the input, if any
};

class CounterNet : public Module {
 public:
  CounterNet(CounterConfig cfg, RngStream rng);

  // image: (N,C,H,W) with values in [0,1]; H and W must be divisible by
  // the stride unless cfg.pad_inputs is set.
  TapBundle forward(Tape& t, Var image, bool frozen = false);
  TapBundle forward(Tape& t, const Tensor& image, bool frozen = false) {
    return forward(t, t.constant(image), frozen);
  }

  const CounterConfig& config() const { return cfg_; }
  int f1_channels() const { return dil_ch_; }
  int f2_channels() const { return spa_ch_; }

 private:
  CounterConfig cfg_;
  int dil_ch_ = 0, spa_ch_ = 0;
  std::vector<Conv2dLayer> backbone_;
  std::vector<bool> pool_after_;  // parallel to backbone_
  Conv2dLayer dil1_, dil2_;
  Conv2dLayer spa_row_, spa_col_;
  Conv2dLayer head_;
};

}  // namespace dacount
