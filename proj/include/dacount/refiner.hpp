#pragma once

#include <vector>

#include "dacount/module.hpp"

namespace dacount {

// Residual map refiner: three convolutions (the third at stride 2), a
// transposed convolution restoring resolution, and a final regression
// convolution; PReLU after every layer except the regression one. The
// output is input + regressed residual, so zeroing the regression layer
// makes the refiner an exact identity.
struct RefinerConfig {
  std::vector<int> widths = {16, 32, 32};
  std::vector<int> kernels = {13, 9, 5, 9, 13};  // conv, conv, strided conv, deconv, regression
  static constexpr int kMinInput = 16;
};

class MapRefiner : public Module {
 public:
  MapRefiner(RefinerConfig cfg, RngStream rng);
  Var forward(Tape& t, Var coarse, bool frozen = false);  // (N,1,H,W) -> same shape
  const RefinerConfig& config() const { return cfg_; }
  Parameter& regression_weight() { return *reg_.w; }
  Parameter& regression_bias() { return *reg_.b; }

 private:
  RefinerConfig cfg_;
  Conv2dLayer c1_, c2_, c3_, reg_;
  Parameter* deconv_w_ = nullptr;
  Parameter* deconv_b_ = nullptr;
  int deconv_pad_ = 0;
  Parameter* a1_ = nullptr;
  Parameter* a2_ = nullptr;
  Parameter* a3_ = nullptr;
  Parameter* a4_ = nullptr;
};

}  // namespace dacount
