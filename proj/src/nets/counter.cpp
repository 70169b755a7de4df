#include "dacount/counter.hpp"

#include <stdexcept>

namespace dacount {

CounterConfig CounterConfig::preset(const std::string& name) {
  CounterConfig c;
  if (name == "default" || name.empty()) return c;
  if (name == "toy") {
    c.blocks = {{8, 1, true}, {16, 1, true}, {24, 1, true}};
    return c;
  }
  if (name == "vgg16") {
    c.in_channels = 3;
    c.blocks = {{64, 2, true}, {128, 2, true}, {256, 3, true}, {512, 3, false}};
    c.dilation_channels = 512;
    c.spatial_channels = 512;
    return c;
  }
  throw std::invalid_argument("unknown counter preset: " + name);
}

CounterNet::CounterNet(CounterConfig cfg, RngStream rng) : cfg_(std::move(cfg)) {
  if (cfg_.blocks.empty()) throw std::invalid_argument("counter: needs at least one block");
  int cin = cfg_.in_channels;
  int bi = 0;
  for (const auto& blk : cfg_.blocks) {
    for (int ci = 0; ci < blk.convs; ++ci) {
      std::string nm = "backbone.b" + std::to_string(bi) + ".c" + std::to_string(ci);
      Conv2dLayer l;
      l.w = &add_param(nm + ".w", weight_init({blk.channels, cin, 3, 3}, rng));
      l.b = &add_param(nm + ".b", Tensor({blk.channels}));
      l.pad_h = l.pad_w = 1;
      backbone_.push_back(l);
      pool_after_.push_back(blk.pool && ci == blk.convs - 1);
      cin = blk.channels;
    }
    ++bi;
  }

  dil_ch_ = cfg_.dilation_channels > 0 ? cfg_.dilation_channels : cin;
  spa_ch_ = cfg_.spatial_channels > 0 ? cfg_.spatial_channels : dil_ch_;

  auto dil = [&](const std::string& nm, int ic, int oc) {
    Conv2dLayer l;
    l.w = &add_param(nm + ".w", weight_init({oc, ic, 3, 3}, rng));
    l.b = &add_param(nm + ".b", Tensor({oc}));
    l.pad_h = l.pad_w = 2;
    l.dil_h = l.dil_w = 2;
    return l;
  };
  dil1_ = dil("dilation.c0", cin, dil_ch_);
  dil2_ = dil("dilation.c1", dil_ch_, dil_ch_);

  int k = cfg_.spatial_kernel;
  spa_row_.w = &add_param("spatial.row.w", weight_init({spa_ch_, dil_ch_, 1, k}, rng));
  spa_row_.b = &add_param("spatial.row.b", Tensor({spa_ch_}));
  spa_row_.pad_w = (k - 1) / 2;
  spa_col_.w = &add_param("spatial.col.w", weight_init({spa_ch_, spa_ch_, k, 1}, rng));
  spa_col_.b = &add_param("spatial.col.b", Tensor({spa_ch_}));
  spa_col_.pad_h = (k - 1) / 2;

  head_.w = &add_param("head.w", weight_init({1, spa_ch_, 1, 1}, rng, 1.0));
  head_.b = &add_param("head.b", Tensor({1}));
}

TapBundle CounterNet::forward(Tape& t, Var image, bool frozen) {
  const Tensor& img = t.val(image);
  if (img.rank() != 4) throw std::invalid_argument("counter: expects (N,C,H,W) input");
  if (img.dim(1) != cfg_.in_channels)
    throw std::invalid_argument("counter: configured for " + std::to_string(cfg_.in_channels) +
                                " input channels, got " + std::to_string(img.dim(1)));
  int s = cfg_.stride();
  int H = img.dim(2), W = img.dim(3);
  int ph = (s - H % s) % s, pw = (s - W % s) % s;
  if ((ph || pw) && !cfg_.pad_inputs)
    throw std::invalid_argument("counter: input " + std::to_string(H) + "x" + std::to_string(W) +
                                " not divisible by stride " + std::to_string(s) +
                                " (set pad_inputs to pad instead)");
  Var x = image;
  if (ph || pw) {
    // zero-pad right/bottom by resampling into a larger constant canvas
    int N = img.dim(0), C = img.dim(1);
    Tensor padded({N, C, H + ph, W + pw});
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c)
        for (int y = 0; y < H; ++y)
          for (int xx = 0; xx < W; ++xx) padded.at(n, c, y, xx) = img.at(n, c, y, xx);
    x = t.constant(std::move(padded));
  }

  for (size_t i = 0; i < backbone_.size(); ++i) {
    x = t.relu(backbone_[i].apply(t, x, frozen));
    if (pool_after_[i]) x = t.maxpool2(x);
  }
  Var f1 = t.relu(dil2_.apply(t, t.relu(dil1_.apply(t, x, frozen)), frozen));
  Var f2 = t.relu(spa_col_.apply(t, t.relu(spa_row_.apply(t, f1, frozen)), frozen));
  Var density = head_.apply(t, f2, frozen);
  return TapBundle{f1, f2, density, ph, pw};
}

}  // namespace dacount
