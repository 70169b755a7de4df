#include "dacount/refiner.hpp"

#include <stdexcept>

namespace dacount {

MapRefiner::MapRefiner(RefinerConfig cfg, RngStream rng) : cfg_(std::move(cfg)) {
  if (cfg_.widths.size() != 3 || cfg_.kernels.size() != 5)
    throw std::invalid_argument("refiner: expects 3 widths and 5 kernels");
  for (int k : cfg_.kernels)
    if (k % 2 == 0) throw std::invalid_argument("refiner: kernels must be odd");

  auto conv = [&](const std::string& nm, int ic, int oc, int k, int stride, double gain) {
    Conv2dLayer l;
    l.w = &add_param(nm + ".w", weight_init({oc, ic, k, k}, rng, gain));
    l.b = &add_param(nm + ".b", Tensor({oc}));
    l.stride_h = l.stride_w = stride;
    l.pad_h = l.pad_w = (k - 1) / 2;
    return l;
  };
  int w0 = cfg_.widths[0], w1 = cfg_.widths[1], w2 = cfg_.widths[2];
  c1_ = conv("c1", 1, w0, cfg_.kernels[0], 1, 2.0);
  c2_ = conv("c2", w0, w1, cfg_.kernels[1], 1, 2.0);
  c3_ = conv("c3", w1, w2, cfg_.kernels[2], 2, 2.0);  // downsample to 0.5x

  int kd = cfg_.kernels[3];
  deconv_w_ = &add_param("deconv.w", weight_init({w2, w2, kd, kd}, rng));
  deconv_b_ = &add_param("deconv.b", Tensor({w2}));
  deconv_pad_ = (kd - 1) / 2;

  reg_ = conv("reg", w2, 1, cfg_.kernels[4], 1, 1.0);

  auto prelu_param = [&](const std::string& nm, int c) {
    return &add_param(nm, Tensor::full({c}, 0.25));
  };
  a1_ = prelu_param("prelu1", w0);
  a2_ = prelu_param("prelu2", w1);
  a3_ = prelu_param("prelu3", w2);
  a4_ = prelu_param("prelu4", w2);
}

Var MapRefiner::forward(Tape& t, Var coarse, bool frozen) {
  const Tensor& c = t.val(coarse);
  if (c.rank() != 4 || c.dim(1) != 1)
    throw std::invalid_argument("refiner: expects (N,1,H,W) density maps");
  int H = c.dim(2), W = c.dim(3);
  if (H < RefinerConfig::kMinInput || W < RefinerConfig::kMinInput || H % 2 || W % 2)
    throw std::invalid_argument("refiner: input must be even and at least " +
                                std::to_string(RefinerConfig::kMinInput) + "x" +
                                std::to_string(RefinerConfig::kMinInput) + ", got " +
                                std::to_string(H) + "x" + std::to_string(W));

  Var x = t.prelu(c1_.apply(t, coarse, frozen), t.param(*a1_, frozen));
  x = t.prelu(c2_.apply(t, x, frozen), t.param(*a2_, frozen));
  x = t.prelu(c3_.apply(t, x, frozen), t.param(*a3_, frozen));
  x = t.conv_transpose2d(x, t.param(*deconv_w_, frozen), t.param(*deconv_b_, frozen), 2,
                         deconv_pad_, 1);
  x = t.prelu(x, t.param(*a4_, frozen));
  Var residual = reg_.apply(t, x, frozen);
  return t.add(coarse, residual);
}

}  // namespace dacount
