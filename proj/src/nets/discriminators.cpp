#include "dacount/discriminators.hpp"

#include <stdexcept>

namespace dacount {

FeatureDiscriminator::FeatureDiscriminator(FeatureDiscConfig cfg, RngStream rng)
    : cfg_(std::move(cfg)) {
  if (cfg_.in_channels <= 0)
    throw std::invalid_argument("feature discriminator: in_channels must be set");
  if (cfg_.kernel % 2 == 0)
    throw std::invalid_argument("feature discriminator: kernel must be odd to preserve size");
  std::vector<int> chain = cfg_.widths;
  chain.push_back(2);
  int cin = cfg_.in_channels;
  for (size_t i = 0; i < chain.size(); ++i) {
    Conv2dLayer l;
    std::string nm = "c" + std::to_string(i);
    l.w = &add_param(nm + ".w", weight_init({chain[i], cin, cfg_.kernel, cfg_.kernel}, rng));
    l.b = &add_param(nm + ".b", Tensor({chain[i]}));
    l.pad_h = l.pad_w = (cfg_.kernel - 1) / 2;
    convs_.push_back(l);
    cin = chain[i];
  }
}

Var FeatureDiscriminator::forward(Tape& t, Var features, bool frozen) {
  const Tensor& f = t.val(features);
  if (f.rank() != 4 || f.dim(1) != cfg_.in_channels)
    throw std::invalid_argument("feature discriminator: built for " +
                                std::to_string(cfg_.in_channels) + " channels, got " +
                                (f.rank() == 4 ? std::to_string(f.dim(1)) : f.shape_str()));
  Var x = features;
  for (size_t i = 0; i < convs_.size(); ++i) {
    x = convs_[i].apply(t, x, frozen);
    if (i + 1 < convs_.size()) x = t.leaky_relu(x, cfg_.leaky_slope);
  }
  return x;
}

MapDiscriminator::MapDiscriminator(MapDiscConfig cfg, RngStream rng) : cfg_(std::move(cfg)) {
  int cin = 1;
  for (size_t i = 0; i < cfg_.widths.size(); ++i) {
    Conv2dLayer l;
    std::string nm = "c" + std::to_string(i);
    l.w = &add_param(nm + ".w", weight_init({cfg_.widths[i], cin, cfg_.kernel, cfg_.kernel}, rng));
    l.b = &add_param(nm + ".b", Tensor({cfg_.widths[i]}));
    l.stride_h = l.stride_w = cfg_.stride;
    l.pad_h = l.pad_w = (cfg_.kernel - 1) / 2;
    convs_.push_back(l);
    cin = cfg_.widths[i];
  }
  fc_w_ = &add_param("fc.w", weight_init({2, cin}, rng, 1.0));
  fc_b_ = &add_param("fc.b", Tensor({2}));
}

Var MapDiscriminator::forward(Tape& t, Var density, bool frozen) {
  const Tensor& d = t.val(density);
  if (d.rank() != 4 || d.dim(1) != 1)
    throw std::invalid_argument("map discriminator: expects (N,1,H,W) density maps");
  Var x = density;
  for (const auto& l : convs_) x = t.leaky_relu(l.apply(t, x, frozen), cfg_.leaky_slope);
  Var pooled = t.global_avg_pool(x);
  return t.linear(pooled, t.param(*fc_w_, frozen), t.param(*fc_b_, frozen));
}

}  // namespace dacount
