#include "dacount/module.hpp"

#include <cmath>

namespace dacount {

Tensor weight_init(const std::vector<int>& shape, RngStream& rng, double gain_sq) {
  // fan_in: all dims past the first (Cin*Kh*Kw for convs, F for linear)
  int64_t fan_in = 1;
  for (size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
  double std = std::sqrt(gain_sq / static_cast<double>(fan_in));
  Tensor t(shape);
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal(0.0, std);
  return t;
}

}  // namespace dacount
