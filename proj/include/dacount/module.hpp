#pragma once

#include <deque>
#include <string>
#include <vector>

#include "dacount/autograd.hpp"
#include "dacount/rng.hpp"

namespace dacount {

// Base for parameterized networks. Parameters are owned in declaration
// order with stable addresses and hierarchical names, which is what the
// checkpoint archive and the optimizer key on.
class Module {
 public:
  virtual ~Module() = default;

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out;
    out.reserve(params_.size());
    for (auto& p : params_) out.push_back(&p);
    return out;
  }
  std::vector<const Parameter*> parameters() const {
    std::vector<const Parameter*> out;
    out.reserve(params_.size());
    for (auto& p : params_) out.push_back(&p);
    return out;
  }

  Parameter* find(const std::string& name) {
    for (auto& p : params_)
      if (p.name == name) return &p;
    return nullptr;
  }

  void zero_grads() {
    for (auto& p : params_) p.grad.fill(0.0);
  }

  int64_t parameter_count() const {
    int64_t n = 0;
    for (const auto& p : params_) n += p.value.numel();
    return n;
  }

 protected:
  Parameter& add_param(std::string name, Tensor init) {
    params_.emplace_back(std::move(name), std::move(init));
    return params_.back();
  }

 private:
  std::deque<Parameter> params_;
};

// He-style init for conv / linear weights: N(0, gain^2 / fan_in).
Tensor weight_init(const std::vector<int>& shape, RngStream& rng, double gain_sq = 2.0);

// Simple layer bundles used by the concrete networks.
struct Conv2dLayer {
  Parameter* w = nullptr;
  Parameter* b = nullptr;
  int stride_h = 1, stride_w = 1, pad_h = 0, pad_w = 0, dil_h = 1, dil_w = 1;
  Var apply(Tape& t, Var x, bool frozen) const {
    return t.conv2d(x, t.param(*w, frozen), t.param(*b, frozen), stride_h, stride_w, pad_h, pad_w,
                    dil_h, dil_w);
  }
};

}  // namespace dacount
