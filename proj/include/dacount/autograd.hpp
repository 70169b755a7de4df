#pragma once

#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dacount/tensor.hpp"

namespace dacount {

// Trainable tensor. Gradients accumulate into `grad` when a Tape that
// references the parameter is backpropagated; the optimizer owns zeroing.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros(value.shape())) {}
};

// Handle into a Tape node.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape. One Tape per training step; values are computed
// eagerly as ops are recorded, backward() replays the tape in reverse.
//
// Freezing: a parameter added with frozen=true contributes its value but
// receives no gradient. Gradients still flow *through* ops on frozen
// parameters into non-frozen inputs, which is how the adversarial updates
// keep the generator/discriminator parameter sets disjoint.
class Tape {
 public:
  Var param(Parameter& p, bool frozen = false);
  Var constant(Tensor x);
  Var input(Tensor x, bool needs_grad);

  // --- ops (NCHW for 4-D tensors) ---
  Var conv2d(Var x, Var w, Var b, int stride_h, int stride_w, int pad_h, int pad_w,
             int dil_h = 1, int dil_w = 1);
  // weight shape (Cin, Cout, Kh, Kw)
  Var conv_transpose2d(Var x, Var w, Var b, int stride, int pad, int out_pad);
  Var linear(Var x, Var w, Var b);  // x:(N,F) w:(O,F) b:(O)
  Var relu(Var x);
  Var leaky_relu(Var x, double slope);
  Var prelu(Var x, Var alpha);  // alpha: (C), one slope per channel
  Var maxpool2(Var x);          // 2x2 stride 2, dims must be even
  Var avgpool2(Var x);
  Var global_avg_pool(Var x);  // (N,C,H,W) -> (N,C)
  Var bilinear_resize(Var x, int out_h, int out_w);
  Var add(Var a, Var b);
  Var scale(Var a, double s);
  Var mse(Var a, Var b);  // scalar: mean of squared differences

  // -log softmax(logits)[channel], summed or averaged over spatial
  // positions per sample, then averaged over the batch. logits are
  // (N,2,H,W) or (N,2).
  enum class Reduction { Sum, Mean };
  Var domain_nll(Var scores, int channel, Reduction red);

  void backward(Var loss);

  const Tensor& val(Var v) const { return node(v.id).val; }
  const Tensor& grad(Var v) const;
  bool needs_grad(Var v) const { return node(v.id).needs_grad; }
  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor val;
    Tensor grad;  // allocated lazily during backward
    bool needs_grad = false;
    Parameter* param = nullptr;  // set for non-frozen parameter leaves
    std::function<void()> back;  // empty for leaves / no-grad nodes
  };

  Node& node(int id) { return nodes_.at(static_cast<size_t>(id)); }
  const Node& node(int id) const { return nodes_.at(static_cast<size_t>(id)); }
  Tensor& grad_buf(int id);  // allocate-on-demand
  Var push(Tensor val, bool needs_grad);

  // deque: val() references stay valid while later ops are recorded
  std::deque<Node> nodes_;
};

// Numerical failure during training (NaN/Inf loss or activation).
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace dacount
