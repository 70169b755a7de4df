#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace dacount {

// Dense row-major tensor of doubles. Convolutional code uses the NCHW
// convention; lower-rank tensors (biases, logits, flat features) just use
// fewer dims.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(static_cast<size_t>(numel_of(shape_)), 0.0);
  }
  Tensor(std::vector<int> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<int64_t>(data_.size()) != numel_of(shape_))
      throw std::invalid_argument("Tensor: data size does not match shape");
  }

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int> shape, double v) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), v);
    return t;
  }
  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  static int64_t numel_of(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) {
      if (d < 0) throw std::invalid_argument("Tensor: negative dim");
      n *= d;
    }
    return n;
  }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  // NCHW accessors
  double& at(int n, int c, int h, int w) {
    assert(rank() == 4);
    return data_[static_cast<size_t>(((int64_t(n) * dim(1) + c) * dim(2) + h) * dim(3) + w)];
  }
  double at(int n, int c, int h, int w) const {
    return const_cast<Tensor*>(this)->at(n, c, h, w);
  }
  double& at(int a, int b) {
    assert(rank() == 2);
    return data_[static_cast<size_t>(int64_t(a) * dim(1) + b)];
  }
  double at(int a, int b) const { return const_cast<Tensor*>(this)->at(a, b); }

  double sum() const {
    double s = 0.0;
    for (double v : data_) s += v;
    return s;
  }
  double min() const;
  double max() const;
  double abs_max() const;
  bool all_finite() const;

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
  void clamp_min_(double lo) {
    for (double& v : data_)
      if (v < lo) v = lo;
  }

  Tensor reshaped(std::vector<int> shape) const {
    if (numel_of(shape) != numel())
      throw std::invalid_argument("Tensor: reshape changes element count");
    return Tensor(std::move(shape), data_);
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  std::string shape_str() const;

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

inline bool shapes_equal(const std::vector<int>& a, const std::vector<int>& b) { return a == b; }

}  // namespace dacount
