#include "dacount/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace dacount {

double Tensor::min() const {
  if (empty()) throw std::runtime_error("Tensor::min on empty tensor");
  return *std::min_element(data_.begin(), data_.end());
}

double Tensor::max() const {
  if (empty()) throw std::runtime_error("Tensor::max on empty tensor");
  return *std::max_element(data_.begin(), data_.end());
}

double Tensor::abs_max() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
  os << ")";
  return os.str();
}

}  // namespace dacount
