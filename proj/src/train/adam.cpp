#include <cmath>
#include <stdexcept>

#include "dacount/train.hpp"

namespace dacount {

Adam::Adam(std::vector<Parameter*> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  if (!(cfg_.lr > 0.0)) throw std::invalid_argument("Adam: learning rate must be positive");
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Parameter* p : params_) {
    m_.push_back(Tensor::zeros(p->value.shape()));
    v_.push_back(Tensor::zeros(p->value.shape()));
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Parameter& p = *params_[i];
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (int64_t k = 0; k < p.value.numel(); ++k) {
      const double g = p.grad[k];
      m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * g;
      v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * g * g;
      p.value[k] -= cfg_.lr * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + cfg_.eps);
    }
  }
}

// Moment keys use the slot index: the optimizer may span several modules
// whose parameter names collide (each discriminator has a "c0.w").
void Adam::store(Checkpoint& c, const std::string& prefix) const {
  c.add(prefix + ".t", Tensor::scalar(static_cast<double>(t_)));
  for (size_t i = 0; i < params_.size(); ++i) {
    c.add(prefix + ".m." + std::to_string(i), m_[i]);
    c.add(prefix + ".v." + std::to_string(i), v_[i]);
  }
}

void Adam::load(const Checkpoint& c, const std::string& prefix) {
  const Tensor* t = c.find(prefix + ".t");
  if (!t) throw std::runtime_error("Adam: checkpoint missing '" + prefix + ".t'");
  t_ = static_cast<int64_t>((*t)[0]);
  for (size_t i = 0; i < params_.size(); ++i) {
    for (auto [which, dst] : {std::pair{".m.", &m_[i]}, std::pair{".v.", &v_[i]}}) {
      const std::string key = prefix + which + std::to_string(i);
      const Tensor* src = c.find(key);
      if (!src) throw std::runtime_error("Adam: checkpoint missing '" + key + "'");
      if (!src->same_shape(*dst))
        throw std::runtime_error("Adam: shape mismatch for '" + key + "'");
      *dst = *src;
    }
  }
}

}  // namespace dacount
