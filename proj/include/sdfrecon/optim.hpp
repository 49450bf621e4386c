#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

namespace sdfrecon {

// Adam with bias-corrected first/second moments. A zero gradient from the
// zero state leaves both the parameter and the moments untouched.
template <typename T>
class Adam {
 public:
  Adam(std::size_t n, T lr, T beta1 = T(0.9), T beta2 = T(0.999), T eps = T(1e-8))
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, T(0)), v_(n, T(0)) {}

  T learning_rate() const { return lr_; }
  void set_learning_rate(T lr) { lr_ = lr; }
  int64_t steps() const { return t_; }

  void step(std::vector<T>& params, const std::vector<T>& grads) {
    if (params.size() != m_.size() || grads.size() != m_.size())
      throw std::invalid_argument("Adam::step: size mismatch");
    for (T g : grads)
      if (!std::isfinite(g)) throw std::runtime_error("Adam::step: non-finite gradient");
    ++t_;
    const T c1 = T(1) - std::pow(beta1_, T(t_));
    const T c2 = T(1) - std::pow(beta2_, T(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = beta1_ * m_[i] + (T(1) - beta1_) * grads[i];
      v_[i] = beta2_ * v_[i] + (T(1) - beta2_) * grads[i] * grads[i];
      params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
    }
  }

 private:
  T lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::vector<T> m_, v_;
};

}  // namespace sdfrecon
