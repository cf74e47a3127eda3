#include "kgr4/nn/adam.hpp"

#include <cmath>

namespace kgr4::nn {

Adam::Adam(const ParameterSet& params, AdamConfig config)
    : config_(config), m_(params), v_(params) {}

void Adam::step(ParameterSet& params, Gradients& grads) {
  if (config_.clip_norm > 0.0) {
    const double norm = grads.norm();
    if (norm > config_.clip_norm) grads.scale(config_.clip_norm / norm);
  }
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * grads[i];
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * grads[i].cwiseProduct(grads[i]);
    params[i].value.array() -=
        config_.lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + config_.eps);
  }
}

}  // namespace kgr4::nn
