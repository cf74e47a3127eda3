#pragma once

#include "kgr4/nn/parameters.hpp"

namespace kgr4::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 1.0;  // global gradient-norm clip; <= 0 disables
};

class Adam {
 public:
  Adam(const ParameterSet& params, AdamConfig config);

  /// One update from `grads` (already averaged over the batch).
  void step(ParameterSet& params, Gradients& grads);

  long steps() const { return t_; }

 private:
  AdamConfig config_;
  Gradients m_;
  Gradients v_;
  long t_ = 0;
};

}  // namespace kgr4::nn
