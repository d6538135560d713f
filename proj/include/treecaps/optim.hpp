#pragma once

#include "treecaps/model.hpp"

namespace treecaps {

// Rectified Adam. Falls back to the un-adapted momentum update while the
// variance rectification term is undefined (rho_t <= 4).
struct RAdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  bool plain_adam = false;  // debugging fallback: classic Adam updates
};

struct OptimizerState {
  long long step = 0;
  ParameterStore m;  // first moments
  ParameterStore v;  // second moments

  static OptimizerState create(const ParameterStore& params);
};

void radam_step(ParameterStore& params, const ParameterStore& grads, OptimizerState& state,
                double lr, const RAdamConfig& cfg = {});

}  // namespace treecaps
