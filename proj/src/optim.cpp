#include "treecaps/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace treecaps {

OptimizerState OptimizerState::create(const ParameterStore& params) {
  OptimizerState s;
  s.m = params.zeros_like();
  s.v = params.zeros_like();
  return s;
}

void radam_step(ParameterStore& params, const ParameterStore& grads, OptimizerState& state,
                double lr, const RAdamConfig& cfg) {
  if (!grads.all_finite()) throw std::runtime_error("non-finite gradient");
  state.step++;
  const double t = static_cast<double>(state.step);
  const double rho_inf = 2.0 / (1.0 - cfg.beta2) - 1.0;
  const double beta1_t = std::pow(cfg.beta1, t);
  const double beta2_t = std::pow(cfg.beta2, t);
  const double rho_t = rho_inf - 2.0 * t * beta2_t / (1.0 - beta2_t);

  for (auto& [name, theta] : params.tensors) {
    const Matrix& g = grads.at(name);
    Matrix& m = state.m.at(name);
    Matrix& v = state.v.at(name);
    if (g.rows() != theta.rows() || g.cols() != theta.cols())
      throw std::invalid_argument("gradient shape mismatch for " + name);
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    Matrix m_hat = m / (1.0 - beta1_t);
    if (cfg.plain_adam) {
      Matrix denom =
          (v / (1.0 - beta2_t)).cwiseSqrt() + Matrix::Constant(v.rows(), v.cols(), cfg.eps);
      theta -= lr * m_hat.cwiseQuotient(denom);
    } else if (rho_t > 4.0) {
      double rect = std::sqrt(((rho_t - 4.0) * (rho_t - 2.0) * rho_inf) /
                              ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t));
      Matrix v_hat = (v / (1.0 - beta2_t)).cwiseSqrt();
      theta -= (lr * rect) *
               m_hat.cwiseQuotient(v_hat + Matrix::Constant(v.rows(), v.cols(), cfg.eps));
    } else {
      theta -= lr * m_hat;
    }
  }
}

}  // namespace treecaps
