#include "ddn/numerics/optim.hpp"

#include <cmath>

namespace ddn::numerics {

OptimizerState OptimizerState::rmsprop(double lr, double decay, double eps) {
  if (lr <= 0) throw ConfigError("rmsprop learning_rate must be > 0, got " + std::to_string(lr));
  if (decay <= 0 || decay >= 1) throw ConfigError("rmsprop decay must be in (0,1), got " + std::to_string(decay));
  OptimizerState s;
  s.kind_ = Kind::rmsprop;
  s.lr_ = lr;
  s.decay_ = decay;
  s.eps_ = eps;
  return s;
}

OptimizerState OptimizerState::adam(double lr, double beta1, double beta2, double eps) {
  if (lr <= 0) throw ConfigError("adam learning_rate must be > 0, got " + std::to_string(lr));
  OptimizerState s;
  s.kind_ = Kind::adam;
  s.lr_ = lr;
  s.beta1_ = beta1;
  s.beta2_ = beta2;
  s.eps_ = eps;
  return s;
}

void OptimizerState::attach(std::string name, Tensor& param) {
  Slot slot;
  slot.name = std::move(name);
  slot.param = &param;
  slot.acc.assign(param.data.size(), 0.0);
  if (kind_ == Kind::adam) slot.m1.assign(param.data.size(), 0.0);
  slots_.push_back(std::move(slot));
}

void OptimizerState::attach_all(const NamedParams& params) {
  for (const auto& [name, t] : params) attach(name, *t);
}

void OptimizerState::step() {
  for (Slot& s : slots_) {
    if (!s.param->has_grad())
      throw ContractError("optimizer_step: parameter '" + s.name + "' has no gradient");
    if (s.param->grad.size() != s.param->data.size())
      throw ContractError("optimizer_step: gradient shape mismatch on '" + s.name + "'");
  }
  ++step_count_;
  if (kind_ == Kind::rmsprop) {
    for (Slot& s : slots_) {
      double* p = s.param->data.data();
      const double* g = s.param->grad.data();
      double* acc = s.acc.data();
      size_t n = s.param->data.size();
      for (size_t i = 0; i < n; ++i) {
        acc[i] = decay_ * acc[i] + (1.0 - decay_) * g[i] * g[i];
        p[i] -= lr_ * g[i] / (std::sqrt(acc[i]) + eps_);
      }
    }
  } else {
    double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
    double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));
    for (Slot& s : slots_) {
      double* p = s.param->data.data();
      const double* g = s.param->grad.data();
      double* m = s.m1.data();
      double* v = s.acc.data();
      size_t n = s.param->data.size();
      for (size_t i = 0; i < n; ++i) {
        m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
        v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
        double mhat = m[i] / bc1;
        double vhat = v[i] / bc2;
        p[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }
  for (Slot& s : slots_) s.param->zero_grad();
}

}  // namespace ddn::numerics
