#include "woundnet/optim.hpp"

#include <cmath>
#include <numbers>

#include "woundnet/errors.hpp"

namespace woundnet::ad {

double LrSchedule::at(double base_lr, std::uint64_t step) const {
  if (kind == Kind::constant || total_steps == 0) return base_lr;
  const double t = std::min(1.0, static_cast<double>(step) / static_cast<double>(total_steps));
  const double floor = floor_fraction * base_lr;
  return floor + 0.5 * (base_lr - floor) * (1.0 + std::cos(std::numbers::pi * t));
}

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "adam") return OptimizerKind::adam;
  throw ValidationError("unknown optimizer '" + name + "' (expected sgd or adam)");
}

void sgd_adam_step(OptimizerState& state, const std::vector<Parameter*>& params, double lr) {
  for (const Parameter* p : params) {
    if (!p->trainable) continue;
    if (p->grad.shape() != p->value.shape())
      throw ContractError("optimizer: grad shape mismatch for " + p->name);
    if (!p->grad.all_finite()) throw NumericError("optimizer: non-finite gradient in " + p->name);
  }

  const double rate = state.schedule.at(lr, state.step);
  ++state.step;

  if (state.kind == OptimizerKind::sgd) {
    for (Parameter* p : params) {
      if (!p->trainable) continue;
      for (std::size_t i = 0; i < p->value.size(); ++i) p->value[i] -= rate * p->grad[i];
    }
    return;
  }

  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (Parameter* p : params) {
    if (!p->trainable) continue;
    auto [mit, m_new] = state.first_moment.try_emplace(p->name, p->value.shape());
    auto [vit, v_new] = state.second_moment.try_emplace(p->name, p->value.shape());
    NdArray& m = mit->second;
    NdArray& v = vit->second;
    if (m.shape() != p->value.shape() || v.shape() != p->value.shape())
      throw ContractError("optimizer: moment shape mismatch for " + p->name);
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = p->grad[i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p->value[i] -= rate * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

}  // namespace woundnet::ad
