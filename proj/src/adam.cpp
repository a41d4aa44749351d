#include "mslabel/adam.hpp"

#include <cmath>

namespace mslabel {

template <typename Scalar>
void adam_step(Parameter<Scalar>& param, AdamState<Scalar>& state) {
  require(state.m.same_shape(param.value()) && state.v.same_shape(param.value()),
          ErrorCategory::shape, "Adam state does not match parameter shape");
  const auto& cfg = state.config;
  const auto& g = param.grad().array();
  ++state.t;
  const auto b1 = static_cast<Scalar>(cfg.beta1);
  const auto b2 = static_cast<Scalar>(cfg.beta2);
  state.m.array() = b1 * state.m.array() + (1 - b1) * g;
  state.v.array() = b2 * state.v.array() + (1 - b2) * g.square();
  const double t = static_cast<double>(state.t);
  const auto mhat_scale = static_cast<Scalar>(1.0 / (1.0 - std::pow(cfg.beta1, t)));
  const auto vhat_scale = static_cast<Scalar>(1.0 / (1.0 - std::pow(cfg.beta2, t)));
  param.value().array() -=
      static_cast<Scalar>(cfg.lr) * (state.m.array() * mhat_scale) /
      ((state.v.array() * vhat_scale).sqrt() + static_cast<Scalar>(cfg.eps));
}

template <typename Scalar>
Adam<Scalar>::Adam(std::vector<Parameter<Scalar>*> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  states_.reserve(params_.size());
  for (auto* p : params_) states_.emplace_back(p->value().shape(), config_);
}

template <typename Scalar>
void Adam<Scalar>::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) adam_step(*params_[i], states_[i]);
}

template <typename Scalar>
void Adam<Scalar>::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

template void adam_step(Parameter<float>&, AdamState<float>&);
template void adam_step(Parameter<double>&, AdamState<double>&);
template class Adam<float>;
template class Adam<double>;

}  // namespace mslabel
