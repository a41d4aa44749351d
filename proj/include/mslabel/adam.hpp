#pragma once

#include <vector>

#include "mslabel/autograd.hpp"

namespace mslabel {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename Scalar>
struct AdamState {
  Tensor<Scalar> m;
  Tensor<Scalar> v;
  long long t = 0;
  AdamConfig config;

  AdamState() = default;
  AdamState(const Shape& shape, AdamConfig cfg) : m(shape), v(shape), config(cfg) {}
};

/// One bias-corrected Adam update of `param` from its accumulated gradient.
template <typename Scalar>
void adam_step(Parameter<Scalar>& param, AdamState<Scalar>& state);

/// Adam over a fixed parameter list.
template <typename Scalar>
class Adam {
 public:
  Adam(std::vector<Parameter<Scalar>*> params, AdamConfig config);

  void step();
  void zero_grad();
  const AdamConfig& config() const { return config_; }

 private:
  std::vector<Parameter<Scalar>*> params_;
  std::vector<AdamState<Scalar>> states_;
  AdamConfig config_;
};

}  // namespace mslabel
