#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mslabel/autograd.hpp"

namespace mslabel {

enum class Padding { same, valid };

// Each op comes as a plain tensor kernel and as a recorded graph op.

/// Cross-correlation. x: (Cin, H, W), w: (Cout, Cin, k, k), b: (Cout).
template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& x, const Tensor<Scalar>& w, const Tensor<Scalar>& b,
                      Padding padding);
template <typename Scalar>
Var<Scalar> conv2d(const Var<Scalar>& x, const Var<Scalar>& w, const Var<Scalar>& b,
                   Padding padding);

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& x);
template <typename Scalar>
Var<Scalar> relu(const Var<Scalar>& x);

/// Non-overlapping 2x2 max; a trailing odd row or column is dropped.
template <typename Scalar>
Tensor<Scalar> maxpool2x2(const Tensor<Scalar>& x);
template <typename Scalar>
Var<Scalar> maxpool2x2(const Var<Scalar>& x);

template <typename Scalar>
Tensor<Scalar> avgpool2x2(const Tensor<Scalar>& x);
template <typename Scalar>
Var<Scalar> avgpool2x2(const Var<Scalar>& x);

/// Align-corners bilinear resampling of every channel.
template <typename Scalar>
Tensor<Scalar> bilinear_resize(const Tensor<Scalar>& x, Index out_h, Index out_w);
template <typename Scalar>
Var<Scalar> bilinear_resize(const Var<Scalar>& x, Index out_h, Index out_w);

template <typename Scalar>
Var<Scalar> concat_channels(const std::vector<Var<Scalar>>& parts);

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b);

enum class BatchNormMode { train, eval };

template <typename Scalar>
struct BatchNormState {
  Parameter<Scalar> gamma;
  Parameter<Scalar> beta;
  Tensor<Scalar> running_mean;
  Tensor<Scalar> running_var;
  Scalar momentum = Scalar(0.1);
  Scalar eps = Scalar(1e-5);
  BatchNormMode mode = BatchNormMode::train;

  BatchNormState() = default;
  explicit BatchNormState(Index channels)
      : gamma(Tensor<Scalar>({channels}, Scalar(1))),
        beta(Tensor<Scalar>({channels})),
        running_mean({channels}),
        running_var({channels}, Scalar(1)) {}
};

/// Train mode normalizes with the statistics of `x` and updates the running
/// estimates (unbiased variance); eval mode applies the running estimates.
template <typename Scalar>
Tensor<Scalar> batchnorm(const Tensor<Scalar>& x, BatchNormState<Scalar>& state);
template <typename Scalar>
Var<Scalar> batchnorm(const Var<Scalar>& x, BatchNormState<Scalar>& state);

template <typename Scalar>
struct MarginResult {
  Scalar loss;
  std::vector<Scalar> grad;
};

/// Multi-class hinge sum over c != target of max(0, 1 - x_t + x_c).
template <typename Scalar>
MarginResult<Scalar> margin_loss(std::span<const Scalar> scores, int target);

/// Mean per-pixel margin loss of (C, H, W) scores against row-major targets;
/// pixels with target 255 are skipped. Zero when nothing is labeled.
template <typename Scalar>
Var<Scalar> margin_loss(const Var<Scalar>& scores, std::span<const std::uint8_t> targets);

/// Per-pixel argmax, lowest index on ties.
template <typename Scalar>
std::vector<std::uint8_t> argmax_channels(const Tensor<Scalar>& scores);

}  // namespace mslabel
