#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "mslabel/autograd.hpp"

namespace mslabel::testing {

struct GradcheckResult {
  double max_rel = 0;
  int checked = 0;
  int kinks = 0;  // samples whose perturbation straddles a non-differentiable point
  std::string worst;
};

using NamedParam = std::pair<std::string, Parameter<double>*>;

/// Central-difference oracle. A sample counts as a kink crossing only when
/// the second difference explains the disagreement; such samples are skipped
/// and reported. Relative error is |a - n| / max(|a|, |n|, floor).
inline GradcheckResult gradcheck(const std::vector<NamedParam>& params,
                                 const std::function<Var<double>()>& loss_fn, int samples,
                                 std::mt19937_64& rng, double h = 1e-5, double floor = 1e-3,
                                 double tol = 1e-4) {
  for (auto& [name, p] : params) p->zero_grad();
  {
    auto loss = loss_fn();
    backward(loss);
  }
  std::vector<Tensor<double>> analytic;
  for (auto& [name, p] : params) analytic.push_back(p->grad());

  const auto eval = [&] {
    NoGradGuard guard;
    return loss_fn().value().data()[0];
  };
  const double f0 = eval();
  GradcheckResult r;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& [name, p] = params[k];
    auto& v = p->value();
    std::vector<Index> coords;
    if (v.size() <= samples) {
      for (Index i = 0; i < v.size(); ++i) coords.push_back(i);
    } else {
      std::uniform_int_distribution<Index> pick(0, v.size() - 1);
      for (int s = 0; s < samples; ++s) coords.push_back(pick(rng));
    }
    for (Index i : coords) {
      const double orig = v.data()[i];
      v.data()[i] = orig + h;
      const double fp = eval();
      v.data()[i] = orig - h;
      const double fm = eval();
      v.data()[i] = orig;
      const double n = (fp - fm) / (2 * h);
      const double a = analytic[k].data()[i];
      const double err = std::abs(a - n);
      const double rel = err / std::max({std::abs(a), std::abs(n), floor});
      if (rel >= tol && std::abs(fp - 2 * f0 + fm) / (2 * h) >= 0.5 * err) {
        ++r.kinks;
        continue;
      }
      ++r.checked;
      if (rel > r.max_rel) {
        r.max_rel = rel;
        r.worst = name + "[" + std::to_string(i) + "] analytic " + std::to_string(a) +
                  " numeric " + std::to_string(n);
      }
    }
  }
  return r;
}

/// Scalar sum(x * w) with its own backward; turns any tensor op into a
/// generic scalar objective for the checks.
inline Var<double> weighted_sum(const Var<double>& x, const Tensor<double>& w) {
  require(x.value().same_shape(w), ErrorCategory::shape, "weighted_sum shape mismatch");
  Tensor<double> out({1});
  out.data()[0] = (x.value().array() * w.array()).sum();
  return record<double>(std::move(out), {x}, [w](Node<double>& node) {
    node.parent(0).ensure_grad().array() += node.grad.data()[0] * w.array();
  });
}

}  // namespace mslabel::testing
