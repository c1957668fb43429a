// Copyright 2026 The radllama Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "radllama/tensor.hpp"

namespace radllama {

/// Worst coordinate of a gradient comparison.
struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

inline double relative_error(double analytic, double numeric) {
  const double denom =
      std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

/// Central differences on every coordinate of `params`, compared against
/// `analytic` (one gradient buffer per param). `loss` is re-evaluated with
/// params perturbed in place and restored afterwards.
inline GradCheckResult compare_gradients(
    const std::function<double()>& loss, std::vector<Tensor> params,
    const std::vector<std::vector<double>>& analytic, double eps) {
  GradCheckResult res;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto data = params[k].mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double orig = data[i];
      data[i] = orig + eps;
      const double fp = loss();
      data[i] = orig - eps;
      const double fm = loss();
      data[i] = orig;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = analytic[k][i];
      const double err = relative_error(a, numeric);
      if (err > res.max_rel_error) {
        res = {err, k, i, a, numeric};
      }
    }
  }
  return res;
}

/// Gradient check over parameters already wired into `loss_graph`.
/// Existing grads on params are cleared.
inline GradCheckResult grad_check_params(
    const std::function<Tensor()>& loss_graph, std::vector<Tensor> params,
    double eps = 1e-4) {
  for (Tensor& p : params) p.zero_grad();
  loss_graph().backward();
  std::vector<std::vector<double>> analytic;
  for (const Tensor& p : params) {
    if (p.has_grad()) {
      analytic.emplace_back(p.grad().begin(), p.grad().end());
    } else {
      analytic.emplace_back(p.numel(), 0.0);
    }
  }
  auto value = [&] {
    NoGradGuard ng;
    return loss_graph().item();
  };
  return compare_gradients(value, std::move(params), analytic, eps);
}

/// Max relative error between autodiff and central differences of
/// scalar-valued `f` at `x`.
inline double grad_check(const std::function<Tensor(const Tensor&)>& f,
                         const Tensor& x, double eps = 1e-4) {
  Tensor leaf = x.detach();
  leaf.set_requires_grad(true);
  return grad_check_params([&] { return f(leaf); }, {leaf}, eps).max_rel_error;
}

/// Same comparison with a caller-supplied analytic gradient.
inline double grad_check(const std::function<Tensor(const Tensor&)>& f,
                         std::span<const double> analytic, const Tensor& x,
                         double eps = 1e-4) {
  Tensor leaf = x.detach();
  auto value = [&] {
    NoGradGuard ng;
    return f(leaf).item();
  };
  return compare_gradients(value, {leaf},
                           {std::vector<double>(analytic.begin(), analytic.end())},
                           eps)
      .max_rel_error;
}

}  // namespace radllama
