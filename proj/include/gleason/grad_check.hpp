#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gleason/tensor.hpp"

namespace gleason {

// A function of several tensors together with its vector-Jacobian product.
// backward(inputs, cotangent) returns one cotangent per input, each shaped
// like that input.
struct DifferentiableOp {
  std::string name;
  std::function<Tensor(std::span<const Tensor>)> forward;
  std::function<std::vector<Tensor>(std::span<const Tensor>, const Tensor&)> backward;
};

struct GradCheckOptions {
  double eps = 1e-5;
  std::uint64_t seed = 0;
  int probes = 3;  // random (cotangent, direction) pairs per input
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::vector<double> per_input;  // worst error for each input
};

// Compares <backward(u)_i, v_i> with the central difference
// <u, f(x_i + eps v_i) - f(x_i - eps v_i)> / (2 eps) for random u and v_i.
// Throws NumericError when a forward evaluation is not finite and
// std::invalid_argument when eps lies outside [1e-7, 1e-4].
GradCheckReport grad_check_report(const DifferentiableOp& op, std::span<const Tensor> inputs,
                                  const GradCheckOptions& opts = {});

double grad_check(const DifferentiableOp& op, std::span<const Tensor> inputs, double eps = 1e-5,
                  std::uint64_t seed = 0);

}  // namespace gleason
