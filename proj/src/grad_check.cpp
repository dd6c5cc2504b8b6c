#include "gleason/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "gleason/errors.hpp"

namespace gleason {

namespace {

Tensor eval_finite(const DifferentiableOp& op, std::span<const Tensor> inputs) {
  Tensor y = op.forward(inputs);
  if (!y.all_finite()) throw NumericError("grad_check(" + op.name + "): forward produced a non-finite value");
  return y;
}

}  // namespace

GradCheckReport grad_check_report(const DifferentiableOp& op, std::span<const Tensor> inputs,
                                  const GradCheckOptions& opts) {
  if (!(opts.eps >= 1e-7 && opts.eps <= 1e-4)) {
    throw std::invalid_argument("grad_check: eps must lie in [1e-7, 1e-4]");
  }
  std::mt19937_64 rng(opts.seed);
  const Tensor y0 = eval_finite(op, inputs);
  std::vector<Tensor> work(inputs.begin(), inputs.end());

  GradCheckReport report;
  report.per_input.assign(inputs.size(), 0.0);
  for (int probe = 0; probe < opts.probes; ++probe) {
    const Tensor u = Tensor::randn(y0.shape(), rng);
    const std::vector<Tensor> grads = op.backward(inputs, u);
    if (grads.size() != inputs.size()) {
      throw DimensionError("grad_check(" + op.name + "): backward returned " +
                           std::to_string(grads.size()) + " cotangents for " +
                           std::to_string(inputs.size()) + " inputs");
    }
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      require_same_shape(grads[i], inputs[i], "grad_check(" + op.name + ") cotangent " + std::to_string(i));
      const Tensor v = Tensor::randn(inputs[i].shape(), rng);
      const double analytic = dot(grads[i], v);

      for (std::size_t k = 0; k < v.numel(); ++k) work[i][k] = inputs[i][k] + opts.eps * v[k];
      const Tensor plus = eval_finite(op, work);
      for (std::size_t k = 0; k < v.numel(); ++k) work[i][k] = inputs[i][k] - opts.eps * v[k];
      const Tensor minus = eval_finite(op, work);
      work[i] = inputs[i];

      const double numeric = (dot(u, plus) - dot(u, minus)) / (2.0 * opts.eps);
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      const double err = std::abs(analytic - numeric) / denom;
      report.per_input[i] = std::max(report.per_input[i], err);
      report.max_relative_error = std::max(report.max_relative_error, err);
    }
  }
  return report;
}

double grad_check(const DifferentiableOp& op, std::span<const Tensor> inputs, double eps,
                  std::uint64_t seed) {
  return grad_check_report(op, inputs, GradCheckOptions{eps, seed, 3}).max_relative_error;
}

}  // namespace gleason
