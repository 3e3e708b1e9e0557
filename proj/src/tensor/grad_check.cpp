#include "sbi/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace sbi::ad {

namespace {

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({1.0, std::abs(analytic), std::abs(numeric)});
}

double central_difference(const std::function<Tensor<double>()>& f, Tensor<double>& input, std::size_t i,
                          double step) {
  NoGradGuard no_grad;
  auto values = input.mutable_values();
  const double saved = values[i];
  values[i] = saved + step;
  const double plus = f().item();
  values[i] = saved - step;
  const double minus = f().item();
  values[i] = saved;
  return (plus - minus) / (2.0 * step);
}

}  // namespace

GradCheckResult grad_check(const std::function<Tensor<double>()>& f, std::vector<Tensor<double>> inputs,
                           double step) {
  for (auto& in : inputs) in.zero_grad();
  const Tensor<double> loss = f();
  backward(loss);

  std::vector<std::vector<double>> analytic;
  for (const auto& in : inputs) analytic.emplace_back(in.grad().begin(), in.grad().end());

  GradCheckResult result;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    for (std::size_t i = 0; i < inputs[t].size(); ++i) {
      double err = relative_error(analytic[t][i], central_difference(f, inputs[t], i, step));
      if (err > 1e-2) {
        const double recheck = relative_error(analytic[t][i], central_difference(f, inputs[t], i, step * 1e-2));
        if (recheck > 1e-2) ++result.flagged_nondifferentiable;
        err = std::max(err, recheck);
      }
      result.max_relative_error = std::max(result.max_relative_error, err);
      ++result.coordinates;
    }
  }
  return result;
}

}  // namespace sbi::ad
