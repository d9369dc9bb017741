#pragma once

#include <functional>

namespace wzreg {

struct QuadratureResult {
  double value = 0.0;
  double error = 0.0;
};

/// Largest error estimate accepted from any adaptive integration.
inline constexpr double kQuadratureAbsTolerance = 1e-8;

/// Adaptive 15-point Gauss-Kronrod (QUADPACK QAG) over a finite interval.
/// Refinement stops once the error estimate is below
/// max(abs_target, rel_target * |value|). A final estimate above
/// kQuadratureAbsTolerance raises numerical_failure.
QuadratureResult integrate(const std::function<double(double)>& f, double a, double b,
                           double rel_target = 1e-11, double abs_target = 1e-14);

}  // namespace wzreg
