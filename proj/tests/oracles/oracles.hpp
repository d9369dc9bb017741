#pragma once

// Test-only reference computations. None of these share code paths with the
// library routines they are used to check.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <vector>

namespace oracle {

/// Composite Simpson rule on [a, b] with an even number of panels.
inline double simpson(const std::function<double(double)>& f, double a, double b,
                      std::size_t panels = 200000) {
  if (panels % 2 == 1) ++panels;
  const double h = (b - a) / static_cast<double>(panels);
  double sum = f(a) + f(b);
  for (std::size_t i = 1; i < panels; ++i) {
    sum += f(a + h * static_cast<double>(i)) * (i % 2 == 1 ? 4.0 : 2.0);
  }
  return sum * h / 3.0;
}

inline double normal_pdf(double x, double mean, double variance) {
  const double d = x - mean;
  return std::exp(-d * d / (2.0 * variance)) / std::sqrt(2.0 * std::numbers::pi * variance);
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Density of V = 2 + 3Y + Y^2, Y ~ U[-1, 1]. The map is increasing on
/// [-1, 1], so f_V(v) = f_Y(y(v)) / V'(y(v)) with y(v) the in-range root.
inline double density_v_231(double v) {
  if (v < 0.0 || v > 6.0) return 0.0;
  const double y = (-3.0 + std::sqrt(9.0 + 4.0 * (v - 2.0))) / 2.0;
  return 0.5 / (3.0 + 2.0 * y);
}

/// CDF of the same V: P(Y <= y(v)) = (y(v) + 1) / 2.
inline double cdf_v_231(double v) {
  if (v <= 0.0) return 0.0;
  if (v >= 6.0) return 1.0;
  const double y = (-3.0 + std::sqrt(9.0 + 4.0 * (v - 2.0))) / 2.0;
  return 0.5 * (y + 1.0);
}

inline double mean(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

inline double variance(const std::vector<double>& x) {
  const double m = mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() - 1);
}

/// Kolmogorov-Smirnov distance between a sample and a continuous CDF.
inline double ks_distance(std::vector<double> sample, const std::function<double(double)>& cdf) {
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    worst = std::max({worst, std::abs(f - i / n), std::abs((i + 1) / n - f)});
  }
  return worst;
}

}  // namespace oracle
