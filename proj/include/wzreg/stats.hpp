#pragma once

#include <cmath>
#include <cstddef>
#include <span>

namespace wzreg {

/// Neumaier-compensated sum.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      carry_ += (sum_ - t) + x;
    } else {
      carry_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + carry_; }

 private:
  double sum_ = 0.0;
  double carry_ = 0.0;
};

struct MeanEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  double variance = 0.0;  // unbiased sample variance
  std::size_t count = 0;
};

/// Mean, unbiased variance and standard error, accumulated in index order.
inline MeanEstimate mean_estimate(std::span<const double> values) {
  MeanEstimate out;
  out.count = values.size();
  if (values.empty()) return out;
  CompensatedSum sum;
  for (double v : values) sum.add(v);
  out.mean = sum.value() / static_cast<double>(values.size());
  if (values.size() > 1) {
    CompensatedSum sq;
    for (double v : values) sq.add((v - out.mean) * (v - out.mean));
    out.variance = sq.value() / static_cast<double>(values.size() - 1);
    out.std_error = std::sqrt(out.variance / static_cast<double>(values.size()));
  }
  return out;
}

}  // namespace wzreg
