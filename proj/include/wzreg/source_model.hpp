#pragma once

#include <cstddef>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "wzreg/rng.hpp"

namespace wzreg {

/// Y uniform on [-half_width, half_width].
struct UniformSymmetric {
  double half_width = 1.0;
};

/// Y ~ N(0, variance).
struct GaussianY {
  double variance = 1.0;
};

using SideInfoLaw = std::variant<UniformSymmetric, GaussianY>;

/// X = beta^T [1, Y, ..., Y^{k-1}] + N, N ~ N(0, sigma2), Y zero-mean.
struct PolynomialSource {
  Eigen::VectorXd beta;
  double sigma2 = 1.0;
  SideInfoLaw y_law = UniformSymmetric{};

  std::size_t k() const { return static_cast<std::size_t>(beta.size()); }

  /// Throws rejected_input unless k >= 1, beta finite, sigma2 >= 0 and the
  /// law parameters are positive. sigma2 == 0 is accepted as the noiseless
  /// degenerate model used in tests.
  void validate() const;
};

using FeatureVector = Eigen::VectorXd;

struct SampleBatch {
  std::vector<double> x;
  std::vector<double> y;
  std::size_t size() const { return x.size(); }
};

/// k x k matrix with entry (i, j) = E[Y^{i+j}].
struct MomentMatrix {
  Eigen::MatrixXd sigma_tilde;
};

/// [1, y, ..., y^{k-1}]. Non-finite y is rejected.
FeatureVector features(double y, std::size_t k);

/// Writes the feature vector into `out` without allocating.
void features_into(double y, Eigen::Ref<Eigen::VectorXd> out);

double sample_y(const SideInfoLaw& law, Stream& rng);

/// Noise-free regression value beta^T features(y), evaluated by Horner.
double polynomial_value(const Eigen::VectorXd& beta, double y);

SampleBatch sample_pairs(const PolynomialSource& source, std::size_t n, Stream& rng);

/// Analytic E[Y^m].
double raw_moment(const SideInfoLaw& law, unsigned m);

MomentMatrix moment_matrix(const PolynomialSource& source);

/// Density of V = beta^T Y* for k = 3, beta_2 > 0 and uniform Y. Other
/// models raise unsupported_model.
double density_v(const PolynomialSource& source, double v);

/// Closed support [lo, hi] of V together with interior breakpoints where the
/// number of in-range roots changes or the density is singular. Sorted.
std::vector<double> density_v_breakpoints(const PolynomialSource& source);

struct TestChannelParams;

/// Density of U = alpha (V + N + Phi) by adaptive quadrature of the
/// Gaussian convolution over the support of V.
double density_u(const PolynomialSource& source, const TestChannelParams& channel, double u);

/// Throws unsupported_model unless density_v can be evaluated for `source`.
void require_density_support(const PolynomialSource& source);

}  // namespace wzreg
