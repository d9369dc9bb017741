#include "wzreg/source_model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "wzreg/error.hpp"
#include "wzreg/quadrature.hpp"
#include "wzreg/test_channel.hpp"

namespace wzreg {
namespace {

// Change of variables for V = b0 + b1 Y + b2 Y^2 with Y uniform on [-a, a].
double quadratic_image_density(const PolynomialSource& source, double v) {
  const double a = std::get<UniformSymmetric>(source.y_law).half_width;
  const double b0 = source.beta[0], b1 = source.beta[1], b2 = source.beta[2];
  const double disc = b1 * b1 + 4.0 * b2 * (v - b0);
  // disc == 0 is a single point of measure zero; report 0 there.
  if (!(disc > 0.0)) return 0.0;
  const double root = std::sqrt(disc);
  const double y1 = (-b1 - root) / (2.0 * b2);
  const double y2 = (-b1 + root) / (2.0 * b2);
  const int in_range = (std::abs(y1) <= a ? 1 : 0) + (std::abs(y2) <= a ? 1 : 0);
  // Each in-range root contributes f_Y(y) / |dv/dy| = (1 / 2a) / sqrt(disc).
  return in_range / (2.0 * a * root);
}

}  // namespace

void PolynomialSource::validate() const {
  if (beta.size() < 1) fail(ErrorCode::rejected_input, "beta must have at least one coefficient");
  if (!beta.allFinite()) fail(ErrorCode::rejected_input, "beta must be finite");
  if (!(sigma2 >= 0.0) || !std::isfinite(sigma2)) {
    fail(ErrorCode::rejected_input, "sigma2 must be nonnegative and finite");
  }
  std::visit(
      [](const auto& law) {
        using T = std::decay_t<decltype(law)>;
        if constexpr (std::is_same_v<T, UniformSymmetric>) {
          if (!(law.half_width > 0.0) || !std::isfinite(law.half_width)) {
            fail(ErrorCode::rejected_input, "uniform half width must be positive");
          }
        } else {
          if (!(law.variance > 0.0) || !std::isfinite(law.variance)) {
            fail(ErrorCode::rejected_input, "gaussian side-information variance must be positive");
          }
        }
      },
      y_law);
}

FeatureVector features(double y, std::size_t k) {
  if (k < 1) fail(ErrorCode::rejected_input, "k must be at least 1");
  FeatureVector out(static_cast<Eigen::Index>(k));
  features_into(y, out);
  return out;
}

void features_into(double y, Eigen::Ref<Eigen::VectorXd> out) {
  if (!std::isfinite(y)) fail(ErrorCode::rejected_input, "feature argument must be finite");
  double power = 1.0;
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    out[i] = power;
    power *= y;
  }
}

double sample_y(const SideInfoLaw& law, Stream& rng) {
  if (const auto* uniform = std::get_if<UniformSymmetric>(&law)) {
    return uniform->half_width * (2.0 * rng.uniform() - 1.0);
  }
  return std::sqrt(std::get<GaussianY>(law).variance) * rng.normal();
}

double polynomial_value(const Eigen::VectorXd& beta, double y) {
  double acc = 0.0;
  for (Eigen::Index i = beta.size(); i-- > 0;) acc = acc * y + beta[i];
  return acc;
}

SampleBatch sample_pairs(const PolynomialSource& source, std::size_t n, Stream& rng) {
  source.validate();
  if (n < 1) fail(ErrorCode::rejected_input, "sample count must be at least 1");
  const double noise_sd = std::sqrt(source.sigma2);
  SampleBatch batch;
  batch.x.resize(n);
  batch.y.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double y = sample_y(source.y_law, rng);
    batch.y[i] = y;
    batch.x[i] = polynomial_value(source.beta, y) + noise_sd * rng.normal();
  }
  return batch;
}

double raw_moment(const SideInfoLaw& law, unsigned m) {
  if (m % 2 == 1) return 0.0;
  if (const auto* uniform = std::get_if<UniformSymmetric>(&law)) {
    return std::pow(uniform->half_width, m) / static_cast<double>(m + 1);
  }
  // sigma^m (m - 1)!!
  const double sd = std::sqrt(std::get<GaussianY>(law).variance);
  double double_factorial = 1.0;
  for (unsigned j = m == 0 ? 0 : m - 1; j > 1; j -= 2) double_factorial *= j;
  return std::pow(sd, m) * double_factorial;
}

MomentMatrix moment_matrix(const PolynomialSource& source) {
  source.validate();
  const auto k = static_cast<Eigen::Index>(source.k());
  MomentMatrix out{Eigen::MatrixXd(k, k)};
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) {
      out.sigma_tilde(i, j) = raw_moment(source.y_law, static_cast<unsigned>(i + j));
    }
  }
  return out;
}

void require_density_support(const PolynomialSource& source) {
  source.validate();
  if (source.k() != 3 || !std::holds_alternative<UniformSymmetric>(source.y_law) ||
      !(source.beta[2] > 0.0)) {
    fail(ErrorCode::unsupported_model,
         "closed-form density of V needs k = 3, beta_2 > 0 and uniform side information");
  }
}

double density_v(const PolynomialSource& source, double v) {
  require_density_support(source);
  return quadratic_image_density(source, v);
}

std::vector<double> density_v_breakpoints(const PolynomialSource& source) {
  require_density_support(source);
  const double a = std::get<UniformSymmetric>(source.y_law).half_width;
  std::vector<double> points = {polynomial_value(source.beta, -a),
                                polynomial_value(source.beta, a)};
  const double vertex = -source.beta[1] / (2.0 * source.beta[2]);
  if (std::abs(vertex) < a) points.push_back(polynomial_value(source.beta, vertex));
  std::sort(points.begin(), points.end());
  points.erase(std::unique(points.begin(), points.end()), points.end());
  return points;
}

double density_u(const PolynomialSource& source, const TestChannelParams& channel, double u) {
  require_density_support(source);
  validate(channel);
  const double spread2 = source.sigma2 + channel.sigma_phi2;
  const double center = u / channel.alpha;
  const double b1 = source.beta[1], b2 = source.beta[2];
  const double a = std::get<UniformSymmetric>(source.y_law).half_width;
  const double vertex = -b1 / (2.0 * b2);
  // With the vertex inside the support, P_V has an inverse-square-root
  // singularity at its minimum, which is then the first breakpoint.
  const bool singular_start = std::abs(vertex) < a;
  auto kernel = [&](double v) {
    const double d = center - v;
    return std::exp(-d * d / (2.0 * spread2));
  };

  const std::vector<double> points = density_v_breakpoints(source);
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < points.size(); ++i) {
    const double lo = points[i], hi = points[i + 1];
    if (i == 0 && singular_start) {
      // v = lo + t^2 absorbs the 1/sqrt(v - lo) behaviour into a bounded integrand.
      // Roots are vertex -+ t / sqrt(beta_2); the Jacobian 2t cancels sqrt(disc) = 2 t sqrt(beta_2).
      const double root_scale = std::sqrt(b2);
      auto smooth = [&](double t) {
        const double offset = t / root_scale;
        const int in_range =
            (std::abs(vertex - offset) <= a ? 1 : 0) + (std::abs(vertex + offset) <= a ? 1 : 0);
        return in_range / (2.0 * a * root_scale) * kernel(lo + t * t);
      };
      total += integrate(smooth, 0.0, std::sqrt(hi - lo)).value;
    } else {
      total += integrate([&](double v) { return quadratic_image_density(source, v) * kernel(v); },
                         lo, hi)
                   .value;
    }
  }
  return total / (channel.alpha * std::sqrt(2.0 * std::numbers::pi * spread2));
}

}  // namespace wzreg
