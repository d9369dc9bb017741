#include "wzreg/test_channel.hpp"

#include <cmath>
#include <string>

#include "wzreg/error.hpp"
#include "wzreg/source_model.hpp"

namespace wzreg {

TestChannelParams params_from_distortion(double sigma2, double d) {
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) {
    fail(ErrorCode::rejected_input, "sigma2 must be positive and finite");
  }
  if (!(d > 0.0)) fail(ErrorCode::rejected_input, "distortion must be positive");
  if (!(d < sigma2)) {
    fail(ErrorCode::infeasible_distortion,
         "distortion " + std::to_string(d) + " must be below sigma2 " + std::to_string(sigma2));
  }
  TestChannelParams out;
  out.alpha = (sigma2 - d) / sigma2;
  out.sigma_phi2 = d * sigma2 / (sigma2 - d);
  out.distortion = d;
  return out;
}

TestChannelParams params_from_alpha(double sigma2, double alpha, double sigma_phi2) {
  TestChannelParams out{alpha, sigma_phi2, 0.0};
  validate(out);
  out.distortion = (1.0 - alpha) * (1.0 - alpha) * sigma2 + alpha * alpha * sigma_phi2;
  return out;
}

TestChannelParams params_from_rate(double sigma2, double rate) {
  if (!(rate > 0.0)) fail(ErrorCode::rejected_input, "rate must be positive");
  return params_from_distortion(sigma2, sigma2 * std::exp2(-2.0 * rate));
}

void validate(const TestChannelParams& channel) {
  if (!(channel.alpha > 0.0 && channel.alpha < 1.0)) {
    fail(ErrorCode::rejected_input, "alpha must lie in (0, 1)");
  }
  if (!(channel.sigma_phi2 > 0.0) || !std::isfinite(channel.sigma_phi2)) {
    fail(ErrorCode::rejected_input, "sigma_phi2 must be positive and finite");
  }
}

std::vector<double> apply(const std::vector<double>& x, const TestChannelParams& channel,
                          Stream& rng) {
  const double phi_sd = std::sqrt(channel.sigma_phi2);
  std::vector<double> u(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    u[i] = channel.alpha * (x[i] + phi_sd * rng.normal());
  }
  return u;
}

RateSummary rates(double sigma2, const TestChannelParams& channel) {
  RateSummary out;
  out.r_conditional = 0.5 * std::log2(sigma2 / channel.distortion);
  out.r_wz = 0.5 * std::log2((sigma2 + channel.sigma_phi2) / channel.sigma_phi2);
  out.r_b = 0.5 * std::log2(1.0 + sigma2 / channel.sigma_phi2);
  return out;
}

std::vector<double> reconstruct(const std::vector<double>& u, const std::vector<double>& y,
                                const Eigen::VectorXd& beta_hat,
                                const TestChannelParams& channel) {
  if (u.size() != y.size()) fail(ErrorCode::rejected_input, "u and y lengths differ");
  std::vector<double> x_hat(u.size());
  const double side_weight = 1.0 - channel.alpha;
  for (std::size_t i = 0; i < u.size(); ++i) {
    x_hat[i] = u[i] + side_weight * polynomial_value(beta_hat, y[i]);
  }
  return x_hat;
}

double raginsky_sqrt_bound(double rate, double sigma2) {
  if (!(rate >= 0.0)) fail(ErrorCode::rejected_input, "rate must be nonnegative");
  const double sigma = std::sqrt(sigma2);
  return sigma + 2.0 * sigma * std::exp2(-rate);
}

}  // namespace wzreg
