#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "oracles.hpp"
#include "wzreg/error.hpp"
#include "wzreg/regression.hpp"

using namespace wzreg;

namespace {

PolynomialSource reference_source() {
  PolynomialSource s;
  s.beta = Eigen::Vector3d(2.0, 3.0, 1.0);
  s.sigma2 = 16.0;
  return s;
}

Eigen::MatrixXd random_psd(Stream& rng, Eigen::Index dim) {
  const Eigen::Index rank = 1 + static_cast<Eigen::Index>(rng.uniform() * dim);
  Eigen::MatrixXd m(dim, rank);
  for (Eigen::Index i = 0; i < dim; ++i)
    for (Eigen::Index j = 0; j < rank; ++j) m(i, j) = rng.normal() * (1 + 3 * rng.uniform());
  Eigen::MatrixXd out = m * m.transpose();
  return 0.5 * (out + out.transpose());
}

Eigen::MatrixXd random_symmetric(Stream& rng, Eigen::Index dim) {
  Eigen::MatrixXd m(dim, dim);
  for (Eigen::Index i = 0; i < dim; ++i)
    for (Eigen::Index j = 0; j < dim; ++j) m(i, j) = 5.0 * rng.normal();
  return 0.5 * (m + m.transpose());
}

}  // namespace

TEST_CASE("ols_fit interpolates noiseless data") {
  const TestChannelParams ch = params_from_alpha(0.0, 0.5, 1e-12);
  const Eigen::Vector3d beta(2, 3, 1);
  const std::vector<double> y = {-0.7, 0.1, 0.9};
  std::vector<double> u(3);
  Stream rng(1);
  for (std::size_t i = 0; i < 3; ++i) u[i] = ch.alpha * (features(y[i], 3).dot(beta) + 1e-6 * rng.normal());
  const TrainedPredictor p = ols_fit(u, y, ch, 3);
  CHECK((p.beta_hat - beta).cwiseAbs().maxCoeff() < 1e-5);
  CHECK(p.n_train == 3);
}

TEST_CASE("ols_fit with k = 1 is the scaled sample mean") {
  const TestChannelParams ch = params_from_distortion(16.0, 4.0);
  Stream rng(2);
  std::vector<double> u(101), y(101);
  for (std::size_t i = 0; i < u.size(); ++i) {
    u[i] = 3.0 + rng.normal();
    y[i] = rng.uniform();
  }
  const double mean_u = std::accumulate(u.begin(), u.end(), 0.0) / u.size();
  const TrainedPredictor p = ols_fit(u, y, ch, 1);
  CHECK(p.beta_hat[0] == doctest::Approx(mean_u / ch.alpha).epsilon(1e-13));
}

TEST_CASE("ols_fit error paths") {
  const TestChannelParams ch = params_from_distortion(16.0, 4.0);
  auto code = [&](const std::vector<double>& u, const std::vector<double>& y, std::size_t k) {
    try {
      ols_fit(u, y, ch, k);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::invariant_failure;
  };
  CHECK(code({1, 2}, {0.1, 0.2}, 3) == ErrorCode::insufficient_data);
  CHECK(code({1, 2, 3, 4}, {0.5, 0.5, 0.5, 0.5}, 2) == ErrorCode::ill_conditioned);
  // Vandermonde with tiny spread: condition grows like spread^-(2(k-1)).
  std::vector<double> y(50), u(50, 1.0);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = 1e-4 * i / 50.0;
  CHECK(code(u, y, 4) == ErrorCode::ill_conditioned);
  CHECK(code({1, 2, 3}, {0.1, 0.2}, 1) == ErrorCode::rejected_input);
}

TEST_CASE("ols_fit is unbiased") {
  const PolynomialSource s = reference_source();
  const TestChannelParams ch = params_from_distortion(16.0, 8.0);
  const ReplicateStudy study = simulate_gen_error(s, ch, 500, 10000, Stream(123));
  for (int c = 0; c < 3; ++c) {
    std::vector<double> comp(study.beta_hat.size());
    for (std::size_t r = 0; r < comp.size(); ++r) comp[r] = study.beta_hat[r][c];
    const double se = std::sqrt(oracle::variance(comp) / comp.size());
    CHECK(std::abs(oracle::mean(comp) - s.beta[c]) < 3.0 * se);
  }
}

TEST_CASE("conditional_cov matches replicate covariance for a fixed design") {
  const PolynomialSource s = reference_source();
  const TestChannelParams ch = params_from_distortion(16.0, 8.0);
  Stream rng(41);
  const std::size_t n = 40;
  std::vector<double> y(n);
  for (auto& v : y) v = sample_y(s.y_law, rng);
  const Eigen::MatrixXd predicted = conditional_cov(y, ch, s.sigma2, 3);

  const std::size_t reps = 100000;
  std::vector<Eigen::Vector3d> draws(reps);
  const double noise = std::sqrt(s.sigma2), phi = std::sqrt(ch.sigma_phi2);
  std::vector<double> u(n);
  for (std::size_t r = 0; r < reps; ++r) {
    for (std::size_t i = 0; i < n; ++i)
      u[i] = ch.alpha * (polynomial_value(s.beta, y[i]) + noise * rng.normal() + phi * rng.normal());
    draws[r] = ols_fit(u, y, ch, 3).beta_hat;
  }
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (const auto& d : draws) mean += d;
  mean /= reps;
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& d : draws) cov += (d - mean) * (d - mean).transpose();
  cov /= static_cast<double>(reps - 1);
  // 5% of the entry's natural scale sqrt(C_ii C_jj), so near-zero
  // off-diagonals are not held to a relative bound.
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      const double scale = std::sqrt(predicted(i, i) * predicted(j, j));
      CHECK(std::abs(cov(i, j) - predicted(i, j)) < 0.05 * scale);
    }
    CHECK(std::abs(cov(i, i) / predicted(i, i) - 1.0) < 0.05);
  }
}

TEST_CASE("conditional_cov scalar and duplication cases") {
  const TestChannelParams ch = params_from_distortion(16.0, 8.0);
  const std::vector<double> y = {0.3, -0.2, 0.9, 0.1, -0.8};
  const Eigen::MatrixXd scalar = conditional_cov(y, ch, 16.0, 1);
  CHECK(scalar(0, 0) == doctest::Approx(32.0 / 5.0));

  std::vector<double> doubled = y;
  doubled.insert(doubled.end(), y.begin(), y.end());
  const Eigen::MatrixXd once = conditional_cov(y, ch, 16.0, 3);
  const Eigen::MatrixXd twice = conditional_cov(doubled, ch, 16.0, 3);
  CHECK((twice - 0.5 * once).cwiseAbs().maxCoeff() < 1e-10 * once.cwiseAbs().maxCoeff());
}

TEST_CASE("gen_error_conditional") {
  const PolynomialSource s = reference_source();
  const MomentMatrix m = moment_matrix(s);
  TrainedPredictor p;
  p.beta_hat = s.beta;
  CHECK(gen_error_conditional(p, s.beta, m, 16.0) == 16.0);

  MomentMatrix identity{Eigen::Matrix3d::Identity()};
  p.beta_hat = s.beta - Eigen::Vector3d::UnitX();
  CHECK(gen_error_conditional(p, s.beta, identity, 16.0) == 17.0);
}

TEST_CASE("gen_error_conditional agrees with inference Monte Carlo") {
  const PolynomialSource s = reference_source();
  const MomentMatrix m = moment_matrix(s);
  TrainedPredictor p;
  Stream rng(8);
  for (const Eigen::Vector3d& shift :
       {Eigen::Vector3d(0.3, -0.4, 0.8), Eigen::Vector3d(-1.0, 0.0, 0.1)}) {
    p.beta_hat = s.beta + shift;
    const double closed = gen_error_conditional(p, s.beta, m, s.sigma2);
    const SampleBatch fresh = sample_pairs(s, 1000000, rng);
    std::vector<double> loss(fresh.size());
    for (std::size_t i = 0; i < loss.size(); ++i) {
      const double r = fresh.x[i] - polynomial_value(p.beta_hat, fresh.y[i]);
      loss[i] = r * r;
    }
    const double se = std::sqrt(oracle::variance(loss) / loss.size());
    CHECK(std::abs(oracle::mean(loss) - closed) < 3.0 * se);
    CHECK(closed >= s.sigma2);
  }
}

TEST_CASE("expected_gen_error closed form") {
  const MomentMatrix m{Eigen::Matrix3d::Identity()};
  const TestChannelParams ch = params_from_distortion(16.0, 8.0);
  CHECK(expected_gen_error(100, 16.0, ch, m, m.sigma_tilde) == doctest::Approx(16.96));

  const PolynomialSource s = reference_source();
  const MomentMatrix ms = moment_matrix(s);
  CHECK(expected_gen_error(50, 16.0, ch, ms, ms.sigma_tilde) == doctest::Approx(16.0 + 32.0 * 3 / 50));
  CHECK_THROWS_AS(expected_gen_error(50, 16.0, ch, ms, Eigen::Matrix3d::Zero()), Error);
}

TEST_CASE("expected_gen_error replicate average matches simulated G") {
  const PolynomialSource s = reference_source();
  const TestChannelParams ch = params_from_distortion(16.0, 8.0);
  const ReplicateStudy study = simulate_gen_error(s, ch, 1000, 4000, Stream(77));
  std::vector<double> diff(study.gen_error.size());
  for (std::size_t r = 0; r < diff.size(); ++r) diff[r] = study.gen_error[r] - study.closed_form[r];
  CHECK(std::abs(study.report.mc_estimate - study.report.closed_form_conditional) <
        3.0 * study.report.mc_std_error);
  CHECK(std::abs(oracle::mean(diff)) < 3.0 * std::sqrt(oracle::variance(diff) / diff.size()));
}

TEST_CASE("expected_gen_error stays below the upper bound for well-estimated designs") {
  const PolynomialSource s = reference_source();
  const TestChannelParams ch = params_from_distortion(16.0, 8.0);
  const MomentMatrix m = moment_matrix(s);
  const double lambda_min = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m.sigma_tilde).eigenvalues().minCoeff();
  Stream rng(4);
  int compared = 0;
  for (std::size_t n : {100, 300, 1000, 3000}) {
    for (int rep = 0; rep < 50; ++rep) {
      const SampleBatch b = sample_pairs(s, n, rng);
      const Eigen::MatrixXd sigma = factor_design(b.y, 3).empirical_sigma();
      const double gap = Eigen::JacobiSVD<Eigen::MatrixXd>(m.sigma_tilde - sigma).singularValues()[0];
      if (gap >= lambda_min) continue;
      ++compared;
      CHECK(expected_gen_error(n, 16.0, ch, m, sigma) <= gen_error_upper_bound(n, 3, 16.0, ch, m));
      CHECK(finite_n_trace_bound(m, sigma) >= (sigma.ldlt().solve(m.sigma_tilde)).trace());
    }
  }
  CHECK(compared > 100);
}

TEST_CASE("gen_error_upper_bound") {
  const TestChannelParams ch = params_from_distortion(16.0, 8.0);
  const MomentMatrix identity{Eigen::Matrix3d::Identity()};
  CHECK(gen_error_upper_bound(200, 3, 16.0, ch, identity) == doctest::Approx(16.0 + 32.0 * 3 / 200));

  // Eigenvalues of the uniform k = 3 moment matrix: 1/3 and 0.6 +- sqrt(0.36 - (1/5 - 1/9)).
  const MomentMatrix m = moment_matrix(reference_source());
  const double disc = std::sqrt(0.36 - (0.2 - 1.0 / 9.0));
  const double c_oracle = (0.6 + disc) / (0.6 - disc);
  CHECK(moment_condition_constant(m) == doctest::Approx(c_oracle).epsilon(1e-12));
  CHECK(gen_error_upper_bound(100, 3, 16.0, ch, m) == doctest::Approx(16.0 + 32.0 * 3 * c_oracle / 100));

  const double at_n = gen_error_upper_bound(400, 3, 16.0, ch, m) - 16.0;
  const double at_2n = gen_error_upper_bound(800, 3, 16.0, ch, m) - 16.0;
  CHECK(at_2n == doctest::Approx(at_n / 2));
  CHECK_THROWS_AS(gen_error_upper_bound(10, 2, 16.0, ch, MomentMatrix{Eigen::Matrix2d::Zero()}), Error);
}

TEST_CASE("ruhe_check") {
  Stream rng(5);
  const Eigen::MatrixXd b = random_psd(rng, 4);
  const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(b).eigenvalues();
  CHECK(b.trace() == doctest::Approx(ev.sum()));
  CHECK(ruhe_check(Eigen::MatrixXd::Identity(4, 4), b));

  Eigen::Matrix2d a2 = Eigen::Vector2d(2, 1).asDiagonal(), b2 = Eigen::Vector2d(1, 2).asDiagonal();
  CHECK((a2 * b2).trace() == 4.0);
  CHECK(ruhe_check(a2, b2));

  int failures = 0;
  for (int t = 0; t < 1000; ++t) {
    const Eigen::Index dim = 2 + t % 5;
    if (!ruhe_check(random_psd(rng, dim), random_psd(rng, dim))) ++failures;
  }
  CHECK(failures == 0);

  Eigen::Matrix2d asym;
  asym << 1, 2, 0, 1;
  CHECK_THROWS_AS(ruhe_check(asym, b2), Error);
}

TEST_CASE("min_eig_bound_check") {
  Stream rng(6);
  const Eigen::MatrixXd b = random_symmetric(rng, 5);
  CHECK(min_eig_bound_check(b, b));
  const double eps = 0.37;
  const Eigen::MatrixXd shifted = b + eps * Eigen::MatrixXd::Identity(5, 5);
  CHECK(min_eig_bound_check(shifted, b));
  const double lmin_b = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(b).eigenvalues().minCoeff();
  const double lmin_s = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(shifted).eigenvalues().minCoeff();
  CHECK(lmin_s == doctest::Approx(lmin_b + eps));

  int failures = 0;
  for (int t = 0; t < 1000; ++t) {
    const Eigen::Index dim = 2 + t % 5;
    if (!min_eig_bound_check(random_symmetric(rng, dim), random_symmetric(rng, dim))) ++failures;
  }
  CHECK(failures == 0);

  Eigen::Matrix2d asym;
  asym << 1, 2, 0, 1;
  CHECK_THROWS_AS(min_eig_bound_check(asym, Eigen::Matrix2d::Identity()), Error);
}

TEST_CASE("generalization error floor and 1/n convergence envelope") {
  const PolynomialSource s = reference_source();
  const TestChannelParams ch = params_from_distortion(16.0, 8.0);
  const double c = moment_condition_constant(moment_matrix(s));
  for (std::size_t n : {200, 500, 1000, 5000}) {
    const ReplicateStudy study = simulate_gen_error(s, ch, n, 1500, Stream(1000 + n));
    for (double g : study.gen_error) REQUIRE(g >= s.sigma2);
    const double scaled = (study.report.mc_estimate - s.sigma2) * static_cast<double>(n);
    CHECK(scaled <= (s.sigma2 + ch.sigma_phi2) * 3 * c * 1.1);
    CHECK(study.report.upper_bound >= study.report.closed_form_conditional);
  }
}
