#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "wzreg/rng.hpp"
#include "wzreg/source_model.hpp"
#include "wzreg/test_channel.hpp"

namespace wzreg {

/// Designs whose Gram matrix has a larger condition number are rejected.
inline constexpr double kMaxGramCondition = 1e12;

struct TrainedPredictor {
  Eigen::VectorXd beta_hat;
  std::size_t n_train = 0;
  TestChannelParams channel;
};

/// QR factor of the n x k polynomial design built from y.
struct DesignFactor {
  Eigen::MatrixXd r;              // k x k upper triangular, Y*^T = Q R
  double gram_condition = 0.0;    // condition number of Y* Y*^T
  std::size_t n = 0;

  /// (Y* Y*^T)^{-1} = R^{-1} R^{-T}.
  Eigen::MatrixXd gram_inverse() const;
  /// Sigma = Y* Y*^T / n.
  Eigen::MatrixXd empirical_sigma() const;
};

/// Factorizes the design; throws insufficient_data when n < k and
/// ill_conditioned when the Gram condition number exceeds kMaxGramCondition.
DesignFactor factor_design(const std::vector<double>& y, std::size_t k);

/// beta_hat = alpha^{-1} (Y* Y*^T)^{-1} Y* u, solved by Householder QR. The
/// design passes the same gate as factor_design; its factor is written to
/// `factor` when given.
TrainedPredictor ols_fit(const std::vector<double>& u, const std::vector<double>& y,
                         const TestChannelParams& channel, std::size_t k,
                         DesignFactor* factor = nullptr);

/// Cov(beta_hat | y) = (sigma2 + sigma_phi2) (Y* Y*^T)^{-1}.
Eigen::MatrixXd conditional_cov(const std::vector<double>& y, const TestChannelParams& channel,
                                double sigma2, std::size_t k);

/// G = (beta - beta_hat)^T Sigma~ (beta - beta_hat) + sigma2.
double gen_error_conditional(const TrainedPredictor& predictor, const Eigen::VectorXd& beta,
                             const MomentMatrix& moment, double sigma2);

/// sigma2 + (sigma2 + sigma_phi2) / n * Tr(Sigma~ Sigma^{-1}).
double expected_gen_error(std::size_t n, double sigma2, const TestChannelParams& channel,
                          const MomentMatrix& moment, const Eigen::MatrixXd& empirical_sigma);

/// lambda_max(Sigma~) / lambda_min(Sigma~); ill_conditioned when singular.
double moment_condition_constant(const MomentMatrix& moment);

/// sigma2 + (sigma2 + sigma_phi2) / n * k * C with C from moment_condition_constant.
double gen_error_upper_bound(std::size_t n, std::size_t k, double sigma2,
                             const TestChannelParams& channel, const MomentMatrix& moment);

/// Finite-n trace bound k lambda_max(Sigma~) / (lambda_min(Sigma~) - ||Sigma~ - Sigma||).
/// Infinity when the denominator is not positive.
double finite_n_trace_bound(const MomentMatrix& moment, const Eigen::MatrixXd& empirical_sigma);

/// Tr(a b) <= sum_i lambda_i(a) lambda_i(b) + 1e-9, both spectra descending.
bool ruhe_check(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

/// lambda_min(a) >= lambda_min(b) - ||a - b||_2 - 1e-9.
bool min_eig_bound_check(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

/// Monte Carlo summary of the training-set generalization error.
struct GenErrorReport {
  double mc_estimate = 0.0;               // replicate mean of G
  double mc_std_error = 0.0;
  double closed_form_conditional = 0.0;   // replicate mean of the trace form with realized Sigma
  double closed_form_std_error = 0.0;
  double expected_closed_form = 0.0;      // trace form with Sigma = Sigma~
  double upper_bound = 0.0;
  double trace_bound_diagnostic = 0.0;    // replicate mean of finite_n_trace_bound
  std::size_t replicates = 0;
};

struct ReplicateStudy {
  std::vector<double> gen_error;        // G per replicate
  std::vector<double> closed_form;      // trace form per replicate
  std::vector<Eigen::VectorXd> beta_hat;
  GenErrorReport report;
};

/// Replicate r uses rng.substream(r): n training pairs, the channel, OLS, then
/// the exact conditional generalization error.
ReplicateStudy simulate_gen_error(const PolynomialSource& source, const TestChannelParams& channel,
                                  std::size_t n, std::size_t replicates, const Stream& rng,
                                  unsigned threads = 1);

}  // namespace wzreg
