#include "wzreg/regression.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "wzreg/error.hpp"
#include "wzreg/parallel.hpp"
#include "wzreg/stats.hpp"

namespace wzreg {
namespace {

Eigen::MatrixXd design_matrix(const std::vector<double>& y, std::size_t k) {
  Eigen::MatrixXd a(static_cast<Eigen::Index>(y.size()), static_cast<Eigen::Index>(k));
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!std::isfinite(y[i])) fail(ErrorCode::rejected_input, "side information must be finite");
    double power = 1.0;
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      a(static_cast<Eigen::Index>(i), j) = power;
      power *= y[i];
    }
  }
  return a;
}

void require_symmetric(const Eigen::MatrixXd& m, const char* name) {
  if (m.rows() != m.cols()) fail(ErrorCode::rejected_input, std::string(name) + " must be square");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    fail(ErrorCode::rejected_input, std::string(name) + " must be symmetric");
  }
}

Eigen::VectorXd eigenvalues_descending(const Eigen::MatrixXd& m) {
  Eigen::VectorXd values = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m, Eigen::EigenvaluesOnly).eigenvalues();
  return values.reverse();
}

double spectral_norm(const Eigen::MatrixXd& symmetric) {
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(symmetric, Eigen::EigenvaluesOnly)
      .eigenvalues()
      .cwiseAbs()
      .maxCoeff();
}

DesignFactor factor_from_qr(const Eigen::HouseholderQR<Eigen::MatrixXd>& qr) {
  const Eigen::Index k = qr.matrixQR().cols();
  DesignFactor out;
  out.n = static_cast<std::size_t>(qr.matrixQR().rows());
  out.r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  const Eigen::VectorXd singular = Eigen::JacobiSVD<Eigen::MatrixXd>(out.r).singularValues();
  const double ratio = singular[0] / singular[k - 1];
  out.gram_condition = std::isfinite(ratio) ? ratio * ratio : std::numeric_limits<double>::infinity();
  if (!(out.gram_condition < kMaxGramCondition)) {
    fail(ErrorCode::ill_conditioned,
         "design Gram matrix condition number " + std::to_string(out.gram_condition) +
             " exceeds limit");
  }
  return out;
}

void require_enough_samples(std::size_t n, std::size_t k) {
  if (k < 1) fail(ErrorCode::rejected_input, "k must be at least 1");
  if (n < k) {
    fail(ErrorCode::insufficient_data,
         "need at least k = " + std::to_string(k) + " samples, got " + std::to_string(n));
  }
}

}  // namespace

Eigen::MatrixXd DesignFactor::gram_inverse() const {
  const Eigen::Index k = r.rows();
  const Eigen::MatrixXd r_inv =
      r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(k, k));
  return r_inv * r_inv.transpose();
}

Eigen::MatrixXd DesignFactor::empirical_sigma() const {
  return (r.transpose() * r) / static_cast<double>(n);
}

DesignFactor factor_design(const std::vector<double>& y, std::size_t k) {
  require_enough_samples(y.size(), k);
  return factor_from_qr(Eigen::HouseholderQR<Eigen::MatrixXd>(design_matrix(y, k)));
}

TrainedPredictor ols_fit(const std::vector<double>& u, const std::vector<double>& y,
                         const TestChannelParams& channel, std::size_t k, DesignFactor* factor) {
  if (u.size() != y.size()) fail(ErrorCode::rejected_input, "u and y lengths differ");
  require_enough_samples(y.size(), k);
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(design_matrix(y, k));
  DesignFactor gate = factor_from_qr(qr);
  const Eigen::Map<const Eigen::VectorXd> target(u.data(), static_cast<Eigen::Index>(u.size()));
  TrainedPredictor out;
  out.beta_hat = qr.solve(target) / channel.alpha;
  out.n_train = y.size();
  out.channel = channel;
  if (!out.beta_hat.allFinite()) {
    fail(ErrorCode::numerical_failure, "OLS produced non-finite coefficients");
  }
  if (factor != nullptr) *factor = std::move(gate);
  return out;
}

Eigen::MatrixXd conditional_cov(const std::vector<double>& y, const TestChannelParams& channel,
                                double sigma2, std::size_t k) {
  return (sigma2 + channel.sigma_phi2) * factor_design(y, k).gram_inverse();
}

double gen_error_conditional(const TrainedPredictor& predictor, const Eigen::VectorXd& beta,
                             const MomentMatrix& moment, double sigma2) {
  if (predictor.beta_hat.size() != beta.size() || moment.sigma_tilde.rows() != beta.size()) {
    fail(ErrorCode::rejected_input, "dimension mismatch in generalization error");
  }
  const Eigen::VectorXd gap = beta - predictor.beta_hat;
  return gap.dot(moment.sigma_tilde * gap) + sigma2;
}

double expected_gen_error(std::size_t n, double sigma2, const TestChannelParams& channel,
                          const MomentMatrix& moment, const Eigen::MatrixXd& empirical_sigma) {
  require_symmetric(empirical_sigma, "empirical Sigma");
  const Eigen::VectorXd spectrum = eigenvalues_descending(empirical_sigma);
  const double lowest = spectrum[spectrum.size() - 1];
  if (!(lowest > 0.0) || !(spectrum[0] / lowest < kMaxGramCondition)) {
    fail(ErrorCode::ill_conditioned, "empirical Sigma is singular or ill-conditioned");
  }
  const double trace = empirical_sigma.ldlt().solve(moment.sigma_tilde).trace();
  return sigma2 + (sigma2 + channel.sigma_phi2) / static_cast<double>(n) * trace;
}

double moment_condition_constant(const MomentMatrix& moment) {
  const Eigen::VectorXd spectrum = eigenvalues_descending(moment.sigma_tilde);
  const double lowest = spectrum[spectrum.size() - 1];
  if (!(lowest > 0.0)) fail(ErrorCode::ill_conditioned, "moment matrix is singular");
  return spectrum[0] / lowest;
}

double gen_error_upper_bound(std::size_t n, std::size_t k, double sigma2,
                             const TestChannelParams& channel, const MomentMatrix& moment) {
  const double c = moment_condition_constant(moment);
  return sigma2 + (sigma2 + channel.sigma_phi2) / static_cast<double>(n) *
                      static_cast<double>(k) * c;
}

double finite_n_trace_bound(const MomentMatrix& moment, const Eigen::MatrixXd& empirical_sigma) {
  const Eigen::VectorXd spectrum = eigenvalues_descending(moment.sigma_tilde);
  const double denominator =
      spectrum[spectrum.size() - 1] - spectral_norm(moment.sigma_tilde - empirical_sigma);
  if (!(denominator > 0.0)) return std::numeric_limits<double>::infinity();
  return static_cast<double>(spectrum.size()) * spectrum[0] / denominator;
}

bool ruhe_check(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  require_symmetric(a, "a");
  require_symmetric(b, "b");
  if (a.rows() != b.rows()) fail(ErrorCode::rejected_input, "dimension mismatch");
  const double lhs = (a * b).trace();
  const double rhs = eigenvalues_descending(a).dot(eigenvalues_descending(b));
  return lhs <= rhs + 1e-9;
}

bool min_eig_bound_check(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  require_symmetric(a, "a");
  require_symmetric(b, "b");
  if (a.rows() != b.rows()) fail(ErrorCode::rejected_input, "dimension mismatch");
  const double min_a = eigenvalues_descending(a).minCoeff();
  const double min_b = eigenvalues_descending(b).minCoeff();
  return min_a >= min_b - spectral_norm(a - b) - 1e-9;
}

ReplicateStudy simulate_gen_error(const PolynomialSource& source, const TestChannelParams& channel,
                                  std::size_t n, std::size_t replicates, const Stream& rng,
                                  unsigned threads) {
  source.validate();
  validate(channel);
  if (replicates < 2) fail(ErrorCode::rejected_input, "need at least two replicates");
  const MomentMatrix moment = moment_matrix(source);
  const std::size_t k = source.k();

  ReplicateStudy study;
  study.gen_error.resize(replicates);
  study.closed_form.resize(replicates);
  study.beta_hat.resize(replicates);
  std::vector<double> trace_bound(replicates);

  parallel_for(replicates, threads, [&](std::size_t r) {
    Stream stream = rng.substream(r);
    const SampleBatch batch = sample_pairs(source, n, stream);
    const std::vector<double> u = apply(batch.x, channel, stream);
    DesignFactor factor;
    const TrainedPredictor predictor = ols_fit(u, batch.y, channel, k, &factor);
    const Eigen::MatrixXd sigma = factor.empirical_sigma();
    study.gen_error[r] = gen_error_conditional(predictor, source.beta, moment, source.sigma2);
    study.closed_form[r] = expected_gen_error(n, source.sigma2, channel, moment, sigma);
    study.beta_hat[r] = predictor.beta_hat;
    trace_bound[r] = finite_n_trace_bound(moment, sigma);
  });

  const MeanEstimate g = mean_estimate(study.gen_error);
  const MeanEstimate closed = mean_estimate(study.closed_form);
  GenErrorReport& report = study.report;
  report.replicates = replicates;
  report.mc_estimate = g.mean;
  report.mc_std_error = g.std_error;
  report.closed_form_conditional = closed.mean;
  report.closed_form_std_error = closed.std_error;
  report.expected_closed_form =
      source.sigma2 + (source.sigma2 + channel.sigma_phi2) * static_cast<double>(k) / static_cast<double>(n);
  report.upper_bound = gen_error_upper_bound(n, k, source.sigma2, channel, moment);
  report.trace_bound_diagnostic = mean_estimate(trace_bound).mean;
  return study;
}

}  // namespace wzreg
