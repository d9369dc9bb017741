#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "wzreg/error.hpp"
#include "wzreg/experiments/runners.hpp"
#include "wzreg/parallel.hpp"
#include "wzreg/quadrature.hpp"
#include "wzreg/stats.hpp"

namespace wzreg::experiments {

namespace {

struct Suite {
  const ExperimentConfig& config;
  unsigned threads;
  Stream root;
  PropertyReport report;

  Stream stream(std::size_t index) const { return root.substream(index); }

  // statistic <= threshold passes.
  void at_most(std::string name, std::string module, std::string statistic_name, double statistic,
               double threshold, std::string detail = {}) {
    report.entries.push_back({std::move(name), std::move(module), std::move(statistic_name),
                              statistic, threshold, statistic <= threshold, std::move(detail)});
  }
  // statistic >= threshold passes.
  void at_least(std::string name, std::string module, std::string statistic_name, double statistic,
                double threshold, std::string detail = {}) {
    report.entries.push_back({std::move(name), std::move(module), std::move(statistic_name),
                              statistic, threshold, statistic >= threshold, std::move(detail)});
  }
};

PolynomialSource reference_source() {
  PolynomialSource s;
  s.beta = Eigen::Vector3d(2.0, 3.0, 1.0);
  s.sigma2 = 16.0;
  s.y_law = UniformSymmetric{1.0};
  return s;
}

// Source used by the density checks: the configured one when its density is
// available, the reference setup otherwise.
std::pair<PolynomialSource, std::string> density_source(const PolynomialSource& configured) {
  try {
    require_density_support(configured);
    return {configured, "configured source"};
  } catch (const Error&) {
    return {reference_source(), "configured source has no closed density; used beta=[2,3,1], U[-1,1]"};
  }
}

double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf) {
  std::sort(samples.begin(), samples.end());
  const double m = static_cast<double>(samples.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = cdf(samples[i]);
    worst = std::max({worst, f - static_cast<double>(i) / m, static_cast<double>(i + 1) / m - f});
  }
  return worst;
}

// P(b0 + b1 y + b2 y^2 <= v) for Y ~ U[-a, a], b2 > 0.
double quadratic_image_cdf(const Eigen::VectorXd& beta, double a, double v) {
  const double disc = beta[1] * beta[1] - 4.0 * beta[2] * (beta[0] - v);
  if (disc <= 0.0) return 0.0;
  const double root = std::sqrt(disc);
  const double lo = std::max(-a, (-beta[1] - root) / (2.0 * beta[2]));
  const double hi = std::min(a, (-beta[1] + root) / (2.0 * beta[2]));
  return std::clamp((hi - lo) / (2.0 * a), 0.0, 1.0);
}

// Mean and standard deviation of U = alpha (V + N + Phi).
std::pair<double, double> u_location(const PolynomialSource& s, const TestChannelParams& ch) {
  const MomentMatrix moment = moment_matrix(s);
  const Eigen::Index k = s.beta.size();
  double mean_v = 0.0;
  for (Eigen::Index i = 0; i < k; ++i) mean_v += s.beta[i] * moment.sigma_tilde(0, i);
  const double var_v = s.beta.dot(moment.sigma_tilde * s.beta) - mean_v * mean_v;
  return {ch.alpha * mean_v, ch.alpha * std::sqrt(std::max(0.0, var_v) + s.sigma2 + ch.sigma_phi2)};
}

void source_model_checks(Suite& suite) {
  {
    Stream rng = suite.stream(0);
    double worst = 0.0;
    for (int t = 0; t < 2000; ++t) {
      const double y = -10.0 + 20.0 * rng.uniform();
      const FeatureVector f = features(y, 8);
      for (int i = 0; i < 8; ++i) {
        const double expect = std::pow(y, i);
        worst = std::max(worst, std::abs(f[i] - expect) / std::max(1.0, std::abs(expect)));
      }
    }
    suite.at_most("features_are_powers", "source_model", "max_relative_error", worst, 1e-12);
  }
  {
    double worst = std::numeric_limits<double>::infinity();
    const SideInfoLaw laws[] = {UniformSymmetric{1.0}, GaussianY{1.0}, suite.config.source.y_law};
    for (const auto& law : laws) {
      for (std::size_t k = 1; k <= 8; ++k) {
        PolynomialSource s;
        s.beta = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(k));
        s.sigma2 = 1.0;
        s.y_law = law;
        const Eigen::VectorXd eig =
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(moment_matrix(s).sigma_tilde).eigenvalues();
        worst = std::min(worst, eig.minCoeff() / std::max(1.0, eig.maxCoeff()));
      }
    }
    suite.at_least("moment_matrix_psd", "source_model", "min_scaled_eigenvalue", worst, -1e-12);
  }

  const auto [source, note] = density_source(suite.config.source);
  const double a = std::get<UniformSymmetric>(source.y_law).half_width;
  const TestChannelParams channel = suite.config.channel.resolve(suite.config.source.sigma2);
  const std::size_t m = suite.config.samples.property_draws;
  {
    const std::vector<double> points = density_v_breakpoints(source);
    const double vertex = -source.beta[1] / (2.0 * source.beta[2]);
    const bool singular = vertex > -a && vertex < a;
    double total = 0.0, lowest = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < points.size(); ++i) {
      const double lo = points[i], hi = points[i + 1];
      if (i == 0 && singular) {
        // v = lo + t^2 removes the inverse square-root singularity at the vertex value.
        total += integrate([&](double t) { return 2.0 * t * density_v(source, lo + t * t); }, 0.0,
                           std::sqrt(hi - lo)).value;
      } else {
        total += integrate([&](double v) { return density_v(source, v); }, lo, hi).value;
      }
      for (int j = 0; j <= 200; ++j) {
        lowest = std::min(lowest, density_v(source, lo + (hi - lo) * j / 200.0));
      }
    }
    const bool ok = lowest >= 0.0;
    suite.at_most("density_v_normalized", "source_model", "abs_integral_minus_one",
                  ok ? std::abs(total - 1.0) : std::numeric_limits<double>::infinity(), 1e-6, note);
  }
  {
    Stream rng = suite.stream(1);
    std::vector<double> v(m);
    for (auto& x : v) x = polynomial_value(source.beta, sample_y(source.y_law, rng));
    const double ks = ks_statistic(std::move(v), [&](double x) {
      return quadratic_image_cdf(source.beta, a, x);
    });
    suite.at_most("density_v_matches_samples", "source_model", "ks_distance", ks, 0.005, note);
  }

  const auto [center, spread] = u_location(source, channel);
  const double u_lo = center - 14.0 * spread, u_hi = center + 14.0 * spread;
  const int cells = 2800;
  std::vector<double> grid(cells + 1), cdf(cells + 1, 0.0);
  for (int i = 0; i <= cells; ++i) grid[i] = u_lo + (u_hi - u_lo) * i / cells;
  std::vector<double> mass(cells);
  parallel_for(static_cast<std::size_t>(cells), suite.threads, [&](std::size_t i) {
    mass[i] = integrate([&](double u) { return density_u(source, channel, u); }, grid[i],
                        grid[i + 1]).value;
  });
  CompensatedSum running;
  for (int i = 0; i < cells; ++i) {
    running.add(mass[i]);
    cdf[i + 1] = running.value();
  }
  suite.at_most("density_u_normalized", "source_model", "abs_integral_minus_one",
                std::abs(cdf.back() - 1.0), 1e-6, note);
  {
    Stream rng = suite.stream(2);
    const SampleBatch batch = sample_pairs(source, m, rng);
    const std::vector<double> u = apply(batch.x, channel, rng);
    const double ks = ks_statistic(u, [&](double x) {
      if (x <= u_lo) return 0.0;
      if (x >= u_hi) return 1.0;
      const double pos = (x - u_lo) / (u_hi - u_lo) * cells;
      const auto i = std::min(static_cast<std::size_t>(pos), static_cast<std::size_t>(cells - 1));
      const double w = pos - static_cast<double>(i);
      return (1.0 - w) * cdf[i] + w * cdf[i + 1];
    });
    suite.at_most("density_u_matches_samples", "source_model", "ks_distance", ks, 0.01, note);
  }
}

void test_channel_checks(Suite& suite) {
  const double sigma2 = suite.config.source.sigma2;
  const TestChannelParams channel = suite.config.channel.resolve(sigma2);
  const std::size_t m = suite.config.samples.property_draws;
  {
    double worst = 0.0;
    for (int i = 1; i <= 20; ++i) {
      const double d = sigma2 * i / 21.0;
      const RateSummary r = rates(sigma2, params_from_distortion(sigma2, d));
      worst = std::max({worst, std::abs(r.r_wz - r.r_conditional), std::abs(r.r_b - r.r_conditional)});
    }
    suite.at_most("rates_coincide", "test_channel", "max_abs_difference", worst, 1e-12);
  }
  {
    // The encoder may run with a perturbed noise variance while the decoder
    // keeps the nominal channel.
    TestChannelParams encoder = channel;
    std::string detail = "encoder matches decoder";
    if (suite.config.options.fault == FaultMode::sigma_phi2_mismatch) {
      encoder.sigma_phi2 *= suite.config.options.fault_scale;
      std::ostringstream s;
      s << "fault injected: encoder sigma_phi2 scaled by " << suite.config.options.fault_scale;
      detail = s.str();
    }
    Stream rng = suite.stream(3);
    const SampleBatch batch = sample_pairs(suite.config.source, m, rng);
    const std::vector<double> u = apply(batch.x, encoder, rng);
    const std::vector<double> x_hat = reconstruct(u, batch.y, suite.config.source.beta, channel);
    std::vector<double> squared(m);
    for (std::size_t i = 0; i < m; ++i) squared[i] = std::pow(batch.x[i] - x_hat[i], 2);
    const MeanEstimate est = mean_estimate(squared);
    const double closed = std::pow(1.0 - channel.alpha, 2) * sigma2 +
                          channel.alpha * channel.alpha * channel.sigma_phi2;
    const double z = std::abs(est.mean - channel.distortion) / est.std_error;
    const bool closed_ok = std::abs(closed - channel.distortion) <= 1e-12 * channel.distortion;
    suite.at_most("distortion_identity", "test_channel", "z_score",
                  closed_ok ? z : std::numeric_limits<double>::infinity(), 3.0, detail);
  }
  {
    Stream rng = suite.stream(4);
    const SampleBatch batch = sample_pairs(suite.config.source, m, rng);
    const std::vector<double> u = apply(batch.x, channel, rng);
    std::vector<double> phi(m);
    for (std::size_t i = 0; i < m; ++i) phi[i] = u[i] / channel.alpha - batch.x[i];
    const MeanEstimate mx = mean_estimate(batch.x), mp = mean_estimate(phi);
    CompensatedSum cross;
    for (std::size_t i = 0; i < m; ++i) cross.add((batch.x[i] - mx.mean) * (phi[i] - mp.mean));
    const double corr =
        cross.value() / static_cast<double>(m - 1) / std::sqrt(mx.variance * mp.variance);
    suite.at_most("channel_noise_independent", "test_channel", "abs_correlation_times_sqrt_m",
                  std::abs(corr) * std::sqrt(static_cast<double>(m)), 3.0);
  }
  {
    const double sigma = std::sqrt(sigma2);
    double violations = 0.0, previous = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= 200; ++i) {
      const double bound = raginsky_sqrt_bound(0.05 * i, sigma2);
      if (!(bound > sigma) || !(bound < previous)) violations += 1.0;
      previous = bound;
    }
    suite.at_most("raginsky_bound_monotone", "test_channel", "violations", violations, 0.0);
  }
}

void regression_checks(Suite& suite) {
  const ExperimentConfig& config = suite.config;
  const std::size_t replicates = config.samples.replicates;
  {
    struct Case { std::size_t k, n; double d; };
    const Case cases[] = {{3, 200, 8.0}, {3, 1000, 4.0}, {2, 500, 12.0}};
    double worst = 0.0;
    for (std::size_t c = 0; c < std::size(cases); ++c) {
      PolynomialSource s = reference_source();
      s.beta = s.beta.head(static_cast<Eigen::Index>(cases[c].k)).eval();
      const ReplicateStudy study = simulate_gen_error(
          s, params_from_distortion(s.sigma2, cases[c].d), cases[c].n, replicates,
          suite.stream(10 + c), suite.threads);
      for (Eigen::Index i = 0; i < s.beta.size(); ++i) {
        std::vector<double> err(replicates);
        for (std::size_t r = 0; r < replicates; ++r) err[r] = study.beta_hat[r][i] - s.beta[i];
        const MeanEstimate e = mean_estimate(err);
        worst = std::max(worst, std::abs(e.mean) / e.std_error);
      }
    }
    suite.at_most("ols_unbiased", "regression", "max_abs_z", worst, 3.0);
  }
  const TestChannelParams channel = config.channel.resolve(config.source.sigma2);
  const MomentMatrix moment = moment_matrix(config.source);
  const std::size_t k = static_cast<std::size_t>(config.source.beta.size());
  {
    double worst = 0.0;
    const std::size_t m = config.samples.property_draws;
    for (std::size_t t = 0; t < 5; ++t) {
      Stream rng = suite.stream(20 + t);
      const SampleBatch train = sample_pairs(config.source, std::max<std::size_t>(4 * k, 20), rng);
      const std::vector<double> u = apply(train.x, channel, rng);
      const TrainedPredictor p = ols_fit(u, train.y, channel, k);
      const SampleBatch fresh = sample_pairs(config.source, m, rng);
      std::vector<double> loss(m);
      for (std::size_t i = 0; i < m; ++i) {
        loss[i] = std::pow(fresh.x[i] - polynomial_value(p.beta_hat, fresh.y[i]), 2);
      }
      const MeanEstimate e = mean_estimate(loss);
      const double g = gen_error_conditional(p, config.source.beta, moment, config.source.sigma2);
      worst = std::max(worst, std::abs(e.mean - g) / e.std_error);
    }
    suite.at_most("closed_form_matches_inference", "regression", "max_abs_z", worst, 3.0);
  }
  {
    const double envelope = (config.source.sigma2 + channel.sigma_phi2) * static_cast<double>(k) *
                            moment_condition_constant(moment) * 1.1;
    double worst_ratio = 0.0, floor_gap = std::numeric_limits<double>::infinity();
    const std::size_t grid[] = {200, 500, 1000, 5000};
    for (std::size_t i = 0; i < std::size(grid); ++i) {
      const ReplicateStudy study = simulate_gen_error(config.source, channel, grid[i], replicates,
                                                      suite.stream(30 + i), suite.threads);
      const double scaled =
          static_cast<double>(grid[i]) * (study.report.mc_estimate - config.source.sigma2);
      worst_ratio = std::max(worst_ratio, scaled / envelope);
      for (double g : study.gen_error) floor_gap = std::min(floor_gap, g - config.source.sigma2);
    }
    suite.at_most("gen_error_convergence_envelope", "regression",
                  "max_scaled_excess_over_envelope", worst_ratio, 1.0);
    suite.at_least("gen_error_above_floor", "regression", "min_gen_error_minus_sigma2", floor_gap,
                   -1e-12 * config.source.sigma2);
  }
  {
    Stream rng = suite.stream(40);
    double ruhe_failures = 0.0, eig_failures = 0.0;
    for (std::size_t t = 0; t < config.samples.property_instances; ++t) {
      const auto dim = static_cast<Eigen::Index>(2 + t % 5);
      Eigen::MatrixXd ga(dim, dim), gb(dim, dim);
      for (Eigen::Index i = 0; i < dim; ++i) {
        for (Eigen::Index j = 0; j < dim; ++j) {
          ga(i, j) = rng.normal();
          gb(i, j) = rng.normal();
        }
      }
      const Eigen::MatrixXd a = ga * ga.transpose();
      const Eigen::MatrixXd b = gb * gb.transpose();
      const Eigen::MatrixXd sym = 0.5 * (ga + ga.transpose());
      if (!ruhe_check(a, b)) ruhe_failures += 1.0;
      if (!min_eig_bound_check(sym, b)) eig_failures += 1.0;
    }
    suite.at_most("ruhe_trace_inequality", "regression", "failures", ruhe_failures, 0.0);
    suite.at_most("min_eigenvalue_lemma", "regression", "failures", eig_failures, 0.0);
  }
  {
    const std::size_t n = std::max<std::size_t>(4 * k, 50);
    const std::size_t reps = std::min<std::size_t>(replicates, 400);
    const ReplicateStudy one =
        simulate_gen_error(config.source, channel, n, reps, suite.stream(50), 1);
    const ReplicateStudy many = simulate_gen_error(config.source, channel, n, reps,
                                                   suite.stream(50), std::max(4u, suite.threads));
    double mismatches = 0.0;
    for (std::size_t r = 0; r < reps; ++r) {
      if (one.gen_error[r] != many.gen_error[r]) mismatches += 1.0;
    }
    if (one.report.mc_estimate != many.report.mc_estimate) mismatches += 1.0;
    suite.at_most("thread_count_determinism", "regression", "mismatches", mismatches, 0.0);
  }
}

void finite_blocklength_checks(Suite& suite) {
  const ExperimentConfig& config = suite.config;
  PolynomialSource source = density_source(config.source).first;
  const double sigma2 = source.sigma2;
  const std::size_t n = 50;
  const std::size_t m = std::max<std::size_t>(kMinMomentSamples, config.samples.property_draws / 10);
  InfoLossOptions sampling;
  sampling.loss_mode = config.options.loss_mode;
  sampling.threads = suite.threads;

  double worst_rate_z = 0.0;
  MomentSummary reference;
  for (double d : {0.25 * sigma2, 0.5 * sigma2, 0.75 * sigma2}) {
    const TestChannelParams ch = params_from_distortion(sigma2, d);
    const InfoLossBatch batch = sample_info_loss(source, ch, n, m, suite.stream(60), sampling);
    const MomentSummary moments = estimate_moments(batch.samples);
    worst_rate_z = std::max(worst_rate_z, std::abs(moments.j[0] + moments.j[1] - rates(sigma2, ch).r_wz) /
                                              moments.rate_std_error);
    if (d == 0.5 * sigma2) reference = moments;
  }
  suite.at_most("moments_reproduce_rate", "finite_blocklength", "max_abs_z", worst_rate_z, 3.0,
                "distortion at 1/4, 1/2 and 3/4 of sigma2");

  const GaussianCache cache(reference.v, config.samples.gaussian_cache, suite.stream(61));
  {
    Stream rng = suite.stream(62);
    const Eigen::Vector3d scale = reference.v.diagonal().cwiseSqrt();
    double violations = 0.0;
    for (int t = 0; t < 200; ++t) {
      const Eigen::Vector3d b(scale[0] * rng.normal(), scale[1] * rng.normal(), scale[2] * rng.normal());
      const double base = dispersion_prob(reference.v, b, cache);
      for (int axis = 0; axis < 3; ++axis) {
        Eigen::Vector3d up = b;
        up[axis] += scale[axis] * std::abs(rng.normal());
        if (dispersion_prob(reference.v, up, cache) < base) violations += 1.0;
      }
    }
    suite.at_most("dispersion_monotone", "finite_blocklength", "violations", violations, 0.0);
  }

  BoundarySearch search;
  search.directions = config.options.directions;
  search.loss_floor = sigma2;
  const double j3 = reference.j[2];
  const double spread = std::sqrt(reference.v(2, 2) / static_cast<double>(n));
  std::vector<double> levels;
  for (int i = 0; i <= 12; ++i) levels.push_back(j3 + spread * (0.5 * i - 1.0));
  const double epsilons[] = {0.01, 0.1, 0.3};
  std::vector<std::vector<RateLossPoint>> curves;
  double worst_boundary = 0.0;
  std::size_t feasible = 0;
  for (double eps : epsilons) {
    curves.push_back(rate_loss_curve(reference, n, eps, levels, cache, search, suite.threads));
    for (const auto& p : curves.back()) {
      if (p.feasible) {
        ++feasible;
        worst_boundary = std::max(worst_boundary, std::abs(p.boundary_probability - (1.0 - eps)));
      }
    }
  }
  // Fewer than half the points feasible would leave the ordering checks nearly vacuous.
  if (2 * feasible < levels.size() * std::size(epsilons)) {
    worst_boundary = std::numeric_limits<double>::infinity();
  }
  suite.at_most("boundary_probability", "finite_blocklength", "max_abs_deviation", worst_boundary,
                0.003, std::to_string(feasible) + " feasible points");
  {
    double violations = 0.0;
    for (const auto& curve : curves) {
      double previous = std::numeric_limits<double>::infinity();
      for (const auto& p : curve) {
        if (!p.feasible) continue;
        if (p.rate > previous) violations += 1.0;
        previous = p.rate;
      }
    }
    for (std::size_t i = 0; i < levels.size(); ++i) {
      for (std::size_t e = 1; e < curves.size(); ++e) {
        const auto& tight = curves[e - 1][i];
        const auto& loose = curves[e][i];
        if (tight.feasible && (!loose.feasible || loose.rate > tight.rate)) violations += 1.0;
      }
    }
    suite.at_most("rate_monotone_in_l_and_epsilon", "finite_blocklength", "violations",
                  violations, 0.0);
  }
  {
    const RateLossPoint far =
        rate_loss_bound(reference.j, reference.v, 100'000'000, 0.1, j3 + 1.0, cache, search);
    const double gap = far.feasible ? std::abs(far.rate - (reference.j[0] + reference.j[1]))
                                    : std::numeric_limits<double>::infinity();
    suite.at_most("rate_converges_for_large_n", "finite_blocklength", "abs_gap_at_n_1e8", gap, 1e-3);
  }
  {
    const GaussianCache fresh(reference.v, config.samples.gaussian_cache, suite.stream(63));
    double worst = 0.0;
    for (double eps : {0.01, 0.1}) {
      for (double l : {j3 + 0.5 * spread, j3 + 2.0 * spread, j3 + 4.0 * spread}) {
        const auto a = rate_loss_bound(reference.j, reference.v, n, eps, l, cache, search);
        const auto b = rate_loss_bound(reference.j, reference.v, n, eps, l, fresh, search);
        if (a.feasible != b.feasible) {
          worst = std::numeric_limits<double>::infinity();
          continue;
        }
        if (!a.feasible) continue;
        auto tolerance = [&](const GaussianCache& c) {
          return rate_loss_bound(reference.j, reference.v, n, eps - 0.003, l, c, search).rate -
                 rate_loss_bound(reference.j, reference.v, n, eps + 0.003, l, c, search).rate;
        };
        const double allowed = 2.0 * (tolerance(cache) + tolerance(fresh));
        worst = std::max(worst, std::abs(a.rate - b.rate) / allowed);
      }
    }
    suite.at_most("fresh_cache_stability", "finite_blocklength",
                  "max_difference_over_allowed", worst, 1.0);
  }
}

}  // namespace

std::size_t PropertyReport::failures() const {
  return static_cast<std::size_t>(
      std::count_if(entries.begin(), entries.end(), [](const auto& e) { return !e.passed; }));
}

nlohmann::json PropertyReport::to_json() const {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& e : entries) {
    auto number = [](double v) -> nlohmann::json {
      if (std::isfinite(v)) return v;
      return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
    };
    list.push_back({{"name", e.name},
                    {"module", e.module},
                    {"statistic_name", e.statistic_name},
                    {"statistic", number(e.statistic)},
                    {"threshold", number(e.threshold)},
                    {"passed", e.passed},
                    {"detail", e.detail}});
  }
  return {{"total", entries.size()},
          {"passed", entries.size() - failures()},
          {"failed", failures()},
          {"entries", list}};
}

PropertyReport run_property_suite(const ExperimentConfig& config, unsigned threads) {
  validate(config);
  Suite suite{config, std::max(1u, threads), Stream(config.seed), {}};
  source_model_checks(suite);
  test_channel_checks(suite);
  regression_checks(suite);
  finite_blocklength_checks(suite);
  return std::move(suite.report);
}

}  // namespace wzreg::experiments
