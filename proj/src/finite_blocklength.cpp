#include "wzreg/finite_blocklength.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

#include "wzreg/error.hpp"
#include "wzreg/parallel.hpp"
#include "wzreg/regression.hpp"
#include "wzreg/stats.hpp"

namespace wzreg {
namespace {

constexpr double kLog2E = std::numbers::log2e;
constexpr std::size_t kMaxRejectionsPerDraw = 1000;

double log2_gaussian(double value, double mean, double variance) {
  const double d = value - mean;
  return -0.5 * std::log2(2.0 * std::numbers::pi * variance) - kLog2E * d * d / (2.0 * variance);
}

void require_psd(const Eigen::Matrix3d& v) {
  const double scale = std::max(1.0, v.cwiseAbs().maxCoeff());
  if (!v.allFinite() || (v - v.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    fail(ErrorCode::rejected_input, "covariance must be finite and symmetric");
  }
  const Eigen::Vector3d spectrum = Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(v).eigenvalues();
  if (spectrum.minCoeff() < -1e-10 * std::max(1.0, spectrum.maxCoeff())) {
    fail(ErrorCode::rejected_input, "covariance must be positive semidefinite");
  }
}

/// Boundary of {(b1, b2) : #(B1 <= b1, B2 <= b2, B3 <= b3*) >= need} seen
/// along rays from the corner of the marginal quantiles.
class BoundarySweep {
 public:
  BoundarySweep(const std::vector<double>& f1, const std::vector<double>& f2, std::size_t target) {
    corner_ = {order_statistic(f1, target), order_statistic(f2, target)};
    for (std::size_t i = 0; i < f1.size(); ++i) {
      if (f1[i] > corner_[0] || f2[i] > corner_[1]) {
        out1_.push_back(f1[i] - corner_[0]);
        out2_.push_back(f2[i] - corner_[1]);
      }
    }
    const std::size_t inside = f1.size() - out1_.size();
    still_needed_ = target > inside ? target - inside : 0;
    entry_.resize(out1_.size());
  }

  /// Smallest radius r >= 0 with the ray point corner + r (cos t, sin t) on
  /// the level set. Exact on the empirical measure: it is the order
  /// statistic of the radii at which each outside draw enters the orthant.
  Eigen::Vector2d point(double angle) {
    const double d1 = std::cos(angle), d2 = std::sin(angle);
    double radius = 0.0;
    if (still_needed_ > 0) {
      for (std::size_t i = 0; i < out1_.size(); ++i) {
        entry_[i] = std::max(out1_[i] / d1, out2_[i] / d2);
      }
      auto nth = entry_.begin() + static_cast<std::ptrdiff_t>(still_needed_ - 1);
      std::nth_element(entry_.begin(), nth, entry_.end());
      radius = *nth;
    }
    if (!std::isfinite(radius)) fail(ErrorCode::numerical_failure, "boundary radius is not finite");
    return {corner_[0] + radius * d1, corner_[1] + radius * d2};
  }

 private:
  static double order_statistic(std::vector<double> values, std::size_t rank) {
    auto nth = values.begin() + static_cast<std::ptrdiff_t>(rank - 1);
    std::nth_element(values.begin(), nth, values.end());
    return *nth;
  }

  std::array<double, 2> corner_{};
  std::vector<double> out1_, out2_, entry_;
  std::size_t still_needed_ = 0;
};

}  // namespace

double log2_density_u_given_y(const PolynomialSource& source, const TestChannelParams& channel,
                              double u, double y) {
  const double alpha = channel.alpha;
  return log2_gaussian(u, alpha * polynomial_value(source.beta, y),
                       alpha * alpha * (source.sigma2 + channel.sigma_phi2));
}

double log2_density_u_given_x(const TestChannelParams& channel, double u, double x) {
  const double alpha = channel.alpha;
  return log2_gaussian(u, alpha * x, alpha * alpha * channel.sigma_phi2);
}

InfoLossBatch sample_info_loss(const PolynomialSource& source, const TestChannelParams& channel,
                               std::size_t n, std::size_t m, const Stream& rng,
                               const InfoLossOptions& options) {
  require_density_support(source);
  validate(channel);
  if (m < 1) fail(ErrorCode::rejected_input, "need at least one information-loss sample");
  const std::size_t k = source.k();
  if (n < k) fail(ErrorCode::insufficient_data, "training length must be at least k");

  const MomentMatrix moment = moment_matrix(source);
  const double noise_sd = std::sqrt(source.sigma2);
  const double phi_sd = std::sqrt(channel.sigma_phi2);
  const Stream single_letter = rng.substream(0);
  const Stream training = rng.substream(1);

  InfoLossBatch batch;
  batch.samples.resize(m);
  std::vector<std::size_t> rejected(m, 0);

  parallel_for(m, options.threads, [&](std::size_t i) {
    InfoLossSample& out = batch.samples[i];
    Stream draw = single_letter.substream(i);
    for (;;) {
      const double y = sample_y(source.y_law, draw);
      const double x = polynomial_value(source.beta, y) + noise_sd * draw.normal();
      const double u = channel.alpha * (x + phi_sd * draw.normal());
      const double p_u = density_u(source, channel, u);
      if (!(p_u >= DBL_MIN) || !std::isfinite(p_u)) {
        if (++rejected[i] > kMaxRejectionsPerDraw) {
          fail(ErrorCode::numerical_failure, "P_U underflow persisted across redraws");
        }
        continue;
      }
      const double log2_pu = std::log2(p_u);
      out.v1 = -(log2_density_u_given_y(source, channel, u, y) - log2_pu);
      out.v2 = log2_density_u_given_x(channel, u, x) - log2_pu;
      break;
    }
    if (options.rate_terms_only) return;

    Stream train = training.substream(i);
    const SampleBatch pairs = sample_pairs(source, n, train);
    const std::vector<double> coded = apply(pairs.x, channel, train);
    const TrainedPredictor predictor = ols_fit(coded, pairs.y, channel, k);
    if (options.loss_mode == LossMode::per_sample) {
      const double y_new = sample_y(source.y_law, train);
      const double x_new = polynomial_value(source.beta, y_new) + noise_sd * train.normal();
      const double residual = x_new - polynomial_value(predictor.beta_hat, y_new);
      out.v3 = residual * residual;
    } else {
      out.v3 = gen_error_conditional(predictor, source.beta, moment, source.sigma2);
    }
  });

  for (std::size_t r : rejected) batch.rejected += r;
  return batch;
}

MomentSummary estimate_moments(std::span<const InfoLossSample> samples) {
  const std::size_t m = samples.size();
  if (m < kMinMomentSamples) {
    fail(ErrorCode::insufficient_samples, "moment estimation needs at least " +
                                              std::to_string(kMinMomentSamples) + " samples, got " +
                                              std::to_string(m));
  }
  std::array<std::vector<double>, 3> columns;
  std::vector<double> rate(m);
  for (auto& c : columns) c.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    columns[0][i] = samples[i].v1;
    columns[1][i] = samples[i].v2;
    columns[2][i] = samples[i].v3;
    rate[i] = samples[i].v1 + samples[i].v2;
  }

  MomentSummary out;
  out.m_samples = m;
  for (int a = 0; a < 3; ++a) {
    const MeanEstimate est = mean_estimate(columns[a]);
    out.j[a] = est.mean;
    out.j_std_error[a] = est.std_error;
  }
  out.rate_std_error = mean_estimate(rate).std_error;

  for (int a = 0; a < 3; ++a) {
    for (int b = a; b < 3; ++b) {
      CompensatedSum sum;
      for (std::size_t i = 0; i < m; ++i) {
        sum.add((columns[a][i] - out.j[a]) * (columns[b][i] - out.j[b]));
      }
      out.v(a, b) = out.v(b, a) = sum.value() / static_cast<double>(m - 1);
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(out.v);
  const Eigen::Vector3d floored = eig.eigenvalues().cwiseMax(0.0);
  out.v = eig.eigenvectors() * floored.asDiagonal() * eig.eigenvectors().transpose();
  out.v = 0.5 * (out.v + out.v.transpose()).eval();
  return out;
}

GaussianCache::GaussianCache(const Eigen::Matrix3d& v, std::size_t count, Stream rng) : v_(v) {
  require_psd(v);
  if (count < 1) fail(ErrorCode::rejected_input, "cache must hold at least one draw");
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(v);
  const Eigen::Matrix3d root =
      eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  c0_.resize(count);
  c1_.resize(count);
  c2_.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const Eigen::Vector3d z(rng.normal(), rng.normal(), rng.normal());
    const Eigen::Vector3d b = root * z;
    c0_[i] = b[0];
    c1_[i] = b[1];
    c2_[i] = b[2];
  }
}

std::span<const double> GaussianCache::coordinate(int axis) const {
  switch (axis) {
    case 0: return c0_;
    case 1: return c1_;
    default: return c2_;
  }
}

double GaussianCache::probability(const Eigen::Vector3d& b) const {
  std::size_t hits = 0;
  const std::size_t count = c0_.size();
  for (std::size_t i = 0; i < count; ++i) {
    hits += static_cast<std::size_t>((c0_[i] <= b[0]) & (c1_[i] <= b[1]) & (c2_[i] <= b[2]));
  }
  return static_cast<double>(hits) / static_cast<double>(count);
}

double dispersion_prob(const Eigen::Matrix3d& v, const Eigen::Vector3d& b,
                       const GaussianCache& cache) {
  require_psd(v);
  const double scale = std::max(1.0, v.cwiseAbs().maxCoeff());
  if ((v - cache.covariance()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    fail(ErrorCode::rejected_input, "Gaussian cache was built for a different covariance");
  }
  return cache.probability(b);
}

RateLossPoint rate_loss_bound(const Eigen::Vector3d& j, const Eigen::Matrix3d& v, std::size_t n,
                              double epsilon, double l, const GaussianCache& cache,
                              const BoundarySearch& search) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) {
    fail(ErrorCode::rejected_input, "epsilon must lie in (0, 1)");
  }
  if (n < 2) fail(ErrorCode::rejected_input, "blocklength must be at least 2");
  if (search.directions < 2) fail(ErrorCode::rejected_input, "need at least two sweep directions");
  require_psd(v);

  RateLossPoint out;
  out.l = l;
  out.n = n;
  out.epsilon = epsilon;
  if (l < search.loss_floor) return out;

  const double root_n = std::sqrt(static_cast<double>(n));
  const double correction = 2.0 * std::log2(static_cast<double>(n)) / static_cast<double>(n);
  const double b3 = root_n * (l - j[2] - correction);

  const std::size_t total = cache.size();
  const auto target = static_cast<std::size_t>(
      std::ceil((1.0 - epsilon) * static_cast<double>(total) - 1e-9));
  const auto c0 = cache.coordinate(0), c1 = cache.coordinate(1), c2 = cache.coordinate(2);
  std::vector<double> f1, f2;
  f1.reserve(total);
  f2.reserve(total);
  for (std::size_t i = 0; i < total; ++i) {
    if (c2[i] <= b3) {
      f1.push_back(c0[i]);
      f2.push_back(c1[i]);
    }
  }
  // Even unbounded (b1, b2) cannot lift Pr(B <= b) above Pr(B3 <= b3*).
  if (target == 0 || f1.size() < target) return out;

  BoundarySweep sweep(f1, f2, target);
  const double quarter = std::numbers::pi / 2.0;
  const double step = quarter / search.directions;
  auto objective = [&](double angle, Eigen::Vector2d& at) {
    at = sweep.point(angle);
    return at[0] + at[1];
  };

  Eigen::Vector2d best_point;
  double best = std::numeric_limits<double>::infinity();
  unsigned best_index = 0;
  for (unsigned d = 0; d < search.directions; ++d) {
    Eigen::Vector2d at;
    const double value = objective((d + 0.5) * step, at);
    if (value < best) {
      best = value;
      best_point = at;
      best_index = d;
    }
  }

  // The level set is convex (log-concave measure), so a golden-section pass
  // between the neighbours of the best ray sharpens the minimum.
  double lo = std::max(0.5 * step * 1e-3, (best_index - 0.5) * step);
  double hi = std::min(quarter - 0.5 * step * 1e-3, (best_index + 1.5) * step);
  const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = hi - ratio * (hi - lo), x2 = lo + ratio * (hi - lo);
  Eigen::Vector2d p1, p2;
  double g1 = objective(x1, p1), g2 = objective(x2, p2);
  for (unsigned it = 0; it < search.refine_iterations; ++it) {
    if (g1 <= g2) {
      hi = x2;
      x2 = x1;
      g2 = g1;
      p2 = p1;
      x1 = hi - ratio * (hi - lo);
      g1 = objective(x1, p1);
    } else {
      lo = x1;
      x1 = x2;
      g1 = g2;
      p1 = p2;
      x2 = lo + ratio * (hi - lo);
      g2 = objective(x2, p2);
    }
  }
  if (g1 < best) {
    best = g1;
    best_point = p1;
  }
  if (g2 < best) {
    best = g2;
    best_point = p2;
  }

  out.feasible = true;
  out.b = Eigen::Vector3d(best_point[0], best_point[1], b3);
  out.boundary_probability = cache.probability(out.b);
  out.rate = j[0] + j[1] + best / root_n + 2.0 * correction;
  return out;
}

void carry_witnesses_along_l(std::vector<RateLossPoint>& points, const GaussianCache& cache) {
  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return points[a].l < points[b].l; });
  const RateLossPoint* best = nullptr;
  for (std::size_t i : order) {
    RateLossPoint& p = points[i];
    if (!p.feasible) continue;
    if (best != nullptr && best->n == p.n && best->epsilon == p.epsilon && best->rate < p.rate) {
      const Eigen::Vector3d b(best->b[0], best->b[1], p.b[2]);
      const double required = std::ceil((1.0 - p.epsilon) * static_cast<double>(cache.size()) - 1e-9);
      const double probability = cache.probability(b);
      if (probability * static_cast<double>(cache.size()) >= required - 0.5) {
        p.b = b;
        p.rate = best->rate;
        p.boundary_probability = probability;
      }
    }
    if (best == nullptr || p.rate <= best->rate) best = &p;
  }
}

std::vector<RateLossPoint> rate_loss_curve(const MomentSummary& moments, std::size_t n,
                                           double epsilon, const std::vector<double>& l_grid,
                                           const GaussianCache& cache,
                                           const BoundarySearch& search, unsigned threads) {
  std::vector<RateLossPoint> points(l_grid.size());
  parallel_for(l_grid.size(), threads, [&](std::size_t i) {
    points[i] = rate_loss_bound(moments.j, moments.v, n, epsilon, l_grid[i], cache, search);
  });
  carry_witnesses_along_l(points, cache);
  return points;
}

RegionCurve region_curve(const PolynomialSource& source, const TestChannelParams& channel,
                         std::size_t n, double epsilon, const std::vector<double>& l_grid,
                         const RegionConfig& config, const Stream& rng) {
  if (l_grid.empty()) fail(ErrorCode::rejected_input, "loss grid must not be empty");
  for (std::size_t i = 0; i < l_grid.size(); ++i) {
    if (!(l_grid[i] > 0.0) || (i > 0 && l_grid[i] < l_grid[i - 1])) {
      fail(ErrorCode::rejected_input, "loss grid must be positive and sorted ascending");
    }
  }
  InfoLossOptions options;
  options.loss_mode = config.loss_mode;
  options.threads = config.threads;
  const InfoLossBatch batch =
      sample_info_loss(source, channel, n, config.info_loss_samples, rng, options);

  RegionCurve curve;
  curve.rejected = batch.rejected;
  curve.moments = estimate_moments(batch.samples);
  const GaussianCache cache(curve.moments.v, config.cache_size, rng.substream(2));
  curve.points =
      rate_loss_curve(curve.moments, n, epsilon, l_grid, cache, config.search, config.threads);
  return curve;
}

}  // namespace wzreg
