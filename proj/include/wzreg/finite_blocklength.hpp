#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "wzreg/rng.hpp"
#include "wzreg/source_model.hpp"
#include "wzreg/test_channel.hpp"

namespace wzreg {

/// Which quantity fills the third (loss) coordinate of the information-loss vector.
enum class LossMode {
  per_sample,   // (X~ - beta_hat^T Y~*)^2 on one fresh inference pair
  conditional,  // G(Z) = (beta - beta_hat)^T Sigma~ (beta - beta_hat) + sigma2
};

/// One draw of the information-loss density vector, log terms in bits.
struct InfoLossSample {
  double v1 = 0.0;  // -log2 P_{U|Y}(U|Y) / P_U(U)
  double v2 = 0.0;  // log2 P_{U|X}(U|X) / P_U(U)
  double v3 = 0.0;  // loss of the length-n trained predictor
};

struct InfoLossBatch {
  std::vector<InfoLossSample> samples;
  std::size_t rejected = 0;  // draws discarded because P_U underflowed
};

struct InfoLossOptions {
  LossMode loss_mode = LossMode::per_sample;
  unsigned threads = 1;
  /// Skip training and leave v3 at zero. v1 and v2 are drawn exactly as usual.
  bool rate_terms_only = false;
};

/// log2 P_{U|Y}(u | y) with mean alpha beta^T y* and variance alpha^2 (sigma2 + sigma_phi2).
double log2_density_u_given_y(const PolynomialSource& source, const TestChannelParams& channel,
                              double u, double y);
/// log2 P_{U|X}(u | x) with mean alpha x and variance alpha^2 sigma_phi2.
double log2_density_u_given_x(const TestChannelParams& channel, double u, double x);

/// m draws of the information-loss vector. v1 and v2 come from a fresh
/// single-letter (X, Y, U); v3 from a predictor trained on an independent
/// length-n sequence. Draw i uses rng.substream(0).substream(i) for the
/// single-letter part and rng.substream(1).substream(i) for training, so the
/// first two coordinates are shared across blocklengths.
InfoLossBatch sample_info_loss(const PolynomialSource& source, const TestChannelParams& channel,
                               std::size_t n, std::size_t m, const Stream& rng,
                               const InfoLossOptions& options = {});

struct MomentSummary {
  Eigen::Vector3d j = Eigen::Vector3d::Zero();
  Eigen::Matrix3d v = Eigen::Matrix3d::Zero();
  Eigen::Vector3d j_std_error = Eigen::Vector3d::Zero();
  double rate_std_error = 0.0;  // standard error of mean(v1 + v2)
  std::size_t m_samples = 0;
};

inline constexpr std::size_t kMinMomentSamples = 1000;

/// Sample mean and unbiased covariance, symmetrized with eigenvalues floored at 0.
MomentSummary estimate_moments(std::span<const InfoLossSample> samples);

/// Immutable set of draws B = L Z, Z ~ N(0, I_3), L L^T = V.
class GaussianCache {
 public:
  GaussianCache(const Eigen::Matrix3d& v, std::size_t count, Stream rng);

  const Eigen::Matrix3d& covariance() const { return v_; }
  std::size_t size() const { return c0_.size(); }
  std::span<const double> coordinate(int axis) const;

  /// Fraction of draws with B <= b componentwise.
  double probability(const Eigen::Vector3d& b) const;

 private:
  Eigen::Matrix3d v_;
  std::vector<double> c0_, c1_, c2_;
};

inline constexpr std::size_t kDefaultCacheSize = 1'000'000;

/// Throws rejected_input if v is not symmetric PSD. Otherwise reports
/// Pr(B <= b) from the cache, which must have been built for v.
double dispersion_prob(const Eigen::Matrix3d& v, const Eigen::Vector3d& b,
                       const GaussianCache& cache);

struct RateLossPoint {
  double l = 0.0;
  double rate = std::numeric_limits<double>::infinity();  // stays infinite when infeasible
  std::size_t n = 0;
  double epsilon = 0.0;
  bool feasible = false;
  Eigen::Vector3d b = Eigen::Vector3d::Zero();  // minimizing boundary point
  double boundary_probability = 0.0;           // cache estimate of Pr(B <= b)
};

struct BoundarySearch {
  unsigned directions = 64;
  unsigned refine_iterations = 24;
  /// Loss levels below this are reported infeasible (L* = sigma2 when known).
  double loss_floor = 0.0;
};

/// Second-order rate bound
///   inf { M^T (J + b / sqrt(n) + (2 log2 n / n) 1_3) : b in S(V, eps),
///         j3 + b3 / sqrt(n) + 2 log2 n / n <= l }
/// with M = [1, 1, 0]. b3 is pinned at its largest admissible value and the
/// (b1, b2) boundary of the level-(1 - eps) orthant set is swept along rays.
RateLossPoint rate_loss_bound(const Eigen::Vector3d& j, const Eigen::Matrix3d& v, std::size_t n,
                              double epsilon, double l, const GaussianCache& cache,
                              const BoundarySearch& search = {});

/// Points of one (n, epsilon) curve, in any order. Walking up in l, a
/// point adopts the (b1, b2) witness of a lower-l point whenever that
/// witness is cheaper and still clears the cache at its own b3, so the
/// reported rates never increase with l.
void carry_witnesses_along_l(std::vector<RateLossPoint>& points, const GaussianCache& cache);

struct RegionConfig {
  std::size_t info_loss_samples = 200'000;
  std::size_t cache_size = kDefaultCacheSize;
  LossMode loss_mode = LossMode::per_sample;
  BoundarySearch search;
  unsigned threads = 1;
};

struct RegionCurve {
  MomentSummary moments;
  std::size_t rejected = 0;
  std::vector<RateLossPoint> points;
};

/// Rate bound at each l of `l_grid` for one (n, epsilon) with shared moments
/// and cache. Cache draws use rng.substream(2).
RegionCurve region_curve(const PolynomialSource& source, const TestChannelParams& channel,
                         std::size_t n, double epsilon, const std::vector<double>& l_grid,
                         const RegionConfig& config, const Stream& rng);

/// Rate bound along l_grid from already estimated moments.
std::vector<RateLossPoint> rate_loss_curve(const MomentSummary& moments, std::size_t n,
                                           double epsilon, const std::vector<double>& l_grid,
                                           const GaussianCache& cache,
                                           const BoundarySearch& search, unsigned threads = 1);

}  // namespace wzreg
