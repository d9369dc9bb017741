#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wzreg/experiments/config.hpp"
#include "wzreg/experiments/output.hpp"
#include "wzreg/finite_blocklength.hpp"
#include "wzreg/regression.hpp"

namespace wzreg::experiments {

inline const std::vector<std::string> kSweepHeader = {
    "n", "mc_gen_error_mean", "mc_gen_error_stderr", "closed_form_eq14",
    "upper_bound_eq17", "raginsky_sqrt_bound_squared", "sigma2"};
inline const std::vector<std::string> kTradeoffHeader = {
    "D", "r_conditional", "r_wz", "empirical_distortion_true_beta",
    "empirical_distortion_trained", "gen_error_at_same_rate"};
inline const std::vector<std::string> kRegionHeader = {"n", "epsilon", "l", "rate", "feasible"};

struct SweepRow {
  std::size_t n = 0;
  GenErrorReport report;
  double min_gen_error = 0.0;     // smallest replicate G
  double raginsky_squared = 0.0;  // (sigma + 2 sigma 2^{-R})^2 at the channel's rate
};

struct AsymptoticSweep {
  double sigma2 = 0.0;
  TestChannelParams channel;
  std::vector<SweepRow> rows;
};

/// Grid entry i uses seed stream substream(i).
AsymptoticSweep run_asymptotic_sweep(const ExperimentConfig& config, unsigned threads = 1);
Table to_table(const AsymptoticSweep& sweep);

struct TradeoffRow {
  double distortion = 0.0;
  RateSummary rates;
  double true_beta_distortion = 0.0;
  double true_beta_std_error = 0.0;
  std::vector<double> trained_distortion;  // one entry per grids.n
  std::vector<double> trained_std_error;
  std::vector<double> gen_error;           // exact G of each trained predictor
};

struct Tradeoff {
  std::vector<std::size_t> n;
  std::vector<TradeoffRow> rows;
};

/// The CSV reports the trained columns at the largest n.
Tradeoff run_tradeoff(const ExperimentConfig& config, unsigned threads = 1);
Table to_table(const Tradeoff& tradeoff);

struct RegionPoint {
  RateLossPoint point;
  std::string error;  // non-empty when this point failed numerically
};

struct RegionSeries {
  std::size_t n = 0;
  double epsilon = 0.0;
  std::vector<RegionPoint> points;
};

struct RateLossRegion {
  double sigma2 = 0.0;
  TestChannelParams channel;
  std::vector<MomentSummary> moments;  // one per grids.n
  std::vector<std::size_t> rejected;
  std::vector<RegionSeries> series;    // n-major, then epsilon
};

/// v1, v2 draws are shared across n and the cache normals across (n, epsilon).
RateLossRegion run_rate_loss_region(const ExperimentConfig& config, unsigned threads = 1);
Table to_table(const RateLossRegion& region);
std::string render_region_svg(const RateLossRegion& region);

struct PropertyEntry {
  std::string name;
  std::string module;
  std::string statistic_name;
  double statistic = 0.0;
  double threshold = 0.0;
  bool passed = false;
  std::string detail;
};

struct PropertyReport {
  std::vector<PropertyEntry> entries;
  std::size_t failures() const;
  nlohmann::json to_json() const;
};

PropertyReport run_property_suite(const ExperimentConfig& config, unsigned threads = 1);

struct RunOptions {
  std::filesystem::path out_dir;  // empty: use config.output_dir
  unsigned threads = 1;
  bool plot = true;
};

struct RunSummary {
  std::filesystem::path out_dir;
  std::filesystem::path manifest;
  std::vector<std::filesystem::path> outputs;
  int exit_status = 0;  // 4 when the property suite reports failures
};

/// Writes the manifest, runs the experiment, writes its outputs and finalizes
/// the manifest with their checksums. On an exception the manifest is marked
/// failed and the exception propagates.
RunSummary run_experiment(const ExperimentConfig& config, const RunOptions& options);

}  // namespace wzreg::experiments
