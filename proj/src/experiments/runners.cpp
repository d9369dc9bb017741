#include "wzreg/experiments/runners.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "wzreg/error.hpp"
#include "wzreg/parallel.hpp"
#include "wzreg/stats.hpp"

namespace wzreg::experiments {

namespace {

// Mean squared reconstruction error over m fresh pairs decoded with beta_hat.
MeanEstimate reconstruction_error(const PolynomialSource& source, const TestChannelParams& channel,
                                  const Eigen::VectorXd& beta_hat, std::size_t m, Stream rng) {
  const SampleBatch batch = sample_pairs(source, m, rng);
  const std::vector<double> u = apply(batch.x, channel, rng);
  const std::vector<double> x_hat = reconstruct(u, batch.y, beta_hat, channel);
  std::vector<double> squared(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double e = batch.x[i] - x_hat[i];
    squared[i] = e * e;
  }
  return mean_estimate(squared);
}

}  // namespace

AsymptoticSweep run_asymptotic_sweep(const ExperimentConfig& config, unsigned threads) {
  validate(config);
  const Stream root(config.seed);
  AsymptoticSweep out;
  out.sigma2 = config.source.sigma2;
  out.channel = config.channel.resolve(config.source.sigma2);
  const double rate = rates(out.sigma2, out.channel).r_conditional;
  const double raginsky = raginsky_sqrt_bound(rate, out.sigma2);
  for (std::size_t i = 0; i < config.grids.n.size(); ++i) {
    const std::size_t n = config.grids.n[i];
    const ReplicateStudy study = simulate_gen_error(config.source, out.channel, n,
                                                    config.samples.replicates,
                                                    root.substream(i), threads);
    SweepRow row;
    row.n = n;
    row.report = study.report;
    row.min_gen_error = *std::min_element(study.gen_error.begin(), study.gen_error.end());
    row.raginsky_squared = raginsky * raginsky;
    out.rows.push_back(row);
  }
  return out;
}

Table to_table(const AsymptoticSweep& sweep) {
  Table table{kSweepHeader, {}};
  for (const auto& row : sweep.rows) {
    table.rows.push_back({format_count(row.n), format_number(row.report.mc_estimate),
                          format_number(row.report.mc_std_error),
                          format_number(row.report.closed_form_conditional),
                          format_number(row.report.upper_bound),
                          format_number(row.raginsky_squared), format_number(sweep.sigma2)});
  }
  return table;
}

Tradeoff run_tradeoff(const ExperimentConfig& config, unsigned threads) {
  validate(config);
  const Stream root(config.seed);
  const PolynomialSource& source = config.source;
  const MomentMatrix moment = moment_matrix(source);
  const std::size_t k = static_cast<std::size_t>(source.beta.size());
  const std::size_t m = config.samples.distortion_pairs;

  Tradeoff out;
  out.n = config.grids.n;
  out.rows.resize(config.grids.distortion.size());
  parallel_for(out.rows.size(), threads, [&](std::size_t i) {
    const Stream stream = root.substream(i);
    TradeoffRow& row = out.rows[i];
    row.distortion = config.grids.distortion[i];
    const TestChannelParams channel = params_from_distortion(source.sigma2, row.distortion);
    row.rates = rates(source.sigma2, channel);

    const MeanEstimate truth = reconstruction_error(source, channel, source.beta, m, stream.substream(0));
    row.true_beta_distortion = truth.mean;
    row.true_beta_std_error = truth.std_error;

    for (std::size_t j = 0; j < out.n.size(); ++j) {
      Stream train = stream.substream(1).substream(j);
      const SampleBatch batch = sample_pairs(source, out.n[j], train);
      const std::vector<double> u = apply(batch.x, channel, train);
      const TrainedPredictor predictor = ols_fit(u, batch.y, channel, k);
      const MeanEstimate trained =
          reconstruction_error(source, channel, predictor.beta_hat, m, stream.substream(2).substream(j));
      row.trained_distortion.push_back(trained.mean);
      row.trained_std_error.push_back(trained.std_error);
      row.gen_error.push_back(gen_error_conditional(predictor, source.beta, moment, source.sigma2));
    }
  });
  return out;
}

Table to_table(const Tradeoff& tradeoff) {
  Table table{kTradeoffHeader, {}};
  for (const auto& row : tradeoff.rows) {
    table.rows.push_back({format_number(row.distortion), format_number(row.rates.r_conditional),
                          format_number(row.rates.r_wz), format_number(row.true_beta_distortion),
                          format_number(row.trained_distortion.back()),
                          format_number(row.gen_error.back())});
  }
  return table;
}

RateLossRegion run_rate_loss_region(const ExperimentConfig& config, unsigned threads) {
  validate(config);
  const Stream root(config.seed);
  RateLossRegion out;
  out.sigma2 = config.source.sigma2;
  out.channel = config.channel.resolve(config.source.sigma2);

  InfoLossOptions sampling;
  sampling.loss_mode = config.options.loss_mode;
  sampling.threads = threads;
  BoundarySearch search;
  search.directions = config.options.directions;
  search.loss_floor = config.source.sigma2;

  for (std::size_t n : config.grids.n) {
    const InfoLossBatch batch = sample_info_loss(config.source, out.channel, n,
                                                 config.samples.info_loss, root.substream(0),
                                                 sampling);
    out.moments.push_back(estimate_moments(batch.samples));
    out.rejected.push_back(batch.rejected);
    const MomentSummary& moments = out.moments.back();
    const GaussianCache cache(moments.v, config.samples.gaussian_cache, root.substream(1));

    for (double epsilon : config.grids.epsilon) {
      RegionSeries series;
      series.n = n;
      series.epsilon = epsilon;
      series.points.resize(config.grids.l.size());
      parallel_for(config.grids.l.size(), threads, [&](std::size_t i) {
        RegionPoint& p = series.points[i];
        p.point.l = config.grids.l[i];
        p.point.n = n;
        p.point.epsilon = epsilon;
        try {
          p.point = rate_loss_bound(moments.j, moments.v, n, epsilon, config.grids.l[i], cache,
                                    search);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::numerical_failure && e.code() != ErrorCode::ill_conditioned) {
            throw;
          }
          p.point.feasible = false;
          p.point.rate = std::numeric_limits<double>::quiet_NaN();
          p.error = std::string(code_name(e.code())) + ": " + e.what();
        }
      });
      std::vector<RateLossPoint> points;
      for (const auto& p : series.points) points.push_back(p.point);
      carry_witnesses_along_l(points, cache);
      for (std::size_t i = 0; i < points.size(); ++i) series.points[i].point = points[i];
      out.series.push_back(std::move(series));
    }
  }
  return out;
}

Table to_table(const RateLossRegion& region) {
  Table table{kRegionHeader, {}};
  for (const auto& series : region.series) {
    for (const auto& p : series.points) {
      table.rows.push_back({format_count(series.n), format_number(series.epsilon),
                            format_number(p.point.l), format_number(p.point.rate),
                            p.point.feasible ? "true" : "false"});
    }
  }
  return table;
}

std::string render_region_svg(const RateLossRegion& region) {
  PlotSpec spec;
  spec.title = "Achievable rate versus generalization error";
  spec.x_label = "generalization error level l";
  spec.y_label = "rate (bits per sample)";
  for (const auto& series : region.series) {
    PlotSeries line;
    std::ostringstream label;
    label << "n=" << series.n << ", eps=" << series.epsilon;
    line.label = label.str();
    for (const auto& p : series.points) {
      if (!p.point.feasible) continue;
      line.x.push_back(p.point.l);
      line.y.push_back(p.point.rate);
    }
    spec.series.push_back(std::move(line));
  }
  spec.vertical_lines = {region.sigma2};
  spec.vertical_labels = {"L* = sigma2"};
  return render_svg(spec);
}

}  // namespace wzreg::experiments
