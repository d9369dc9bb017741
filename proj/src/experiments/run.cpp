#include <chrono>
#include <ctime>

#include "wzreg/error.hpp"
#include "wzreg/experiments/runners.hpp"

#ifndef WZREG_VERSION_STRING
#define WZREG_VERSION_STRING "unknown"
#endif

namespace wzreg::experiments {

using nlohmann::json;

std::string_view tool_version() { return WZREG_VERSION_STRING; }

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buffer[32];
  std::strftime(buffer, sizeof buffer, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buffer;
}

json decisions(const ExperimentConfig& config) {
  return {
      {"log_base", "2"},
      {"coded_transmission", "ideal test channel; U reaches the decoder without binning"},
      {"v3_coupling",
       "v1 and v2 from a fresh single-letter draw; v3 from an independent length-n training "
       "sequence plus one fresh inference pair"},
      {"loss_mode", config.options.loss_mode == LossMode::per_sample ? "per_sample" : "conditional"},
      {"conditional_density_means", "U|Y centred at alpha beta^T y*, U|X centred at alpha x"},
      {"rate_correction", "2 log2(n)/n inside the loss constraint, twice that added to the rate"},
      {"boundary_search",
       "exact order-statistic radius on evenly spaced rays, golden-section refinement"},
      {"loss_floor", "points with l below sigma2 are infeasible"},
      {"mc_gen_error", "replicate mean of the exact conditional generalization error"},
      {"closed_form_eq14", "replicate mean of the trace form with the realized empirical Sigma"},
      {"fault", config.options.fault == FaultMode::none ? "none" : "sigma_phi2_mismatch"},
  };
}

struct Output {
  std::string name;
  std::string bytes;
};

json run_kind(const ExperimentConfig& config, const RunOptions& options, std::vector<Output>& files,
              int& status) {
  json details = json::object();
  switch (config.kind) {
    case ExperimentKind::asymptotic_sweep: {
      const AsymptoticSweep sweep = run_asymptotic_sweep(config, options.threads);
      files.push_back({"asymptotic_sweep.csv", to_table(sweep).to_csv()});
      json rows = json::array();
      for (const auto& r : sweep.rows) {
        rows.push_back({{"n", r.n},
                        {"expected_closed_form", r.report.expected_closed_form},
                        {"closed_form_std_error", r.report.closed_form_std_error},
                        {"trace_bound_diagnostic", r.report.trace_bound_diagnostic},
                        {"min_gen_error", r.min_gen_error}});
      }
      details["rows"] = rows;
      break;
    }
    case ExperimentKind::tradeoff: {
      const Tradeoff tradeoff = run_tradeoff(config, options.threads);
      files.push_back({"tradeoff.csv", to_table(tradeoff).to_csv()});
      json rows = json::array();
      for (const auto& r : tradeoff.rows) {
        rows.push_back({{"D", r.distortion},
                        {"true_beta_std_error", r.true_beta_std_error},
                        {"n", tradeoff.n},
                        {"trained_distortion", r.trained_distortion},
                        {"trained_std_error", r.trained_std_error},
                        {"gen_error", r.gen_error}});
      }
      details["rows"] = rows;
      break;
    }
    case ExperimentKind::rate_loss_region: {
      const RateLossRegion region = run_rate_loss_region(config, options.threads);
      files.push_back({"rate_loss_region.csv", to_table(region).to_csv()});
      if (options.plot) files.push_back({"rate_loss_region.svg", render_region_svg(region)});
      json moments = json::array();
      for (std::size_t i = 0; i < region.moments.size(); ++i) {
        const auto& m = region.moments[i];
        moments.push_back({{"n", config.grids.n[i]},
                           {"j", {m.j[0], m.j[1], m.j[2]}},
                           {"j_std_error", {m.j_std_error[0], m.j_std_error[1], m.j_std_error[2]}},
                           {"v",
                            {{m.v(0, 0), m.v(0, 1), m.v(0, 2)},
                             {m.v(1, 0), m.v(1, 1), m.v(1, 2)},
                             {m.v(2, 0), m.v(2, 1), m.v(2, 2)}}},
                           {"rejected_draws", region.rejected[i]}});
      }
      json errors = json::array();
      for (const auto& s : region.series) {
        for (const auto& p : s.points) {
          if (!p.error.empty()) {
            errors.push_back({{"n", s.n}, {"epsilon", s.epsilon}, {"l", p.point.l}, {"error", p.error}});
          }
        }
      }
      details["moments"] = moments;
      details["point_errors"] = errors;
      details["r_wz"] = rates(region.sigma2, region.channel).r_wz;
      break;
    }
    case ExperimentKind::property_suite: {
      const PropertyReport report = run_property_suite(config, options.threads);
      files.push_back({"property_report.json", report.to_json().dump(2) + "\n"});
      details["failed"] = report.failures();
      details["total"] = report.entries.size();
      if (report.failures() > 0) status = exit_status(ErrorCode::invariant_failure);
      break;
    }
  }
  return details;
}

}  // namespace

RunSummary run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  validate(config);
  RunSummary summary;
  summary.out_dir = options.out_dir.empty() ? std::filesystem::path(config.output_dir) : options.out_dir;
  summary.manifest = summary.out_dir / "manifest.json";

  json manifest = {
      {"tool", "wzreg"},
      {"tool_version", tool_version()},
      {"experiment", kind_name(config.kind)},
      {"seed", config.seed},
      {"config", to_json(config)},
      {"config_sha256", config_hash(config)},
      {"threads", options.threads},
      {"started_at", utc_now()},
      {"finished_at", nullptr},
      {"status", "running"},
      {"decisions", decisions(config)},
      {"outputs", json::array()},
  };
  write_file(summary.manifest, manifest.dump(2) + "\n");

  std::vector<Output> files;
  try {
    manifest["details"] = run_kind(config, options, files, summary.exit_status);
  } catch (const Error& e) {
    manifest["status"] = "failed";
    manifest["finished_at"] = utc_now();
    manifest["error"] = {{"code", code_name(e.code())}, {"message", e.what()}};
    write_file(summary.manifest, manifest.dump(2) + "\n");
    throw;
  }

  for (const auto& file : files) {
    const auto path = summary.out_dir / file.name;
    write_file(path, file.bytes);
    summary.outputs.push_back(path);
    manifest["outputs"].push_back(
        {{"path", file.name}, {"sha256", sha256_hex(file.bytes)}, {"bytes", file.bytes.size()}});
  }
  manifest["status"] = summary.exit_status == 0 ? "complete" : "invariant_failures";
  manifest["finished_at"] = utc_now();
  write_file(summary.manifest, manifest.dump(2) + "\n");
  return summary;
}

}  // namespace wzreg::experiments
