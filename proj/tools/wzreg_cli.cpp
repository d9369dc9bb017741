// Command-line front end for the experiment runners.
#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "wzreg/error.hpp"
#include "wzreg/experiments/config.hpp"
#include "wzreg/experiments/runners.hpp"

namespace ex = wzreg::experiments;

namespace {

std::string one_line(std::string text) {
  for (char& c : text) {
    if (c == '\n' || c == '\r') c = ' ';
    if (c == '"') c = '\'';
  }
  return text;
}

int report_error(std::string_view code, int status, const std::string& message) {
  std::cerr << "error code=" << code << " exit=" << status << " message=\"" << one_line(message)
            << "\"\n";
  return status;
}

struct Arguments {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  unsigned threads = 1;
  bool plot = true;
};

void add_common(CLI::App* sub, Arguments& args) {
  sub->add_option("--config", args.config, "JSON config or run manifest");
  sub->add_option("--seed", args.seed, "master seed (overrides the config)");
  sub->add_option("--out", args.out, "output directory (overrides the config)");
  sub->add_option("--threads", args.threads, "worker threads, 0 for all cores")->capture_default_str();
  sub->add_flag("--plot,!--no-plot", args.plot, "write the SVG plot where one exists")
      ->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Wyner-Ziv regression experiments"};
  app.set_version_flag("--version", std::string(ex::tool_version()));
  app.require_subcommand(1);
  Arguments args;
  const std::pair<const char*, const char*> commands[] = {
      {"asymptotic-sweep", "generalization error of trained predictors versus n"},
      {"tradeoff", "rate and distortion across a distortion grid"},
      {"rate-loss-region", "finite-blocklength rate versus generalization error"},
      {"property-suite", "run every invariant check and write a pass/fail report"},
  };
  for (const auto& [name, help] : commands) add_common(app.add_subcommand(name, help), args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("usage_error", 2, e.what());
  }

  const std::string name = app.get_subcommands().front()->get_name();
  const ex::ExperimentKind kind = *ex::parse_kind(name);
  try {
    ex::ExperimentConfig config;
    if (!args.config.empty()) {
      config = ex::load_config(args.config);
      if (config.kind != kind) {
        throw ex::ConfigError({"experiment: config is for " + std::string(ex::kind_name(config.kind)) +
                               " but the subcommand is " + name});
      }
      if (args.seed) config.seed = *args.seed;
    } else if (args.seed) {
      config = ex::default_config(kind, *args.seed);
    } else {
      throw ex::ConfigError({"seed: required; give --config or --seed"});
    }
    if (!args.out.empty()) config.output_dir = args.out;
    ex::validate(config);

    ex::RunOptions options;
    options.threads = args.threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : args.threads;
    options.plot = args.plot;
    const ex::RunSummary summary = ex::run_experiment(config, options);
    if (summary.exit_status != 0) {
      return report_error("invariant_failure", summary.exit_status,
                          "property suite reported failures; see " +
                              (summary.out_dir / "property_report.json").string());
    }
    std::cout << "ok experiment=" << name << " manifest=" << summary.manifest.string() << '\n';
    return 0;
  } catch (const wzreg::Error& e) {
    return report_error(wzreg::code_name(e.code()), wzreg::exit_status(e.code()), e.what());
  } catch (const std::exception& e) {
    return report_error("internal_error", 3, e.what());
  }
}
