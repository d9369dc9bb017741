#include <doctest.h>

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <string>

#include "wzreg/experiments/config.hpp"
#include "wzreg/experiments/output.hpp"
#include "wzreg/experiments/runners.hpp"

using namespace wzreg;
using namespace wzreg::experiments;
using nlohmann::json;

namespace {

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("wzreg_test_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

json base_document(const std::string& kind) {
  return {{"experiment", kind},
          {"seed", 7},
          {"source", {{"k", 3}, {"beta", {2, 3, 1}}, {"sigma2", 16}, {"y_dist", {{"kind", "uniform"}, {"a", 1}}}}},
          {"channel", {{"distortion", 8}}}};
}

ExperimentConfig small_region() {
  ExperimentConfig c = default_config(ExperimentKind::rate_loss_region, 11);
  c.grids.n = {60, 120};
  c.grids.epsilon = {0.05, 0.2};
  c.grids.l = {15.0, 17.0, 19.0, 22.0, 26.0, 32.0};
  c.samples.info_loss = 2000;
  c.samples.gaussian_cache = 20000;
  return c;
}

bool has_issue(const ConfigError& e, const std::string& path) {
  for (const auto& issue : e.issues()) {
    if (issue.rfind(path + ":", 0) == 0) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("number formatting keeps 17 significant digits and round-trips") {
  CHECK(format_number(16.0) == "1.6000000000000000e+01");
  CHECK(format_number(-0.1) == "-1.0000000000000001e-01");
  CHECK(format_number(INFINITY) == "inf");
  CHECK(format_number(NAN) == "nan");
  Stream rng(3);
  for (int i = 0; i < 10000; ++i) {
    const double x = std::ldexp(rng.uniform() - 0.5, static_cast<int>(rng.next_u32() % 200) - 100);
    const std::string text = format_number(x);
    double back = 0.0;
    std::from_chars(text.data(), text.data() + text.size(), back);
    REQUIRE(back == x);
  }
}

TEST_CASE("sha256 known answers") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("csv rendering") {
  Table t{{"a", "b"}, {{"1", "2"}, {"3", "4"}}};
  CHECK(t.to_csv() == "a,b\n1,2\n3,4\n");
  t.rows.push_back({"5"});
  CHECK_THROWS_AS(t.to_csv(), Error);
}

TEST_CASE("config parsing and field-path validation") {
  json doc = base_document("tradeoff");
  doc["grids"] = {{"n", {100, 1000}}, {"distortion", {4, 8}}};
  const ExperimentConfig c = parse_config(doc);
  CHECK(c.kind == ExperimentKind::tradeoff);
  CHECK(c.seed == 7);
  CHECK(c.source.beta == Eigen::Vector3d(2, 3, 1));
  CHECK(*c.channel.distortion == 8.0);
  CHECK(parse_config(to_json(c)).seed == c.seed);
  CHECK(to_json(parse_config(to_json(c))) == to_json(c));

  json missing_seed = base_document("asymptotic-sweep");
  missing_seed.erase("seed");
  missing_seed["grids"] = {{"n", {100}}};
  try {
    parse_config(missing_seed);
    FAIL("missing seed accepted");
  } catch (const ConfigError& e) {
    CHECK(e.code() == ErrorCode::config_error);
    CHECK(has_issue(e, "seed"));
  }

  json bad = base_document("rate-loss-region");
  bad["channel"] = {{"distortion", 16}};
  bad["grids"] = {{"n", {100, 50}}, {"epsilon", {0.0}}, {"l", {18, 17}}};
  bad["source"]["extra"] = 1;
  bad["samples"] = {{"info_loss", 10}};
  try {
    parse_config(bad);
    FAIL("bad config accepted");
  } catch (const ConfigError& e) {
    CHECK(has_issue(e, "source.extra"));
  }
  bad["source"].erase("extra");
  try {
    parse_config(bad);
    FAIL("bad config accepted");
  } catch (const ConfigError& e) {
    CHECK(has_issue(e, "channel.distortion"));
    CHECK(has_issue(e, "grids.n"));
    CHECK(has_issue(e, "grids.epsilon[0]"));
    CHECK(has_issue(e, "grids.l"));
    CHECK(has_issue(e, "samples.info_loss"));
  }

  json empty_grid = base_document("asymptotic-sweep");
  CHECK_THROWS_AS(parse_config(empty_grid), ConfigError);
  json both = base_document("property-suite");
  both["channel"] = {{"distortion", 8}, {"alpha", 0.5}, {"sigma_phi2", 16}};
  CHECK_THROWS_AS(parse_config(both), ConfigError);
  json by_alpha = base_document("property-suite");
  by_alpha["channel"] = {{"alpha", 0.5}, {"sigma_phi2", 16}};
  CHECK(parse_config(by_alpha).channel.resolve(16.0).distortion == doctest::Approx(8.0));
}

TEST_CASE("shipped configs parse") {
  for (const auto& entry : std::filesystem::directory_iterator(WZREG_CONFIG_DIR)) {
    CAPTURE(entry.path().string());
    CHECK_NOTHROW(load_config(entry.path()));
  }
}

TEST_CASE("asymptotic sweep table schema and thread determinism") {
  ExperimentConfig c = default_config(ExperimentKind::asymptotic_sweep, 5);
  c.grids.n = {20, 40, 80};
  c.samples.replicates = 300;
  const std::string one = to_table(run_asymptotic_sweep(c, 1)).to_csv();
  CHECK(one.substr(0, one.find('\n')) ==
        "n,mc_gen_error_mean,mc_gen_error_stderr,closed_form_eq14,upper_bound_eq17,"
        "raginsky_sqrt_bound_squared,sigma2");
  CHECK(one == to_table(run_asymptotic_sweep(c, 4)).to_csv());
  CHECK(one == to_table(run_asymptotic_sweep(c, 8)).to_csv());

  const AsymptoticSweep sweep = run_asymptotic_sweep(c, 2);
  for (const auto& row : sweep.rows) {
    CHECK(row.report.mc_estimate <= row.report.upper_bound + 3.0 * row.report.mc_std_error);
    CHECK(row.min_gen_error >= 16.0);
  }
}

TEST_CASE("tradeoff table and determinism") {
  ExperimentConfig c = default_config(ExperimentKind::tradeoff, 6);
  c.grids.n = {100, 1000};
  c.grids.distortion = {2.0, 8.0, 14.0};
  c.samples.distortion_pairs = 20000;
  const Tradeoff t = run_tradeoff(c, 1);
  const std::string csv = to_table(t).to_csv();
  CHECK(csv.substr(0, csv.find('\n')) ==
        "D,r_conditional,r_wz,empirical_distortion_true_beta,empirical_distortion_trained,"
        "gen_error_at_same_rate");
  CHECK(csv == to_table(run_tradeoff(c, 4)).to_csv());
  for (const auto& row : t.rows) {
    CHECK(std::abs(row.rates.r_wz - row.rates.r_conditional) <= 1e-12);
    CHECK(std::abs(row.true_beta_distortion - row.distortion) <= 3.0 * row.true_beta_std_error);
    CHECK(row.trained_distortion.size() == 2);
    CHECK(row.gen_error.back() >= 16.0);
  }
}

TEST_CASE("rate-loss region table, plot and determinism") {
  const ExperimentConfig c = small_region();
  const RateLossRegion region = run_rate_loss_region(c, 1);
  REQUIRE(region.series.size() == 4);
  const std::string csv = to_table(region).to_csv();
  CHECK(csv.substr(0, csv.find('\n')) == "n,epsilon,l,rate,feasible");
  CHECK(csv == to_table(run_rate_loss_region(c, 4)).to_csv());
  CHECK(csv == to_table(run_rate_loss_region(c, 8)).to_csv());
  // v1 and v2 are shared across n.
  CHECK(region.moments[0].j[0] == region.moments[1].j[0]);
  for (const auto& s : region.series) {
    CHECK_FALSE(s.points.front().point.feasible);  // l = 15 < sigma2
    CHECK(std::isinf(s.points.front().point.rate));
    CHECK(s.points.back().point.feasible);
  }
  const std::string svg = render_region_svg(region);
  CHECK(svg.rfind("<svg", 0) == 0);
  std::size_t lines = 0;
  for (std::size_t at = svg.find("<polyline"); at != std::string::npos; at = svg.find("<polyline", at + 1)) {
    ++lines;
  }
  CHECK(lines == region.series.size());
  CHECK(svg.find("stroke-dasharray") != std::string::npos);
}

TEST_CASE("run_experiment writes a manifest whose rerun reproduces the outputs") {
  const auto dir = scratch("manifest");
  ExperimentConfig c = small_region();
  RunOptions options;
  options.out_dir = dir / "first";
  options.threads = 1;
  const RunSummary first = run_experiment(c, options);
  REQUIRE(first.outputs.size() == 2);
  const json manifest = json::parse(read_file(first.manifest));
  CHECK(manifest["status"] == "complete");
  CHECK(manifest["seed"] == 11);
  CHECK(manifest["config_sha256"] == config_hash(c));
  CHECK(manifest["decisions"].contains("v3_coupling"));
  for (const auto& out : manifest["outputs"]) {
    CHECK(sha256_hex(read_file(dir / "first" / out["path"].get<std::string>())) == out["sha256"]);
  }

  const ExperimentConfig again = load_config(first.manifest);
  CHECK(config_hash(again) == config_hash(c));
  options.out_dir = dir / "second";
  options.threads = 8;
  const RunSummary second = run_experiment(again, options);
  CHECK(read_file(second.outputs[0]) == read_file(first.outputs[0]));

  json tampered = manifest;
  tampered["config"]["seed"] = 12;
  CHECK_THROWS_AS(parse_config(tampered), ConfigError);

  options.plot = false;
  options.out_dir = dir / "third";
  CHECK(run_experiment(c, options).outputs.size() == 1);
  std::filesystem::remove_all(dir);
}

TEST_CASE("run_experiment marks the manifest failed on a numerical error") {
  const auto dir = scratch("failed");
  ExperimentConfig c = default_config(ExperimentKind::asymptotic_sweep, 1);
  c.source.beta = Eigen::VectorXd::Ones(8);
  c.source.y_law = UniformSymmetric{1e-3};  // Gram matrix far beyond the conditioning gate
  c.grids.n = {20};
  c.samples.replicates = 10;
  RunOptions options;
  options.out_dir = dir;
  try {
    run_experiment(c, options);
    FAIL("expected ill-conditioning");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ill_conditioned);
    CHECK(exit_status(e.code()) == 3);
  }
  const json manifest = json::parse(read_file(dir / "manifest.json"));
  CHECK(manifest["status"] == "failed");
  CHECK(manifest["error"]["code"] == "ill_conditioned");
  std::filesystem::remove_all(dir);
}

TEST_CASE("property suite size and fault injection at reduced sample sizes") {
  ExperimentConfig c = default_config(ExperimentKind::property_suite, 3);
  c.samples.replicates = 200;
  c.samples.property_draws = 20000;
  c.samples.property_instances = 100;
  c.samples.gaussian_cache = 20000;
  const PropertyReport clean = run_property_suite(c, 2);
  CHECK(clean.entries.size() >= 12);
  auto find = [](const PropertyReport& r, const std::string& name) {
    for (const auto& e : r.entries) {
      if (e.name == name) return e;
    }
    FAIL("missing entry " << name);
    return PropertyEntry{};
  };
  CHECK(find(clean, "distortion_identity").passed);
  CHECK(find(clean, "ruhe_trace_inequality").passed);

  c.options.fault = FaultMode::sigma_phi2_mismatch;
  const PropertyReport faulty = run_property_suite(c, 2);
  CHECK_FALSE(find(faulty, "distortion_identity").passed);
  CHECK(faulty.to_json()["failed"].get<std::size_t>() >= 1);
}
