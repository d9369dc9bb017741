#include "wzreg/experiments/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <utility>

#include "wzreg/experiments/output.hpp"

namespace wzreg::experiments {

using nlohmann::json;

namespace {

constexpr std::pair<ExperimentKind, std::string_view> kKinds[] = {
    {ExperimentKind::asymptotic_sweep, "asymptotic-sweep"},
    {ExperimentKind::tradeoff, "tradeoff"},
    {ExperimentKind::rate_loss_region, "rate-loss-region"},
    {ExperimentKind::property_suite, "property-suite"},
};

std::string join(const std::vector<std::string>& issues) {
  std::string out = "invalid config";
  for (std::size_t i = 0; i < issues.size(); ++i) out += (i ? "; " : ": ") + issues[i];
  return out;
}

// Collects type problems with their field paths instead of stopping at the first.
class Reader {
 public:
  explicit Reader(std::vector<std::string>& issues) : issues_(issues) {}

  void issue(const std::string& path, const std::string& message) {
    issues_.push_back(path + ": " + message);
  }

  bool object(const json& node, const std::string& path,
              std::initializer_list<std::string_view> allowed) {
    if (!node.is_object()) {
      issue(path, "expected a table");
      return false;
    }
    for (const auto& item : node.items()) {
      if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end()) {
        issue(join_path(path, item.key()), "unknown key");
      }
    }
    return true;
  }

  const json* child(const json& node, std::string_view key, const std::string& path,
                    bool required) {
    const auto it = node.find(key);
    if (it == node.end()) {
      if (required) issue(join_path(path, key), "required");
      return nullptr;
    }
    return &*it;
  }

  std::optional<double> number(const json& node, const std::string& path) {
    if (!node.is_number()) {
      issue(path, "expected a number");
      return std::nullopt;
    }
    const double v = node.get<double>();
    if (!std::isfinite(v)) {
      issue(path, "must be finite");
      return std::nullopt;
    }
    return v;
  }

  std::optional<std::uint64_t> integer(const json& node, const std::string& path) {
    if (node.is_number_unsigned()) return node.get<std::uint64_t>();
    if (node.is_number_integer()) {
      if (node.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(node.get<std::int64_t>());
      issue(path, "must be non-negative");
      return std::nullopt;
    }
    issue(path, "expected a non-negative integer");
    return std::nullopt;
  }

  std::optional<std::string> string(const json& node, const std::string& path) {
    if (!node.is_string()) {
      issue(path, "expected a string");
      return std::nullopt;
    }
    return node.get<std::string>();
  }

  std::vector<double> numbers(const json& node, const std::string& path) {
    std::vector<double> out;
    if (!node.is_array()) {
      issue(path, "expected an array of numbers");
      return out;
    }
    for (std::size_t i = 0; i < node.size(); ++i) {
      if (auto v = number(node[i], path + "[" + std::to_string(i) + "]")) out.push_back(*v);
    }
    return out;
  }

  std::vector<std::size_t> integers(const json& node, const std::string& path) {
    std::vector<std::size_t> out;
    if (!node.is_array()) {
      issue(path, "expected an array of integers");
      return out;
    }
    for (std::size_t i = 0; i < node.size(); ++i) {
      if (auto v = integer(node[i], path + "[" + std::to_string(i) + "]")) {
        out.push_back(static_cast<std::size_t>(*v));
      }
    }
    return out;
  }

  static std::string join_path(const std::string& path, std::string_view key) {
    return path.empty() ? std::string(key) : path + "." + std::string(key);
  }

 private:
  std::vector<std::string>& issues_;
};

void read_source(Reader& r, const json& node, PolynomialSource& source) {
  const std::string path = "source";
  if (!r.object(node, path, {"k", "beta", "sigma2", "y_dist"})) return;
  if (const json* beta = r.child(node, "beta", path, true)) {
    const auto values = r.numbers(*beta, "source.beta");
    source.beta = Eigen::Map<const Eigen::VectorXd>(values.data(), values.size());
  }
  if (const json* k = r.child(node, "k", path, false)) {
    if (auto v = r.integer(*k, "source.k"); v && *v != static_cast<std::uint64_t>(source.beta.size())) {
      r.issue("source.k", "must equal the length of source.beta");
    }
  }
  if (const json* s = r.child(node, "sigma2", path, true)) {
    if (auto v = r.number(*s, "source.sigma2")) source.sigma2 = *v;
  }
  const json* law = r.child(node, "y_dist", path, true);
  if (!law) return;
  if (!r.object(*law, "source.y_dist", {"kind", "a", "variance"})) return;
  const json* kind = r.child(*law, "kind", "source.y_dist", true);
  if (!kind) return;
  const auto name = r.string(*kind, "source.y_dist.kind");
  if (!name) return;
  if (*name == "uniform") {
    if (law->contains("variance")) r.issue("source.y_dist.variance", "not used by a uniform law");
    UniformSymmetric u;
    if (const json* a = r.child(*law, "a", "source.y_dist", true)) {
      if (auto v = r.number(*a, "source.y_dist.a")) u.half_width = *v;
    }
    source.y_law = u;
  } else if (*name == "gaussian") {
    if (law->contains("a")) r.issue("source.y_dist.a", "not used by a gaussian law");
    GaussianY g;
    if (const json* var = r.child(*law, "variance", "source.y_dist", true)) {
      if (auto v = r.number(*var, "source.y_dist.variance")) g.variance = *v;
    }
    source.y_law = g;
  } else {
    r.issue("source.y_dist.kind", "must be \"uniform\" or \"gaussian\"");
  }
}

void read_channel(Reader& r, const json& node, ChannelSpec& channel) {
  if (!r.object(node, "channel", {"distortion", "alpha", "sigma_phi2"})) return;
  if (const json* d = r.child(node, "distortion", "channel", false)) {
    channel.distortion = r.number(*d, "channel.distortion");
  }
  if (const json* a = r.child(node, "alpha", "channel", false)) {
    channel.alpha = r.number(*a, "channel.alpha");
  }
  if (const json* s = r.child(node, "sigma_phi2", "channel", false)) {
    channel.sigma_phi2 = r.number(*s, "channel.sigma_phi2");
  }
  const bool by_distortion = node.contains("distortion");
  const bool by_alpha = node.contains("alpha") || node.contains("sigma_phi2");
  if (by_distortion && by_alpha) {
    r.issue("channel", "give either distortion or (alpha, sigma_phi2), not both");
  } else if (!by_distortion && !by_alpha) {
    r.issue("channel", "needs distortion or (alpha, sigma_phi2)");
  } else if (by_alpha && !(node.contains("alpha") && node.contains("sigma_phi2"))) {
    r.issue("channel", "alpha and sigma_phi2 must be given together");
  }
}

void read_grids(Reader& r, const json& node, Grids& grids) {
  if (!r.object(node, "grids", {"n", "epsilon", "l", "distortion"})) return;
  if (const json* g = r.child(node, "n", "grids", false)) grids.n = r.integers(*g, "grids.n");
  if (const json* g = r.child(node, "epsilon", "grids", false)) {
    grids.epsilon = r.numbers(*g, "grids.epsilon");
  }
  if (const json* g = r.child(node, "l", "grids", false)) grids.l = r.numbers(*g, "grids.l");
  if (const json* g = r.child(node, "distortion", "grids", false)) {
    grids.distortion = r.numbers(*g, "grids.distortion");
  }
}

void read_samples(Reader& r, const json& node, SampleSizes& samples) {
  if (!r.object(node, "samples",
                {"replicates", "info_loss", "gaussian_cache", "distortion_pairs",
                 "property_draws", "property_instances"})) {
    return;
  }
  auto field = [&](std::string_view key, std::size_t& target) {
    if (const json* v = r.child(node, key, "samples", false)) {
      if (auto x = r.integer(*v, Reader::join_path("samples", key))) {
        target = static_cast<std::size_t>(*x);
      }
    }
  };
  field("replicates", samples.replicates);
  field("info_loss", samples.info_loss);
  field("gaussian_cache", samples.gaussian_cache);
  field("distortion_pairs", samples.distortion_pairs);
  field("property_draws", samples.property_draws);
  field("property_instances", samples.property_instances);
}

void read_options(Reader& r, const json& node, ExperimentOptions& options) {
  if (!r.object(node, "options", {"loss_mode", "fault", "fault_scale", "directions"})) return;
  if (const json* v = r.child(node, "loss_mode", "options", false)) {
    if (auto s = r.string(*v, "options.loss_mode")) {
      if (*s == "per_sample") {
        options.loss_mode = LossMode::per_sample;
      } else if (*s == "conditional") {
        options.loss_mode = LossMode::conditional;
      } else {
        r.issue("options.loss_mode", "must be \"per_sample\" or \"conditional\"");
      }
    }
  }
  if (const json* v = r.child(node, "fault", "options", false)) {
    if (auto s = r.string(*v, "options.fault")) {
      if (*s == "none") {
        options.fault = FaultMode::none;
      } else if (*s == "sigma_phi2_mismatch") {
        options.fault = FaultMode::sigma_phi2_mismatch;
      } else {
        r.issue("options.fault", "must be \"none\" or \"sigma_phi2_mismatch\"");
      }
    }
  }
  if (const json* v = r.child(node, "fault_scale", "options", false)) {
    if (auto x = r.number(*v, "options.fault_scale")) options.fault_scale = *x;
  }
  if (const json* v = r.child(node, "directions", "options", false)) {
    if (auto x = r.integer(*v, "options.directions")) {
      options.directions = static_cast<unsigned>(std::min<std::uint64_t>(*x, 1u << 20));
    }
  }
}

ExperimentConfig parse_plain(const json& document) {
  std::vector<std::string> issues;
  Reader r(issues);
  ExperimentConfig config;
  if (!r.object(document, "",
                {"experiment", "seed", "output_dir", "source", "channel", "grids", "samples",
                 "options"})) {
    throw ConfigError(issues);
  }
  if (const json* e = r.child(document, "experiment", "", true)) {
    if (auto name = r.string(*e, "experiment")) {
      if (auto kind = parse_kind(*name)) {
        config.kind = *kind;
      } else {
        r.issue("experiment",
                "must be one of asymptotic-sweep, tradeoff, rate-loss-region, property-suite");
      }
    }
  }
  if (const json* s = r.child(document, "seed", "", true)) {
    if (auto v = r.integer(*s, "seed")) config.seed = *v;
  }
  if (const json* o = r.child(document, "output_dir", "", false)) {
    if (auto v = r.string(*o, "output_dir")) config.output_dir = *v;
  }
  if (const json* s = r.child(document, "source", "", true)) read_source(r, *s, config.source);
  if (const json* c = r.child(document, "channel", "", true)) read_channel(r, *c, config.channel);
  if (const json* g = r.child(document, "grids", "", false)) read_grids(r, *g, config.grids);
  if (const json* s = r.child(document, "samples", "", false)) read_samples(r, *s, config.samples);
  if (const json* o = r.child(document, "options", "", false)) read_options(r, *o, config.options);

  if (issues.empty()) issues = validation_issues(config);
  if (!issues.empty()) throw ConfigError(issues);
  return config;
}

void check_grid_sorted(const std::vector<double>& grid, const std::string& path,
                       std::vector<std::string>& issues) {
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] > grid[i - 1])) {
      issues.push_back(path + ": must be strictly ascending");
      return;
    }
  }
}

}  // namespace

std::string_view kind_name(ExperimentKind kind) {
  for (const auto& [k, name] : kKinds) {
    if (k == kind) return name;
  }
  return "unknown";
}

std::optional<ExperimentKind> parse_kind(std::string_view name) {
  for (const auto& [k, text] : kKinds) {
    if (text == name) return k;
  }
  return std::nullopt;
}

TestChannelParams ChannelSpec::resolve(double sigma2) const {
  if (distortion) return params_from_distortion(sigma2, *distortion);
  if (alpha && sigma_phi2) return params_from_alpha(sigma2, *alpha, *sigma_phi2);
  fail(ErrorCode::config_error, "channel: needs distortion or (alpha, sigma_phi2)");
}

ConfigError::ConfigError(std::vector<std::string> issues)
    : Error(ErrorCode::config_error, join(issues)), issues_(std::move(issues)) {}

std::vector<std::string> validation_issues(const ExperimentConfig& c) {
  std::vector<std::string> issues;
  auto add = [&](const std::string& path, const std::string& message) {
    issues.push_back(path + ": " + message);
  };
  const std::size_t k = static_cast<std::size_t>(c.source.beta.size());
  if (k == 0) add("source.beta", "must not be empty");
  if (!(c.source.sigma2 > 0.0)) add("source.sigma2", "must be positive");
  if (const auto* u = std::get_if<UniformSymmetric>(&c.source.y_law); u && !(u->half_width > 0.0)) {
    add("source.y_dist.a", "must be positive");
  }
  if (const auto* g = std::get_if<GaussianY>(&c.source.y_law); g && !(g->variance > 0.0)) {
    add("source.y_dist.variance", "must be positive");
  }

  const double sigma2 = c.source.sigma2;
  if (c.channel.distortion) {
    const double d = *c.channel.distortion;
    if (!(d > 0.0 && d < sigma2)) add("channel.distortion", "must lie in (0, source.sigma2)");
  } else if (c.channel.alpha && c.channel.sigma_phi2) {
    if (!(*c.channel.alpha > 0.0 && *c.channel.alpha < 1.0)) add("channel.alpha", "must lie in (0, 1)");
    if (!(*c.channel.sigma_phi2 > 0.0)) add("channel.sigma_phi2", "must be positive");
    if (issues.empty() && sigma2 > 0.0) {
      const double d = params_from_alpha(sigma2, *c.channel.alpha, *c.channel.sigma_phi2).distortion;
      if (!(d < sigma2)) add("channel", "induced distortion must be below source.sigma2");
    }
  } else {
    add("channel", "needs distortion or (alpha, sigma_phi2)");
  }

  for (std::size_t i = 0; i < c.grids.n.size(); ++i) {
    if (c.grids.n[i] < std::max<std::size_t>(k, 2)) {
      add("grids.n[" + std::to_string(i) + "]", "must be at least max(k, 2)");
    }
  }
  for (std::size_t i = 1; i < c.grids.n.size(); ++i) {
    if (c.grids.n[i] <= c.grids.n[i - 1]) {
      add("grids.n", "must be strictly ascending");
      break;
    }
  }
  for (std::size_t i = 0; i < c.grids.epsilon.size(); ++i) {
    const double e = c.grids.epsilon[i];
    if (!(e > 0.0 && e < 1.0)) add("grids.epsilon[" + std::to_string(i) + "]", "must lie in (0, 1)");
  }
  for (std::size_t i = 0; i < c.grids.l.size(); ++i) {
    if (!(c.grids.l[i] > 0.0)) add("grids.l[" + std::to_string(i) + "]", "must be positive");
  }
  check_grid_sorted(c.grids.l, "grids.l", issues);
  for (std::size_t i = 0; i < c.grids.distortion.size(); ++i) {
    const double d = c.grids.distortion[i];
    if (!(d > 0.0 && d < sigma2)) {
      add("grids.distortion[" + std::to_string(i) + "]", "must lie in (0, source.sigma2)");
    }
  }

  auto require = [&](bool present, const std::string& path) {
    if (!present) add(path, std::string("must not be empty for ") + std::string(kind_name(c.kind)));
  };
  switch (c.kind) {
    case ExperimentKind::asymptotic_sweep:
      require(!c.grids.n.empty(), "grids.n");
      break;
    case ExperimentKind::tradeoff:
      require(!c.grids.n.empty(), "grids.n");
      require(!c.grids.distortion.empty(), "grids.distortion");
      break;
    case ExperimentKind::rate_loss_region:
      require(!c.grids.n.empty(), "grids.n");
      require(!c.grids.epsilon.empty(), "grids.epsilon");
      require(!c.grids.l.empty(), "grids.l");
      if (std::holds_alternative<GaussianY>(c.source.y_law)) {
        add("source.y_dist.kind", "rate-loss-region needs a uniform side-information law");
      }
      break;
    case ExperimentKind::property_suite:
      break;
  }

  if (c.samples.replicates < 2) add("samples.replicates", "must be at least 2");
  if (c.samples.info_loss < kMinMomentSamples) {
    add("samples.info_loss", "must be at least " + std::to_string(kMinMomentSamples));
  }
  if (c.samples.gaussian_cache < 1000) add("samples.gaussian_cache", "must be at least 1000");
  if (c.samples.distortion_pairs < 2) add("samples.distortion_pairs", "must be at least 2");
  if (c.samples.property_draws < 1000) add("samples.property_draws", "must be at least 1000");
  if (c.samples.property_instances < 1) add("samples.property_instances", "must be positive");
  if (!(c.options.fault_scale > 0.0)) add("options.fault_scale", "must be positive");
  if (c.options.directions < 2) add("options.directions", "must be at least 2");
  return issues;
}

void validate(const ExperimentConfig& config) {
  auto issues = validation_issues(config);
  if (!issues.empty()) throw ConfigError(std::move(issues));
}

ExperimentConfig parse_config(const json& document) {
  if (document.is_object() && document.contains("config") && document.contains("config_sha256")) {
    ExperimentConfig config = parse_plain(document.at("config"));
    const json& recorded = document.at("config_sha256");
    if (!recorded.is_string() || recorded.get<std::string>() != config_hash(config)) {
      throw ConfigError({"config_sha256: does not match the embedded config"});
    }
    return config;
  }
  return parse_plain(document);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"--config: cannot open " + path.string()});
  json document;
  try {
    document = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError({"--config: " + path.string() + " is not valid JSON (byte " +
                       std::to_string(e.byte) + ")"});
  }
  return parse_config(document);
}

json to_json(const ExperimentConfig& c) {
  json source = {
      {"k", c.source.beta.size()},
      {"beta", std::vector<double>(c.source.beta.data(), c.source.beta.data() + c.source.beta.size())},
      {"sigma2", c.source.sigma2},
  };
  if (const auto* u = std::get_if<UniformSymmetric>(&c.source.y_law)) {
    source["y_dist"] = {{"kind", "uniform"}, {"a", u->half_width}};
  } else {
    source["y_dist"] = {{"kind", "gaussian"}, {"variance", std::get<GaussianY>(c.source.y_law).variance}};
  }
  json channel = json::object();
  if (c.channel.distortion) channel["distortion"] = *c.channel.distortion;
  if (c.channel.alpha) channel["alpha"] = *c.channel.alpha;
  if (c.channel.sigma_phi2) channel["sigma_phi2"] = *c.channel.sigma_phi2;
  return {
      {"experiment", kind_name(c.kind)},
      {"seed", c.seed},
      {"output_dir", c.output_dir},
      {"source", source},
      {"channel", channel},
      {"grids",
       {{"n", c.grids.n}, {"epsilon", c.grids.epsilon}, {"l", c.grids.l},
        {"distortion", c.grids.distortion}}},
      {"samples",
       {{"replicates", c.samples.replicates},
        {"info_loss", c.samples.info_loss},
        {"gaussian_cache", c.samples.gaussian_cache},
        {"distortion_pairs", c.samples.distortion_pairs},
        {"property_draws", c.samples.property_draws},
        {"property_instances", c.samples.property_instances}}},
      {"options",
       {{"loss_mode", c.options.loss_mode == LossMode::per_sample ? "per_sample" : "conditional"},
        {"fault", c.options.fault == FaultMode::none ? "none" : "sigma_phi2_mismatch"},
        {"fault_scale", c.options.fault_scale},
        {"directions", c.options.directions}}},
  };
}

std::string config_hash(const ExperimentConfig& config) {
  return sha256_hex(to_json(config).dump());
}

ExperimentConfig default_config(ExperimentKind kind, std::uint64_t seed) {
  ExperimentConfig c;
  c.kind = kind;
  c.seed = seed;
  c.output_dir = "out/" + std::string(kind_name(kind));
  c.source.beta = Eigen::Vector3d(2.0, 3.0, 1.0);
  c.source.sigma2 = 16.0;
  c.source.y_law = UniformSymmetric{1.0};
  c.channel.distortion = 8.0;
  switch (kind) {
    case ExperimentKind::asymptotic_sweep:
      c.grids.n = {200, 500, 1000, 5000};
      c.samples.replicates = 10'000;
      break;
    case ExperimentKind::tradeoff:
      c.grids.n = {1000, 10'000};
      for (int i = 1; i <= 20; ++i) c.grids.distortion.push_back(0.75 * i);
      break;
    case ExperimentKind::rate_loss_region:
      c.grids.n = {1000, 2000};
      c.grids.epsilon = {0.01, 0.1};
      for (double l = 15.0; l <= 40.0 + 1e-9; l += 0.5) c.grids.l.push_back(l);
      break;
    case ExperimentKind::property_suite:
      break;
  }
  return c;
}

}  // namespace wzreg::experiments
