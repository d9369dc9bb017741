#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "wzreg/error.hpp"
#include "wzreg/finite_blocklength.hpp"
#include "wzreg/source_model.hpp"
#include "wzreg/test_channel.hpp"

namespace wzreg::experiments {

enum class ExperimentKind { asymptotic_sweep, tradeoff, rate_loss_region, property_suite };

std::string_view kind_name(ExperimentKind kind);
std::optional<ExperimentKind> parse_kind(std::string_view name);

enum class FaultMode {
  none,
  sigma_phi2_mismatch,  // encoder noise variance differs from the one the decoder assumes
};

/// Either a target distortion or an explicit (alpha, sigma_phi2) pair.
struct ChannelSpec {
  std::optional<double> distortion;
  std::optional<double> alpha;
  std::optional<double> sigma_phi2;

  TestChannelParams resolve(double sigma2) const;
};

struct Grids {
  std::vector<std::size_t> n;
  std::vector<double> epsilon;
  std::vector<double> l;
  std::vector<double> distortion;
};

struct SampleSizes {
  std::size_t replicates = 1000;            // training replicates per n
  std::size_t info_loss = 200'000;          // information-loss draws per n
  std::size_t gaussian_cache = kDefaultCacheSize;
  std::size_t distortion_pairs = 100'000;   // evaluation pairs per distortion level
  std::size_t property_draws = 200'000;     // draws behind distributional checks
  std::size_t property_instances = 1000;    // random matrix pairs per inequality
};

struct ExperimentOptions {
  LossMode loss_mode = LossMode::per_sample;
  FaultMode fault = FaultMode::none;
  double fault_scale = 4.0;  // encoder sigma_phi2 multiplier under the mismatch fault
  unsigned directions = 64;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::asymptotic_sweep;
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  PolynomialSource source;
  ChannelSpec channel;
  Grids grids;
  SampleSizes samples;
  ExperimentOptions options;
};

/// Validation failure carrying every offending field as "path: message".
class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<std::string> issues);
  const std::vector<std::string>& issues() const noexcept { return issues_; }

 private:
  std::vector<std::string> issues_;
};

/// Parses and validates a config document. A run manifest is accepted too;
/// its embedded config is used after the recorded hash is verified.
ExperimentConfig parse_config(const nlohmann::json& document);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Semantic checks on an already typed config; returns the issue list.
std::vector<std::string> validation_issues(const ExperimentConfig& config);
void validate(const ExperimentConfig& config);

/// Canonical JSON form; parse_config(to_json(c)) reproduces c.
nlohmann::json to_json(const ExperimentConfig& config);

/// SHA-256 of the canonical serialization, lowercase hex.
std::string config_hash(const ExperimentConfig& config);

std::string_view tool_version();

/// The polynomial setup with beta = [2, 3, 1], sigma2 = 16, Y ~ U[-1, 1], D = 8.
ExperimentConfig default_config(ExperimentKind kind, std::uint64_t seed);

}  // namespace wzreg::experiments
