#pragma once

// Experiment configuration: a flat key=value text file.
//
//   # comment
//   model = gandk
//   theta0 = 3, 1, 2, 0.5
//
// Later assignments win; command-line flags are applied last. Unknown keys
// are rejected.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "prodest/estimators.hpp"
#include "prodest/mcmc.hpp"
#include "prodest/models.hpp"

namespace prodest::cli {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ExperimentConfig {
  std::string model;  // gandk | poisson-beta | discrete-lvm
  std::vector<double> theta0;
  std::optional<std::size_t> n;  // observations to simulate
  std::optional<std::filesystem::path> data;
  std::optional<std::uint64_t> data_seed;

  double epsilon = 0.2;
  GandKNoise gandk_noise = GandKNoise::literal;
  double sigma = 5.0;

  // discrete-lvm
  std::string fixture;
  std::vector<double> latent_probs;
  std::vector<std::vector<double>> kernel;
  std::vector<std::size_t> y;

  EstimatorKind estimator = EstimatorKind::recycle;
  std::optional<std::size_t> particles;
  double tune_target = 2.0;
  std::size_t tune_replicates = 1000;
  std::size_t replicates = 1;

  std::size_t chain_length = 1000;
  std::size_t pilot_length = 0;  // 0: same as chain_length
  std::size_t pilot_rounds = 2;
  double burn_in = 0.5;
  double main_burn_in = 0.0;
  std::vector<double> pilot_sd;
  ProposalScaling proposal_scaling = ProposalScaling::literal;
  std::string prior;
  std::string init = "theta0";  // theta0 | prior

  std::string oracle = "moments";  // moments | thm3

  std::filesystem::path out = "out";
  std::uint64_t seed = 0;
};

/// Applies one key=value assignment.
void apply_setting(ExperimentConfig& config, const std::string& key, const std::string& value);

/// Parses config text; the source name is used in error messages.
ExperimentConfig parse_config(const std::string& text, const std::string& source = "<config>",
                              ExperimentConfig base = {});
ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base = {});

/// Builds a prior from "uniform:a:b, exponential:mean, ...".
PriorSpec parse_prior(const std::string& text);

}  // namespace prodest::cli
