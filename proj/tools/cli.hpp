#pragma once

#include <chrono>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "config.hpp"
#include "prodest/mcmc.hpp"
#include "prodest/models.hpp"

namespace prodest::cli {

const char* version() noexcept;

// RNG stream ids derived from the master seed, one per pipeline phase.
inline constexpr std::uint64_t kDataStream = 1;
inline constexpr std::uint64_t kTuneStream = 2;
inline constexpr std::uint64_t kEstimateStream = 3;
inline constexpr std::uint64_t kMainChainStream = 4;
inline constexpr std::uint64_t kPilotStreamBase = 16;  // + round

struct Problem {
  std::unique_ptr<LatentVariableModel> model;
  std::vector<double> theta0;
  std::vector<double> observations;
  bool simulated = false;
  std::optional<PriorSpec> prior;
};

/// Loads or simulates the data and builds the model and prior.
Problem build_problem(const ExperimentConfig& config);

/// The configured particle count, or the result of a doubling search at theta0.
ParticleTuning choose_particles(const ExperimentConfig& config, const Problem& problem,
                                bool& tuned);

struct McmcResult {
  std::size_t particles = 0;
  bool tuned = false;
  ParticleTuning tuning;
  std::vector<double> pilot_acceptance;
  std::optional<ProposalSpec> proposal;
  ChainOutput chain;
  double wall_seconds = 0.0;
};

/// Optional particle tuning, pilot rounds, proposal tuning, then the main chain.
McmcResult run_mcmc_pipeline(const ExperimentConfig& config, const Problem& problem);

/// Entry point behind the prodest executable; args excludes the program name.
/// Returns 0 on success, 2 for invalid configuration or shapes, 1 otherwise.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace prodest::cli
