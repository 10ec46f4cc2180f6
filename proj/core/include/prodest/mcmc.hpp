#pragma once

// Pseudo-marginal random-walk Metropolis.
//
// The chain targets the exact posterior as long as the likelihood plug-in is
// a non-negative unbiased estimator and the estimate attached to the current
// state is never refreshed: a new estimate is drawn only at proposed points,
// and it replaces the stored one only when the move is accepted.

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "prodest/estimators.hpp"
#include "prodest/models.hpp"
#include "prodest/rng.hpp"

namespace prodest {

/// log L-hat(theta); draws whatever randomness it needs from `rng`.
using LikelihoodEstimator =
    std::function<LogEstimate(std::span<const double> theta, RngStream& rng)>;

/// Plug-in that samples N particles from mu_theta and applies `kind`.
/// Inadmissible theta yields a zero estimate. The model must outlive the result.
LikelihoodEstimator make_likelihood_estimator(const LatentVariableModel& model,
                                              EstimatorKind kind, std::size_t particles);

/// Deterministic plug-in returning the exact likelihood of a discrete model.
LikelihoodEstimator exact_likelihood(const DiscreteLatentModel& model);

struct ChainState {
  std::vector<double> theta;
  double log_like_hat = kNegInf;
  double log_prior = kNegInf;

  double log_target() const noexcept { return log_like_hat + log_prior; }
};

enum class ProposalScaling {
  literal,       // 2.38 d^{-1/2} Sigma
  conventional,  // 2.38^2 d^{-1} Sigma
};

/// Gaussian random-walk proposal N(theta, Sigma) with Sigma = L L^T.
class ProposalSpec {
 public:
  /// Factorizes `covariance`. When it is singular, or its smallest eigenvalue
  /// is below 1e-12 times the largest, 1e-8 * trace / d is added to the
  /// diagonal first (1e-8 when the trace is 0) and recorded as the jitter.
  static ProposalSpec from_covariance(Eigen::MatrixXd covariance);

  std::size_t dimension() const noexcept { return static_cast<std::size_t>(covariance_.rows()); }
  const Eigen::MatrixXd& covariance() const noexcept { return covariance_; }
  const Eigen::MatrixXd& factor() const noexcept { return factor_; }
  double jitter() const noexcept { return jitter_; }

  std::vector<double> propose(std::span<const double> theta, RngStream& rng) const;

 private:
  ProposalSpec(Eigen::MatrixXd covariance, Eigen::MatrixXd factor, double jitter)
      : covariance_(std::move(covariance)), factor_(std::move(factor)), jitter_(jitter) {}

  Eigen::MatrixXd covariance_;
  Eigen::MatrixXd factor_;
  double jitter_;
};

/// min{1, exp(log_ratio)}; 0 for NaN.
double acceptance_probability(double log_ratio) noexcept;
/// u < acceptance_probability(log_ratio).
bool accept_move(double log_ratio, double u) noexcept;

struct StepOutcome {
  ChainState state;
  bool accepted = false;
  bool estimated = false;  // false when the proposal fell outside the prior support
};

StepOutcome pm_rwm_step(const ChainState& state, const ProposalSpec& proposal,
                        const LikelihoodEstimator& estimator, const PriorSpec& prior,
                        RngStream& rng);

struct ChainConfig {
  std::size_t length = 1000;
  double burn_in = 0.5;  // fraction of rows excluded from ESS and proposal tuning
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  std::size_t max_init_attempts = 100;
  EstimatorKind estimator = EstimatorKind::recycle;
  std::size_t particles = 0;  // informational; the plug-in fixes N

  void validate() const;
};

struct ChainOutput {
  Eigen::MatrixXd samples;  // length x d
  std::vector<double> log_like_trace;
  std::vector<std::uint8_t> accepted;
  double acceptance_rate = 0.0;
  std::vector<double> ess;  // per coordinate, over the post-burn-in rows
  std::size_t burn_in_rows = 0;
  ChainState initial;

  std::size_t length() const noexcept { return static_cast<std::size_t>(samples.rows()); }
  std::size_t dimension() const noexcept { return static_cast<std::size_t>(samples.cols()); }
};

/// Runs config.length steps from `init`, or from a prior draw when absent.
/// A zero initial estimate is retried (with a fresh prior draw when no init was
/// given) up to config.max_init_attempts times before giving up.
ChainOutput run_chain(const ChainConfig& config, const LikelihoodEstimator& estimator,
                      const PriorSpec& prior, const ProposalSpec& proposal,
                      const std::optional<std::vector<double>>& init = std::nullopt);

/// `count` independent chains, chain i on stream config.stream + i, run concurrently.
std::vector<ChainOutput> run_chains(const ChainConfig& config, std::size_t count,
                                    const LikelihoodEstimator& estimator,
                                    const PriorSpec& prior, const ProposalSpec& proposal,
                                    const std::optional<std::vector<double>>& init = std::nullopt);

/// Proposal from the post-burn-in pilot covariance, scaled per `scaling`.
ProposalSpec tune_proposal(const ChainOutput& pilot, std::size_t d,
                           ProposalScaling scaling = ProposalScaling::literal);

/// Sample-moment summary of replicate log-estimates.
struct ReplicateSummary {
  std::size_t replicates = 0;
  std::size_t zeros = 0;
  double log_mean = kNegInf;
  double mean = 0.0;
  double mean_se = 0.0;
  double relative_variance = 0.0;     // (mean of squares / squared mean) - 1
  double relative_variance_se = 0.0;  // delta method
};

ReplicateSummary summarize_replicates(std::span<const double> log_estimates);

/// R log-estimates at theta; replicate r uses base.substream(r), so the
/// result does not depend on how the work is scheduled.
std::vector<double> replicate_log_estimates(const LikelihoodEstimator& estimator,
                                            std::span<const double> theta, std::size_t R,
                                            const RngStream& base);

/// Relative variance from R replicates; +inf when every replicate is zero.
double relative_variance(const LikelihoodEstimator& estimator, std::span<const double> theta,
                         std::size_t R, RngStream& rng);
double relative_variance(const LatentVariableModel& model, EstimatorKind kind,
                         std::span<const double> theta, std::size_t particles, std::size_t R,
                         RngStream& rng);

struct ParticleTuning {
  std::size_t particles = 0;
  double relative_variance = 0.0;
  std::vector<std::pair<std::size_t, double>> probes;
};

/// Relative variance as a function of N.
using RelativeVarianceProbe = std::function<double(std::size_t particles)>;

/// Doubles N from `start` until probe(N) <= target. Throws TuningError when N
/// would exceed `ceiling`.
ParticleTuning tune_particle_count(const RelativeVarianceProbe& probe, std::size_t start,
                                   double target, std::size_t ceiling = 10'000'000);

/// Doubling search from N = n using R empirical replicates at theta_ref.
/// Doubling from n keeps N a multiple of n, as the simple estimator needs.
ParticleTuning tune_particle_count(const LatentVariableModel& model, EstimatorKind kind,
                                   std::span<const double> theta_ref, double target,
                                   std::size_t R, RngStream& rng,
                                   std::size_t ceiling = 10'000'000);

/// T * sample variance / batch-means variance, batch size floor(sqrt(T)),
/// clamped to (0, T]. A constant series has ESS = T.
double ess_batch_means(std::span<const double> series);

}  // namespace prodest
