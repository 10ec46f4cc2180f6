#pragma once

// Latent variable models exposing the sampler + potential interface the
// estimators consume: mu_theta is sampled through sample_latent and the n
// potentials are G_p(x) = g_theta(x, y_p) for the observed data y.

#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "prodest/estimators.hpp"
#include "prodest/exact_oracle.hpp"
#include "prodest/rng.hpp"

namespace prodest {

// ---------------------------------------------------------------------------
// g-and-k

inline constexpr double kGandKC = 0.8;

struct GandKParams {
  double A = 0.0;  // location
  double B = 1.0;  // scale, > 0
  double g = 0.0;  // skewness
  double k = 0.0;  // kurtosis

  static GandKParams from_theta(std::span<const double> theta);
};

/// How the observation noise is scaled: `literal` draws eps * Uniform(-eps, eps)
/// (half-width eps^2), `unit` draws eps * Uniform(-1, 1) (half-width eps).
enum class GandKNoise { literal, unit };

struct GandKObsConfig {
  double epsilon = 0.2;
  std::vector<double> y;
  GandKNoise noise = GandKNoise::literal;
};

/// A + B {1 + c tanh(g z / 2)} (1 + z^2)^k z with c = 4/5.
double gandk_quantile_transform(double z, const GandKParams& params);

std::vector<double> gandk_simulate_data(const GandKParams& params, std::size_t n,
                                        double epsilon, RngStream& rng,
                                        GandKNoise noise = GandKNoise::literal);

/// Log of the indicator of the open interval (y_p - eps, y_p + eps).
double gandk_log_potential(double x, double y_p, double epsilon) noexcept;

double sample_standard_normal(RngStream& rng);

// ---------------------------------------------------------------------------
// Poisson-Beta

struct PoissonBetaParams {
  double lambda = 1.0;
  double k_on = 1.0;
  double k_off = 1.0;
  double sigma = 1.0;  // observation noise sd

  void validate() const;
};

/// S ~ Beta(k_on, k_off), then X | S ~ Poisson(lambda S).
std::int64_t pb_sample_latent(const PoissonBetaParams& params, RngStream& rng);

/// log N(y_p; x, sigma^2).
double pb_log_potential(double x, double y_p, double sigma) noexcept;

/// Y_i = X_i + sigma Z_i.
std::vector<double> pb_simulate_data(const PoissonBetaParams& params, std::size_t n,
                                     RngStream& rng);

// ---------------------------------------------------------------------------
// Priors

struct UniformPrior {
  double lower = 0.0;
  double upper = 1.0;
};

struct ExponentialPrior {
  double mean = 1.0;
};

using PriorMarginal = std::variant<UniformPrior, ExponentialPrior>;

/// Independent per-coordinate priors.
class PriorSpec {
 public:
  explicit PriorSpec(std::vector<PriorMarginal> marginals);

  std::size_t dimension() const noexcept { return marginals_.size(); }
  const std::vector<PriorMarginal>& marginals() const noexcept { return marginals_; }

  /// Sum of per-coordinate log densities; -inf outside the support.
  double log_density(std::span<const double> theta) const;
  std::vector<double> sample(RngStream& rng) const;

 private:
  std::vector<PriorMarginal> marginals_;
};

double log_prior(std::span<const double> theta, const PriorSpec& spec);

// ---------------------------------------------------------------------------
// Model interface

class LatentVariableModel {
 public:
  virtual ~LatentVariableModel() = default;

  virtual std::string name() const = 0;
  /// Dimension d of theta.
  virtual std::size_t dimension() const = 0;
  /// Number of observations n (= number of potentials).
  virtual std::size_t observation_count() const = 0;
  /// Whether theta satisfies the model's parameter constraints.
  virtual bool admissible(std::span<const double> theta) const = 0;
  /// One draw from mu_theta.
  virtual double sample_latent(std::span<const double> theta, RngStream& rng) const = 0;
  /// log G_p(x) = log g_theta(x, y_p); finite or -inf, never NaN.
  virtual double log_potential(std::span<const double> theta, std::size_t p,
                               double x) const = 0;

  virtual std::vector<double> sample_particles(std::span<const double> theta,
                                               std::size_t count, RngStream& rng) const;
  PotentialMatrix potential_matrix(std::span<const double> theta,
                                   std::span<const double> particles) const;
};

class GandKModel final : public LatentVariableModel {
 public:
  explicit GandKModel(GandKObsConfig obs);

  std::string name() const override { return "gandk"; }
  std::size_t dimension() const override { return 4; }
  std::size_t observation_count() const override { return obs_.y.size(); }
  bool admissible(std::span<const double> theta) const override;
  double sample_latent(std::span<const double> theta, RngStream& rng) const override;
  double log_potential(std::span<const double> theta, std::size_t p, double x) const override;

  const GandKObsConfig& observations() const noexcept { return obs_; }

 private:
  GandKObsConfig obs_;
};

class PoissonBetaModel final : public LatentVariableModel {
 public:
  PoissonBetaModel(std::vector<double> y, double sigma);

  std::string name() const override { return "poisson-beta"; }
  std::size_t dimension() const override { return 3; }
  std::size_t observation_count() const override { return y_.size(); }
  bool admissible(std::span<const double> theta) const override;
  double sample_latent(std::span<const double> theta, RngStream& rng) const override;
  double log_potential(std::span<const double> theta, std::size_t p, double x) const override;
  std::vector<double> sample_particles(std::span<const double> theta, std::size_t count,
                                       RngStream& rng) const override;

  double sigma() const noexcept { return sigma_; }

 private:
  std::vector<double> y_;
  double sigma_;
  double log_norm_;
};

/// Finite latent variable model over latent labels 0..m-1 and observation
/// labels 0..l-1. With dimension 0 the latent law is fixed; with dimension 1
/// (two latent states only) theta is the probability of latent state 1.
class DiscreteLatentModel final : public LatentVariableModel {
 public:
  static DiscreteLatentModel fixed(DiscreteLVM lvm, std::vector<std::size_t> y);
  static DiscreteLatentModel bernoulli(std::vector<std::vector<double>> kernel,
                                       std::vector<std::size_t> y);

  std::string name() const override { return "discrete-lvm"; }
  std::size_t dimension() const override { return parameterized_ ? 1 : 0; }
  std::size_t observation_count() const override { return y_.size(); }
  bool admissible(std::span<const double> theta) const override;
  double sample_latent(std::span<const double> theta, RngStream& rng) const override;
  double log_potential(std::span<const double> theta, std::size_t p, double x) const override;

  /// The DiscreteLVM at theta.
  DiscreteLVM lvm_at(std::span<const double> theta) const;
  /// Exact log L(theta) = sum_p log nu_theta(y_p).
  double log_likelihood_exact(std::span<const double> theta) const;
  const std::vector<std::size_t>& observations() const noexcept { return y_; }

 private:
  DiscreteLatentModel(std::vector<double> latent_probs,
                      std::vector<std::vector<double>> kernel, std::vector<std::size_t> y,
                      bool parameterized);
  std::vector<double> latent_probs(std::span<const double> theta) const;

  std::vector<double> fixed_probs_;
  std::vector<std::vector<double>> kernel_;
  std::vector<std::size_t> y_;
  bool parameterized_;
};

/// The sampler plus the n log-potential functions of a model at fixed theta.
struct PotentialProblem {
  std::function<double(RngStream&)> sample_latent;
  std::vector<LogPotential<double>> log_potentials;
};

/// The inputs estimator-core consumes, for `model` at `theta`. The model is
/// captured by reference and must outlive the result.
PotentialProblem model_as_potential_problem(const LatentVariableModel& model,
                                            std::span<const double> theta);

// ---------------------------------------------------------------------------
// Data files: one observation per line.

std::vector<double> read_observations(const std::filesystem::path& path);
void write_observations(const std::filesystem::path& path, std::span<const double> y);

}  // namespace prodest
