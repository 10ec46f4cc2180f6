#include "prodest/models.hpp"

#include <boost/random/beta_distribution.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/poisson_distribution.hpp>

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "prodest/errors.hpp"

// Variates come from Boost.Random driven by RngStream: ziggurat normals,
// Beta as a ratio of two gamma draws (Knuth's rejection method), and Poisson
// by inversion below mean 10 and Hormann's PTRD transformed rejection above.
// All are exact and, being header code, reproduce bit-for-bit across platforms.

namespace prodest {

namespace {

void require_dimension(std::span<const double> theta, std::size_t d, const char* model) {
  if (theta.size() != d) {
    std::ostringstream msg;
    msg << model << " expects a " << d << "-dimensional theta, got " << theta.size();
    throw DimensionError(msg.str());
  }
}

}  // namespace

double sample_standard_normal(RngStream& rng) {
  boost::random::normal_distribution<double> normal(0.0, 1.0);
  return normal(rng);
}

GandKParams GandKParams::from_theta(std::span<const double> theta) {
  require_dimension(theta, 4, "g-and-k");
  return {theta[0], theta[1], theta[2], theta[3]};
}

double gandk_quantile_transform(double z, const GandKParams& params) {
  // (1 - e^{-gz}) / (1 + e^{-gz}) == tanh(gz / 2), which cannot overflow.
  const double skew = 1.0 + kGandKC * std::tanh(0.5 * params.g * z);
  return params.A + params.B * skew * std::pow(1.0 + z * z, params.k) * z;
}

std::vector<double> gandk_simulate_data(const GandKParams& params, std::size_t n,
                                        double epsilon, RngStream& rng, GandKNoise noise) {
  if (!(params.B > 0.0)) throw ContractViolation("g-and-k scale B must be positive");
  if (!(epsilon >= 0.0)) throw ContractViolation("epsilon must be non-negative");
  const double half_width = noise == GandKNoise::literal ? epsilon : 1.0;
  std::vector<double> y(n);
  for (auto& v : y) {
    const double x = gandk_quantile_transform(sample_standard_normal(rng), params);
    const double u = half_width * (2.0 * rng.uniform() - 1.0);
    v = x + epsilon * u;
  }
  return y;
}

double gandk_log_potential(double x, double y_p, double epsilon) noexcept {
  return (x > y_p - epsilon && x < y_p + epsilon) ? 0.0 : kNegInf;
}

void PoissonBetaParams::validate() const {
  if (!(lambda > 0.0 && k_on > 0.0 && k_off > 0.0 && sigma > 0.0)) {
    throw ContractViolation("Poisson-Beta parameters must be strictly positive");
  }
}

namespace {

std::int64_t poisson_draw(double mean, RngStream& rng) {
  if (!(mean > 0.0)) return 0;
  boost::random::poisson_distribution<std::int64_t, double> poisson(mean);
  return poisson(rng);
}

}  // namespace

std::int64_t pb_sample_latent(const PoissonBetaParams& params, RngStream& rng) {
  boost::random::beta_distribution<double> beta(params.k_on, params.k_off);
  return poisson_draw(params.lambda * beta(rng), rng);
}

double pb_log_potential(double x, double y_p, double sigma) noexcept {
  const double r = (y_p - x) / sigma;
  return -0.5 * r * r - std::log(sigma * std::sqrt(2.0 * std::numbers::pi));
}

std::vector<double> pb_simulate_data(const PoissonBetaParams& params, std::size_t n,
                                     RngStream& rng) {
  params.validate();
  std::vector<double> y(n);
  for (auto& v : y) {
    const auto x = static_cast<double>(pb_sample_latent(params, rng));
    v = x + params.sigma * sample_standard_normal(rng);
  }
  return y;
}

PriorSpec::PriorSpec(std::vector<PriorMarginal> marginals) : marginals_(std::move(marginals)) {
  for (const auto& m : marginals_) {
    if (const auto* u = std::get_if<UniformPrior>(&m)) {
      if (!(u->lower < u->upper)) throw ContractViolation("uniform prior needs a < b");
    } else if (!(std::get<ExponentialPrior>(m).mean > 0.0)) {
      throw ContractViolation("exponential prior needs a positive mean");
    }
  }
}

double PriorSpec::log_density(std::span<const double> theta) const {
  if (theta.size() != marginals_.size()) {
    throw DimensionError("theta and prior have different dimensions");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double t = theta[i];
    if (const auto* u = std::get_if<UniformPrior>(&marginals_[i])) {
      if (!(t >= u->lower && t <= u->upper)) return kNegInf;
      total -= std::log(u->upper - u->lower);
    } else {
      const double mean = std::get<ExponentialPrior>(marginals_[i]).mean;
      if (!(t >= 0.0)) return kNegInf;
      total += -std::log(mean) - t / mean;
    }
  }
  return total;
}

std::vector<double> PriorSpec::sample(RngStream& rng) const {
  std::vector<double> theta(marginals_.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    if (const auto* u = std::get_if<UniformPrior>(&marginals_[i])) {
      theta[i] = u->lower + (u->upper - u->lower) * rng.uniform();
    } else {
      theta[i] = -std::get<ExponentialPrior>(marginals_[i]).mean * std::log(rng.uniform_open());
    }
  }
  return theta;
}

double log_prior(std::span<const double> theta, const PriorSpec& spec) {
  return spec.log_density(theta);
}

std::vector<double> LatentVariableModel::sample_particles(std::span<const double> theta,
                                                          std::size_t count,
                                                          RngStream& rng) const {
  std::vector<double> particles(count);
  for (auto& x : particles) x = sample_latent(theta, rng);
  return particles;
}

PotentialMatrix LatentVariableModel::potential_matrix(std::span<const double> theta,
                                                      std::span<const double> particles) const {
  return eval_potential_matrix(observation_count(), particles,
                               [&](std::size_t p, double x) { return log_potential(theta, p, x); });
}

GandKModel::GandKModel(GandKObsConfig obs) : obs_(std::move(obs)) {
  if (!(obs_.epsilon > 0.0)) throw ContractViolation("epsilon must be positive");
}

bool GandKModel::admissible(std::span<const double> theta) const {
  return theta.size() == 4 && theta[1] > 0.0;
}

double GandKModel::sample_latent(std::span<const double> theta, RngStream& rng) const {
  return gandk_quantile_transform(sample_standard_normal(rng), GandKParams::from_theta(theta));
}

double GandKModel::log_potential(std::span<const double>, std::size_t p, double x) const {
  return gandk_log_potential(x, obs_.y[p], obs_.epsilon);
}

PoissonBetaModel::PoissonBetaModel(std::vector<double> y, double sigma)
    : y_(std::move(y)),
      sigma_(sigma),
      log_norm_(std::log(sigma * std::sqrt(2.0 * std::numbers::pi))) {
  if (!(sigma_ > 0.0)) throw ContractViolation("sigma must be positive");
}

bool PoissonBetaModel::admissible(std::span<const double> theta) const {
  return theta.size() == 3 && theta[0] > 0.0 && theta[1] > 0.0 && theta[2] > 0.0;
}

double PoissonBetaModel::sample_latent(std::span<const double> theta, RngStream& rng) const {
  require_dimension(theta, 3, "Poisson-Beta");
  const PoissonBetaParams params{theta[0], theta[1], theta[2], sigma_};
  return static_cast<double>(pb_sample_latent(params, rng));
}

std::vector<double> PoissonBetaModel::sample_particles(std::span<const double> theta,
                                                       std::size_t count,
                                                       RngStream& rng) const {
  require_dimension(theta, 3, "Poisson-Beta");
  boost::random::beta_distribution<double> beta(theta[1], theta[2]);
  std::vector<double> particles(count);
  for (auto& x : particles) x = static_cast<double>(poisson_draw(theta[0] * beta(rng), rng));
  return particles;
}

double PoissonBetaModel::log_potential(std::span<const double>, std::size_t p,
                                       double x) const {
  const double r = (y_[p] - x) / sigma_;
  return -0.5 * r * r - log_norm_;
}

DiscreteLatentModel::DiscreteLatentModel(std::vector<double> latent_probs,
                                         std::vector<std::vector<double>> kernel,
                                         std::vector<std::size_t> y, bool parameterized)
    : fixed_probs_(std::move(latent_probs)),
      kernel_(std::move(kernel)),
      y_(std::move(y)),
      parameterized_(parameterized) {
  for (std::size_t v : y_) {
    if (kernel_.empty() || v >= kernel_.front().size()) {
      throw DimensionError("observation label outside the kernel's columns");
    }
  }
}

DiscreteLatentModel DiscreteLatentModel::fixed(DiscreteLVM lvm, std::vector<std::size_t> y) {
  const auto probs = lvm.latent().probs();
  return DiscreteLatentModel({probs.begin(), probs.end()}, lvm.kernel_rows(), std::move(y),
                             false);
}

DiscreteLatentModel DiscreteLatentModel::bernoulli(std::vector<std::vector<double>> kernel,
                                                   std::vector<std::size_t> y) {
  if (kernel.size() != 2) throw DimensionError("Bernoulli parameterization needs 2 latent states");
  // Validates the kernel.
  (void)DiscreteLVM(DiscreteMeasure::uniform(2), kernel);
  return DiscreteLatentModel({}, std::move(kernel), std::move(y), true);
}

std::vector<double> DiscreteLatentModel::latent_probs(std::span<const double> theta) const {
  if (!parameterized_) return fixed_probs_;
  require_dimension(theta, 1, "Bernoulli discrete model");
  return {1.0 - theta[0], theta[0]};
}

bool DiscreteLatentModel::admissible(std::span<const double> theta) const {
  if (!parameterized_) return theta.empty();
  return theta.size() == 1 && theta[0] >= 0.0 && theta[0] <= 1.0;
}

double DiscreteLatentModel::sample_latent(std::span<const double> theta, RngStream& rng) const {
  const auto probs = latent_probs(theta);
  const double u = rng.uniform();
  double cumulative = 0.0;
  for (std::size_t x = 0; x + 1 < probs.size(); ++x) {
    cumulative += probs[x];
    if (u < cumulative) return static_cast<double>(x);
  }
  return static_cast<double>(probs.size() - 1);
}

double DiscreteLatentModel::log_potential(std::span<const double>, std::size_t p,
                                          double x) const {
  return std::log(kernel_[static_cast<std::size_t>(x)][y_[p]]);
}

DiscreteLVM DiscreteLatentModel::lvm_at(std::span<const double> theta) const {
  return DiscreteLVM(DiscreteMeasure(latent_probs(theta)), kernel_);
}

double DiscreteLatentModel::log_likelihood_exact(std::span<const double> theta) const {
  const auto probs = latent_probs(theta);
  double total = 0.0;
  for (std::size_t v : y_) {
    double nu = 0.0;
    for (std::size_t x = 0; x < probs.size(); ++x) nu += probs[x] * kernel_[x][v];
    total += std::log(nu);
  }
  return total;
}

PotentialProblem model_as_potential_problem(const LatentVariableModel& model,
                                            std::span<const double> theta) {
  PotentialProblem problem;
  std::vector<double> th(theta.begin(), theta.end());
  problem.sample_latent = [&model, th](RngStream& rng) { return model.sample_latent(th, rng); };
  problem.log_potentials.reserve(model.observation_count());
  for (std::size_t p = 0; p < model.observation_count(); ++p) {
    problem.log_potentials.emplace_back(
        [&model, th, p](const double& x) { return model.log_potential(th, p, x); });
  }
  return problem;
}

std::vector<double> read_observations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open data file " + path.string());
  std::vector<double> y;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream parse(line);
    double v;
    if (!(parse >> v)) {
      throw ContractViolation(path.string() + ":" + std::to_string(line_no) +
                              ": not a number");
    }
    y.push_back(v);
  }
  return y;
}

void write_observations(const std::filesystem::path& path, std::span<const double> y) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write data file " + path.string());
  out.precision(17);
  for (double v : y) out << v << '\n';
}

}  // namespace prodest
