#include "prodest/mcmc.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "prodest/errors.hpp"

namespace prodest {

namespace {

// Runs fn(i) for i in [0, count) over the available hardware threads. The
// first exception thrown by any worker is rethrown on the caller's thread.
template <class F>
void parallel_for(std::size_t count, F&& fn) {
  const std::size_t hw = std::max(1u, std::thread::hardware_concurrency());
  const std::size_t workers = std::min(count, hw);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    try {
      for (std::size_t i = next++; i < count; i = next++) fn(i);
    } catch (...) {
      std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
      next = count;
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

Eigen::MatrixXd jittered(const Eigen::MatrixXd& cov, double& jitter) {
  const auto d = static_cast<double>(cov.rows());
  const double trace = cov.trace();
  jitter = trace > 0.0 ? 1e-8 * trace / d : 1e-8;
  Eigen::MatrixXd out = cov;
  out.diagonal().array() += jitter;
  return out;
}

}  // namespace

LikelihoodEstimator make_likelihood_estimator(const LatentVariableModel& model,
                                              EstimatorKind kind, std::size_t particles) {
  const std::size_t n = model.observation_count();
  if (n > 0) {
    if (particles < n) throw DimensionError("need at least n particles");
    if (kind == EstimatorKind::simple && particles % n != 0) {
      std::ostringstream msg;
      msg << "simple estimator needs N to be a multiple of n; got N=" << particles
          << ", n=" << n;
      throw DimensionError(msg.str());
    }
  }
  return [&model, kind, particles, n](std::span<const double> theta, RngStream& rng) {
    if (n == 0) return LogEstimate{0.0};
    if (!model.admissible(theta)) return LogEstimate{kNegInf};
    const auto zeta = model.sample_particles(theta, particles, rng);
    const auto pm = model.potential_matrix(theta, zeta);
    switch (kind) {
      case EstimatorKind::simple: return estimate_simple(pm, particles / n);
      case EstimatorKind::biased: return estimate_biased(pm);
      case EstimatorKind::perm: return estimate_perm_exact(pm);
      case EstimatorKind::recycle: break;
    }
    return estimate_recycle(pm, rng).estimate;
  };
}

LikelihoodEstimator exact_likelihood(const DiscreteLatentModel& model) {
  return [&model](std::span<const double> theta, RngStream&) {
    if (!model.admissible(theta)) return LogEstimate{kNegInf};
    return LogEstimate{model.log_likelihood_exact(theta)};
  };
}

ProposalSpec ProposalSpec::from_covariance(Eigen::MatrixXd covariance) {
  if (covariance.rows() == 0 || covariance.rows() != covariance.cols()) {
    throw DimensionError("proposal covariance must be square and non-empty");
  }
  if (!covariance.allFinite()) throw ContractViolation("proposal covariance is not finite");
  const double scale = std::max(1.0, covariance.cwiseAbs().maxCoeff());
  if ((covariance - covariance.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw ContractViolation("proposal covariance is not symmetric");
  }
  covariance = 0.5 * (covariance + covariance.transpose());

  double jitter = 0.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(covariance, Eigen::EigenvaluesOnly);
  const double top = eig.eigenvalues().maxCoeff();
  const bool degenerate = !(top > 0.0) || !(eig.eigenvalues().minCoeff() > 1e-12 * top);
  Eigen::LLT<Eigen::MatrixXd> llt(covariance);
  if (degenerate || llt.info() != Eigen::Success) {
    covariance = jittered(covariance, jitter);
    llt.compute(covariance);
    if (llt.info() != Eigen::Success) {
      throw ContractViolation("proposal covariance is not positive semi-definite");
    }
  }
  Eigen::MatrixXd factor = llt.matrixL();
  return ProposalSpec(std::move(covariance), std::move(factor), jitter);
}

std::vector<double> ProposalSpec::propose(std::span<const double> theta, RngStream& rng) const {
  const auto d = static_cast<Eigen::Index>(dimension());
  if (static_cast<Eigen::Index>(theta.size()) != d) {
    throw DimensionError("theta and proposal have different dimensions");
  }
  Eigen::VectorXd eta(d);
  for (Eigen::Index i = 0; i < d; ++i) eta[i] = sample_standard_normal(rng);
  const Eigen::VectorXd step = factor_ * eta;
  std::vector<double> out(theta.begin(), theta.end());
  for (Eigen::Index i = 0; i < d; ++i) out[static_cast<std::size_t>(i)] += step[i];
  return out;
}

double acceptance_probability(double log_ratio) noexcept {
  if (std::isnan(log_ratio)) return 0.0;
  return log_ratio >= 0.0 ? 1.0 : std::exp(log_ratio);
}

bool accept_move(double log_ratio, double u) noexcept {
  return u < acceptance_probability(log_ratio);
}

StepOutcome pm_rwm_step(const ChainState& state, const ProposalSpec& proposal,
                        const LikelihoodEstimator& estimator, const PriorSpec& prior,
                        RngStream& rng) {
  StepOutcome out{state, false, false};
  auto candidate = proposal.propose(state.theta, rng);
  const double candidate_prior = prior.log_density(candidate);
  if (candidate_prior == kNegInf) return out;

  const LogEstimate estimate = estimator(candidate, rng);
  out.estimated = true;
  if (std::isnan(estimate.log_value)) {
    std::ostringstream msg;
    msg << "likelihood estimator returned NaN at theta = (";
    for (std::size_t i = 0; i < candidate.size(); ++i) msg << (i ? ", " : "") << candidate[i];
    msg << ")";
    throw ContractViolation(msg.str());
  }
  const double log_ratio = (estimate.log_value + candidate_prior) - state.log_target();
  if (accept_move(log_ratio, rng.uniform())) {
    out.state = {std::move(candidate), estimate.log_value, candidate_prior};
    out.accepted = true;
  }
  return out;
}

void ChainConfig::validate() const {
  if (length == 0) throw ContractViolation("chain length must be at least 1");
  if (!(burn_in >= 0.0 && burn_in < 1.0)) throw ContractViolation("burn-in must be in [0, 1)");
}

ChainOutput run_chain(const ChainConfig& config, const LikelihoodEstimator& estimator,
                      const PriorSpec& prior, const ProposalSpec& proposal,
                      const std::optional<std::vector<double>>& init) {
  config.validate();
  const std::size_t d = proposal.dimension();
  if (prior.dimension() != d) throw DimensionError("prior and proposal dimensions differ");
  RngStream rng(config.seed, config.stream);

  ChainState state;
  bool ready = false;
  for (std::size_t attempt = 0; attempt < std::max<std::size_t>(1, config.max_init_attempts);
       ++attempt) {
    state.theta = init ? *init : prior.sample(rng);
    if (state.theta.size() != d) throw DimensionError("initial theta has the wrong dimension");
    state.log_prior = prior.log_density(state.theta);
    if (state.log_prior == kNegInf) {
      if (init) throw ContractViolation("initial theta lies outside the prior support");
      continue;
    }
    state.log_like_hat = estimator(state.theta, rng).log_value;
    if (std::isnan(state.log_like_hat)) throw ContractViolation("initial estimate is NaN");
    if (state.log_like_hat != kNegInf) {
      ready = true;
      break;
    }
  }
  if (!ready) {
    std::ostringstream msg;
    msg << "chain initialization failed: likelihood estimate was 0 in "
        << config.max_init_attempts << " attempts";
    throw std::runtime_error(msg.str());
  }

  ChainOutput out;
  out.initial = state;
  out.samples.resize(static_cast<Eigen::Index>(config.length), static_cast<Eigen::Index>(d));
  out.log_like_trace.resize(config.length);
  out.accepted.resize(config.length);
  std::size_t accepted = 0;
  for (std::size_t t = 0; t < config.length; ++t) {
    auto step = pm_rwm_step(state, proposal, estimator, prior, rng);
    state = std::move(step.state);
    accepted += step.accepted ? 1 : 0;
    for (std::size_t i = 0; i < d; ++i) {
      out.samples(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i)) = state.theta[i];
    }
    out.log_like_trace[t] = state.log_like_hat;
    out.accepted[t] = step.accepted ? 1 : 0;
  }
  out.acceptance_rate = static_cast<double>(accepted) / static_cast<double>(config.length);
  out.burn_in_rows = static_cast<std::size_t>(config.burn_in * static_cast<double>(config.length));

  const std::size_t kept = config.length - out.burn_in_rows;
  out.ess.resize(d);
  for (std::size_t i = 0; i < d; ++i) {
    if (kept < 4) {
      out.ess[i] = static_cast<double>(kept);
      continue;
    }
    std::vector<double> column(kept);
    for (std::size_t r = 0; r < kept; ++r) {
      column[r] = out.samples(static_cast<Eigen::Index>(out.burn_in_rows + r),
                              static_cast<Eigen::Index>(i));
    }
    out.ess[i] = ess_batch_means(column);
  }
  return out;
}

std::vector<ChainOutput> run_chains(const ChainConfig& config, std::size_t count,
                                    const LikelihoodEstimator& estimator,
                                    const PriorSpec& prior, const ProposalSpec& proposal,
                                    const std::optional<std::vector<double>>& init) {
  std::vector<ChainOutput> outputs(count);
  parallel_for(count, [&](std::size_t i) {
    ChainConfig c = config;
    c.stream = config.stream + i;
    outputs[i] = run_chain(c, estimator, prior, proposal, init);
  });
  return outputs;
}

ProposalSpec tune_proposal(const ChainOutput& pilot, std::size_t d, ProposalScaling scaling) {
  if (pilot.dimension() != d) throw DimensionError("pilot dimension differs from d");
  const auto start = static_cast<Eigen::Index>(pilot.burn_in_rows);
  const Eigen::Index rows = pilot.samples.rows() - start;
  if (rows < static_cast<Eigen::Index>(d + 1)) {
    throw ContractViolation("pilot run needs at least d + 1 post-burn-in samples");
  }
  const Eigen::MatrixXd kept = pilot.samples.bottomRows(rows);
  const Eigen::RowVectorXd mean = kept.colwise().mean();
  const Eigen::MatrixXd centered = kept.rowwise() - mean;
  Eigen::MatrixXd sigma = (centered.transpose() * centered) / static_cast<double>(rows - 1);

  const auto dd = static_cast<double>(d);
  const double factor = scaling == ProposalScaling::literal ? 2.38 / std::sqrt(dd)
                                                            : 2.38 * 2.38 / dd;
  return ProposalSpec::from_covariance(factor * sigma);
}

ReplicateSummary summarize_replicates(std::span<const double> log_estimates) {
  ReplicateSummary s;
  s.replicates = log_estimates.size();
  if (s.replicates == 0) throw ContractViolation("no replicates to summarize");
  double shift = kNegInf;
  for (double l : log_estimates) {
    if (std::isnan(l)) throw ContractViolation("replicate log-estimate is NaN");
    if (l == kNegInf) ++s.zeros;
    shift = std::max(shift, l);
  }
  if (shift == kNegInf) {
    s.relative_variance = std::numeric_limits<double>::infinity();
    s.relative_variance_se = std::numeric_limits<double>::infinity();
    return s;
  }
  const auto R = static_cast<double>(s.replicates);
  std::vector<double> w(s.replicates);
  double m1 = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::exp(log_estimates[i] - shift);
    m1 += w[i];
    m2 += w[i] * w[i];
  }
  m1 /= R;
  m2 /= R;
  double var_w = 0.0, var_w2 = 0.0, cov = 0.0;
  for (double v : w) {
    const double a = v - m1;
    const double b = v * v - m2;
    var_w += a * a;
    var_w2 += b * b;
    cov += a * b;
  }
  const double denom = std::max(R - 1.0, 1.0);
  var_w /= denom;
  var_w2 /= denom;
  cov /= denom;

  s.log_mean = shift + std::log(m1);
  s.mean = std::exp(s.log_mean);
  s.mean_se = std::exp(shift) * std::sqrt(var_w / R);
  s.relative_variance = m2 / (m1 * m1) - 1.0;
  const double d1 = -2.0 * m2 / (m1 * m1 * m1);
  const double d2 = 1.0 / (m1 * m1);
  const double var_rv = (d1 * d1 * var_w + d2 * d2 * var_w2 + 2.0 * d1 * d2 * cov) / R;
  s.relative_variance_se = std::sqrt(std::max(var_rv, 0.0));
  return s;
}

std::vector<double> replicate_log_estimates(const LikelihoodEstimator& estimator,
                                            std::span<const double> theta, std::size_t R,
                                            const RngStream& base) {
  std::vector<double> out(R);
  parallel_for(R, [&](std::size_t r) {
    RngStream rng = base.substream(r);
    out[r] = estimator(theta, rng).log_value;
  });
  return out;
}

double relative_variance(const LikelihoodEstimator& estimator, std::span<const double> theta,
                         std::size_t R, RngStream& rng) {
  if (R < 2) throw ContractViolation("relative variance needs at least 2 replicates");
  const RngStream base = rng.substream(rng());
  return summarize_replicates(replicate_log_estimates(estimator, theta, R, base))
      .relative_variance;
}

double relative_variance(const LatentVariableModel& model, EstimatorKind kind,
                         std::span<const double> theta, std::size_t particles, std::size_t R,
                         RngStream& rng) {
  return relative_variance(make_likelihood_estimator(model, kind, particles), theta, R, rng);
}

ParticleTuning tune_particle_count(const RelativeVarianceProbe& probe, std::size_t start,
                                   double target, std::size_t ceiling) {
  if (!(target > 0.0)) throw ContractViolation("relative variance target must be positive");
  if (start == 0) throw ContractViolation("starting particle count must be positive");
  ParticleTuning out;
  double last = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t N = start; N <= ceiling; N *= 2) {
    last = probe(N);
    out.probes.emplace_back(N, last);
    if (last <= target) {
      out.particles = N;
      out.relative_variance = last;
      return out;
    }
    if (N > ceiling / 2) break;
  }
  std::ostringstream msg;
  msg << "particle tuning reached the ceiling N <= " << ceiling
      << " without relative variance <= " << target << "; last measured " << last;
  if (!out.probes.empty()) msg << " at N = " << out.probes.back().first;
  throw TuningError(msg.str());
}

ParticleTuning tune_particle_count(const LatentVariableModel& model, EstimatorKind kind,
                                   std::span<const double> theta_ref, double target,
                                   std::size_t R, RngStream& rng, std::size_t ceiling) {
  const std::size_t n = std::max<std::size_t>(1, model.observation_count());
  return tune_particle_count(
      [&](std::size_t N) { return relative_variance(model, kind, theta_ref, N, R, rng); }, n,
      target, ceiling);
}

double ess_batch_means(std::span<const double> series) {
  const std::size_t T = series.size();
  if (T < 4) throw DimensionError("batch-means ESS needs at least 4 values");
  const auto Td = static_cast<double>(T);
  const double mean = std::accumulate(series.begin(), series.end(), 0.0) / Td;
  double var = 0.0;
  for (double x : series) var += (x - mean) * (x - mean);
  var /= Td - 1.0;
  if (!(var > 0.0)) return Td;

  const auto b = static_cast<std::size_t>(std::floor(std::sqrt(Td)));
  const std::size_t a = T / b;
  double between = 0.0;
  for (std::size_t k = 0; k < a; ++k) {
    double batch = 0.0;
    for (std::size_t i = 0; i < b; ++i) batch += series[k * b + i];
    batch /= static_cast<double>(b);
    between += (batch - mean) * (batch - mean);
  }
  const double sigma_sq = static_cast<double>(b) * between / static_cast<double>(a - 1);
  if (!(sigma_sq > 0.0)) return Td;
  const double ess = Td * var / sigma_sq;
  return std::clamp(ess, std::numeric_limits<double>::min(), Td);
}

}  // namespace prodest
