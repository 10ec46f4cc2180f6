// Acceptance checks: one PASS/FAIL line per criterion, exit status 1 if any fail.
//
//   acceptance            run every criterion
//   acceptance 3 7        run the listed criteria only

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "config.hpp"
#include "fuzz.hpp"
#include "prodest/exact_oracle.hpp"
#include "prodest/fixtures.hpp"
#include "prodest/mcmc.hpp"
#include "prodest/models.hpp"

using namespace prodest;
using prodest::testing::Fixture;
using prodest::testing::FuzzSource;
using prodest::testing::relative_gap;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) detail << "first failure: " << what << "; ";
    pass = pass && ok;
  }
};

struct Criterion {
  int id;
  const char* name;
  double time_limit_seconds;  // <= 0: no limit
  std::function<void(Outcome&)> run;
};

std::filesystem::path config_path(const char* name) {
  return std::filesystem::path(PRODEST_SOURCE_DIR) / "configs" / name;
}

void exact_unbiasedness(Outcome& o) {
  FuzzSource fuzz(1001);
  double worst = 0.0;
  int simple_cases = 0;
  for (int i = 0; i < 200; ++i) {
    const Fixture f = fuzz.general();
    const double gamma = gamma_exact(f.mu, f.pots);
    std::vector<EstimatorKind> kinds{EstimatorKind::perm, EstimatorKind::recycle};
    if (f.N % f.pots.count() == 0) {
      kinds.push_back(EstimatorKind::simple);
      ++simple_cases;
    }
    for (auto kind : kinds) {
      const double gap = relative_gap(estimator_distribution_exact(f.mu, f.pots, f.N, kind).mean, gamma);
      worst = std::max(worst, gap);
      o.require(gap <= 1e-10, std::string("mean of ") + to_string(kind) + " at case " + std::to_string(i));
    }
  }
  const auto d1 = fixtures::d1();
  const double biased = estimator_distribution_exact(d1.mu, d1.pots, 2, EstimatorKind::biased).mean;
  const double recycle = estimator_distribution_exact(d1.mu, d1.pots, 2, EstimatorKind::recycle).mean;
  o.require(biased == 0.125, "biased mean on D1 is 1/8");
  o.require(recycle == 0.25, "recycle mean on D1 is 1/4");
  o.detail << "200 fixtures (" << simple_cases << " with simple), worst relative gap " << worst
           << "; D1 biased " << biased << " vs gamma 0.25";
}

void conditional_identity(Outcome& o) {
  FuzzSource fuzz(1002);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const std::size_t n = fuzz.integer(1, 3);
    const std::size_t N = fuzz.integer(n, 6);
    const auto pm = fuzz.matrix(n, N);
    const double perm = estimate_perm_exact(pm).value();
    const double mean = recycle_conditional_moments(pm).mean;
    const double gap = perm == 0.0 ? std::abs(mean) : relative_gap(mean, perm);
    worst = std::max(worst, gap);
    o.require(gap <= 1e-12, "matrix " + std::to_string(i));
  }
  o.detail << "100 matrices, worst relative gap " << worst;
}

void second_moment_identities(Outcome& o) {
  FuzzSource fuzz(1001);  // the criterion-1 fixtures
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    const Fixture f = fuzz.general();
    const double g2 = std::pow(gamma_exact(f.mu, f.pots), 2);
    const double via_psi = second_moment_recycle_exact(f.mu, f.pots, f.N);
    const double via_paths =
        estimator_distribution_exact(f.mu, f.pots, f.N, EstimatorKind::recycle).second_moment / g2;
    const double gap = relative_gap(via_psi, via_paths);
    worst = std::max(worst, gap);
    o.require(gap <= 1e-10, "recycle second moment at case " + std::to_string(i));
    const double perm_gap =
        relative_gap(second_moment_perm_exact(f.mu, f.pots, f.N),
                     estimator_distribution_exact(f.mu, f.pots, f.N, EstimatorKind::perm).second_moment / g2);
    worst = std::max(worst, perm_gap);
    o.require(perm_gap <= 1e-10, "perm second moment at case " + std::to_string(i));
  }
  const auto d1 = fixtures::d1();
  const double perm = second_moment_perm_exact(d1.mu, d1.pots, 2);
  const double recycle = second_moment_recycle_exact(d1.mu, d1.pots, 2);
  const double simple = second_moment_simple_exact(d1.mu, d1.pots, 1);
  o.require(perm == 2.0 && recycle == 2.0 && simple == 4.0, "D1 moments 2, 2, 4");
  o.detail << "200 fixtures, worst relative gap " << worst << "; D1 perm " << perm << " recycle "
           << recycle << " simple " << simple;
}

void independent_case(Outcome& o) {
  FuzzSource fuzz(1004);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Fixture f = fuzz.product();
    const double gap = relative_gap(second_moment_recycle_exact(f.mu, f.pots, f.N),
                                    independent_case_formula(relative_excess(f.mu, f.pots), f.N));
    worst = std::max(worst, gap);
    o.require(gap <= 1e-10, "product fixture " + std::to_string(i));
  }
  const auto d3 = fixtures::d3();
  const double d3_value = second_moment_recycle_exact(d3.mu, d3.pots, 2);
  o.require(std::abs(d3_value - 3.0) <= 1e-10 * 3.0, "D3 at N = 2 gives 3");
  o.detail << "100 product fixtures, worst relative gap " << worst << "; D3 N=2 " << d3_value;
}

void orderings(Outcome& o) {
  constexpr double kSlack = 1e-10;
  FuzzSource fuzz(1005);
  int counts[4] = {0, 0, 0, 0};
  for (int i = 0; i < 100; ++i) {
    const Fixture f = fuzz.disjoint();
    const double recycle = second_moment_recycle_exact(f.mu, f.pots, f.N);
    const double perm = second_moment_perm_exact(f.mu, f.pots, f.N);
    const double bound = independent_case_formula(relative_excess(f.mu, f.pots), f.N);
    const bool ok = relative_gap(recycle, perm) <= kSlack && recycle <= bound * (1 + kSlack);
    counts[0] += ok;
    o.require(ok, "disjoint supports case " + std::to_string(i));
  }
  for (int i = 0; i < 100; ++i) {
    const Fixture f = fuzz.identical();
    const double recycle = second_moment_recycle_exact(f.mu, f.pots, f.N);
    const double perm = second_moment_perm_exact(f.mu, f.pots, f.N);
    const double bound = perm_identical_lower_bound(relative_excess(f.mu, f.pots)[0], f.pots.count(), f.N);
    const bool ok = recycle * (1 + kSlack) >= perm && perm * (1 + kSlack) >= bound;
    counts[1] += ok;
    o.require(ok, "identical potentials case " + std::to_string(i));
  }
  for (int i = 0; i < 100; ++i) {
    const Fixture f = fuzz.identical_moment_bounded();
    const bool ok = second_moment_recycle_exact(f.mu, f.pots, f.N) <=
                    second_moment_simple_exact(f.mu, f.pots, f.N / f.pots.count()) * (1 + kSlack);
    counts[2] += ok;
    o.require(ok, "moment-bounded identical case " + std::to_string(i));
  }
  for (int i = 0; i < 100; ++i) {
    const Fixture f = fuzz.indicators();
    const bool ok = second_moment_recycle_exact(f.mu, f.pots, f.N) <=
                    second_moment_simple_exact(f.mu, f.pots, f.N / f.pots.count()) * (1 + kSlack);
    counts[3] += ok;
    o.require(ok, "indicator case " + std::to_string(i));
  }
  o.detail << "disjoint " << counts[0] << "/100, identical " << counts[1]
           << "/100, identical moment-bounded " << counts[2] << "/100, indicators " << counts[3]
           << "/100";
}

void latent_identity(Outcome& o) {
  FuzzSource fuzz(1006);
  double worst = 0.0;
  int simple_cases = 0;
  for (int i = 0; i < 50; ++i) {
    const auto lvm = fuzz.lvm();
    const std::size_t n = fuzz.integer(1, 3);
    const std::size_t N = fuzz.integer(n, 6);
    const auto r = latent_expected_second_moment(lvm, n, N);
    double rhs = 1.0;
    for (std::size_t p = 1; p <= n; ++p) rhs *= 1.0 + r.C / static_cast<double>(N - p + 1);
    const double gap = std::max(relative_gap(r.lhs, rhs), relative_gap(r.rhs, rhs));
    worst = std::max(worst, gap);
    o.require(gap <= 1e-10, "recycle identity at lvm " + std::to_string(i));
    if (N % n == 0) {
      ++simple_cases;
      const std::size_t M = N / n;
      const auto s = latent_expected_second_moment_simple(lvm, n, M);
      const double srhs = std::pow(1.0 + s.C / static_cast<double>(M), static_cast<double>(n));
      const double sgap = std::max(relative_gap(s.lhs, srhs), relative_gap(s.rhs, srhs));
      worst = std::max(worst, sgap);
      o.require(sgap <= 1e-10, "simple identity at lvm " + std::to_string(i));
    }
  }
  const auto d4 = fixtures::d4();
  const auto one = latent_expected_second_moment(d4, 1, 2);
  o.require(one.C == 0.25, "D4 C = 1/4");
  o.require(std::abs(one.lhs - 1.125) <= 1e-10 && std::abs(one.rhs - 1.125) <= 1e-10,
            "D4 both sides 9/8 at n=1, N=2");
  o.detail << "50 models (" << simple_cases << " with simple), worst relative gap " << worst
           << "; D4 C " << one.C << " lhs " << one.lhs << " rhs " << one.rhs;
}

void monte_carlo_consistency(Outcome& o) {
  const auto model = DiscreteLatentModel::fixed(fixtures::d1_lvm(), fixtures::d1_observations());
  const auto est = make_likelihood_estimator(model, EstimatorKind::recycle, 2);
  const auto s = summarize_replicates(replicate_log_estimates(est, {}, 100000, RngStream(1007, 3)));
  o.require(std::abs(s.mean - 0.25) <= 3.0 * s.mean_se, "mean within 3 SE of 0.25");
  o.require(std::abs(s.relative_variance - 1.0) <= 3.0 * s.relative_variance_se,
            "relative variance within 3 SE of 1");
  o.detail << "mean " << s.mean << " (se " << s.mean_se << "), relative variance "
           << s.relative_variance << " (se " << s.relative_variance_se << ")";
}

void gandk_experiment(Outcome& o) {
  const auto config = cli::load_config(config_path("gandk_desk.conf"));
  const auto problem = cli::build_problem(config);
  const std::size_t n = problem.model->observation_count();
  o.require(n == 20, "n = 20");
  bool tuned = false;
  const ParticleTuning t = cli::choose_particles(config, problem, tuned);
  o.require(tuned, "particle count came from tuning");
  o.require(t.relative_variance <= 2.0, "tuned relative variance <= 2");
  o.require(t.particles <= 200 * n, "N <= 200 n");
  o.require(t.particles % n == 0, "N is a multiple of n");

  constexpr std::size_t R = 4000;
  const RngStream base(config.seed, 1008);
  const auto recycle = summarize_replicates(replicate_log_estimates(
      make_likelihood_estimator(*problem.model, EstimatorKind::recycle, t.particles),
      problem.theta0, R, base.substream(0)));
  const auto simple = summarize_replicates(replicate_log_estimates(
      make_likelihood_estimator(*problem.model, EstimatorKind::simple, t.particles),
      problem.theta0, R, base.substream(1)));
  // An infinite simple relative variance (every replicate zero) cannot be beaten.
  const bool ordered =
      std::isinf(simple.relative_variance) ||
      recycle.relative_variance - simple.relative_variance <=
          3.0 * std::hypot(recycle.relative_variance_se, simple.relative_variance_se);
  o.require(ordered, "recycle relative variance <= simple within 3 SE");
  o.detail << "N = " << t.particles << " = " << t.particles / n << "n (tuned rv "
           << t.relative_variance << "); at that N with R = " << R << ": recycle rv "
           << recycle.relative_variance << " (se " << recycle.relative_variance_se
           << "), simple rv " << simple.relative_variance << " (se "
           << simple.relative_variance_se << ", " << simple.zeros << " zeros)";
}

void poisson_beta_experiment(Outcome& o) {
  const auto config = cli::load_config(config_path("poisson_beta_desk.conf"));
  const auto problem = cli::build_problem(config);
  o.require(problem.model->observation_count() == 50, "n = 50");
  o.require(config.chain_length == 20000, "chain length 2e4");
  o.require(config.estimator == EstimatorKind::recycle, "recycle estimator");
  const auto r = cli::run_mcmc_pipeline(config, problem);
  const auto& chain = r.chain;
  const auto kept = chain.samples.bottomRows(
      static_cast<Eigen::Index>(chain.length() - chain.burn_in_rows));
  std::vector<double> lambda(kept.col(0).data(), kept.col(0).data() + kept.rows());
  const double mean = std::accumulate(lambda.begin(), lambda.end(), 0.0) / lambda.size();
  std::sort(lambda.begin(), lambda.end());
  const double lo = lambda[static_cast<std::size_t>(0.025 * lambda.size())];
  const double hi = lambda[std::min(lambda.size() - 1, static_cast<std::size_t>(0.975 * lambda.size()))];
  o.require(lo <= 500.0 && 500.0 <= hi, "central 95% interval of lambda contains 500");
  o.require(lo <= mean && mean <= hi, "posterior mean of lambda inside the interval");
  for (std::size_t i = 0; i < chain.ess.size(); ++i) {
    o.require(chain.ess[i] > 500.0, "ESS > 500 for coordinate " + std::to_string(i + 1));
  }
  o.detail << "N = " << r.particles << ", acceptance " << chain.acceptance_rate << ", lambda mean "
           << mean << " in [" << lo << ", " << hi << "], ESS";
  for (double e : chain.ess) o.detail << ' ' << e;
}

void exactness_reduction(Outcome& o) {
  // Bernoulli latent law with theta in (0, 1) and the likelihood held constant
  // on K cells, each at its midpoint value. Under a U(0, 1) prior the cell
  // posterior is proportional to the midpoint likelihood.
  constexpr int K = 5;
  const std::vector<std::size_t> y{0, 0, 0, 1, 0, 1, 0, 0};
  const auto model = DiscreteLatentModel::bernoulli(fixtures::d4().kernel_rows(), y);
  const auto exact = exact_likelihood(model);
  auto cell = [](double theta) { return std::min(K - 1, static_cast<int>(theta * K)); };
  const LikelihoodEstimator grid = [&](std::span<const double> theta, RngStream& rng) {
    const std::vector<double> mid{(cell(theta[0]) + 0.5) / K};
    return exact(mid, rng);
  };
  std::vector<double> posterior(K);
  double z = 0.0;
  for (int k = 0; k < K; ++k) {
    const std::vector<double> mid{(k + 0.5) / K};
    z += posterior[k] = std::exp(model.log_likelihood_exact(mid));
  }
  for (auto& p : posterior) p /= z;

  const PriorSpec prior({UniformPrior{0.0, 1.0}});
  ChainConfig config;
  config.length = 100000;
  config.burn_in = 0.0;
  config.seed = 1010;
  const auto chain = run_chain(config, grid, prior,
                               ProposalSpec::from_covariance(Eigen::MatrixXd::Constant(1, 1, 0.09)),
                               std::vector<double>{0.5});
  o.detail << "cell occupancy vs posterior:";
  for (int k = 0; k < K; ++k) {
    std::vector<double> indicator(chain.length());
    for (std::size_t t = 0; t < chain.length(); ++t) {
      indicator[t] = cell(chain.samples(static_cast<Eigen::Index>(t), 0)) == k ? 1.0 : 0.0;
    }
    const double freq = std::accumulate(indicator.begin(), indicator.end(), 0.0) / indicator.size();
    const double se = std::sqrt(freq * (1.0 - freq) / ess_batch_means(indicator));
    o.require(std::abs(freq - posterior[k]) <= 3.0 * se, "cell " + std::to_string(k));
    o.detail << ' ' << freq << '/' << posterior[k] << " (se " << se << ')';
  }
}

void ess_oracle(Outcome& o) {
  constexpr double rho = 0.5;
  constexpr std::size_t T = 100000;
  RngStream rng(1011);
  std::vector<double> x(T);
  double v = sample_standard_normal(rng) / std::sqrt(1.0 - rho * rho);
  for (auto& out : x) out = v = rho * v + sample_standard_normal(rng);
  const double ratio = ess_batch_means(x) / static_cast<double>(T);
  o.require(std::abs(ratio - 1.0 / 3.0) <= 0.2 / 3.0, "ESS / T within 20% of 1/3");
  o.detail << "ESS / T = " << ratio;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {1, "exact unbiasedness", 30, exact_unbiasedness},
      {2, "conditional mean of recycle is the permanent", 10, conditional_identity},
      {3, "second-moment identities", 60, second_moment_identities},
      {4, "independent potentials closed form", 0, independent_case},
      {5, "orderings on structured fixtures", 0, orderings},
      {6, "latent variable model identity", 0, latent_identity},
      {7, "Monte Carlo consistency on D1", 10, monte_carlo_consistency},
      {8, "g-and-k tuning and variance ordering", 600, gandk_experiment},
      {9, "Poisson-Beta posterior", 900, poisson_beta_experiment},
      {10, "exact plug-in chain on a theta grid", 120, exactness_reduction},
      {11, "batch-means ESS on AR(1)", 0, ess_oracle},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    Outcome o;
    const auto start = std::chrono::steady_clock::now();
    try {
      c.run(o);
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.time_limit_seconds > 0) {
      std::ostringstream what;
      what << "runtime " << seconds << " s over " << c.time_limit_seconds << " s";
      o.require(seconds < c.time_limit_seconds, what.str());
    }
    failures += o.pass ? 0 : 1;
    std::printf("%s criterion %d (%s): %s [%.2f s]\n", o.pass ? "PASS" : "FAIL", c.id, c.name,
                o.detail.str().c_str(), seconds);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
