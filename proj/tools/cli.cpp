#include "cli.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "prodest/errors.hpp"
#include "prodest/exact_oracle.hpp"
#include "prodest/fixtures.hpp"

#ifndef PRODEST_VERSION
#define PRODEST_VERSION "0.0.0"
#endif

namespace prodest::cli {

namespace fs = std::filesystem;

const char* version() noexcept { return PRODEST_VERSION; }

namespace {

std::string num(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string join(const std::vector<double>& xs, const char* sep) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? sep : "") + num(xs[i]);
  return s;
}

// Output files are buffered in memory and land in the output directory only
// when every computation has succeeded.
class OutputSet {
 public:
  OutputSet(fs::path dir, std::uint64_t seed) : dir_(std::move(dir)), seed_(seed) {}

  std::ostringstream& csv(const std::string& name) {
    auto& s = add(name);
    s << "# prodest " << version() << " master_seed=" << seed_ << '\n';
    return s;
  }
  std::ostringstream& add(const std::string& name) {
    files_.emplace_back(name, std::make_unique<std::ostringstream>());
    return *files_.back().second;
  }

  void commit() {
    fs::create_directories(dir_);
    std::vector<fs::path> staged;
    std::vector<fs::path> placed;
    try {
      for (const auto& [name, content] : files_) {
        const fs::path tmp = dir_ / (name + ".partial");
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        staged.push_back(tmp);
        f << content->str();
        f.close();
        if (!f) throw std::runtime_error("failed to write " + tmp.string());
      }
      for (std::size_t i = 0; i < files_.size(); ++i) {
        const fs::path target = dir_ / files_[i].first;
        fs::rename(staged[i], target);
        placed.push_back(target);
      }
    } catch (...) {
      std::error_code ec;
      for (const auto& p : staged) fs::remove(p, ec);
      for (const auto& p : placed) fs::remove(p, ec);
      throw;
    }
  }

  std::vector<fs::path> paths() const {
    std::vector<fs::path> out;
    for (const auto& f : files_) out.push_back(dir_ / f.first);
    return out;
  }

 private:
  fs::path dir_;
  std::uint64_t seed_;
  std::vector<std::pair<std::string, std::unique_ptr<std::ostringstream>>> files_;
};

std::vector<std::size_t> to_labels(const std::vector<double>& values) {
  std::vector<std::size_t> out;
  for (double v : values) {
    if (!(v >= 0.0) || v != std::floor(v)) {
      throw ConfigError("discrete observations must be non-negative integers");
    }
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

std::vector<double> load_or_simulate(const ExperimentConfig& config, Problem& problem,
                                     const std::function<std::vector<double>(RngStream&)>& sim) {
  if (config.data) {
    if (!fs::exists(*config.data)) {
      throw ConfigError("data file " + config.data->string() + " does not exist");
    }
    return read_observations(*config.data);
  }
  if (!config.n) throw ConfigError("either data or n must be given");
  RngStream rng(config.data_seed.value_or(config.seed), kDataStream);
  problem.simulated = true;
  return sim(rng);
}

DiscreteLVM discrete_lvm_from(const ExperimentConfig& config, std::vector<std::size_t>& y) {
  if (!config.fixture.empty()) {
    std::string id = config.fixture;
    std::transform(id.begin(), id.end(), id.begin(), [](unsigned char c) { return std::toupper(c); });
    if (id == "D1") {
      if (y.empty()) y = fixtures::d1_observations();
      return fixtures::d1_lvm();
    }
    if (id == "D4") return fixtures::d4();
    throw ConfigError("unknown discrete-lvm fixture '" + config.fixture + "'");
  }
  if (config.kernel.empty()) throw ConfigError("discrete-lvm needs a fixture or a kernel");
  const std::size_t m = config.kernel.size();
  auto probs = config.latent_probs.empty() ? std::vector<double>(m, 1.0 / static_cast<double>(m))
                                           : config.latent_probs;
  try {
    return DiscreteLVM(DiscreteMeasure(std::move(probs)), config.kernel);
  } catch (const ContractViolation& e) {
    throw ConfigError(std::string("discrete-lvm: ") + e.what());
  }
}

std::vector<PriorMarginal> default_prior(const std::string& model) {
  if (model == "gandk") return std::vector<PriorMarginal>(4, UniformPrior{0.0, 10.0});
  if (model == "poisson-beta") {
    return {ExponentialPrior{1000.0}, ExponentialPrior{10.0}, ExponentialPrior{10.0}};
  }
  return {UniformPrior{0.0, 1.0}};
}

void require_theta0(const ExperimentConfig& config, std::size_t d) {
  if (config.theta0.size() != d) {
    throw ConfigError("theta0 must have " + std::to_string(d) + " entries for model " +
                      config.model + ", got " + std::to_string(config.theta0.size()));
  }
}

}  // namespace

Problem build_problem(const ExperimentConfig& config) {
  Problem problem;
  problem.theta0 = config.theta0;
  if (config.model == "gandk") {
    require_theta0(config, 4);
    const auto params = GandKParams::from_theta(config.theta0);
    if (!(params.B > 0.0)) throw ConfigError("g-and-k needs B > 0");
    GandKObsConfig obs;
    obs.epsilon = config.epsilon;
    obs.noise = config.gandk_noise;
    obs.y = load_or_simulate(config, problem, [&](RngStream& rng) {
      return gandk_simulate_data(params, *config.n, config.epsilon, rng, config.gandk_noise);
    });
    problem.observations = obs.y;
    problem.model = std::make_unique<GandKModel>(std::move(obs));
  } else if (config.model == "poisson-beta") {
    require_theta0(config, 3);
    PoissonBetaParams params{config.theta0[0], config.theta0[1], config.theta0[2], config.sigma};
    try {
      params.validate();
    } catch (const ContractViolation& e) {
      throw ConfigError(std::string("poisson-beta: ") + e.what());
    }
    problem.observations = load_or_simulate(
        config, problem, [&](RngStream& rng) { return pb_simulate_data(params, *config.n, rng); });
    problem.model = std::make_unique<PoissonBetaModel>(problem.observations, config.sigma);
  } else if (config.model == "discrete-lvm") {
    std::vector<std::size_t> y = config.y;
    if (config.data) y = to_labels(read_observations(*config.data));
    const DiscreteLVM lvm = discrete_lvm_from(config, y);
    for (std::size_t v : y) {
      if (v >= lvm.obs_size()) throw ConfigError("observation label out of range");
    }
    problem.observations.assign(y.begin(), y.end());
    if (config.theta0.empty()) {
      problem.model = std::make_unique<DiscreteLatentModel>(DiscreteLatentModel::fixed(lvm, y));
    } else {
      require_theta0(config, 1);
      problem.model = std::make_unique<DiscreteLatentModel>(
          DiscreteLatentModel::bernoulli(lvm.kernel_rows(), y));
    }
  } else if (config.model.empty()) {
    throw ConfigError("model is not set");
  } else {
    throw ConfigError("unknown model '" + config.model + "'");
  }

  const std::size_t d = problem.model->dimension();
  if (d > 0) {
    problem.prior = config.prior.empty() ? PriorSpec(default_prior(config.model))
                                         : parse_prior(config.prior);
    if (problem.prior->dimension() != d) {
      throw ConfigError("prior has " + std::to_string(problem.prior->dimension()) +
                        " marginals but the model has dimension " + std::to_string(d));
    }
  }
  if (!problem.model->admissible(problem.theta0)) {
    throw ConfigError("theta0 violates the parameter constraints of " + config.model);
  }
  return problem;
}

ParticleTuning choose_particles(const ExperimentConfig& config, const Problem& problem,
                                bool& tuned) {
  if (config.particles) {
    tuned = false;
    ParticleTuning fixed;
    fixed.particles = *config.particles;
    return fixed;
  }
  tuned = true;
  if (config.tune_replicates < 2) throw ConfigError("tune_replicates must be at least 2");
  RngStream rng(config.seed, kTuneStream);
  auto result = tune_particle_count(*problem.model, config.estimator, problem.theta0,
                                    config.tune_target, config.tune_replicates, rng);
  return result;
}

McmcResult run_mcmc_pipeline(const ExperimentConfig& config, const Problem& problem) {
  const auto start = std::chrono::steady_clock::now();
  const std::size_t d = problem.model->dimension();
  if (d == 0) throw ConfigError("mcmc needs a model with at least one parameter");
  if (config.estimator != EstimatorKind::simple && config.estimator != EstimatorKind::recycle) {
    throw ConfigError("mcmc supports the simple and recycle estimators only");
  }
  if (config.chain_length == 0) throw ConfigError("chain_length must be at least 1");

  McmcResult result;
  result.tuning = choose_particles(config, problem, result.tuned);
  result.particles = result.tuning.particles;
  const auto estimator =
      make_likelihood_estimator(*problem.model, config.estimator, result.particles);
  const PriorSpec& prior = *problem.prior;

  std::vector<double> sd = config.pilot_sd;
  if (sd.empty()) {
    for (std::size_t i = 0; i < d; ++i) {
      const double scale = problem.theta0.size() == d ? std::abs(problem.theta0[i]) : 1.0;
      sd.push_back(0.1 * std::max(scale, 1.0));
    }
  }
  if (sd.size() != d) throw ConfigError("pilot_sd must have one entry per parameter");
  Eigen::VectorXd variances(static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < d; ++i) variances[static_cast<Eigen::Index>(i)] = sd[i] * sd[i];
  ProposalSpec proposal = ProposalSpec::from_covariance(variances.asDiagonal().toDenseMatrix());

  std::optional<std::vector<double>> init;
  if (config.init == "theta0") init = problem.theta0;

  const std::size_t pilot_length = config.pilot_length ? config.pilot_length : config.chain_length;
  for (std::size_t round = 0; round < config.pilot_rounds; ++round) {
    ChainConfig pilot_config;
    pilot_config.length = pilot_length;
    pilot_config.burn_in = config.burn_in;
    pilot_config.seed = config.seed;
    pilot_config.stream = kPilotStreamBase + round;
    pilot_config.estimator = config.estimator;
    pilot_config.particles = result.particles;
    const ChainOutput pilot = run_chain(pilot_config, estimator, prior, proposal, init);
    result.pilot_acceptance.push_back(pilot.acceptance_rate);
    proposal = tune_proposal(pilot, d, config.proposal_scaling);
    const auto last = pilot.samples.row(pilot.samples.rows() - 1);
    init = std::vector<double>(d);
    for (std::size_t i = 0; i < d; ++i) (*init)[i] = last[static_cast<Eigen::Index>(i)];
  }

  ChainConfig main_config;
  main_config.length = config.chain_length;
  main_config.burn_in = config.main_burn_in;
  main_config.seed = config.seed;
  main_config.stream = kMainChainStream;
  main_config.estimator = config.estimator;
  main_config.particles = result.particles;
  result.chain = run_chain(main_config, estimator, prior, proposal, init);
  result.proposal = proposal;
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

namespace {

int cmd_estimate(const ExperimentConfig& config, std::ostream& out) {
  const Problem problem = build_problem(config);
  if (config.replicates == 0) throw ConfigError("replicates must be at least 1");
  bool tuned = false;
  const std::size_t N = choose_particles(config, problem, tuned).particles;
  const auto estimator = make_likelihood_estimator(*problem.model, config.estimator, N);
  const RngStream base(config.seed, kEstimateStream);
  const auto logs = replicate_log_estimates(estimator, problem.theta0, config.replicates, base);
  const ReplicateSummary s = summarize_replicates(logs);

  OutputSet files(config.out, config.seed);
  auto& rows = files.csv("estimates.csv");
  rows << "replicate,log_estimate\n";
  for (std::size_t r = 0; r < logs.size(); ++r) rows << r << ',' << num(logs[r]) << '\n';
  auto& summary = files.csv("estimate_summary.csv");
  summary << "model,estimator,n,N,replicates,zeros,mean,mean_se,log_mean,relative_variance,"
             "relative_variance_se\n";
  summary << config.model << ',' << to_string(config.estimator) << ','
          << problem.model->observation_count() << ',' << N << ',' << s.replicates << ','
          << s.zeros << ',' << num(s.mean) << ',' << num(s.mean_se) << ',' << num(s.log_mean)
          << ',' << num(s.relative_variance) << ',' << num(s.relative_variance_se) << '\n';
  files.commit();

  out << "estimator=" << to_string(config.estimator) << " N=" << N << " R=" << s.replicates
      << " mean=" << num(s.mean) << " se=" << num(s.mean_se)
      << " relative_variance=" << num(s.relative_variance) << '\n';
  return 0;
}

int cmd_oracle(const ExperimentConfig& config, std::ostream& out) {
  OutputSet files(config.out, config.seed);
  auto& csv = files.csv("oracle.csv");
  if (config.oracle == "moments") {
    if (config.fixture.empty()) throw ConfigError("oracle needs a fixture (D1, D3 or HEAVY)");
    const auto fixture = fixtures::find(config.fixture);
    if (!fixture) throw ConfigError("unknown fixture '" + config.fixture + "'");
    const std::size_t n = fixture->pots.count();
    const std::size_t N = config.particles.value_or(n);
    if (N < n) throw DimensionError("oracle needs N >= n");
    const MomentReport r = moment_report(fixture->mu, fixture->pots, N);
    csv << "fixture,n,N,gamma,second_moment_simple,second_moment_perm,second_moment_recycle,c\n";
    csv << fixture->id << ',' << n << ',' << N << ',' << num(r.gamma) << ','
        << (r.second_moment_simple ? num(*r.second_moment_simple) : "") << ','
        << num(r.second_moment_perm) << ',' << num(r.second_moment_recycle) << ','
        << join(r.c, ";") << '\n';
    out << fixture->id << ": gamma=" << num(r.gamma) << " perm=" << num(r.second_moment_perm)
        << " recycle=" << num(r.second_moment_recycle);
    if (r.second_moment_simple) out << " simple=" << num(*r.second_moment_simple);
    out << '\n';
  } else {
    std::vector<std::size_t> unused;
    const DiscreteLVM lvm = discrete_lvm_from(config, unused);
    const std::size_t n = config.n.value_or(1);
    const std::size_t N = config.particles.value_or(n);
    if (n == 0 || N < n) throw DimensionError("thm3 oracle needs 1 <= n <= N");
    const auto recycle = latent_expected_second_moment(lvm, n, N);
    std::optional<LatentMomentComparison> simple;
    if (N % n == 0) simple = latent_expected_second_moment_simple(lvm, n, N / n);
    const std::string id = config.fixture.empty() ? "custom" : config.fixture;
    csv << "fixture,n,N,C,lhs,rhs,lhs_simple,rhs_simple\n";
    csv << id << ',' << n << ',' << N << ',' << num(recycle.C) << ',' << num(recycle.lhs) << ','
        << num(recycle.rhs) << ',' << (simple ? num(simple->lhs) : "") << ','
        << (simple ? num(simple->rhs) : "") << '\n';
    out << id << ": C=" << num(recycle.C) << " lhs=" << num(recycle.lhs)
        << " rhs=" << num(recycle.rhs) << '\n';
  }
  files.commit();
  return 0;
}

int cmd_tune(ExperimentConfig config, std::ostream& out) {
  config.particles.reset();
  const Problem problem = build_problem(config);
  bool tuned = true;
  const ParticleTuning t = choose_particles(config, problem, tuned);
  OutputSet files(config.out, config.seed);
  auto& csv = files.csv("tune.csv");
  csv << "N,relative_variance,selected\n";
  for (const auto& [N, rv] : t.probes) {
    csv << N << ',' << num(rv) << ',' << (N == t.particles ? 1 : 0) << '\n';
  }
  files.commit();
  out << "estimator=" << to_string(config.estimator) << " target=" << num(config.tune_target)
      << " N=" << t.particles << " relative_variance=" << num(t.relative_variance) << '\n';
  return 0;
}

int cmd_mcmc(const ExperimentConfig& config, std::ostream& out) {
  const Problem problem = build_problem(config);
  const McmcResult r = run_mcmc_pipeline(config, problem);
  const ChainOutput& chain = r.chain;
  const std::size_t d = chain.dimension();

  OutputSet files(config.out, config.seed);
  auto& trace = files.csv("trace.csv");
  trace << "iter";
  for (std::size_t i = 0; i < d; ++i) trace << ",theta" << i + 1;
  trace << ",log_like_hat,accepted\n";
  for (std::size_t t = 0; t < chain.length(); ++t) {
    trace << t + 1;
    for (std::size_t i = 0; i < d; ++i) {
      trace << ',' << num(chain.samples(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i)));
    }
    trace << ',' << num(chain.log_like_trace[t]) << ',' << int(chain.accepted[t]) << '\n';
  }

  if (problem.simulated) {
    auto& data = files.csv("data.txt");
    for (double y : problem.observations) data << num(y) << '\n';
  }

  const auto kept = chain.samples.bottomRows(
      static_cast<Eigen::Index>(chain.length() - chain.burn_in_rows));
  std::vector<double> mean(d), lo(d), hi(d);
  for (std::size_t i = 0; i < d; ++i) {
    const auto col = kept.col(static_cast<Eigen::Index>(i));
    std::vector<double> v(col.data(), col.data() + col.size());
    mean[i] = col.mean();
    std::sort(v.begin(), v.end());
    const auto at = [&](double q) {
      return v[std::min(v.size() - 1, static_cast<std::size_t>(q * static_cast<double>(v.size())))];
    };
    lo[i] = at(0.025);
    hi[i] = at(0.975);
  }

  nlohmann::json summary;
  summary["version"] = version();
  summary["master_seed"] = config.seed;
  summary["model"] = config.model;
  summary["estimator"] = to_string(config.estimator);
  summary["particles"] = r.particles;
  summary["tuned_particles"] = r.tuned ? nlohmann::json(r.particles) : nlohmann::json(nullptr);
  nlohmann::json probes = nlohmann::json::array();
  for (const auto& [N, rv] : r.tuning.probes) probes.push_back({{"N", N}, {"relative_variance", rv}});
  summary["tuning_probes"] = probes;
  summary["pilot_acceptance"] = r.pilot_acceptance;
  summary["acceptance_rate"] = chain.acceptance_rate;
  summary["chain_length"] = chain.length();
  summary["burn_in_rows"] = chain.burn_in_rows;
  summary["ess"] = chain.ess;
  summary["posterior_mean"] = mean;
  summary["posterior_q025"] = lo;
  summary["posterior_q975"] = hi;
  std::vector<std::vector<double>> cov(d, std::vector<double>(d));
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      cov[i][j] = r.proposal->covariance()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
  }
  summary["proposal_covariance"] = cov;
  summary["proposal_jitter"] = r.proposal->jitter();
  summary["wall_time_seconds"] = r.wall_seconds;
  files.add("summary.json") << summary.dump(2) << '\n';
  files.commit();

  out << config.model << " N=" << r.particles << " acceptance=" << num(chain.acceptance_rate)
      << " ess=" << join(chain.ess, ",") << '\n';
  return 0;
}

void add_common_options(CLI::App* sub, std::string& config_path, std::uint64_t& seed,
                        std::string& out_dir, std::size_t& replicates, std::string& estimator,
                        std::vector<std::string>& sets) {
  sub->add_option("--config", config_path, "key=value config file")->check(CLI::ExistingFile);
  sub->add_option("--seed", seed, "master seed");
  sub->add_option("--out", out_dir, "output directory");
  sub->add_option("--replicates", replicates, "number of replicate estimates");
  sub->add_option("--estimator", estimator, "simple, recycle, perm or biased")
      ->check(CLI::IsMember({"simple", "recycle", "perm", "biased"}));
  sub->add_option("--set", sets, "extra key=value overrides");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Unbiased estimators of products of expectations", "prodest"};
  app.set_version_flag("--version", version());
  app.require_subcommand(1);

  std::string config_path, out_dir, estimator;
  std::uint64_t seed = 0;
  std::size_t replicates = 0;
  std::vector<std::string> sets;
  const std::vector<std::pair<const char*, const char*>> commands = {
      {"estimate", "replicate likelihood estimates at theta0"},
      {"oracle", "exact moments of a discrete fixture"},
      {"tune", "particle count for a relative-variance target"},
      {"mcmc", "pseudo-marginal random-walk Metropolis"},
  };
  for (const auto& [name, help] : commands) {
    add_common_options(app.add_subcommand(name, help), config_path, seed, out_dir, replicates,
                       estimator, sets);
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << version() << '\n';
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "prodest: " << e.what() << '\n';
    return 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  try {
    ExperimentConfig config;
    if (!config_path.empty()) config = load_config(config_path);
    if (sub->count("--seed")) config.seed = seed;
    if (sub->count("--out")) config.out = out_dir;
    if (sub->count("--replicates")) config.replicates = replicates;
    if (sub->count("--estimator")) apply_setting(config, "estimator", estimator);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
      apply_setting(config, s.substr(0, eq), s.substr(eq + 1));
    }

    const std::string name = sub->get_name();
    if (name == "estimate") return cmd_estimate(config, out);
    if (name == "oracle") return cmd_oracle(config, out);
    if (name == "tune") return cmd_tune(config, out);
    return cmd_mcmc(config, out);
  } catch (const ConfigError& e) {
    err << "prodest: config error: " << e.what() << '\n';
    return 2;
  } catch (const DimensionError& e) {
    err << "prodest: dimension error: " << e.what() << '\n';
    return 2;
  } catch (const ContractViolation& e) {
    err << "prodest: invalid input: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "prodest: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace prodest::cli
