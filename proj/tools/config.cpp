#include "config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace prodest::cli {

namespace {

std::string trim(std::string_view s) {
  const auto* ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    parts.push_back(trim(s.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const char* expected) {
  throw ConfigError("invalid value '" + value + "' for " + key + ": expected " + expected);
}

double to_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (text.empty() || ec != std::errc() || ptr != end) bad_value(key, text, "a number");
  return v;
}

std::uint64_t to_u64(const std::string& key, const std::string& text) {
  std::uint64_t v = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (text.empty() || ec != std::errc() || ptr != end) {
    bad_value(key, text, "a non-negative integer");
  }
  return v;
}

std::size_t to_size(const std::string& key, const std::string& text) {
  return static_cast<std::size_t>(to_u64(key, text));
}

std::vector<double> to_doubles(const std::string& key, const std::string& text) {
  std::vector<double> out;
  if (trim(text).empty()) return out;
  for (const auto& part : split(text, ',')) out.push_back(to_double(key, part));
  return out;
}

double positive(const std::string& key, const std::string& text) {
  const double v = to_double(key, text);
  if (!(v > 0.0)) bad_value(key, text, "a positive number");
  return v;
}

using Setter = std::function<void(ExperimentConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"model",
       [](auto& c, const auto& k, const auto& v) {
         if (v != "gandk" && v != "poisson-beta" && v != "discrete-lvm") {
           bad_value(k, v, "gandk, poisson-beta or discrete-lvm");
         }
         c.model = v;
       }},
      {"theta0", [](auto& c, const auto& k, const auto& v) { c.theta0 = to_doubles(k, v); }},
      {"n", [](auto& c, const auto& k, const auto& v) { c.n = to_size(k, v); }},
      {"data", [](auto& c, const auto&, const auto& v) { c.data = v; }},
      {"data_seed", [](auto& c, const auto& k, const auto& v) { c.data_seed = to_u64(k, v); }},
      {"epsilon", [](auto& c, const auto& k, const auto& v) { c.epsilon = positive(k, v); }},
      {"gandk_noise",
       [](auto& c, const auto& k, const auto& v) {
         if (v == "literal") c.gandk_noise = GandKNoise::literal;
         else if (v == "unit") c.gandk_noise = GandKNoise::unit;
         else bad_value(k, v, "literal or unit");
       }},
      {"sigma", [](auto& c, const auto& k, const auto& v) { c.sigma = positive(k, v); }},
      {"fixture", [](auto& c, const auto&, const auto& v) { c.fixture = v; }},
      {"latent_probs",
       [](auto& c, const auto& k, const auto& v) { c.latent_probs = to_doubles(k, v); }},
      {"kernel",
       [](auto& c, const auto& k, const auto& v) {
         c.kernel.clear();
         for (const auto& row : split(v, ';')) c.kernel.push_back(to_doubles(k, row));
       }},
      {"y",
       [](auto& c, const auto& k, const auto& v) {
         c.y.clear();
         if (trim(v).empty()) return;
         for (const auto& part : split(v, ',')) c.y.push_back(to_size(k, part));
       }},
      {"estimator",
       [](auto& c, const auto& k, const auto& v) {
         const auto kind = parse_estimator_kind(v);
         if (!kind) bad_value(k, v, "simple, recycle, perm or biased");
         c.estimator = *kind;
       }},
      {"particles", [](auto& c, const auto& k, const auto& v) { c.particles = to_size(k, v); }},
      {"N", [](auto& c, const auto& k, const auto& v) { c.particles = to_size(k, v); }},
      {"tune_target",
       [](auto& c, const auto& k, const auto& v) { c.tune_target = positive(k, v); }},
      {"tune_replicates",
       [](auto& c, const auto& k, const auto& v) { c.tune_replicates = to_size(k, v); }},
      {"replicates", [](auto& c, const auto& k, const auto& v) { c.replicates = to_size(k, v); }},
      {"chain_length",
       [](auto& c, const auto& k, const auto& v) { c.chain_length = to_size(k, v); }},
      {"pilot_length",
       [](auto& c, const auto& k, const auto& v) { c.pilot_length = to_size(k, v); }},
      {"pilot_rounds",
       [](auto& c, const auto& k, const auto& v) { c.pilot_rounds = to_size(k, v); }},
      {"burn_in", [](auto& c, const auto& k, const auto& v) { c.burn_in = to_double(k, v); }},
      {"main_burn_in",
       [](auto& c, const auto& k, const auto& v) { c.main_burn_in = to_double(k, v); }},
      {"pilot_sd", [](auto& c, const auto& k, const auto& v) { c.pilot_sd = to_doubles(k, v); }},
      {"proposal_scaling",
       [](auto& c, const auto& k, const auto& v) {
         if (v == "literal") c.proposal_scaling = ProposalScaling::literal;
         else if (v == "conventional") c.proposal_scaling = ProposalScaling::conventional;
         else bad_value(k, v, "literal or conventional");
       }},
      {"prior",
       [](auto& c, const auto&, const auto& v) {
         (void)parse_prior(v);
         c.prior = v;
       }},
      {"init",
       [](auto& c, const auto& k, const auto& v) {
         if (v != "theta0" && v != "prior") bad_value(k, v, "theta0 or prior");
         c.init = v;
       }},
      {"oracle",
       [](auto& c, const auto& k, const auto& v) {
         if (v != "moments" && v != "thm3") bad_value(k, v, "moments or thm3");
         c.oracle = v;
       }},
      {"out", [](auto& c, const auto&, const auto& v) { c.out = v; }},
      {"seed", [](auto& c, const auto& k, const auto& v) { c.seed = to_u64(k, v); }},
  };
  return table;
}

}  // namespace

void apply_setting(ExperimentConfig& config, const std::string& key, const std::string& value) {
  const auto& table = setters();
  const auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second(config, key, value);
}

ExperimentConfig parse_config(const std::string& text, const std::string& source,
                              ExperimentConfig base) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected key = value");
    }
    try {
      apply_setting(base, trim(stripped.substr(0, eq)), trim(stripped.substr(eq + 1)));
    } catch (const std::exception& e) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return base;
}

ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  ExperimentConfig config = parse_config(text.str(), path.string(), std::move(base));
  if (config.data && config.data->is_relative()) {
    const auto candidate = path.parent_path() / *config.data;
    if (std::filesystem::exists(candidate)) config.data = candidate;
  }
  return config;
}

PriorSpec parse_prior(const std::string& text) {
  std::vector<PriorMarginal> marginals;
  for (const auto& item : split(text, ',')) {
    const auto parts = split(item, ':');
    if (parts[0] == "uniform" && parts.size() == 3) {
      marginals.push_back(UniformPrior{to_double("prior", parts[1]), to_double("prior", parts[2])});
    } else if (parts[0] == "exponential" && parts.size() == 2) {
      marginals.push_back(ExponentialPrior{to_double("prior", parts[1])});
    } else {
      bad_value("prior", item, "uniform:a:b or exponential:mean");
    }
  }
  try {
    return PriorSpec(std::move(marginals));
  } catch (const std::exception& e) {
    throw ConfigError(std::string("prior: ") + e.what());
  }
}

}  // namespace prodest::cli
