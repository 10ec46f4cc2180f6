#include "prodest/exact_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace prodest {

namespace {

constexpr double kProbabilityTolerance = 1e-12;

using Table = std::vector<std::vector<double>>;

// Rows of Gbar_p = G_p / mu(G_p).
Table normalized_potentials(const DiscreteMeasure& mu, const DiscretePotentialSet& pots) {
  if (pots.support_size() != mu.size()) {
    throw DimensionError("potentials and measure have different support sizes");
  }
  Table gbar(pots.count(), std::vector<double>(mu.size()));
  for (std::size_t p = 0; p < pots.count(); ++p) {
    const double mass = mu.expect(pots.row(p));
    if (!(mass > 0.0)) {
      std::ostringstream msg;
      msg << "mu(G_" << p << ") = 0; the normalized potential is undefined";
      throw ContractViolation(msg.str());
    }
    for (std::size_t x = 0; x < mu.size(); ++x) gbar[p][x] = pots(p, x) / mass;
  }
  return gbar;
}

double psi_normalized(const DiscreteMeasure& mu, const Table& gbar,
                      std::span<const std::size_t> r, std::size_t N) {
  const std::size_t n = gbar.size();
  const std::size_t m = mu.size();
  std::vector<double> f(m);
  double result = 1.0;
  for (std::size_t i = 0; i < N; ++i) {
    const bool has_own = i < n;
    const bool hit = std::find(r.begin(), r.end(), i) != r.end();
    if (!has_own && !hit) continue;  // mu(1) = 1
    for (std::size_t x = 0; x < m; ++x) f[x] = has_own ? gbar[i][x] : 1.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (r[j] != i) continue;
      for (std::size_t x = 0; x < m; ++x) f[x] *= gbar[j][x];
    }
    result *= mu.expect(f);
  }
  return result;
}

void require_cap(std::uint64_t terms, std::uint64_t cap, const char* what) {
  if (terms > cap) {
    std::ostringstream msg;
    msg << "enumeration infeasible: " << what << " needs " << terms << " terms, cap is "
        << cap;
    throw EnumerationInfeasible(msg.str());
  }
}

// a * b saturating at UINT64_MAX.
std::uint64_t sat_mul(std::uint64_t a, std::uint64_t b) noexcept {
  if (a != 0 && b > std::numeric_limits<std::uint64_t>::max() / a) {
    return std::numeric_limits<std::uint64_t>::max();
  }
  return a * b;
}

std::uint64_t sat_pow(std::uint64_t base, std::size_t exponent) noexcept {
  std::uint64_t out = 1;
  for (std::size_t i = 0; i < exponent; ++i) out = sat_mul(out, base);
  return out;
}

// Advances a mixed-radix counter; false once it wraps to all zeros.
bool advance(std::vector<std::size_t>& digits, std::span<const std::size_t> lo,
             std::span<const std::size_t> hi) {
  for (std::size_t i = digits.size(); i-- > 0;) {
    if (++digits[i] < hi[i]) return true;
    digits[i] = lo[i];
  }
  return false;
}

// Accumulates E[Z] and E[Z^2] of the recycled estimator over every selection
// sequence for a linear-scale n x N matrix, each scaled by `weight`.
struct RecycleEnumerator {
  const std::vector<double>& a;  // row-major n x N
  std::size_t n;
  std::size_t N;
  double weight;
  double mean = 0.0;
  double second = 0.0;
  double total_probability = 0.0;
  std::vector<std::uint8_t> taken = {};

  void run() {
    taken.assign(N, 0);
    recurse(0, 1.0, 1.0);
  }

  void recurse(std::size_t p, double z, double prob) {
    if (p == n) {
      mean += weight * prob * z;
      second += weight * prob * z * z;
      total_probability += prob;
      return;
    }
    const double* row = a.data() + p * N;
    double mass = 0.0;
    for (std::size_t j = 0; j < N; ++j) {
      if (!taken[j]) mass += row[j];
    }
    const auto available = static_cast<double>(N - p);
    const double next_z = z * mass / available;
    for (std::size_t j = 0; j < N; ++j) {
      if (taken[j]) continue;
      double step;
      if (mass > 0.0) {
        if (row[j] == 0.0) continue;
        step = row[j] / mass;
      } else {
        step = 1.0 / available;  // zero-denominator branch: uniform over the rest
      }
      taken[j] = 1;
      recurse(p + 1, next_z, prob * step);
      taken[j] = 0;
    }
  }
};

double perm_statistic(const std::vector<double>& a, std::size_t n, std::size_t N) {
  std::vector<std::uint8_t> used(N, 0);
  double total = 0.0;
  auto recurse = [&](auto&& self, std::size_t p, double partial) -> void {
    if (p == n) {
      total += partial;
      return;
    }
    for (std::size_t j = 0; j < N; ++j) {
      if (used[j]) continue;
      used[j] = 1;
      self(self, p + 1, partial * a[p * N + j]);
      used[j] = 0;
    }
  };
  recurse(recurse, 0, 1.0);
  return total / static_cast<double>(falling_factorial(N, n));
}

}  // namespace

DiscreteMeasure::DiscreteMeasure(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.empty()) throw ContractViolation("measure needs at least one support point");
  double total = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0) || !std::isfinite(p)) {
      throw ContractViolation("probabilities must be finite and non-negative");
    }
    total += p;
  }
  if (std::abs(total - 1.0) > kProbabilityTolerance) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "probabilities sum to " << total << ", not 1";
    throw ContractViolation(msg.str());
  }
}

DiscreteMeasure DiscreteMeasure::uniform(std::size_t m) {
  return DiscreteMeasure(std::vector<double>(m, 1.0 / static_cast<double>(m)));
}

double DiscreteMeasure::expect(std::span<const double> f) const {
  if (f.size() != probs_.size()) throw DimensionError("function and measure sizes differ");
  double total = 0.0;
  for (std::size_t x = 0; x < probs_.size(); ++x) total += probs_[x] * f[x];
  return total;
}

DiscretePotentialSet::DiscretePotentialSet(std::size_t n, std::size_t m,
                                           std::vector<double> values)
    : n_(n), m_(m), values_(std::move(values)) {
  if (n_ == 0 || m_ == 0) throw DimensionError("potential set must be non-empty");
  if (values_.size() != n_ * m_) throw DimensionError("potential values do not match n x m");
  for (double v : values_) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw ContractViolation("potential values must be finite and non-negative");
    }
  }
}

namespace {
std::vector<double> flatten(const Table& rows) {
  std::vector<double> flat;
  for (const auto& r : rows) {
    if (r.size() != rows.front().size()) throw DimensionError("ragged potential rows");
    flat.insert(flat.end(), r.begin(), r.end());
  }
  return flat;
}
}  // namespace

DiscretePotentialSet::DiscretePotentialSet(const std::vector<std::vector<double>>& rows)
    : DiscretePotentialSet(rows.size(), rows.empty() ? 0 : rows.front().size(),
                           flatten(rows)) {}

DiscreteLVM::DiscreteLVM(DiscreteMeasure latent, std::vector<std::vector<double>> kernel)
    : latent_(std::move(latent)), kernel_(std::move(kernel)) {
  if (kernel_.size() != latent_.size()) {
    throw DimensionError("kernel needs one row per latent state");
  }
  const std::size_t obs = kernel_.front().size();
  if (obs == 0) throw DimensionError("kernel rows are empty");
  for (const auto& row : kernel_) {
    if (row.size() != obs) throw DimensionError("ragged kernel rows");
    double total = 0.0;
    for (double v : row) {
      if (!(v >= 0.0)) throw ContractViolation("kernel entries must be non-negative");
      total += v;
    }
    if (std::abs(total - 1.0) > kProbabilityTolerance) {
      throw ContractViolation("kernel rows must sum to 1");
    }
  }
  for (std::size_t y = 0; y < obs; ++y) {
    if (!(marginal(y) > 0.0)) {
      std::ostringstream msg;
      msg << "observation " << y << " has zero marginal probability";
      throw ContractViolation(msg.str());
    }
  }
}

double DiscreteLVM::marginal(std::size_t y) const {
  double total = 0.0;
  for (std::size_t x = 0; x < latent_.size(); ++x) total += latent_[x] * kernel_[x][y];
  return total;
}

DiscretePotentialSet DiscreteLVM::induced_potentials(std::span<const std::size_t> y) const {
  std::vector<double> values;
  values.reserve(y.size() * latent_.size());
  for (std::size_t obs : y) {
    if (obs >= obs_size()) throw DimensionError("observation label out of range");
    for (std::size_t x = 0; x < latent_.size(); ++x) values.push_back(kernel_[x][obs]);
  }
  return DiscretePotentialSet(y.size(), latent_.size(), std::move(values));
}

double DiscreteLVM::expected_c() const {
  // sum_y nu(y) mu(Gbar_y^2) = sum_y sum_x mu(x) g(x,y)^2 / nu(y)
  double total = 0.0;
  for (std::size_t y = 0; y < obs_size(); ++y) {
    const double nu = marginal(y);
    double second = 0.0;
    for (std::size_t x = 0; x < latent_.size(); ++x) {
      second += latent_[x] * kernel_[x][y] * kernel_[x][y];
    }
    total += second / nu;
  }
  return total - 1.0;
}

double gamma_exact(const DiscreteMeasure& mu, const DiscretePotentialSet& pots) {
  if (pots.support_size() != mu.size()) {
    throw DimensionError("potentials and measure have different support sizes");
  }
  double product = 1.0;
  for (std::size_t p = 0; p < pots.count(); ++p) product *= mu.expect(pots.row(p));
  return product;
}

std::vector<double> relative_excess(const DiscreteMeasure& mu,
                                    const DiscretePotentialSet& pots) {
  const Table gbar = normalized_potentials(mu, pots);
  std::vector<double> c(gbar.size());
  std::vector<double> sq(mu.size());
  for (std::size_t p = 0; p < gbar.size(); ++p) {
    for (std::size_t x = 0; x < mu.size(); ++x) sq[x] = gbar[p][x] * gbar[p][x];
    c[p] = mu.expect(sq) - 1.0;
  }
  return c;
}

double psi_N(const DiscreteMeasure& mu, const DiscretePotentialSet& pots,
             std::span<const std::size_t> r, std::size_t N) {
  if (r.size() != pots.count()) throw DimensionError("index vector must have length n");
  if (N < pots.count()) throw DimensionError("psi_N needs N >= n");
  for (std::size_t v : r) {
    if (v >= N) throw DimensionError("index vector entry outside [0, N)");
  }
  return psi_normalized(mu, normalized_potentials(mu, pots), r, N);
}

double second_moment_simple_exact(const DiscreteMeasure& mu, const DiscretePotentialSet& pots,
                                  std::size_t block_size) {
  if (block_size == 0) throw DimensionError("block size must be positive");
  double product = 1.0;
  for (double c : relative_excess(mu, pots)) {
    product *= 1.0 + c / static_cast<double>(block_size);
  }
  return product;
}

double second_moment_perm_exact(const DiscreteMeasure& mu, const DiscretePotentialSet& pots,
                                std::size_t N, std::uint64_t cap) {
  const std::size_t n = pots.count();
  if (N < n) throw DimensionError("perm second moment needs N >= n");
  const std::uint64_t terms = falling_factorial(N, n);
  require_cap(terms, cap, "|P(N,n)|");
  const Table gbar = normalized_potentials(mu, pots);

  std::vector<std::size_t> k(n);
  std::vector<std::uint8_t> used(N, 0);
  double total = 0.0;
  auto recurse = [&](auto&& self, std::size_t p) -> void {
    if (p == n) {
      total += psi_normalized(mu, gbar, k, N);
      return;
    }
    for (std::size_t j = 0; j < N; ++j) {
      if (used[j]) continue;
      used[j] = 1;
      k[p] = j;
      self(self, p + 1);
      used[j] = 0;
    }
  };
  recurse(recurse, 0);
  return total / static_cast<double>(terms);
}

double second_moment_recycle_exact(const DiscreteMeasure& mu,
                                   const DiscretePotentialSet& pots, std::size_t N,
                                   std::uint64_t cap) {
  const std::size_t n = pots.count();
  if (N < n) throw DimensionError("recycle second moment needs N >= n");
  require_cap(falling_factorial(N, n), cap, "the S lattice");
  const Table gbar = normalized_potentials(mu, pots);

  std::vector<std::size_t> lo(n), hi(n, N);
  std::iota(lo.begin(), lo.end(), std::size_t{0});
  std::vector<std::size_t> s = lo;
  double total = 0.0;
  std::uint64_t count = 0;
  do {
    total += psi_normalized(mu, gbar, s, N);
    ++count;
  } while (advance(s, lo, hi));
  return total / static_cast<double>(count);
}

double independent_case_formula(std::span<const double> c, std::size_t N) {
  if (N < c.size()) throw DimensionError("independent-case formula needs N >= n");
  double product = 1.0;
  for (std::size_t p = 0; p < c.size(); ++p) {
    product *= 1.0 + c[p] / static_cast<double>(N - p);
  }
  return product;
}

double perm_identical_lower_bound(double c1, std::size_t n, std::size_t N) {
  if (!(c1 >= 0.0)) throw ContractViolation("c1 must be non-negative");
  const auto nn = static_cast<double>(n);
  return std::pow(1.0 + c1, nn * nn / static_cast<double>(N));
}

MomentReport moment_report(const DiscreteMeasure& mu, const DiscretePotentialSet& pots,
                           std::size_t N, std::uint64_t cap) {
  MomentReport report;
  report.gamma = gamma_exact(mu, pots);
  report.c = relative_excess(mu, pots);
  if (N % pots.count() == 0) {
    report.second_moment_simple = second_moment_simple_exact(mu, pots, N / pots.count());
  }
  report.second_moment_perm = second_moment_perm_exact(mu, pots, N, cap);
  report.second_moment_recycle = second_moment_recycle_exact(mu, pots, N, cap);
  return report;
}

EstimatorMoments estimator_distribution_exact(const DiscreteMeasure& mu,
                                              const DiscretePotentialSet& pots,
                                              std::size_t N, EstimatorKind kind,
                                              std::uint64_t cap) {
  const std::size_t n = pots.count();
  const std::size_t m = mu.size();
  if (pots.support_size() != m) throw DimensionError("potentials and measure sizes differ");
  if (N < n) throw DimensionError("estimator needs N >= n");
  if (kind == EstimatorKind::simple && N % n != 0) {
    throw DimensionError("simple estimator needs N to be a multiple of n");
  }
  std::uint64_t inner = 1;
  if (kind == EstimatorKind::perm || kind == EstimatorKind::recycle) {
    inner = falling_factorial(N, n);
  }
  require_cap(sat_mul(sat_pow(m, N), inner), cap, "the particle configurations");

  std::vector<std::size_t> config(N, 0);
  const std::vector<std::size_t> lo(N, 0), hi(N, m);
  std::vector<double> a(n * N);
  EstimatorMoments out;
  do {
    double weight = 1.0;
    for (std::size_t x : config) weight *= mu[x];
    if (weight == 0.0) continue;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t j = 0; j < N; ++j) a[p * N + j] = pots(p, config[j]);
    }

    double value = 1.0;
    switch (kind) {
      case EstimatorKind::simple: {
        const std::size_t block = N / n;
        for (std::size_t p = 0; p < n; ++p) {
          double s = 0.0;
          for (std::size_t i = 0; i < block; ++i) s += a[p * N + p * block + i];
          value *= s / static_cast<double>(block);
        }
        break;
      }
      case EstimatorKind::biased:
        for (std::size_t p = 0; p < n; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < N; ++j) s += a[p * N + j];
          value *= s / static_cast<double>(N);
        }
        break;
      case EstimatorKind::perm:
        value = perm_statistic(a, n, N);
        break;
      case EstimatorKind::recycle: {
        RecycleEnumerator e{a, n, N, weight};
        e.run();
        out.mean += e.mean;
        out.second_moment += e.second;
        continue;
      }
    }
    out.mean += weight * value;
    out.second_moment += weight * value * value;
  } while (advance(config, lo, hi));
  return out;
}

EstimatorMoments recycle_conditional_moments(const PotentialMatrix& pm, std::uint64_t cap) {
  const std::size_t n = pm.rows();
  const std::size_t N = pm.cols();
  if (N < n) throw DimensionError("recycled estimator needs N >= n");
  require_cap(falling_factorial(N, n), cap, "the selection sequences");
  std::vector<double> a(n * N);
  const auto logs = pm.log_values();
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = std::exp(logs[i]);
  RecycleEnumerator e{a, n, N, 1.0};
  e.run();
  return {e.mean, e.second};
}

namespace {

template <class PerY>
double average_over_observations(const DiscreteLVM& lvm, std::size_t n, PerY&& per_y) {
  const std::size_t obs = lvm.obs_size();
  std::vector<double> nu(obs);
  for (std::size_t y = 0; y < obs; ++y) nu[y] = lvm.marginal(y);
  std::vector<std::size_t> y(n, 0);
  const std::vector<std::size_t> lo(n, 0), hi(n, obs);
  double total = 0.0;
  do {
    double weight = 1.0;
    for (std::size_t v : y) weight *= nu[v];
    total += weight * per_y(lvm.induced_potentials(y));
  } while (advance(y, lo, hi));
  return total;
}

}  // namespace

LatentMomentComparison latent_expected_second_moment(const DiscreteLVM& lvm, std::size_t n,
                                                     std::size_t N, std::uint64_t cap) {
  if (n == 0) throw DimensionError("need at least one observation");
  if (N < n) throw DimensionError("recycle second moment needs N >= n");
  require_cap(sat_mul(sat_pow(lvm.obs_size(), n), falling_factorial(N, n)), cap,
              "observation vectors times the S lattice");
  LatentMomentComparison out;
  out.C = lvm.expected_c();
  out.lhs = average_over_observations(lvm, n, [&](const DiscretePotentialSet& pots) {
    return second_moment_recycle_exact(lvm.latent(), pots, N, cap);
  });
  const std::vector<double> c(n, out.C);
  out.rhs = independent_case_formula(c, N);
  return out;
}

LatentMomentComparison latent_expected_second_moment_simple(const DiscreteLVM& lvm,
                                                            std::size_t n,
                                                            std::size_t block_size,
                                                            std::uint64_t cap) {
  if (n == 0) throw DimensionError("need at least one observation");
  if (block_size == 0) throw DimensionError("block size must be positive");
  require_cap(sat_pow(lvm.obs_size(), n), cap, "observation vectors");
  LatentMomentComparison out;
  out.C = lvm.expected_c();
  out.lhs = average_over_observations(lvm, n, [&](const DiscretePotentialSet& pots) {
    return second_moment_simple_exact(lvm.latent(), pots, block_size);
  });
  out.rhs = std::pow(1.0 + out.C / static_cast<double>(block_size), static_cast<double>(n));
  return out;
}

ProductFixture make_product_fixture(const std::vector<DiscreteMeasure>& coordinates,
                                    const std::vector<std::vector<double>>& coordinate_potentials) {
  const std::size_t n = coordinates.size();
  if (n == 0 || coordinate_potentials.size() != n) {
    throw DimensionError("need one potential per coordinate");
  }
  std::vector<std::size_t> lo(n, 0), hi(n);
  for (std::size_t p = 0; p < n; ++p) {
    hi[p] = coordinates[p].size();
    if (coordinate_potentials[p].size() != hi[p]) {
      throw DimensionError("coordinate potential length differs from its support");
    }
  }
  std::vector<double> probs;
  std::vector<std::vector<double>> rows(n);
  std::vector<std::size_t> point(n, 0);
  do {
    double prob = 1.0;
    for (std::size_t p = 0; p < n; ++p) {
      prob *= coordinates[p][point[p]];
      rows[p].push_back(coordinate_potentials[p][point[p]]);
    }
    probs.push_back(prob);
  } while (advance(point, lo, hi));
  // Renormalize away the rounding accumulated by the products.
  const double total = std::accumulate(probs.begin(), probs.end(), 0.0);
  for (double& p : probs) p /= total;
  return {DiscreteMeasure(std::move(probs)), DiscretePotentialSet(rows)};
}

}  // namespace prodest
