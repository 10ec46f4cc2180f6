#include "prodest/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace prodest {

namespace detail {

void throw_nan_potential(std::size_t p, std::size_t j) {
  std::ostringstream msg;
  msg << "log potential is NaN at (p=" << p << ", j=" << j << ")";
  throw ContractViolation(msg.str());
}

}  // namespace detail

namespace {

// Draws among the columns not masked out. Returns the chosen column; `log_mass`
// receives the log of the available weight (-inf when it is zero). `weights`
// is scratch space of length N.
std::size_t draw_available(std::span<const double> log_row,
                           std::span<const std::uint8_t> excluded,
                           std::size_t available, RngStream& rng, double& log_mass,
                           std::vector<double>& weights) {
  const std::size_t cols = log_row.size();
  double shift = kNegInf;
  for (std::size_t j = 0; j < cols; ++j) {
    if (!excluded[j]) shift = std::max(shift, log_row[j]);
  }

  if (shift == kNegInf) {
    log_mass = kNegInf;
    std::uint64_t k = rng.uniform_index(available);
    for (std::size_t j = 0; j < cols; ++j) {
      if (excluded[j]) continue;
      if (k == 0) return j;
      --k;
    }
    return cols;  // unreachable when `available` is correct
  }

  weights.resize(cols);
  double total = 0.0;
  for (std::size_t j = 0; j < cols; ++j) {
    const double w = excluded[j] ? 0.0 : std::exp(log_row[j] - shift);
    weights[j] = w;
    total += w;
  }
  log_mass = shift + std::log(total);

  const double target = rng.uniform() * total;
  double cumulative = 0.0;
  std::size_t last_positive = cols;
  for (std::size_t j = 0; j < cols; ++j) {
    if (weights[j] == 0.0) continue;
    cumulative += weights[j];
    last_positive = j;
    if (target < cumulative) return j;
  }
  // Rounding can leave target marginally above the accumulated total.
  return last_positive;
}

void require_square_blocks(const PotentialMatrix& pm, std::size_t block_size) {
  if (block_size == 0 || pm.cols() != block_size * pm.rows()) {
    std::ostringstream msg;
    msg << "simple estimator needs N = M*n; got N=" << pm.cols() << ", n=" << pm.rows()
        << ", M=" << block_size;
    throw DimensionError(msg.str());
  }
}

}  // namespace

PotentialMatrix::PotentialMatrix(std::size_t rows, std::size_t cols,
                                 std::vector<double> log_values)
    : rows_(rows), cols_(cols), data_(std::move(log_values)) {
  if (rows_ == 0 || cols_ == 0) throw DimensionError("potential matrix must be non-empty");
  if (data_.size() != rows_ * cols_) {
    throw DimensionError("potential matrix data does not match its shape");
  }
  for (std::size_t i = 0; i < data_.size(); ++i) {
    const double v = data_[i];
    if (std::isnan(v)) detail::throw_nan_potential(i / cols_, i % cols_);
    if (v == std::numeric_limits<double>::infinity()) {
      throw ContractViolation("log potential is +inf");
    }
  }
}

PotentialMatrix PotentialMatrix::from_linear(std::size_t rows, std::size_t cols,
                                             std::span<const double> values) {
  std::vector<double> logs(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!(values[i] >= 0.0)) throw ContractViolation("potential values must be >= 0");
    logs[i] = std::log(values[i]);
  }
  return PotentialMatrix(rows, cols, std::move(logs));
}

LogEstimate estimate_simple(const PotentialMatrix& pm, std::size_t block_size) {
  require_square_blocks(pm, block_size);
  const double log_m = std::log(static_cast<double>(block_size));
  double total = 0.0;
  for (std::size_t p = 0; p < pm.rows(); ++p) {
    const auto block = pm.row(p).subspan(p * block_size, block_size);
    total += log_sum_exp(block) - log_m;
    if (total == kNegInf) return {kNegInf};
  }
  return {total};
}

LogEstimate estimate_biased(const PotentialMatrix& pm) {
  const double log_n = std::log(static_cast<double>(pm.cols()));
  double total = 0.0;
  for (std::size_t p = 0; p < pm.rows(); ++p) {
    total += log_sum_exp(pm.row(p)) - log_n;
    if (total == kNegInf) return {kNegInf};
  }
  return {total};
}

RecycleResult estimate_recycle(const PotentialMatrix& pm, RngStream& rng) {
  const std::size_t n = pm.rows();
  const std::size_t cols = pm.cols();
  if (cols < n) {
    std::ostringstream msg;
    msg << "recycled estimator needs N >= n; got N=" << cols << ", n=" << n;
    throw DimensionError(msg.str());
  }
  std::vector<std::uint8_t> excluded(cols, 0);
  std::vector<double> weights(cols);
  RecycleResult result;
  result.trace.indices.reserve(n);
  double log_z = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    const std::size_t available = cols - p;
    double log_mass = kNegInf;
    const std::size_t k =
        draw_available(pm.row(p), excluded, available, rng, log_mass, weights);
    // Once zero, the estimate stays zero; the loop continues so the trace is complete.
    log_z += log_mass - std::log(static_cast<double>(available));
    excluded[k] = 1;
    result.trace.indices.push_back(k);
  }
  result.estimate = {std::isnan(log_z) ? kNegInf : log_z};
  return result;
}

std::uint64_t falling_factorial(std::size_t N, std::size_t n) noexcept {
  if (n > N) return 0;
  std::uint64_t count = 1;
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t factor = N - i;
    if (count > std::numeric_limits<std::uint64_t>::max() / factor) {
      return std::numeric_limits<std::uint64_t>::max();
    }
    count *= factor;
  }
  return count;
}

LogEstimate estimate_perm_exact(const PotentialMatrix& pm, std::uint64_t cap) {
  const std::size_t n = pm.rows();
  const std::size_t cols = pm.cols();
  if (cols < n) throw DimensionError("permanent estimator needs N >= n");
  const std::uint64_t terms = falling_factorial(cols, n);
  if (terms > cap) {
    std::ostringstream msg;
    msg << "enumeration infeasible: |P(N,n)| = " << cols << "!/(" << cols << "-" << n
        << ")! exceeds cap " << cap;
    throw EnumerationInfeasible(msg.str());
  }

  std::vector<std::uint8_t> used(cols, 0);
  LogSumExp acc;
  // Depth-first over injective tuples; zero partial products prune their subtree.
  auto recurse = [&](auto&& self, std::size_t p, double partial) -> void {
    if (p == n) {
      acc.add(partial);
      return;
    }
    const auto row = pm.row(p);
    for (std::size_t j = 0; j < cols; ++j) {
      if (used[j] || row[j] == kNegInf) continue;
      used[j] = 1;
      self(self, p + 1, partial + row[j]);
      used[j] = 0;
    }
  };
  recurse(recurse, 0, 0.0);

  const double total = acc.value();
  if (total == kNegInf) return {kNegInf};
  return {total - std::log(static_cast<double>(terms))};
}

LogEstimate estimate_simple_permuted(const PotentialMatrix& pm,
                                     std::span<const std::size_t> sigma,
                                     std::size_t block_size) {
  require_square_blocks(pm, block_size);
  const std::size_t cols = pm.cols();
  if (sigma.size() != cols) throw ContractViolation("permutation has the wrong length");
  std::vector<std::uint8_t> seen(cols, 0);
  for (std::size_t s : sigma) {
    if (s >= cols || seen[s]) throw ContractViolation("sigma is not a permutation");
    seen[s] = 1;
  }
  const double log_m = std::log(static_cast<double>(block_size));
  double total = 0.0;
  for (std::size_t p = 0; p < pm.rows(); ++p) {
    LogSumExp acc;
    for (std::size_t i = 0; i < block_size; ++i) {
      acc.add(pm.at(p, sigma[p * block_size + i]));
    }
    total += acc.value() - log_m;
    if (total == kNegInf) return {kNegInf};
  }
  return {total};
}

std::vector<std::size_t> random_permutation(std::size_t size, RngStream& rng) {
  std::vector<std::size_t> perm(size);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t i = size; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_index(i));
    std::swap(perm[i - 1], perm[j]);
  }
  return perm;
}

LogEstimate average_permuted_simple(const PotentialMatrix& pm, std::size_t q,
                                    RngStream& rng) {
  if (q == 0) throw ContractViolation("need at least one permutation");
  if (pm.cols() % pm.rows() != 0) {
    throw DimensionError("permuted simple estimator needs N to be a multiple of n");
  }
  const std::size_t block_size = pm.cols() / pm.rows();
  LogSumExp acc;
  for (std::size_t i = 0; i < q; ++i) {
    const auto sigma = random_permutation(pm.cols(), rng);
    acc.add(estimate_simple_permuted(pm, sigma, block_size).log_value);
  }
  const double total = acc.value();
  if (total == kNegInf) return {kNegInf};
  return {total - std::log(static_cast<double>(q))};
}

LogEstimate average_permuted_simple_exhaustive(const PotentialMatrix& pm,
                                               std::uint64_t cap) {
  if (pm.cols() % pm.rows() != 0) {
    throw DimensionError("permuted simple estimator needs N to be a multiple of n");
  }
  const std::uint64_t terms = falling_factorial(pm.cols(), pm.cols());
  if (terms > cap) throw EnumerationInfeasible("enumeration infeasible: N! exceeds cap");
  const std::size_t block_size = pm.cols() / pm.rows();
  std::vector<std::size_t> sigma(pm.cols());
  std::iota(sigma.begin(), sigma.end(), std::size_t{0});
  LogSumExp acc;
  do {
    acc.add(estimate_simple_permuted(pm, sigma, block_size).log_value);
  } while (std::next_permutation(sigma.begin(), sigma.end()));
  const double total = acc.value();
  if (total == kNegInf) return {kNegInf};
  return {total - std::log(static_cast<double>(terms))};
}

std::size_t sample_next_index(std::span<const double> log_row,
                              std::span<const std::uint8_t> excluded, RngStream& rng) {
  if (excluded.size() != log_row.size()) {
    throw DimensionError("exclusion mask length differs from the row length");
  }
  const auto taken = static_cast<std::size_t>(
      std::count_if(excluded.begin(), excluded.end(), [](std::uint8_t e) { return e != 0; }));
  if (taken >= log_row.size()) throw ContractViolation("every index is excluded");
  double log_mass = kNegInf;
  std::vector<double> weights;
  return draw_available(log_row, excluded, log_row.size() - taken, rng, log_mass, weights);
}

}  // namespace prodest

namespace prodest {

const char* to_string(EstimatorKind kind) noexcept {
  switch (kind) {
    case EstimatorKind::simple: return "simple";
    case EstimatorKind::biased: return "biased";
    case EstimatorKind::perm: return "perm";
    case EstimatorKind::recycle: return "recycle";
  }
  return "unknown";
}

std::optional<EstimatorKind> parse_estimator_kind(std::string_view name) noexcept {
  if (name == "simple") return EstimatorKind::simple;
  if (name == "biased") return EstimatorKind::biased;
  if (name == "perm") return EstimatorKind::perm;
  if (name == "recycle") return EstimatorKind::recycle;
  return std::nullopt;
}

}  // namespace prodest
