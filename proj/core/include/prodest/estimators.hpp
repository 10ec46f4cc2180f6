#pragma once

// Unbiased (and one biased) estimators of a product of expectations
//
//   gamma = prod_p mu(G_p),
//
// computed from the n x N matrix of log G_p(zeta_j) for N particles zeta_j
// drawn i.i.d. from mu. All arithmetic is in log space; -inf encodes an exact
// zero and is a legal value everywhere.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "prodest/errors.hpp"
#include "prodest/log_space.hpp"
#include "prodest/rng.hpp"

namespace prodest {

inline constexpr std::uint64_t kDefaultEnumerationCap = 10'000'000;

enum class EstimatorKind { simple, biased, perm, recycle };

const char* to_string(EstimatorKind kind) noexcept;
std::optional<EstimatorKind> parse_estimator_kind(std::string_view name) noexcept;

/// A non-negative real stored as its logarithm.
struct LogEstimate {
  double log_value = kNegInf;

  double value() const noexcept { return std::exp(log_value); }
  bool is_zero() const noexcept { return log_value == kNegInf; }
  friend bool operator==(const LogEstimate&, const LogEstimate&) = default;
};

/// Column indices K_1..K_n selected by the recycled estimator (0-based, distinct).
struct SelectionTrace {
  std::vector<std::size_t> indices;
  friend bool operator==(const SelectionTrace&, const SelectionTrace&) = default;
};

/// Row-major n x N array of log potential values. Entries are finite or -inf.
class PotentialMatrix {
 public:
  PotentialMatrix(std::size_t rows, std::size_t cols, std::vector<double> log_values);

  /// Builds from non-negative linear-scale values.
  static PotentialMatrix from_linear(std::size_t rows, std::size_t cols,
                                     std::span<const double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  double at(std::size_t p, std::size_t j) const noexcept { return data_[p * cols_ + j]; }
  std::span<const double> row(std::size_t p) const noexcept {
    return {data_.data() + p * cols_, cols_};
  }
  std::span<const double> log_values() const noexcept { return data_; }

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<double> data_;
};

template <class Point>
struct ParticleSet {
  std::vector<Point> points;
  std::uint64_t seed = 0;
};

template <class Point>
using LogPotential = std::function<double(const Point&)>;

namespace detail {
[[noreturn]] void throw_nan_potential(std::size_t p, std::size_t j);
}

/// Evaluates log_potential(p, point) for every row p < rows and every point.
template <class Point, class F>
PotentialMatrix eval_potential_matrix(std::size_t rows, std::span<const Point> points,
                                      F&& log_potential) {
  const std::size_t cols = points.size();
  std::vector<double> values(rows * cols);
  for (std::size_t p = 0; p < rows; ++p) {
    for (std::size_t j = 0; j < cols; ++j) {
      const double v = log_potential(p, points[j]);
      if (std::isnan(v)) detail::throw_nan_potential(p, j);
      values[p * cols + j] = v;
    }
  }
  return PotentialMatrix(rows, cols, std::move(values));
}

template <class Point>
PotentialMatrix eval_potential_matrix(std::span<const LogPotential<Point>> potentials,
                                      const ParticleSet<Point>& particles) {
  return eval_potential_matrix(
      potentials.size(), std::span<const Point>(particles.points),
      [&](std::size_t p, const Point& x) { return potentials[p](x); });
}

/// Each row averaged over its own block of M columns; requires N == M * n.
LogEstimate estimate_simple(const PotentialMatrix& pm, std::size_t block_size);

/// Each row averaged over all N columns. Consistent but biased.
LogEstimate estimate_biased(const PotentialMatrix& pm);

struct RecycleResult {
  LogEstimate estimate;
  SelectionTrace trace;
};

/// The recycled sequential importance-sampling estimator. At step p the row
/// is averaged over the N - p + 1 columns not yet selected, then one of them
/// is selected with probability proportional to its weight (uniformly when
/// every remaining weight is zero). Requires N >= n.
RecycleResult estimate_recycle(const PotentialMatrix& pm, RngStream& rng);

/// The U-statistic: rescaled rectangular permanent, by exhaustive enumeration
/// of injective index tuples. Throws EnumerationInfeasible when
/// N!/(N-n)! > cap.
LogEstimate estimate_perm_exact(const PotentialMatrix& pm,
                                std::uint64_t cap = kDefaultEnumerationCap);

/// estimate_simple with column j replaced by column sigma[j].
LogEstimate estimate_simple_permuted(const PotentialMatrix& pm,
                                     std::span<const std::size_t> sigma,
                                     std::size_t block_size);

/// Mean of estimate_simple_permuted over q uniformly drawn permutations.
LogEstimate average_permuted_simple(const PotentialMatrix& pm, std::size_t q,
                                    RngStream& rng);

/// Mean of estimate_simple_permuted over all N! permutations.
LogEstimate average_permuted_simple_exhaustive(const PotentialMatrix& pm,
                                               std::uint64_t cap = kDefaultEnumerationCap);

/// Draws j outside `excluded` with probability exp(log_row[j]) / sum over the
/// remaining indices; uniformly over the remaining indices when that sum is 0.
/// `excluded` is a 0/1 mask of length N.
std::size_t sample_next_index(std::span<const double> log_row,
                              std::span<const std::uint8_t> excluded, RngStream& rng);

/// Uniformly random permutation of 0..size-1 (Fisher-Yates).
std::vector<std::size_t> random_permutation(std::size_t size, RngStream& rng);

/// N! / (N - n)!, saturating at UINT64_MAX.
std::uint64_t falling_factorial(std::size_t N, std::size_t n) noexcept;

}  // namespace prodest
