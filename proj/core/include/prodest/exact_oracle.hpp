#pragma once

// Exact moments on finite-support measures.
//
// Everything here works on linear scale in double precision: the fixtures it
// is meant for have a handful of support points and O(1) values. These are
// the ground truth that the Monte Carlo estimators are tested against; only
// types are shared with estimators.hpp, never code paths.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "prodest/errors.hpp"
#include "prodest/estimators.hpp"

namespace prodest {

/// A probability vector over support points 0..m-1.
class DiscreteMeasure {
 public:
  explicit DiscreteMeasure(std::vector<double> probs);
  static DiscreteMeasure uniform(std::size_t m);

  std::size_t size() const noexcept { return probs_.size(); }
  double operator[](std::size_t x) const noexcept { return probs_[x]; }
  std::span<const double> probs() const noexcept { return probs_; }

  /// mu(f) for f given by its values on the support.
  double expect(std::span<const double> f) const;

 private:
  std::vector<double> probs_;
};

/// Non-negative potentials G_1..G_n tabulated on an m-point support.
class DiscretePotentialSet {
 public:
  DiscretePotentialSet(std::size_t n, std::size_t m, std::vector<double> values);
  explicit DiscretePotentialSet(const std::vector<std::vector<double>>& rows);

  std::size_t count() const noexcept { return n_; }
  std::size_t support_size() const noexcept { return m_; }
  double operator()(std::size_t p, std::size_t x) const noexcept { return values_[p * m_ + x]; }
  std::span<const double> row(std::size_t p) const noexcept {
    return {values_.data() + p * m_, m_};
  }

 private:
  std::size_t n_;
  std::size_t m_;
  std::vector<double> values_;
};

/// Finite latent variable model: latent law mu and row-stochastic kernel g(x, y).
class DiscreteLVM {
 public:
  DiscreteLVM(DiscreteMeasure latent, std::vector<std::vector<double>> kernel);

  const DiscreteMeasure& latent() const noexcept { return latent_; }
  std::size_t latent_size() const noexcept { return latent_.size(); }
  std::size_t obs_size() const noexcept { return kernel_.front().size(); }
  double kernel(std::size_t x, std::size_t y) const noexcept { return kernel_[x][y]; }
  const std::vector<std::vector<double>>& kernel_rows() const noexcept { return kernel_; }

  /// nu(y) = sum_x mu(x) g(x, y).
  double marginal(std::size_t y) const;
  /// Potentials G_p(x) = g(x, y_p).
  DiscretePotentialSet induced_potentials(std::span<const std::size_t> y) const;
  /// C = E_y[mu(Gbar_y^2)] - 1.
  double expected_c() const;

 private:
  DiscreteMeasure latent_;
  std::vector<std::vector<double>> kernel_;
};

struct MomentReport {
  double gamma = 0.0;
  std::optional<double> second_moment_simple;  // present when N is a multiple of n
  double second_moment_perm = 0.0;
  double second_moment_recycle = 0.0;
  std::vector<double> c;
};

struct EstimatorMoments {
  double mean = 0.0;
  double second_moment = 0.0;
};

/// prod_p mu(G_p).
double gamma_exact(const DiscreteMeasure& mu, const DiscretePotentialSet& pots);

/// c_p = mu(Gbar_p^2) - 1 for every p.
std::vector<double> relative_excess(const DiscreteMeasure& mu, const DiscretePotentialSet& pots);

/// psi_N(r) for a 0-based index vector r in [0, N)^n.
double psi_N(const DiscreteMeasure& mu, const DiscretePotentialSet& pots,
             std::span<const std::size_t> r, std::size_t N);

/// prod_p {1 + c_p / M}.
double second_moment_simple_exact(const DiscreteMeasure& mu, const DiscretePotentialSet& pots,
                                  std::size_t block_size);

/// E[psi_N(K)], K uniform over injective n-tuples of [0, N).
double second_moment_perm_exact(const DiscreteMeasure& mu, const DiscretePotentialSet& pots,
                                std::size_t N, std::uint64_t cap = kDefaultEnumerationCap);

/// E[psi_N(S)], S_p uniform on [p, N) independently (0-based p).
double second_moment_recycle_exact(const DiscreteMeasure& mu,
                                   const DiscretePotentialSet& pots, std::size_t N,
                                   std::uint64_t cap = kDefaultEnumerationCap);

/// prod_p [1 + c_p / (N - p + 1)] with 1-based p.
double independent_case_formula(std::span<const double> c, std::size_t N);

/// (1 + c1)^(n^2 / N).
double perm_identical_lower_bound(double c1, std::size_t n, std::size_t N);

MomentReport moment_report(const DiscreteMeasure& mu, const DiscretePotentialSet& pots,
                           std::size_t N, std::uint64_t cap = kDefaultEnumerationCap);

/// Exact mean and second moment of an estimator, summing over all m^N
/// particle configurations and, for the recycled estimator, over every
/// selection sequence with its conditional probability.
EstimatorMoments estimator_distribution_exact(const DiscreteMeasure& mu,
                                              const DiscretePotentialSet& pots,
                                              std::size_t N, EstimatorKind kind,
                                              std::uint64_t cap = kDefaultEnumerationCap);

/// Conditional mean and second moment of the recycled estimator given a fixed
/// matrix, by enumerating every selection sequence.
EstimatorMoments recycle_conditional_moments(const PotentialMatrix& pm,
                                             std::uint64_t cap = kDefaultEnumerationCap);

struct LatentMomentComparison {
  double lhs = 0.0;  // exhaustive average over y in obs^n
  double rhs = 0.0;  // closed form in C
  double C = 0.0;
};

/// Recycled estimator: E_y[E[(gamma_recycle/gamma)^2]] against prod_p [1 + C/(N-p+1)].
LatentMomentComparison latent_expected_second_moment(const DiscreteLVM& lvm, std::size_t n,
                                                     std::size_t N,
                                                     std::uint64_t cap = kDefaultEnumerationCap);

/// Simple estimator: E_y[E[(gamma_simple/gamma)^2]] against (1 + C/M)^n.
LatentMomentComparison latent_expected_second_moment_simple(
    const DiscreteLVM& lvm, std::size_t n, std::size_t block_size,
    std::uint64_t cap = kDefaultEnumerationCap);

/// Product measure over coordinates, with G_p depending on coordinate p only.
/// Support points are enumerated with the last coordinate varying fastest.
struct ProductFixture {
  DiscreteMeasure mu;
  DiscretePotentialSet pots;
};
ProductFixture make_product_fixture(const std::vector<DiscreteMeasure>& coordinates,
                                    const std::vector<std::vector<double>>& coordinate_potentials);

}  // namespace prodest
