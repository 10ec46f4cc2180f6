#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include "fuzz.hpp"
#include "prodest/errors.hpp"
#include "prodest/estimators.hpp"
#include "prodest/exact_oracle.hpp"

using namespace prodest;
using prodest::testing::FuzzSource;

namespace {

PotentialMatrix linear(std::size_t n, std::size_t N, std::vector<double> values) {
  return PotentialMatrix::from_linear(n, N, values);
}

PotentialMatrix ones(std::size_t n, std::size_t N) {
  return PotentialMatrix(n, N, std::vector<double>(n * N, 0.0));
}

// D1 at zeta = (0, 1): row 1 = 1{x = 1}, row 2 = 1{x = 0}.
PotentialMatrix d1_matrix() { return linear(2, 2, {0.0, 1.0, 1.0, 0.0}); }

}  // namespace

TEST(PotentialMatrix, RejectsNaNAndPositiveInfinity) {
  EXPECT_THROW(PotentialMatrix(1, 2, {0.0, std::nan("")}), ContractViolation);
  EXPECT_THROW(PotentialMatrix(1, 2, {0.0, INFINITY}), ContractViolation);
  EXPECT_THROW(PotentialMatrix(0, 2, {}), DimensionError);
  EXPECT_THROW(PotentialMatrix(1, 0, {}), DimensionError);
  EXPECT_THROW(PotentialMatrix(2, 2, {0.0, 0.0, 0.0}), DimensionError);
  EXPECT_NO_THROW(PotentialMatrix(1, 2, {kNegInf, 0.0}));
}

TEST(PotentialMatrix, FromLinearRejectsNegativeValues) {
  const std::vector<double> bad{1.0, -0.5};
  EXPECT_THROW(PotentialMatrix::from_linear(1, 2, bad), ContractViolation);
}

TEST(EvalPotentialMatrix, ConstantPotentialsGiveZeroLogs) {
  const std::vector<double> points{0.3, -1.0, 7.0};
  const auto pm = eval_potential_matrix(2, std::span<const double>(points),
                                        [](std::size_t, double) { return 0.0; });
  for (double v : pm.log_values()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(pm.rows(), 2u);
  EXPECT_EQ(pm.cols(), 3u);
}

TEST(EvalPotentialMatrix, FixtureD1Indicators) {
  const std::vector<LogPotential<int>> pots{
      [](const int& x) { return x == 1 ? 0.0 : kNegInf; },
      [](const int& x) { return x == 0 ? 0.0 : kNegInf; },
  };
  const ParticleSet<int> zeta{{0, 1}, 0};
  const auto pm = eval_potential_matrix(std::span<const LogPotential<int>>(pots), zeta);
  EXPECT_EQ(pm.at(0, 0), kNegInf);
  EXPECT_EQ(pm.at(0, 1), 0.0);
  EXPECT_EQ(pm.at(1, 0), 0.0);
  EXPECT_EQ(pm.at(1, 1), kNegInf);
}

TEST(EvalPotentialMatrix, EmptyIndicatorGivesRowOfZeros) {
  const std::vector<double> points{0.0, 0.1, 0.2};
  const auto pm = eval_potential_matrix(1, std::span<const double>(points), [](std::size_t, double x) {
    return std::abs(x - 5.0) < 0.2 ? 0.0 : kNegInf;
  });
  for (double v : pm.row(0)) EXPECT_EQ(v, kNegInf);
}

TEST(EvalPotentialMatrix, NaNReportsLocation) {
  const std::vector<double> points{0.0, 1.0, 2.0};
  try {
    (void)eval_potential_matrix(2, std::span<const double>(points), [](std::size_t p, double x) {
      return p == 1 && x == 2.0 ? std::nan("") : 0.0;
    });
    FAIL() << "expected ContractViolation";
  } catch (const ContractViolation& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("p=1"), std::string::npos) << what;
    EXPECT_NE(what.find("j=2"), std::string::npos) << what;
  }
}

TEST(EstimateSimple, Examples) {
  EXPECT_EQ(estimate_simple(ones(3, 6), 2).log_value, 0.0);
  EXPECT_NEAR(estimate_simple(linear(2, 2, {1.0, 3.0, 2.0, 4.0}), 1).value(), 4.0, 1e-15);
  EXPECT_TRUE(estimate_simple(d1_matrix(), 1).is_zero());
}

TEST(EstimateSimple, BlocksFollowRowOrder) {
  // Row p averages columns pM .. pM + M - 1 only.
  const auto pm = linear(2, 4, {1.0, 3.0, 100.0, 100.0, 100.0, 100.0, 2.0, 6.0});
  EXPECT_NEAR(estimate_simple(pm, 2).value(), 2.0 * 4.0, 1e-13);
}

TEST(EstimateSimple, RequiresNMultipleOfN) {
  EXPECT_THROW(estimate_simple(ones(2, 3), 1), DimensionError);
  EXPECT_THROW(estimate_simple(ones(2, 4), 1), DimensionError);
  EXPECT_THROW(estimate_simple(ones(2, 4), 0), DimensionError);
}

TEST(EstimateBiased, Examples) {
  EXPECT_EQ(estimate_biased(ones(2, 5)).log_value, 0.0);
  EXPECT_NEAR(estimate_biased(d1_matrix()).value(), 0.25, 1e-15);
}

TEST(EstimateRecycle, FixtureD1IsHalfForEverySeed) {
  const auto pm = d1_matrix();
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    RngStream rng(seed);
    const auto r = estimate_recycle(pm, rng);
    EXPECT_NEAR(r.estimate.value(), 0.5, 1e-15);
    EXPECT_EQ(r.trace.indices, (std::vector<std::size_t>{1, 0}));
  }
}

TEST(EstimateRecycle, ConstantPotentialsGiveOneAndUniformSelections) {
  const auto pm = ones(2, 4);
  std::vector<int> first(4, 0);
  constexpr int kRuns = 40000;
  for (int s = 0; s < kRuns; ++s) {
    RngStream rng(7, static_cast<std::uint64_t>(s));
    const auto r = estimate_recycle(pm, rng);
    ASSERT_EQ(r.estimate.log_value, 0.0);
    ++first[r.trace.indices[0]];
  }
  double chi2 = 0.0;
  for (int c : first) chi2 += (c - kRuns / 4.0) * (c - kRuns / 4.0) / (kRuns / 4.0);
  EXPECT_LT(chi2, 16.27);  // 3 dof, 0.999 quantile
}

TEST(EstimateRecycle, ZeroDenominatorStillCompletesTrace) {
  // Row 1 is zero everywhere: the estimate is 0 yet every step selects a column.
  const auto pm = linear(3, 4, {1, 2, 3, 4, 0, 0, 0, 0, 5, 0, 1, 1});
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    RngStream rng(seed);
    const auto r = estimate_recycle(pm, rng);
    EXPECT_TRUE(r.estimate.is_zero());
    ASSERT_EQ(r.trace.indices.size(), 3u);
    const std::set<std::size_t> distinct(r.trace.indices.begin(), r.trace.indices.end());
    EXPECT_EQ(distinct.size(), 3u);
    for (auto k : r.trace.indices) EXPECT_LT(k, 4u);
  }
}

TEST(EstimateRecycle, RequiresNAtLeastN) {
  RngStream rng(1);
  EXPECT_THROW(estimate_recycle(ones(3, 2), rng), DimensionError);
}

TEST(EstimateRecycle, DeterministicGivenSeed) {
  FuzzSource fuzz(11);
  const auto pm = fuzz.matrix(3, 6);
  RngStream a(5, 2), b(5, 2);
  const auto ra = estimate_recycle(pm, a);
  const auto rb = estimate_recycle(pm, b);
  EXPECT_EQ(ra.estimate, rb.estimate);
  EXPECT_EQ(ra.trace, rb.trace);
}

TEST(EstimateRecycle, TraceIndicesAreDistinctOnFuzzedMatrices) {
  FuzzSource fuzz(12);
  for (int i = 0; i < 200; ++i) {
    const std::size_t n = fuzz.integer(1, 5);
    const std::size_t N = fuzz.integer(n, 9);
    const auto pm = fuzz.matrix(n, N);
    RngStream rng(static_cast<std::uint64_t>(i));
    const auto r = estimate_recycle(pm, rng);
    ASSERT_FALSE(std::isnan(r.estimate.log_value));
    const std::set<std::size_t> distinct(r.trace.indices.begin(), r.trace.indices.end());
    ASSERT_EQ(distinct.size(), n);
    ASSERT_LT(*distinct.rbegin(), N);
  }
}

TEST(EstimateRecycle, MonteCarloMeanMatchesPermanent) {
  const auto pm = linear(2, 3, {1.0, 2.0, 0.5, 3.0, 0.0, 1.0});
  const double perm = estimate_perm_exact(pm).value();
  constexpr int kRuns = 200000;
  double sum = 0.0, sum_sq = 0.0;
  for (int s = 0; s < kRuns; ++s) {
    RngStream rng(99, static_cast<std::uint64_t>(s));
    const double z = estimate_recycle(pm, rng).estimate.value();
    sum += z;
    sum_sq += z * z;
  }
  const double mean = sum / kRuns;
  const double se = std::sqrt((sum_sq / kRuns - mean * mean) / kRuns);
  EXPECT_NEAR(mean, perm, 4.0 * se);
}

TEST(EstimatePerm, Examples) {
  EXPECT_EQ(estimate_perm_exact(ones(3, 5)).log_value, 0.0);
  EXPECT_NEAR(estimate_perm_exact(d1_matrix()).value(), 0.5, 1e-15);
  const auto row = linear(1, 3, {1.0, 2.0, 6.0});
  EXPECT_NEAR(estimate_perm_exact(row).value(), estimate_biased(row).value(), 1e-15);
}

TEST(EstimatePerm, HandComputedRectangularPermanent) {
  // Injective pairs over 3 columns: (1,2),(1,3),(2,1),(2,3),(3,1),(3,2).
  const auto pm = linear(2, 3, {1.0, 2.0, 3.0, 4.0, 5.0, 6.0});
  const double total = 1 * 5 + 1 * 6 + 2 * 4 + 2 * 6 + 3 * 4 + 3 * 5;
  EXPECT_NEAR(estimate_perm_exact(pm).value(), total / 6.0, 1e-14);
}

TEST(EstimatePerm, CapIsEnforced) {
  EXPECT_THROW(estimate_perm_exact(ones(3, 10), 100), EnumerationInfeasible);
  EXPECT_NO_THROW(estimate_perm_exact(ones(3, 10), 720));
  EXPECT_THROW(estimate_perm_exact(ones(3, 2)), DimensionError);
}

TEST(EstimatePerm, InvariantUnderColumnPermutation) {
  FuzzSource fuzz(13);
  for (int i = 0; i < 50; ++i) {
    const std::size_t n = fuzz.integer(1, 3);
    const std::size_t N = fuzz.integer(n, 6);
    const auto pm = fuzz.matrix(n, N);
    RngStream rng(static_cast<std::uint64_t>(i));
    const auto sigma = random_permutation(N, rng);
    std::vector<double> shuffled(n * N);
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t j = 0; j < N; ++j) shuffled[p * N + j] = pm.at(p, sigma[j]);
    }
    const PotentialMatrix other(n, N, shuffled);
    const double a = estimate_perm_exact(pm).log_value;
    const double b = estimate_perm_exact(other).log_value;
    if (a == kNegInf) {
      EXPECT_EQ(b, kNegInf);
    } else {
      EXPECT_NEAR(a, b, 1e-12);
    }
  }
}

TEST(Estimators, SingleRowCollapse) {
  FuzzSource fuzz(14);
  for (int i = 0; i < 50; ++i) {
    const std::size_t N = fuzz.integer(1, 8);
    const auto pm = fuzz.matrix(1, N);
    RngStream rng(static_cast<std::uint64_t>(i));
    const double biased = estimate_biased(pm).value();
    EXPECT_NEAR(estimate_simple(pm, N).value(), biased, 1e-13);
    EXPECT_NEAR(estimate_perm_exact(pm).value(), biased, 1e-13);
    EXPECT_NEAR(estimate_recycle(pm, rng).estimate.value(), biased, 1e-13);
  }
}

TEST(Estimators, ConstantPotentialsReturnTheProduct) {
  const std::vector<double> kappa{0.5, 3.0, 1.25};
  const std::size_t n = 3, N = 6;
  std::vector<double> logs;
  for (double k : kappa) logs.insert(logs.end(), N, std::log(k));
  const PotentialMatrix pm(n, N, logs);
  const double expected = 0.5 * 3.0 * 1.25;
  RngStream rng(3);
  EXPECT_NEAR(estimate_simple(pm, 2).value(), expected, 1e-14);
  EXPECT_NEAR(estimate_biased(pm).value(), expected, 1e-14);
  EXPECT_NEAR(estimate_perm_exact(pm).value(), expected, 1e-14);
  EXPECT_NEAR(estimate_recycle(pm, rng).estimate.value(), expected, 1e-14);
}

TEST(Estimators, DisjointSupportsMakeRecycleEqualPermanent) {
  FuzzSource fuzz(15);
  for (int i = 0; i < 100; ++i) {
    const std::size_t n = fuzz.integer(1, 3);
    const std::size_t N = fuzz.integer(n, 6);
    std::vector<double> values(n * N, 0.0);
    for (std::size_t j = 0; j < N; ++j) {
      const std::size_t owner = fuzz.integer(0, n);  // n: no finite entry
      if (owner < n) values[owner * N + j] = fuzz.real(0.1, 3.0);
    }
    const auto pm = PotentialMatrix::from_linear(n, N, values);
    const auto perm = estimate_perm_exact(pm);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      RngStream rng(seed, static_cast<std::uint64_t>(i));
      const auto r = estimate_recycle(pm, rng).estimate;
      if (perm.is_zero()) {
        EXPECT_TRUE(r.is_zero());
      } else {
        EXPECT_NEAR(r.log_value, perm.log_value, 1e-12);
      }
    }
  }
}

TEST(Estimators, RowScalingIsEquivariant) {
  FuzzSource fuzz(16);
  const auto pm = fuzz.matrix(2, 4);
  std::vector<double> logs(pm.log_values().begin(), pm.log_values().end());
  for (std::size_t j = 0; j < 4; ++j) logs[4 + j] += std::log(7.0);
  const PotentialMatrix scaled(2, 4, logs);
  RngStream a(1), b(1);
  const auto ra = estimate_recycle(pm, a);
  const auto rb = estimate_recycle(scaled, b);
  EXPECT_EQ(ra.trace, rb.trace);
  EXPECT_NEAR(rb.estimate.log_value - ra.estimate.log_value, std::log(7.0), 1e-12);
  EXPECT_NEAR(estimate_perm_exact(scaled).log_value - estimate_perm_exact(pm).log_value,
              std::log(7.0), 1e-12);
  EXPECT_NEAR(estimate_simple(scaled, 2).log_value - estimate_simple(pm, 2).log_value,
              std::log(7.0), 1e-12);
}

TEST(Estimators, LogSpaceSurvivesManyTinyFactors) {
  // 400 factors of about e^-800 each: linear scale would underflow at once.
  const std::size_t n = 400, N = 800;
  std::vector<double> logs(n * N, -800.0);
  const PotentialMatrix pm(n, N, logs);
  RngStream rng(4);
  EXPECT_NEAR(estimate_recycle(pm, rng).estimate.log_value, -800.0 * n, 1e-6);
  EXPECT_NEAR(estimate_simple(pm, 2).log_value, -800.0 * n, 1e-6);
  EXPECT_NEAR(estimate_biased(pm).log_value, -800.0 * n, 1e-6);
}

TEST(EstimateSimplePermuted, Examples) {
  const auto pm = d1_matrix();
  const std::vector<std::size_t> identity{0, 1}, swap{1, 0};
  EXPECT_EQ(estimate_simple_permuted(pm, identity, 1), estimate_simple(pm, 1));
  EXPECT_NEAR(estimate_simple_permuted(pm, swap, 1).value(), 1.0, 1e-15);
  EXPECT_EQ(estimate_simple_permuted(ones(2, 4), std::vector<std::size_t>{3, 1, 0, 2}, 2).log_value,
            0.0);
}

TEST(EstimateSimplePermuted, RejectsInvalidPermutations) {
  const auto pm = ones(2, 4);
  EXPECT_THROW(estimate_simple_permuted(pm, std::vector<std::size_t>{0, 0, 1, 2}, 2),
               ContractViolation);
  EXPECT_THROW(estimate_simple_permuted(pm, std::vector<std::size_t>{0, 1, 2}, 2), ContractViolation);
  EXPECT_THROW(estimate_simple_permuted(pm, std::vector<std::size_t>{0, 1, 2, 4}, 2),
               ContractViolation);
}

TEST(AveragePermutedSimple, ConstantPotentialsAndDefinition) {
  RngStream rng(5);
  EXPECT_NEAR(average_permuted_simple(ones(2, 4), 10, rng).log_value, 0.0, 1e-15);

  // q = 1 returns one permuted simple value; every permutation of 4 columns is enumerated.
  FuzzSource fuzz(17);
  const auto pm = fuzz.matrix(2, 4);
  std::vector<std::size_t> sigma{0, 1, 2, 3};
  std::vector<double> candidates;
  do {
    candidates.push_back(estimate_simple_permuted(pm, sigma, 2).value());
  } while (std::next_permutation(sigma.begin(), sigma.end()));
  for (std::uint64_t s = 0; s < 20; ++s) {
    RngStream r(s);
    const double v = average_permuted_simple(pm, 1, r).value();
    const bool found = std::any_of(candidates.begin(), candidates.end(),
                                   [&](double c) { return std::abs(c - v) <= 1e-13 * (1 + c); });
    EXPECT_TRUE(found) << v;
  }
}

TEST(AveragePermutedSimple, ExhaustiveAverageIsThePermanent) {
  FuzzSource fuzz(18);
  for (int i = 0; i < 20; ++i) {
    const auto pm = fuzz.matrix(2, 4);
    const auto perm = estimate_perm_exact(pm);
    const auto avg = average_permuted_simple_exhaustive(pm);
    if (perm.is_zero()) {
      EXPECT_TRUE(avg.is_zero());
    } else {
      EXPECT_NEAR(avg.value(), perm.value(), 1e-12 * perm.value());
    }
  }
}

TEST(SampleNextIndex, SingleAvailableIndex) {
  const std::vector<double> row{0.0, 1.0, -2.0};
  const std::vector<std::uint8_t> excluded{1, 0, 1};
  RngStream rng(1);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(sample_next_index(row, excluded, rng), 1u);
}

TEST(SampleNextIndex, UniformWithExclusion) {
  const std::vector<double> row(4, 0.0);
  const std::vector<std::uint8_t> excluded{0, 1, 0, 0};
  RngStream rng(2);
  std::vector<int> counts(4, 0);
  constexpr int kDraws = 100000;
  for (int i = 0; i < kDraws; ++i) ++counts[sample_next_index(row, excluded, rng)];
  EXPECT_EQ(counts[1], 0);
  double chi2 = 0.0;
  for (int j : {0, 2, 3}) chi2 += std::pow(counts[j] - kDraws / 3.0, 2) / (kDraws / 3.0);
  EXPECT_LT(chi2, 13.82);  // 2 dof, 0.999 quantile
}

TEST(SampleNextIndex, ProportionalToWeights) {
  const std::vector<double> row{kNegInf, kNegInf, std::log(3.0), 0.0};
  const std::vector<std::uint8_t> excluded(4, 0);
  RngStream rng(3);
  std::vector<int> counts(4, 0);
  constexpr int kDraws = 100000;
  for (int i = 0; i < kDraws; ++i) ++counts[sample_next_index(row, excluded, rng)];
  EXPECT_EQ(counts[0] + counts[1], 0);
  const double e2 = 0.75 * kDraws, e3 = 0.25 * kDraws;
  const double chi2 = std::pow(counts[2] - e2, 2) / e2 + std::pow(counts[3] - e3, 2) / e3;
  EXPECT_LT(chi2, 10.83);  // 1 dof, 0.999 quantile
}

TEST(SampleNextIndex, ZeroMassFallsBackToUniform) {
  const std::vector<double> row{kNegInf, kNegInf, kNegInf};
  const std::vector<std::uint8_t> excluded{0, 0, 1};
  RngStream rng(4);
  std::vector<int> counts(3, 0);
  for (int i = 0; i < 20000; ++i) ++counts[sample_next_index(row, excluded, rng)];
  EXPECT_EQ(counts[2], 0);
  EXPECT_NEAR(counts[0] / 20000.0, 0.5, 0.02);
}

TEST(SampleNextIndex, AllExcludedIsAnError) {
  const std::vector<double> row{0.0, 0.0};
  const std::vector<std::uint8_t> excluded{1, 1};
  RngStream rng(5);
  EXPECT_THROW(sample_next_index(row, excluded, rng), ContractViolation);
}

TEST(RandomPermutation, IsAPermutationAndUniform) {
  RngStream rng(6);
  std::vector<int> position_of_zero(3, 0);
  for (int i = 0; i < 30000; ++i) {
    auto sigma = random_permutation(3, rng);
    auto sorted = sigma;
    std::sort(sorted.begin(), sorted.end());
    ASSERT_EQ(sorted, (std::vector<std::size_t>{0, 1, 2}));
    ++position_of_zero[static_cast<std::size_t>(std::find(sigma.begin(), sigma.end(), 0u) - sigma.begin())];
  }
  for (int c : position_of_zero) EXPECT_NEAR(c / 30000.0, 1.0 / 3.0, 0.02);
}

TEST(FallingFactorial, ValuesAndSaturation) {
  EXPECT_EQ(falling_factorial(6, 3), 120u);
  EXPECT_EQ(falling_factorial(5, 0), 1u);
  EXPECT_EQ(falling_factorial(3, 4), 0u);
  EXPECT_EQ(falling_factorial(100, 50), ~std::uint64_t{0});
}

TEST(EstimatorKind, NamesRoundTrip) {
  for (auto k : {EstimatorKind::simple, EstimatorKind::biased, EstimatorKind::perm,
                 EstimatorKind::recycle}) {
    EXPECT_EQ(parse_estimator_kind(to_string(k)), k);
  }
  EXPECT_FALSE(parse_estimator_kind("exact").has_value());
}
