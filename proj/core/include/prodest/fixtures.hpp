#pragma once

// Small hand-checkable fixtures shared by the tests and the CLI.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "prodest/exact_oracle.hpp"

namespace prodest::fixtures {

struct NamedFixture {
  std::string id;
  DiscreteMeasure mu;
  DiscretePotentialSet pots;
};

/// Uniform on {0, 1}; G1 = 1{x = 1}, G2 = 1{x = 0}. gamma = 1/4, c = (1, 1).
NamedFixture d1();

/// Uniform product measure on {0,1}^2; G_p is the indicator of coordinate p.
/// The potentials are independent under mu and c = (1, 1).
NamedFixture d3();

/// Two latent states (uniform), kernel rows (3/4, 1/4) and (1/4, 3/4). C = 1/4.
DiscreteLVM d4();

/// D1 written as a latent variable model: identity kernel, observations (1, 0).
DiscreteLVM d1_lvm();
std::vector<std::size_t> d1_observations();

/// Three points, one carrying a rare extreme potential value, identical G1 = G2.
/// Its recycled second moment exceeds the simple one at N = 2.
NamedFixture heavy_point();

/// Looks up d1, d3 or heavy_point by id (case-insensitive "D1" etc).
std::optional<NamedFixture> find(std::string_view id);

}  // namespace prodest::fixtures
