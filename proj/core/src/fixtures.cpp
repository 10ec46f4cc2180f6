#include "prodest/fixtures.hpp"

#include <algorithm>
#include <cctype>

namespace prodest::fixtures {

NamedFixture d1() {
  return {"D1", DiscreteMeasure::uniform(2), DiscretePotentialSet({{0.0, 1.0}, {1.0, 0.0}})};
}

NamedFixture d3() {
  const auto bit = DiscreteMeasure::uniform(2);
  auto product = make_product_fixture({bit, bit}, {{0.0, 1.0}, {0.0, 1.0}});
  return {"D3", std::move(product.mu), std::move(product.pots)};
}

DiscreteLVM d4() {
  return DiscreteLVM(DiscreteMeasure::uniform(2), {{0.75, 0.25}, {0.25, 0.75}});
}

DiscreteLVM d1_lvm() {
  return DiscreteLVM(DiscreteMeasure::uniform(2), {{1.0, 0.0}, {0.0, 1.0}});
}

std::vector<std::size_t> d1_observations() { return {1, 0}; }

NamedFixture heavy_point() {
  return {"HEAVY", DiscreteMeasure({0.001, 0.499, 0.5}),
          DiscretePotentialSet({{100.0, 1.0, 1.0}, {100.0, 1.0, 1.0}})};
}

std::optional<NamedFixture> find(std::string_view id) {
  std::string key(id);
  std::transform(key.begin(), key.end(), key.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::toupper(ch)); });
  if (key == "D1") return d1();
  if (key == "D3") return d3();
  if (key == "HEAVY") return heavy_point();
  return std::nullopt;
}

}  // namespace prodest::fixtures
