#pragma once

#include <cstdint>

#include "synthgym/panel.hpp"

namespace synthgym {

/// Two stationary AR(1) numerics with correlated innovations plus an
/// independent Bernoulli flag. Used as a small demo and test dataset.
struct ToyPanelConfig {
  std::size_t patients = 500;
  std::size_t steps = 10;
  double phi = 0.8;
  /// Innovation correlation; pooled Kendall tau is about (2/pi) asin(rho).
  double rho = 0.70710678118654752;
  double flag_rate = 0.3;
  std::uint64_t seed = 7;
};

DatasetSchema toy_schema(std::size_t steps = 10);
Panel make_toy_panel(const ToyPanelConfig& config);

}  // namespace synthgym
