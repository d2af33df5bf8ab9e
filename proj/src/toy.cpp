#include "synthgym/toy.hpp"

#include <cmath>

#include "synthgym/rng.hpp"

namespace synthgym {

DatasetSchema toy_schema(std::size_t steps) {
  DatasetSchema s;
  s.sequence_length = steps;
  VariableSpec x1;
  x1.name = "x1";
  x1.unit = "u";
  VariableSpec x2 = x1;
  x2.name = "x2";
  VariableSpec flag;
  flag.name = "flag";
  flag.kind = VariableKind::Binary;
  flag.class_labels = {"False", "True"};
  s.variables = {x1, x2, flag};
  return s;
}

Panel make_toy_panel(const ToyPanelConfig& c) {
  Panel panel(toy_schema(c.steps));
  Rng rng(c.seed);
  const double innovation_sd = std::sqrt(1.0 - c.phi * c.phi);
  const double ortho = std::sqrt(1.0 - c.rho * c.rho);
  for (std::size_t p = 0; p < c.patients; ++p) {
    const std::size_t q = panel.add_patient("p" + std::to_string(p), c.steps);
    // Start from the stationary law so every step has unit variance.
    double a = rng.normal();
    double b = c.rho * a + ortho * rng.normal();
    for (std::size_t t = 0; t < c.steps; ++t) {
      if (t > 0) {
        const double e1 = rng.normal();
        const double e2 = c.rho * e1 + ortho * rng.normal();
        a = c.phi * a + innovation_sd * e1;
        b = c.phi * b + innovation_sd * e2;
      }
      panel.at(q, t, 0) = 50.0 + 10.0 * a;
      panel.at(q, t, 1) = 100.0 + 20.0 * b;
      panel.at(q, t, 2) = rng.uniform() < c.flag_rate ? 1.0 : 0.0;
    }
  }
  return panel;
}

}  // namespace synthgym
