// Writes the AR(1) demo panel used by configs/toy.run.json.
#include <iostream>

#include <CLI11.hpp>

#include "synthgym/error.hpp"
#include "synthgym/ingest.hpp"
#include "synthgym/toy.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Write the toy AR(1) panel as CSV"};
  synthgym::ToyPanelConfig c;
  std::string output;
  app.add_option("--output", output)->required();
  app.add_option("--patients", c.patients);
  app.add_option("--steps", c.steps);
  app.add_option("--seed", c.seed);
  CLI11_PARSE(app, argc, argv);
  try {
    const synthgym::Panel panel = synthgym::make_toy_panel(c);
    synthgym::write_csv_panel(panel, synthgym::CsvLayout::for_schema(panel.schema()), output);
  } catch (const std::exception& e) {
    std::cerr << "make_toy: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
