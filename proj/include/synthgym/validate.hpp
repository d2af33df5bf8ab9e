#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "synthgym/panel.hpp"
#include "synthgym/schema.hpp"

namespace synthgym {

// ---- Stage one: marginal densities ----

struct DensityTable {
  std::string variable;
  VariableKind kind = VariableKind::Numeric;
  // Numeric variables.
  std::vector<double> grid;
  std::vector<double> real_density;
  std::vector<double> syn_density;
  double real_bandwidth = 0.0;
  double syn_bandwidth = 0.0;
  // Binary and categorical variables, in percent.
  std::vector<std::string> labels;
  std::vector<double> real_share;
  std::vector<double> syn_share;

  nlohmann::json to_json() const;
};

inline constexpr std::size_t kDensityGridSize = 256;

/// 0.9 min(sd, IQR / 1.34) n^(-1/5), with fallbacks for degenerate samples.
double silverman_bandwidth(std::span<const double> sample);
std::vector<double> gaussian_kde(std::span<const double> sample, std::span<const double> grid,
                                 double bandwidth);
DensityTable density_export(std::span<const double> real, std::span<const double> syn,
                            const VariableSpec& variable);
std::vector<DensityTable> stage1_run(const Panel& real, const Panel& syn);

// ---- Stage two: repeated two-sample tests ----

struct Stage2Config {
  std::size_t iterations = 100;
  std::size_t batch = 32;
  double alpha_ks = 0.05;
  double alpha_t = 0.05;
  double alpha_f = 0.05;
  double pass_fraction = 0.7;
  double three_sigma_coverage = 0.7;
  double sigma_multiplier = 2.0;
  std::uint64_t seed = 0;
};

std::vector<std::string> validate_stage2_config(const Stage2Config& config);
nlohmann::json to_json(const Stage2Config& config);
Stage2Config stage2_config_from_json(const nlohmann::json& j, Stage2Config base = {});

struct VariableStage2 {
  std::string name;
  VariableKind kind = VariableKind::Numeric;
  std::size_t eta_ks = 0;
  /// Numeric only.
  std::size_t eta_t = 0;
  /// Variance-ratio F for numerics, ANOVA F for categoricals.
  std::size_t eta_f = 0;
  /// Numeric only.
  std::size_t eta_3s = 0;
  bool ks_pass = false;
  bool t_pass = false;
  bool f_pass = false;
  bool three_sigma_pass = false;
  bool realistic = false;
};

struct Stage2Report {
  Stage2Config config;
  std::vector<VariableStage2> variables;

  bool all_realistic() const;
  nlohmann::json to_json() const;
};

/// Recomputes the pass flags and verdict of v from its counters.
void apply_verdict(VariableStage2& v, const Stage2Config& config);
Stage2Report stage2_from_json(const nlohmann::json& j);

Stage2Report stage2_run(const Panel& real, const Panel& syn, const Stage2Config& config);

// ---- Stage three: correlations ----

struct Decomposition {
  std::vector<double> trend;
  std::vector<double> cycle;
};

/// Least-squares linear trend over the time index; cycle is the residual.
Decomposition detrend_linear(std::span<const double> series);

/// Kendall tau-b over pooled rows for every variable pair; unit diagonal.
Eigen::MatrixXd static_correlations(const Panel& panel);

struct DynamicCorrelations {
  Eigen::MatrixXd trend;
  Eigen::MatrixXd cycle;
};

/// Per-patient tau-b of trends and of cycles, averaged over patients.
DynamicCorrelations dynamic_correlations(const Panel& panel);

struct CorrelationReport {
  std::vector<std::string> variables;
  Eigen::MatrixXd static_real, static_syn;
  Eigen::MatrixXd trend_real, trend_syn;
  Eigen::MatrixXd cycle_real, cycle_syn;

  double max_static_gap() const;
  double max_trend_gap() const;
  double max_cycle_gap() const;
  nlohmann::json to_json() const;
};

CorrelationReport stage3_run(const Panel& real, const Panel& syn);

/// CSV with a header row and a leading label column.
std::string matrix_csv(const Eigen::MatrixXd& m, std::span<const std::string> labels);

// Single-threaded references used to check the parallel kernels.
namespace serial {
Stage2Report stage2_run(const Panel& real, const Panel& syn, const Stage2Config& config);
Eigen::MatrixXd static_correlations(const Panel& panel);
DynamicCorrelations dynamic_correlations(const Panel& panel);
}  // namespace serial

}  // namespace synthgym
