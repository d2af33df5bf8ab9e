#include "synthgym/validate.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "synthgym/error.hpp"
#include "synthgym/ingest.hpp"
#include "synthgym/rng.hpp"
#include "synthgym/stats.hpp"

namespace synthgym {

namespace {

double quantile_sorted(const std::vector<double>& s, double q) {
  const double pos = q * static_cast<double>(s.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(pos));
  const double frac = pos - static_cast<double>(i);
  return i + 1 < s.size() ? s[i] + frac * (s[i + 1] - s[i]) : s[i];
}

std::vector<double> finite(std::span<const double> x) {
  std::vector<double> out;
  for (const double v : x) {
    if (std::isfinite(v)) out.push_back(v);
  }
  return out;
}

void require_matching(const Panel& real, const Panel& syn) {
  if (!(real.schema() == syn.schema())) {
    throw SchemaError("real and synthetic panels use different schemas");
  }
}

}  // namespace

double silverman_bandwidth(std::span<const double> sample) {
  std::vector<double> s(sample.begin(), sample.end());
  if (s.size() < 2) return 1.0;
  std::sort(s.begin(), s.end());
  const double sd = std::sqrt(stats::variance(s));
  const double iqr = quantile_sorted(s, 0.75) - quantile_sorted(s, 0.25);
  double spread = iqr > 0.0 ? std::min(sd, iqr / 1.34) : sd;
  if (!(spread > 0.0)) {
    const double range = s.back() - s.front();
    spread = range > 0.0 ? range : std::max(1.0, std::abs(s.front())) * 1e-3;
  }
  return 0.9 * spread * std::pow(static_cast<double>(s.size()), -0.2);
}

std::vector<double> gaussian_kde(std::span<const double> sample, std::span<const double> grid,
                                 double bandwidth) {
  std::vector<double> density(grid.size(), 0.0);
  if (sample.empty()) return density;
  const double norm =
      1.0 / (static_cast<double>(sample.size()) * bandwidth * std::sqrt(2.0 * std::numbers::pi));
#pragma omp parallel for schedule(static)
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double sum = 0.0;
    for (const double x : sample) {
      const double u = (grid[g] - x) / bandwidth;
      sum += std::exp(-0.5 * u * u);
    }
    density[g] = sum * norm;
  }
  return density;
}

DensityTable density_export(std::span<const double> real_in, std::span<const double> syn_in,
                            const VariableSpec& variable) {
  const auto real = finite(real_in);
  const auto syn = finite(syn_in);
  if (real.empty() || syn.empty()) {
    throw DataError("density export of '" + variable.name + "' needs nonempty columns");
  }
  DensityTable t;
  t.variable = variable.name;
  t.kind = variable.kind;
  if (!variable.is_numeric()) {
    t.labels = variable.class_labels;
    t.real_share.assign(variable.class_count(), 0.0);
    t.syn_share.assign(variable.class_count(), 0.0);
    for (const double v : real) t.real_share.at(static_cast<std::size_t>(v)) += 1.0;
    for (const double v : syn) t.syn_share.at(static_cast<std::size_t>(v)) += 1.0;
    for (auto& s : t.real_share) s *= 100.0 / static_cast<double>(real.size());
    for (auto& s : t.syn_share) s *= 100.0 / static_cast<double>(syn.size());
    return t;
  }
  double lo = std::min(*std::min_element(real.begin(), real.end()),
                       *std::min_element(syn.begin(), syn.end()));
  double hi = std::max(*std::max_element(real.begin(), real.end()),
                       *std::max_element(syn.begin(), syn.end()));
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  t.grid.resize(kDensityGridSize);
  for (std::size_t i = 0; i < kDensityGridSize; ++i) {
    t.grid[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(kDensityGridSize - 1);
  }
  t.real_bandwidth = silverman_bandwidth(real);
  t.syn_bandwidth = silverman_bandwidth(syn);
  t.real_density = gaussian_kde(real, t.grid, t.real_bandwidth);
  t.syn_density = gaussian_kde(syn, t.grid, t.syn_bandwidth);
  return t;
}

nlohmann::json DensityTable::to_json() const {
  nlohmann::json j = {{"variable", variable}, {"kind", std::string(synthgym::to_string(kind))}};
  if (kind == VariableKind::Numeric) {
    j["grid"] = grid;
    j["real_density"] = real_density;
    j["syn_density"] = syn_density;
    j["real_bandwidth"] = real_bandwidth;
    j["syn_bandwidth"] = syn_bandwidth;
  } else {
    j["labels"] = labels;
    j["real_share_percent"] = real_share;
    j["syn_share_percent"] = syn_share;
  }
  return j;
}

std::vector<DensityTable> stage1_run(const Panel& real, const Panel& syn) {
  require_matching(real, syn);
  std::vector<DensityTable> out;
  for (std::size_t v = 0; v < real.variable_count(); ++v) {
    out.push_back(density_export(real.pooled_column(v), syn.pooled_column(v),
                                 real.schema().variables[v]));
  }
  return out;
}

// ---- stage two ----

std::vector<std::string> validate_stage2_config(const Stage2Config& c) {
  std::vector<std::string> e;
  auto open_unit = [](double a) { return a > 0.0 && a < 1.0; };
  auto half_open = [](double a) { return a > 0.0 && a <= 1.0; };
  if (!open_unit(c.alpha_ks) || !open_unit(c.alpha_t) || !open_unit(c.alpha_f)) {
    e.push_back("significance levels must lie in (0, 1)");
  }
  if (!half_open(c.pass_fraction)) e.push_back("pass_fraction must lie in (0, 1]");
  if (!half_open(c.three_sigma_coverage)) e.push_back("three_sigma_coverage must lie in (0, 1]");
  if (c.iterations < 1) e.push_back("iterations must be at least 1");
  if (c.batch < 2) e.push_back("batch must be at least 2");
  if (!(c.sigma_multiplier > 0.0)) e.push_back("sigma_multiplier must be positive");
  return e;
}

nlohmann::json to_json(const Stage2Config& c) {
  return {{"iterations", c.iterations},
          {"batch", c.batch},
          {"alpha_ks", c.alpha_ks},
          {"alpha_t", c.alpha_t},
          {"alpha_f", c.alpha_f},
          {"pass_fraction", c.pass_fraction},
          {"three_sigma_coverage", c.three_sigma_coverage},
          {"sigma_multiplier", c.sigma_multiplier},
          {"seed", c.seed}};
}

Stage2Config stage2_config_from_json(const nlohmann::json& j, Stage2Config c) {
  try {
    auto take = [&j](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    take("iterations", c.iterations);
    take("batch", c.batch);
    take("alpha_ks", c.alpha_ks);
    take("alpha_t", c.alpha_t);
    take("alpha_f", c.alpha_f);
    take("pass_fraction", c.pass_fraction);
    take("three_sigma_coverage", c.three_sigma_coverage);
    take("sigma_multiplier", c.sigma_multiplier);
    take("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed stage-two config: ") + e.what());
  }
  return c;
}

void apply_verdict(VariableStage2& v, const Stage2Config& c) {
  const double bar = c.pass_fraction * static_cast<double>(c.iterations);
  auto passes = [bar](std::size_t eta) { return static_cast<double>(eta) > bar; };
  v.ks_pass = passes(v.eta_ks);
  v.f_pass = passes(v.eta_f);
  const bool numeric = v.kind == VariableKind::Numeric;
  v.t_pass = numeric && passes(v.eta_t);
  v.three_sigma_pass = numeric && passes(v.eta_3s);
  v.realistic = v.ks_pass || (numeric ? v.three_sigma_pass : v.f_pass);
}

bool Stage2Report::all_realistic() const {
  return std::all_of(variables.begin(), variables.end(),
                     [](const VariableStage2& v) { return v.realistic; });
}

nlohmann::json Stage2Report::to_json() const {
  nlohmann::json vars = nlohmann::json::array();
  for (const auto& v : variables) {
    nlohmann::json j = {{"name", v.name},
                        {"kind", std::string(synthgym::to_string(v.kind))},
                        {"eta_ks", v.eta_ks},
                        {"eta_f", v.eta_f},
                        {"ks_pass", v.ks_pass},
                        {"f_pass", v.f_pass},
                        {"realistic", v.realistic}};
    if (v.kind == VariableKind::Numeric) {
      j["eta_t"] = v.eta_t;
      j["eta_3s"] = v.eta_3s;
      j["t_pass"] = v.t_pass;
      j["three_sigma_pass"] = v.three_sigma_pass;
    }
    vars.push_back(std::move(j));
  }
  return {{"stage", 2},
          {"config", synthgym::to_json(config)},
          {"all_realistic", all_realistic()},
          {"variables", vars}};
}

Stage2Report stage2_from_json(const nlohmann::json& j) {
  try {
    Stage2Report r;
    r.config = stage2_config_from_json(j.at("config"));
    for (const auto& jv : j.at("variables")) {
      VariableStage2 v;
      v.name = jv.at("name").get<std::string>();
      v.kind = parse_variable_kind(jv.at("kind").get<std::string>());
      v.eta_ks = jv.at("eta_ks").get<std::size_t>();
      v.eta_f = jv.at("eta_f").get<std::size_t>();
      v.eta_t = jv.value("eta_t", std::size_t{0});
      v.eta_3s = jv.value("eta_3s", std::size_t{0});
      apply_verdict(v, r.config);
      r.variables.push_back(std::move(v));
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed stage-two report: ") + e.what());
  }
}

namespace {

VariableStage2 stage2_variable(const std::vector<double>& real_col,
                               const std::vector<double>& syn_col, const VariableSpec& spec,
                               const Stage2Config& c) {
  VariableStage2 out;
  out.name = spec.name;
  out.kind = spec.kind;
  if (real_col.size() < 2 || syn_col.empty()) {
    throw DataError("stage two needs observed values for '" + spec.name + "'");
  }
  // Min-max scale fitted on the real column, applied to both sides.
  double lo = 0.0;
  double scale = 1.0;
  if (spec.is_numeric()) {
    const auto [mn, mx] = std::minmax_element(real_col.begin(), real_col.end());
    if (*mx > *mn) {
      lo = *mn;
      scale = 1.0 / (*mx - *mn);
    }
  }
  Rng rng(derive_seed(c.seed, "stage2:" + spec.name));
  std::vector<double> a(c.batch);
  std::vector<double> b(c.batch);
  for (std::size_t it = 0; it < c.iterations; ++it) {
    for (std::size_t k = 0; k < c.batch; ++k) a[k] = real_col[rng.index(real_col.size())];
    for (std::size_t k = 0; k < c.batch; ++k) b[k] = syn_col[rng.index(syn_col.size())];
    if (spec.is_numeric()) {
      for (auto& v : a) v = (v - lo) * scale;
      for (auto& v : b) v = (v - lo) * scale;
    }
    if (stats::ks2_test(b, a).p_value > c.alpha_ks) ++out.eta_ks;
    if (spec.is_numeric()) {
      if (stats::t_test(b, a).p_value > c.alpha_t) ++out.eta_t;
      if (stats::f_test(b, a).p_value > c.alpha_f) ++out.eta_f;
      if (stats::three_sigma_test(a, b, c.sigma_multiplier, c.three_sigma_coverage).pass) {
        ++out.eta_3s;
      }
    } else {
      if (stats::categorical_f_test(b, a).p_value > c.alpha_f) ++out.eta_f;
    }
  }
  apply_verdict(out, c);
  return out;
}

Stage2Report stage2_impl(const Panel& real, const Panel& syn, const Stage2Config& c,
                         bool parallel) {
  require_matching(real, syn);
  const auto errors = validate_stage2_config(c);
  if (!errors.empty()) throw Error("invalid stage-two config: " + errors.front());
  const auto& vars = real.schema().variables;
  Stage2Report report;
  report.config = c;
  report.variables.resize(vars.size());
  const auto n = static_cast<std::ptrdiff_t>(vars.size());
  std::vector<std::string> failures(vars.size());
#pragma omp parallel for schedule(dynamic) if (parallel)
  for (std::ptrdiff_t v = 0; v < n; ++v) {
    const auto vi = static_cast<std::size_t>(v);
    try {
      report.variables[vi] = stage2_variable(finite(real.pooled_column(vi)),
                                             finite(syn.pooled_column(vi)), vars[vi], c);
    } catch (const std::exception& e) {
      failures[vi] = e.what();
    }
  }
  for (const auto& f : failures) {
    if (!f.empty()) throw DataError(f);
  }
  return report;
}

}  // namespace

Stage2Report stage2_run(const Panel& real, const Panel& syn, const Stage2Config& c) {
  return stage2_impl(real, syn, c, true);
}

// ---- stage three ----

Decomposition detrend_linear(std::span<const double> x) {
  Decomposition d;
  const std::size_t n = x.size();
  if (n == 0) throw DataError("cannot detrend an empty series");
  if (n == 1) {
    d.trend.assign(x.begin(), x.end());
    d.cycle.assign(1, 0.0);
    return d;
  }
  const double t_mean = 0.5 * static_cast<double>(n - 1);
  double x_mean = 0.0;
  for (const double v : x) x_mean += v;
  x_mean /= static_cast<double>(n);
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const double dt = static_cast<double>(t) - t_mean;
    sxy += dt * (x[t] - x_mean);
    sxx += dt * dt;
  }
  const double slope = sxy / sxx;
  d.trend.resize(n);
  d.cycle.resize(n);
  for (std::size_t t = 0; t < n; ++t) {
    const double fit = x_mean + slope * (static_cast<double>(t) - t_mean);
    d.cycle[t] = x[t] - fit;
    d.trend[t] = x[t] - d.cycle[t];
  }
  return d;
}

namespace {

std::vector<std::pair<std::size_t, std::size_t>> lower_pairs(std::size_t V) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < V; ++i) {
    for (std::size_t j = 0; j < i; ++j) pairs.emplace_back(i, j);
  }
  return pairs;
}

double tau_or_zero(std::span<const double> x, std::span<const double> y) {
  if (x.size() < 2) return 0.0;
  const auto r = stats::kendall_tau_b(x, y);
  return r.degenerate ? 0.0 : r.tau;
}

Eigen::MatrixXd static_impl(const Panel& panel, bool parallel) {
  const std::size_t V = panel.variable_count();
  std::vector<std::vector<double>> cols(V);
  for (std::size_t v = 0; v < V; ++v) cols[v] = panel.pooled_column(v);
  const auto pairs = lower_pairs(V);
  Eigen::MatrixXd m = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(V), static_cast<Eigen::Index>(V));
  const auto np = static_cast<std::ptrdiff_t>(pairs.size());
#pragma omp parallel for schedule(dynamic) if (parallel)
  for (std::ptrdiff_t p = 0; p < np; ++p) {
    const auto [i, j] = pairs[static_cast<std::size_t>(p)];
    // Rows with a missing cell in either column are dropped pairwise.
    std::vector<double> x;
    std::vector<double> y;
    for (std::size_t r = 0; r < cols[i].size(); ++r) {
      if (is_missing(cols[i][r]) || is_missing(cols[j][r])) continue;
      x.push_back(cols[i][r]);
      y.push_back(cols[j][r]);
    }
    const double tau = tau_or_zero(x, y);
    m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = tau;
    m(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = tau;
  }
  return m;
}

DynamicCorrelations dynamic_impl(const Panel& panel, bool parallel) {
  const std::size_t V = panel.variable_count();
  const std::size_t P = panel.patient_count();
  const auto pairs = lower_pairs(V);
  // Per-patient scores are stored and reduced in patient order for a fixed summation order.
  std::vector<double> trend_scores(P * pairs.size(), 0.0);
  std::vector<double> cycle_scores(P * pairs.size(), 0.0);
  const auto np = static_cast<std::ptrdiff_t>(P);
#pragma omp parallel for schedule(dynamic) if (parallel)
  for (std::ptrdiff_t pp = 0; pp < np; ++pp) {
    const auto p = static_cast<std::size_t>(pp);
    const std::size_t L = panel.length(p);
    std::vector<Decomposition> parts(V);
    std::vector<double> series(L);
    for (std::size_t v = 0; v < V; ++v) {
      for (std::size_t t = 0; t < L; ++t) series[t] = panel.at(p, t, v);
      parts[v] = detrend_linear(series);
    }
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      const auto [i, j] = pairs[k];
      trend_scores[p * pairs.size() + k] = tau_or_zero(parts[i].trend, parts[j].trend);
      cycle_scores[p * pairs.size() + k] = tau_or_zero(parts[i].cycle, parts[j].cycle);
    }
  }
  DynamicCorrelations out;
  const auto n = static_cast<Eigen::Index>(V);
  out.trend = Eigen::MatrixXd::Identity(n, n);
  out.cycle = Eigen::MatrixXd::Identity(n, n);
  if (P == 0) return out;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    double ts = 0.0;
    double cs = 0.0;
    for (std::size_t p = 0; p < P; ++p) {
      ts += trend_scores[p * pairs.size() + k];
      cs += cycle_scores[p * pairs.size() + k];
    }
    const auto i = static_cast<Eigen::Index>(pairs[k].first);
    const auto j = static_cast<Eigen::Index>(pairs[k].second);
    out.trend(i, j) = out.trend(j, i) = ts / static_cast<double>(P);
    out.cycle(i, j) = out.cycle(j, i) = cs / static_cast<double>(P);
  }
  return out;
}

double max_gap(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return a.size() == 0 ? 0.0 : (a - b).cwiseAbs().maxCoeff();
}

nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index j = 0; j < m.cols(); ++j) row[static_cast<std::size_t>(j)] = m(i, j);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

Eigen::MatrixXd static_correlations(const Panel& panel) { return static_impl(panel, true); }
DynamicCorrelations dynamic_correlations(const Panel& panel) { return dynamic_impl(panel, true); }

double CorrelationReport::max_static_gap() const { return max_gap(static_real, static_syn); }
double CorrelationReport::max_trend_gap() const { return max_gap(trend_real, trend_syn); }
double CorrelationReport::max_cycle_gap() const { return max_gap(cycle_real, cycle_syn); }

nlohmann::json CorrelationReport::to_json() const {
  return {{"stage", 3},
          {"variables", variables},
          {"static_real", matrix_json(static_real)},
          {"static_syn", matrix_json(static_syn)},
          {"trend_real", matrix_json(trend_real)},
          {"trend_syn", matrix_json(trend_syn)},
          {"cycle_real", matrix_json(cycle_real)},
          {"cycle_syn", matrix_json(cycle_syn)},
          {"max_static_gap", max_static_gap()},
          {"max_trend_gap", max_trend_gap()},
          {"max_cycle_gap", max_cycle_gap()}};
}

CorrelationReport stage3_run(const Panel& real, const Panel& syn) {
  require_matching(real, syn);
  CorrelationReport r;
  for (const auto& v : real.schema().variables) r.variables.push_back(v.name);
  r.static_real = static_correlations(real);
  r.static_syn = static_correlations(syn);
  auto dr = dynamic_correlations(real);
  auto ds = dynamic_correlations(syn);
  r.trend_real = std::move(dr.trend);
  r.cycle_real = std::move(dr.cycle);
  r.trend_syn = std::move(ds.trend);
  r.cycle_syn = std::move(ds.cycle);
  return r;
}

std::string matrix_csv(const Eigen::MatrixXd& m, std::span<const std::string> labels) {
  std::ostringstream out;
  auto quoted = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (const char c : s) {
      if (c == '"') q += '"';
      q += c;
    }
    return q + "\"";
  };
  out << "variable";
  for (const auto& l : labels) out << ',' << quoted(l);
  out << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    out << quoted(labels[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << ',' << csv::format_number(m(i, j));
    out << '\n';
  }
  return out.str();
}

namespace serial {
Stage2Report stage2_run(const Panel& real, const Panel& syn, const Stage2Config& c) {
  return stage2_impl(real, syn, c, false);
}
Eigen::MatrixXd static_correlations(const Panel& panel) { return static_impl(panel, false); }
DynamicCorrelations dynamic_correlations(const Panel& panel) { return dynamic_impl(panel, false); }
}  // namespace serial

}  // namespace synthgym
