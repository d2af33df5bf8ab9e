#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "synthgym/error.hpp"
#include "synthgym/validate.hpp"

using namespace synthgym;
using doctest::Approx;

namespace {

DatasetSchema panel_schema(std::size_t T) {
  DatasetSchema s;
  s.sequence_length = T;
  s.variables = {fixtures::numeric("x"), fixtures::numeric("y"),
                 fixtures::categorical("c", {"a", "b", "c"}), fixtures::binary("f")};
  return s;
}

Panel shifted(const Panel& p, std::size_t var, double by) {
  Panel q = p;
  for (std::size_t i = 0; i < q.patient_count(); ++i) {
    for (std::size_t t = 0; t < q.length(i); ++t) q.at(i, t, var) += by;
  }
  return q;
}

double column_sd(const Panel& p, std::size_t var) {
  const auto col = p.pooled_column(var);
  double m = 0;
  for (double v : col) m += v / double(col.size());
  double s = 0;
  for (double v : col) s += (v - m) * (v - m);
  return std::sqrt(s / double(col.size() - 1));
}

}  // namespace

TEST_SUITE("validate") {
  TEST_CASE("density tables") {
    Rng rng(1);
    std::vector<double> x(10000);
    for (auto& v : x) v = rng.normal();
    const auto t = density_export(x, x, fixtures::numeric("x"));
    CHECK(t.real_density == t.syn_density);
    CHECK(t.grid.size() == kDensityGridSize);
    double mass = 0.0;
    for (std::size_t i = 1; i < t.grid.size(); ++i) {
      if (t.grid[i - 1] < -2.0 || t.grid[i] > 2.0) continue;
      mass += 0.5 * (t.real_density[i - 1] + t.real_density[i]) * (t.grid[i] - t.grid[i - 1]);
    }
    CHECK(std::abs(mass - 0.954) <= 0.02);

    const std::vector<double> cls = {0, 1, 1, 2, 2, 2, 0};
    const auto c = density_export(cls, std::vector<double>{2, 2}, fixtures::categorical("c", {"a", "b", "c"}));
    CHECK(c.real_share[0] + c.real_share[1] + c.real_share[2] == Approx(100.0).epsilon(1e-11));
    CHECK(c.syn_share[2] == 100.0);
    CHECK(c.to_json().at("labels").size() == 3);
  }

  TEST_CASE("stage two config validation") {
    Stage2Config c;
    CHECK(validate_stage2_config(c).empty());
    c.alpha_ks = 1.0;
    c.pass_fraction = 0.0;
    c.iterations = 0;
    CHECK(validate_stage2_config(c).size() == 3);
    const Stage2Config back = stage2_config_from_json(to_json(Stage2Config{}));
    CHECK(back.pass_fraction == 0.7);
    CHECK(back.sigma_multiplier == 2.0);
  }

  TEST_CASE("same panel passes KS for every variable") {
    const Panel real = fixtures::random_panel(panel_schema(10), 500, 3, 5);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      Stage2Config c;
      c.seed = seed;
      const Stage2Report r = stage2_run(real, real, c);
      for (const auto& v : r.variables) {
        CAPTURE(v.name);
        CHECK(v.eta_ks >= static_cast<std::size_t>(0.9 * c.iterations));
        CHECK(v.ks_pass);
        CHECK(v.realistic);
      }
      CHECK(r.all_realistic());
    }
  }

  TEST_CASE("ten-sd shift fails KS and t but passes F") {
    const Panel real = fixtures::random_panel(panel_schema(10), 500, 4, 5);
    const Panel syn = shifted(real, 0, 10.0 * column_sd(real, 0));
    Stage2Config c;
    c.seed = 9;
    const Stage2Report r = stage2_run(real, syn, c);
    const auto& x = r.variables[0];
    CHECK_FALSE(x.ks_pass);
    CHECK_FALSE(x.t_pass);
    CHECK(x.f_pass);
    CHECK_FALSE(x.three_sigma_pass);
    CHECK_FALSE(x.realistic);
    CHECK(r.variables[1].ks_pass);
    CHECK_FALSE(r.all_realistic());
  }

  TEST_CASE("parallel and serial stage two agree exactly") {
    const Panel real = fixtures::random_panel(panel_schema(6), 120, 5, 2);
    const Panel syn = shifted(fixtures::random_panel(panel_schema(6), 80, 6, 2), 1, 0.3);
    Stage2Config c;
    c.seed = 4;
    c.iterations = 30;
    CHECK(stage2_run(real, syn, c).to_json() == serial::stage2_run(real, syn, c).to_json());
  }

  TEST_CASE("verdict thresholds are strict") {
    Stage2Config c;
    c.iterations = 100;
    VariableStage2 v;
    v.kind = VariableKind::Numeric;
    v.eta_ks = 70;
    v.eta_3s = 71;
    apply_verdict(v, c);
    CHECK_FALSE(v.ks_pass);
    CHECK(v.three_sigma_pass);
    CHECK(v.realistic);
    v.eta_ks = 71;
    v.eta_3s = 0;
    apply_verdict(v, c);
    CHECK(v.ks_pass);
    CHECK(v.realistic);
    VariableStage2 cat;
    cat.kind = VariableKind::Categorical;
    cat.eta_ks = 0;
    cat.eta_f = 80;
    apply_verdict(cat, c);
    CHECK(cat.realistic);
  }

  TEST_CASE("stage two report json round trip") {
    const Panel real = fixtures::random_panel(panel_schema(4), 60, 7, 2);
    Stage2Config c;
    c.iterations = 10;
    const Stage2Report r = stage2_run(real, shifted(real, 0, 3.0), c);
    const Stage2Report back = stage2_from_json(r.to_json());
    CHECK(back.to_json() == r.to_json());
  }

  TEST_CASE("static correlations") {
    DatasetSchema s = panel_schema(10);
    Panel p = fixtures::random_panel(s, 1000, 8, 10);
    for (std::size_t i = 0; i < p.patient_count(); ++i) {
      for (std::size_t t = 0; t < p.length(i); ++t) p.at(i, t, 1) = p.at(i, t, 0);
    }
    const auto m = static_correlations(p);
    CHECK(m(0, 1) == Approx(1.0));
    CHECK(std::abs(m(0, 2)) < 0.05);
    CHECK(std::abs(m(2, 3)) < 0.05);
    CHECK((m - m.transpose()).norm() == 0.0);
    for (int i = 0; i < 4; ++i) CHECK(m(i, i) == 1.0);
    CHECK(m.cwiseAbs().maxCoeff() <= 1.0);
    CHECK(m == serial::static_correlations(p));
  }

  TEST_CASE("static correlations drop missing cells pairwise") {
    DatasetSchema s = panel_schema(3);
    Panel p = fixtures::random_panel(s, 30, 10, 3);
    Panel q = p;
    q.at(0, 0, 0) = kMissing;
    std::vector<double> x, y;
    for (std::size_t i = 0; i < q.patient_count(); ++i) {
      for (std::size_t t = 0; t < q.length(i); ++t) {
        if (is_missing(q.at(i, t, 0))) continue;
        x.push_back(q.at(i, t, 0));
        y.push_back(q.at(i, t, 1));
      }
    }
    CHECK(static_correlations(q)(0, 1) == Approx(oracles::brute_tau_b(x, y)).epsilon(1e-14));
  }

  TEST_CASE("detrending") {
    std::vector<double> line(20);
    for (std::size_t t = 0; t < line.size(); ++t) line[t] = 3.0 * double(t) + 1.0;
    const auto d = detrend_linear(line);
    for (double c : d.cycle) CHECK(std::abs(c) <= 1e-9);

    // Closed form: the least-squares slope of sin over whole periods.
    const double pi = 3.14159265358979323846;
    const std::size_t n = 400;
    std::vector<double> s(n);
    for (std::size_t t = 0; t < n; ++t) s[t] = std::sin(2 * pi * double(t) / 100.0);
    const auto ds = detrend_linear(s);
    double st = 0, stt = 0, sx = 0, stx = 0;
    for (std::size_t t = 0; t < n; ++t) {
      st += double(t), stt += double(t) * double(t), sx += s[t], stx += double(t) * s[t];
    }
    const double slope = (double(n) * stx - st * sx) / (double(n) * stt - st * st);
    CHECK(ds.trend[1] - ds.trend[0] == Approx(slope).epsilon(1e-9));
    CHECK(std::abs(slope) < 2e-3);

    Rng rng(3);
    std::vector<double> r(17);
    for (auto& v : r) v = rng.normal() * 5.0;
    const auto dr = detrend_linear(r);
    for (std::size_t t = 0; t < r.size(); ++t) CHECK(std::abs(dr.trend[t] + dr.cycle[t] - r[t]) <= 1e-12);
    CHECK(detrend_linear(std::vector<double>{4.0}).cycle[0] == 0.0);
  }

  TEST_CASE("dynamic correlations") {
    DatasetSchema s = panel_schema(8);
    Panel twin = fixtures::random_panel(s, 20, 11, 3);
    for (std::size_t i = 0; i < twin.patient_count(); ++i) {
      for (std::size_t t = 0; t < twin.length(i); ++t) twin.at(i, t, 1) = twin.at(i, t, 0);
    }
    const auto d = dynamic_correlations(twin);
    CHECK(d.trend(0, 1) == Approx(1.0));
    CHECK(d.cycle(0, 1) == Approx(1.0));

    const Panel one = fixtures::random_panel(s, 1, 12, 8);
    const auto single = dynamic_correlations(one);
    const auto ref1 = oracles::average_correlations(one);
    CHECK((single.trend - ref1.trend).cwiseAbs().maxCoeff() <= 1e-12);

    const Panel three = fixtures::random_panel(s, 3, 13, 1);
    const auto got = dynamic_correlations(three);
    const auto ref = oracles::average_correlations(three);
    CHECK((got.trend - ref.trend).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((got.cycle - ref.cycle).cwiseAbs().maxCoeff() <= 1e-12);
    const auto ser = serial::dynamic_correlations(three);
    CHECK(got.trend == ser.trend);
    CHECK(got.cycle == ser.cycle);
  }

  TEST_CASE("stage three report and heatmap csv") {
    DatasetSchema s = panel_schema(5);
    const Panel a = fixtures::random_panel(s, 30, 14, 2);
    const Panel b = fixtures::random_panel(s, 25, 15, 2);
    const CorrelationReport r = stage3_run(a, b);
    CHECK(r.variables.size() == 4);
    CHECK(r.max_static_gap() == Approx((r.static_real - r.static_syn).cwiseAbs().maxCoeff()));
    const std::string csv = matrix_csv(r.static_real, r.variables);
    CHECK(csv.substr(0, csv.find('\n')) == "variable,x,y,c,f");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
    CHECK_THROWS_AS(stage3_run(a, Panel(panel_schema(6))), Error);
  }
}
