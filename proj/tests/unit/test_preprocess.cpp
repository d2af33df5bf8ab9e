#include <doctest.h>

#include <cmath>
#include <numeric>

#include "fixtures.hpp"
#include "synthgym/error.hpp"
#include "synthgym/preprocess.hpp"

using namespace synthgym;
using doctest::Approx;

namespace {

std::vector<double> lognormal(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> x(n);
  for (auto& v : x) v = std::exp(rng.normal());
  return x;
}

DatasetSchema mixed_schema() {
  DatasetSchema s;
  s.sequence_length = 6;
  s.variables = {fixtures::numeric("bc", TransformMethod::BoxCoxMinMax),
                 fixtures::numeric("lg", TransformMethod::LogMinMax),
                 fixtures::numeric("mm"),
                 fixtures::numeric("dec", TransformMethod::DecileToCategorical),
                 fixtures::categorical("c", {"i", "ii", "iii", "iv"}), fixtures::binary("b")};
  return s;
}

Panel mixed_panel(std::size_t patients, std::uint64_t seed) {
  Panel p = fixtures::random_panel(mixed_schema(), patients, seed, 2);
  Rng rng(seed + 1);
  for (std::size_t i = 0; i < p.patient_count(); ++i) {
    for (std::size_t t = 0; t < p.length(i); ++t) {
      p.at(i, t, 0) = std::exp(rng.normal());             // skewed, positive
      p.at(i, t, 1) = 10.0 * rng.uniform() - 2.0;       // crosses zero: needs a shift
      p.at(i, t, 3) = std::floor(1000.0 * rng.uniform());
    }
  }
  return p;
}

}  // namespace

TEST_SUITE("preprocess") {
  TEST_CASE("box-cox special cases") {
    for (double x : {0.3, 1.0, 2.5, 100.0}) {
      CHECK(boxcox(x, 1.0) == Approx(x - 1.0).epsilon(1e-14));
      CHECK(boxcox(x, 0.0) == Approx(std::log(x)).epsilon(1e-14));
      for (double lam : {-2.0, -0.5, 0.0, 0.3, 1.7}) {
        CHECK(boxcox_inverse(boxcox(x, lam), lam) == Approx(x).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("box-cox lambda on log-normal data is near zero and beats a dense grid") {
    const auto x = lognormal(10000, 3);
    const double lam = fit_boxcox_lambda(x);
    CHECK(std::abs(lam) <= 0.1);
    double best = -INFINITY, best_lam = 0.0;
    for (int i = -2000; i <= 2000; ++i) {
      const double l = i * 0.001;
      const double ll = boxcox_log_likelihood(x, l);
      if (ll > best) best = ll, best_lam = l;
    }
    CHECK(std::abs(lam - best_lam) <= 1e-3);
    CHECK(boxcox_log_likelihood(x, lam) >= best - 1e-9);
  }

  TEST_CASE("fitted transforms invert within 1e-9 relative") {
    const auto x = lognormal(500, 5);
    for (auto method : {TransformMethod::BoxCoxMinMax, TransformMethod::LogMinMax,
                        TransformMethod::MinMaxOnly}) {
      const FittedTransform f = fit_transform(x, method);
      CHECK(f.minmax_range > 0.0);
      double lo = 1.0, hi = 0.0;
      for (double v : x) {
        const double u = f.forward(v);
        lo = std::min(lo, u);
        hi = std::max(hi, u);
        CHECK(f.inverse(u) == Approx(v).epsilon(1e-9));
      }
      CHECK(std::abs(lo) <= 1e-12);
      CHECK(hi == Approx(1.0).epsilon(1e-12));
    }
  }

  TEST_CASE("log transform shifts non-positive data") {
    const std::vector<double> x = {-3.0, 0.0, 1.0, 4.0};
    const FittedTransform f = fit_transform(x, TransformMethod::LogMinMax);
    CHECK(f.shift > 3.0);
    for (double v : x) CHECK(f.inverse(f.forward(v)) == Approx(v).epsilon(1e-9).scale(1.0));
  }

  TEST_CASE("degenerate columns are rejected") {
    const std::vector<double> same(20, 4.0);
    CHECK_THROWS_AS(fit_transform(same, TransformMethod::MinMaxOnly), DataError);
    CHECK_THROWS_AS(fit_deciles(std::vector<double>{1, 2, 3}), DataError);
  }

  TEST_CASE("decile bins on 1..100") {
    std::vector<double> x(100);
    std::iota(x.begin(), x.end(), 1.0);
    const FittedTransform f = fit_deciles(x);
    REQUIRE(f.decile_cuts.size() == 9);
    CHECK(std::is_sorted(f.decile_cuts.begin(), f.decile_cuts.end()));
    CHECK(f.bin(5.0) == 0);
    CHECK(f.bin(95.0) == 9);
    // Half-open bins: a value on a cut goes up.
    for (std::size_t k = 0; k < f.decile_cuts.size(); ++k) CHECK(f.bin(f.decile_cuts[k]) == k + 1);
    std::vector<int> counts(10, 0);
    for (double v : x) ++counts[f.bin(v)];
    for (int c : counts) CHECK(std::abs(c - 10) <= 1);
    for (std::size_t k = 0; k < 10; ++k) CHECK(f.bin(f.bin_representative(k)) == k);
  }

  TEST_CASE("uniform data fills every decile") {
    Rng rng(8);
    std::vector<double> x(5000);
    for (auto& v : x) v = rng.uniform();
    const FittedTransform f = fit_deciles(x);
    std::vector<int> counts(10, 0);
    for (double v : x) ++counts[f.bin(v)];
    for (int c : counts) CHECK(std::abs(c - 500) <= 1);
  }

  TEST_CASE("one-hot blocks and min-max endpoints") {
    DatasetSchema s;
    s.sequence_length = 2;
    s.variables = {fixtures::numeric("x"), fixtures::categorical("c", {"a", "b", "c", "d"})};
    Panel p(s);
    p.add_patient("0", 2);
    p.at(0, 0, 0) = 3.0;
    p.at(0, 1, 0) = 9.0;
    p.at(0, 0, 1) = 1.0;
    p.at(0, 1, 1) = 3.0;
    const TransformSet ts = fit_transforms(p);
    const EncodedTensor e = encode_panel(p, ts);
    REQUIRE(e.width == 5);
    CHECK(e.at(0, 0, 0) == 0.0);
    CHECK(e.at(0, 1, 0) == 1.0);
    CHECK(std::vector<double>(e.row(0, 0).begin() + 1, e.row(0, 0).end()) ==
          std::vector<double>{0, 1, 0, 0});
    CHECK(check_encoded(e).empty());
  }

  TEST_CASE("hypotension panel encodes to width 54") {
    const DatasetSchema s = fixtures::hypotension_schema();
    Panel p = fixtures::random_panel(s, 30, 2, 4);
    for (std::size_t i = 0; i < p.patient_count(); ++i) {
      for (std::size_t t = 0; t < p.length(i); ++t) {
        for (std::size_t v = 0; v < 9; ++v) p.at(i, t, v) = std::exp(p.at(i, t, v) / 5.0);
      }
    }
    const TransformSet ts = fit_transforms(p);
    const EncodedTensor e = encode_panel(p, ts);
    CHECK(e.width == 54);
    CHECK(e.steps == 48);
    CHECK(check_encoded(e).empty());
  }

  TEST_CASE("argmax decoding and ties") {
    DatasetSchema s;
    s.sequence_length = 1;
    s.variables = {fixtures::categorical("gcs4", {"3", "4", "5", "6"}), fixtures::binary("b")};
    Panel seed_panel(s);
    seed_panel.add_patient("0", 1);
    seed_panel.at(0, 0, 0) = 0;
    seed_panel.at(0, 0, 1) = 0;
    const TransformSet ts = fit_transforms(seed_panel);
    EncodedTensor e = EncodedTensor::zeros(std::make_shared<const DatasetSchema>(s), 1, 1);
    const double row[] = {0.1, 0.7, 0.1, 0.1, 0.5, 0.5};
    std::copy(std::begin(row), std::end(row), e.data.begin());
    const Panel d = decode_panel(e, ts);
    CHECK(d.class_at(0, 0, 0) == 1);
    CHECK(d.class_at(0, 0, 1) == 0);
  }

  TEST_CASE("encode then decode is the identity on random panels") {
    const Panel p = mixed_panel(40, 11);
    const TransformSet ts = fit_transforms(p);
    CHECK(ts.decile_variable_count() == 1);
    CHECK(ts.effective.variables[3].kind == VariableKind::Categorical);
    CHECK(ts.effective.variables[3].class_count() == 10);
    CHECK(ts.effective.variables[3].class_labels.front() == "C1");
    const Panel eff = to_effective(p, ts);
    const EncodedTensor e = encode_panel(p, ts);
    CHECK(e.width == 3 + 10 + 4 + 2);
    const Panel back = decode_panel(e, ts);
    REQUIRE(back.patient_count() == p.patient_count());
    for (std::size_t i = 0; i < p.patient_count(); ++i) {
      REQUIRE(back.length(i) == p.length(i));
      for (std::size_t t = 0; t < p.length(i); ++t) {
        for (std::size_t v = 0; v < 3; ++v) {
          CHECK(back.at(i, t, v) == Approx(p.at(i, t, v)).epsilon(1e-9));
        }
        for (std::size_t v = 3; v < 6; ++v) CHECK(back.at(i, t, v) == eff.at(i, t, v));
      }
    }
    // Already-effective panels pass through unchanged.
    CHECK(to_effective(eff, ts).same_cells(eff));
  }

  TEST_CASE("out-of-range values are clamped and counted") {
    const Panel p = mixed_panel(10, 4);
    const TransformSet ts = fit_transforms(p);
    Panel wide = p;
    wide.at(0, 0, 2) = 1e6;
    wide.at(0, 1, 2) = -1e6;
    ClampReport clamps;
    const EncodedTensor e = encode_panel(wide, ts, &clamps);
    CHECK(clamps.clamped == 2);
    CHECK(e.at(0, 0, 2) == 1.0);
    CHECK(e.at(0, 1, 2) == 0.0);
  }

  TEST_CASE("transform and tensor files round trip") {
    fixtures::TempDir dir("pre");
    const Panel p = mixed_panel(12, 6);
    const TransformSet ts = fit_transforms(p);
    save_transforms(ts, dir / "t.json");
    const TransformSet back = load_transforms(dir / "t.json");
    CHECK(back.declared == ts.declared);
    CHECK(back.effective == ts.effective);
    for (std::size_t v = 0; v < ts.transforms.size(); ++v) {
      REQUIRE(back.transforms[v].has_value() == ts.transforms[v].has_value());
      if (!ts.transforms[v]) continue;
      CHECK(back.transforms[v]->boxcox_lambda == ts.transforms[v]->boxcox_lambda);
      CHECK(back.transforms[v]->minmax_range == ts.transforms[v]->minmax_range);
      CHECK(back.transforms[v]->decile_cuts == ts.transforms[v]->decile_cuts);
    }
    const EncodedTensor e = encode_panel(p, ts);
    save_encoded(e, dir / "e.bin");
    const EncodedTensor f = load_encoded(dir / "e.bin");
    CHECK(f.data == e.data);
    CHECK(f.lengths == e.lengths);
    CHECK(f.ids == e.ids);
    CHECK(*f.schema == *e.schema);

    std::string bytes = fixtures::read_file(dir / "e.bin");
    bytes.resize(bytes.size() / 2);
    std::ofstream(dir / "cut.bin", std::ios::binary) << bytes;
    CHECK_THROWS_AS(load_encoded(dir / "cut.bin"), DataError);
  }

  TEST_CASE("activation layout follows variable order") {
    const auto layout = activation_layout(fixtures::hypotension_schema());
    REQUIRE(layout.size() == 20);
    CHECK(layout[0].kind == ActivationSegment::Kind::Sigmoid);
    CHECK(layout[9].offset == 9);
    CHECK(layout[9].width == 4);
    CHECK(layout[12].offset == 27);
    CHECK(layout[12].width == 13);
    CHECK(layout[13].offset == 40);
    CHECK(layout[19].offset + layout[19].width == 54);
  }
}
