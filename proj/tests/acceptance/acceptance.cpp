// One PASS/FAIL line per acceptance criterion. `synthgym_acceptance 2 5` runs a subset.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "synthgym/pipeline.hpp"
#include "synthgym/preprocess.hpp"
#include "synthgym/stats.hpp"
#include "synthgym/toy.hpp"

using namespace synthgym;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void expect(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "[failed: " << what << "] ";
    }
  }
};

using Vec = std::vector<double>;

// ---- 1 -------------------------------------------------------------------

void widths(Outcome& o) {
  const DatasetSchema s = fixtures::hypotension_schema();
  const auto enc = encoded_width(s);
  const auto emb = embedded_width(s);
  o.detail << "encoded " << enc << ", embedded " << emb << " ";
  o.expect(enc == 54, "encoded width 54");
  o.expect(emb == 39, "embedded width 39");
}

// ---- 2 -------------------------------------------------------------------

void gradients(Outcome& o) {
  double worst_d = 0.0, worst_g = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto p = gradcheck::make_problem(8, 4, 4, seed);
    TrainConfig c;
    const auto lc = critic_loss(p.d, p.g, p.schema, p.real, p.z, p.epsilon, c);
    worst_d = std::max(worst_d, gradcheck::worst_relative_error(p.d.named(), lc.gradients, [&] {
                         return critic_loss(p.d, p.g, p.schema, p.real, p.z, p.epsilon, c).loss;
                       }));
    const auto lg = generator_loss(p.d, p.g, p.schema, p.real, p.z, c);
    worst_g = std::max(worst_g, gradcheck::worst_relative_error(p.g.named(), lg.gradients, [&] {
                         return generator_loss(p.d, p.g, p.schema, p.real, p.z, c).loss;
                       }));
  }
  o.detail << "worst critic " << worst_d << ", worst generator " << worst_g << " ";
  o.expect(worst_d <= 1e-4, "critic relative error <= 1e-4");
  o.expect(worst_g <= 1e-4, "generator relative error <= 1e-4");
}

// ---- 3 -------------------------------------------------------------------

void stat_kernels(Outcome& o) {
  const auto j = fixtures::read_json(fixtures::source_dir() / "tests/data/stat_fixtures.json");
  const auto& all = j.at("fixtures");
  o.expect(all.size() == 50, "50 stored fixtures");
  double worst = 0.0;
  for (const auto& fx : all) {
    const Vec a = fx.at("a"), b = fx.at("b"), c = fx.at("c");
    const std::vector<double> groups[] = {a, b, c};
    worst = std::max({worst, std::abs(stats::ks2_test(a, b).p_value - fx.at("ks_p").get<double>()),
                      std::abs(stats::t_test(a, b).p_value - fx.at("t_p").get<double>()),
                      std::abs(stats::f_test(a, b).p_value - fx.at("f_p").get<double>()),
                      std::abs(stats::anova_oneway(groups).p_value - fx.at("anova_p").get<double>())});
  }
  o.detail << "worst p-value gap " << worst << "; ";
  o.expect(worst <= 1e-3, "p-values within 1e-3");

  std::mt19937_64 gen(20240611);
  int mismatches = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + gen() % 49;
    const int levels = 2 + static_cast<int>(gen() % 6);
    Vec x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = static_cast<double>(gen() % levels);
      y[i] = trial % 3 == 0 ? static_cast<double>(gen() % 1000) : static_cast<double>(gen() % levels);
    }
    if (stats::kendall_tau_b(x, y).tau != oracles::brute_tau_b(x, y)) ++mismatches;
  }
  o.detail << "tau mismatches " << mismatches << "/200 ";
  o.expect(mismatches == 0, "tau-b equals brute force");
}

// ---- 4 -------------------------------------------------------------------

void stage_two(Outcome& o) {
  const Panel real = make_toy_panel({});
  int all_pass = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Stage2Config c;
    c.seed = derive_seed(99, std::to_string(seed));
    const Stage2Report r = stage2_run(real, real, c);
    all_pass += std::all_of(r.variables.begin(), r.variables.end(),
                            [](const VariableStage2& v) { return v.ks_pass; });
  }
  o.detail << "syn = real KS pass in " << all_pass << "/100 runs; ";
  o.expect(all_pass >= 99, ">= 99/100 runs pass KS");

  const auto col = real.pooled_column(0);
  const double sd = std::sqrt(stats::variance(col));
  Panel shifted = real;
  for (std::size_t i = 0; i < shifted.patient_count(); ++i) {
    for (std::size_t t = 0; t < shifted.length(i); ++t) shifted.at(i, t, 0) += 10.0 * sd;
  }
  Stage2Config c;
  c.seed = 3;
  const auto& x = stage2_run(real, shifted, c).variables[0];
  o.detail << "shifted x1: eta_ks " << x.eta_ks << ", eta_t " << x.eta_t << ", eta_f " << x.eta_f << " ";
  o.expect(!x.ks_pass, "shift fails KS");
  o.expect(!x.t_pass, "shift fails t");
  o.expect(x.f_pass, "shift passes F");
}

// ---- 5 -------------------------------------------------------------------

void dynamic(Outcome& o) {
  DatasetSchema s;
  s.sequence_length = 12;
  s.variables = {fixtures::numeric("hr"), fixtures::numeric("bp"),
                 fixtures::categorical("gcs", {"low", "mid", "high"}), fixtures::binary("vent")};
  const Panel p = fixtures::random_panel(s, 3, 31, 2);
  const auto got = dynamic_correlations(p);
  const auto ref = oracles::average_correlations(p);
  const double gap = std::max((got.trend - ref.trend).cwiseAbs().maxCoeff(),
                              (got.cycle - ref.cycle).cwiseAbs().maxCoeff());
  double recon = 0.0;
  for (std::size_t i = 0; i < p.patient_count(); ++i) {
    for (std::size_t v = 0; v < p.variable_count(); ++v) {
      Vec x(p.length(i));
      for (std::size_t t = 0; t < x.size(); ++t) x[t] = p.at(i, t, v);
      const auto d = detrend_linear(x);
      for (std::size_t t = 0; t < x.size(); ++t) {
        recon = std::max(recon, std::abs(d.trend[t] + d.cycle[t] - x[t]));
      }
    }
  }
  o.detail << "matrix gap " << gap << ", reconstruction " << recon << " ";
  o.expect(gap <= 1e-12, "matrices within 1e-12");
  o.expect(recon <= 1e-9, "reconstruction within 1e-9");
}

// ---- 6 -------------------------------------------------------------------

double pooled_tau(const Panel& p, std::size_t a, std::size_t b) { return static_correlations(p)(a, b); }

double share_true(const Panel& p, std::size_t var) {
  const auto col = p.pooled_column(var);
  return 100.0 * std::count(col.begin(), col.end(), 1.0) / static_cast<double>(col.size());
}

void end_to_end(Outcome& o) {
  fixtures::TempDir dir("acceptance-toy");
  RunConfig c = load_run_config(fixtures::source_dir() / "configs/toy.run.json");
  c.output_dir = dir / "out";
  o.expect(c.train.epochs == 200, "toy config trains 200 epochs");
  const int code = run_pipeline(c);
  o.detail << "pipeline exit " << code << "; ";

  const DatasetSchema s = load_schema(c.schema);
  const Panel real = load_csv_panel(c.input, s, CsvLayout::for_schema(s));
  const Panel syn = load_csv_panel(c.output_dir / "synthetic.csv", s, CsvLayout::for_schema(s));
  const double tr = pooled_tau(real, 0, 1), ts = pooled_tau(syn, 0, 1);
  const double br = share_true(real, 2), bs = share_true(syn, 2);
  o.detail << "tau real " << tr << " syn " << ts << "; flag % real " << br << " syn " << bs << "; ";
  o.expect(std::abs(tr - ts) <= 0.2, "static tau within 0.2");
  o.expect(std::abs(br - bs) <= 10.0, "binary share within 10 pp");

  const Stage2Report r = stage2_from_json(fixtures::read_json(c.output_dir / "validate/stage2.json"));
  for (const auto& v : r.variables) {
    if (v.kind != VariableKind::Numeric) continue;
    o.detail << v.name << " eta_3s " << v.eta_3s << "/" << r.config.iterations << " ";
    o.expect(v.three_sigma_pass, v.name + " passes three sigma");
  }
}

// ---- 7 -------------------------------------------------------------------

DatasetSchema person_schema(std::size_t T) {
  DatasetSchema s;
  s.sequence_length = T;
  s.variables = {fixtures::numeric("age"), fixtures::categorical("sex", {"F", "M"}),
                 fixtures::numeric("weight")};
  return s;
}

Panel random_people(std::size_t n, std::size_t T, std::mt19937_64& gen) {
  Panel p(person_schema(T));
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = p.add_patient("r" + std::to_string(i), 1 + gen() % T);
    for (std::size_t t = 0; t < p.length(k); ++t) {
      p.at(k, t, 0) = 20.0 + static_cast<double>(gen() % 15) + static_cast<double>(gen() % 10) / 10.0;
      p.at(k, t, 1) = static_cast<double>(gen() % 2);
      p.at(k, t, 2) = gen() % 11 == 0 ? kMissing : 50.0 + static_cast<double>(gen() % 400) / 8.0;
    }
  }
  return p;
}

double brute_distance(const Panel& a, const Panel& b) {
  const std::size_t T = a.schema().sequence_length, V = a.variable_count();
  auto cell = [&](const Panel& p, std::size_t i, std::size_t t, std::size_t v) {
    if (t >= p.length(i)) return 0.0;
    const double x = p.at(i, t, v);
    return std::isnan(x) ? 0.0 : x;
  };
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < a.patient_count(); ++i) {
    for (std::size_t j = 0; j < b.patient_count(); ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t v = 0; v < V; ++v) {
          const double d = cell(a, i, t, v) - cell(b, j, t, v);
          s += d * d;
        }
      }
      best = std::min(best, std::sqrt(s));
    }
  }
  return best;
}

// Direct enumeration: for each synthetic record count real records with equal floored age and sex.
double brute_risk(const Panel& real, const Panel& syn) {
  double sum = 0.0;
  for (std::size_t j = 0; j < syn.patient_count(); ++j) {
    std::size_t f = 0;
    for (std::size_t i = 0; i < real.patient_count(); ++i) {
      f += std::floor(real.at(i, 0, 0)) == std::floor(syn.at(j, 0, 0)) && real.at(i, 0, 1) == syn.at(j, 0, 1);
    }
    if (f > 0) sum += 1.0 / static_cast<double>(f);
  }
  return sum / static_cast<double>(syn.patient_count());
}

void privacy(Outcome& o) {
  std::mt19937_64 gen(77);
  const auto qids = parse_qid_spec("age:floor,sex");
  int distance_bad = 0, risk_bad = 0, gate_bad = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t T = 1 + gen() % 4;
    const Panel real = random_people(1 + gen() % 500, T, gen);
    const Panel syn = random_people(1 + gen() % 500, T, gen);
    if (min_euclidean_distance(real, syn).distance != brute_distance(real, syn)) ++distance_bad;
    const RiskReport r = assess_risk(real, syn, qids, kDefaultRiskThreshold);
    if (std::abs(r.synthetic_to_real_risk - brute_risk(real, syn)) > 1e-12) ++risk_bad;
    const bool trips = exit_code_for(nullptr, &r) == kExitRiskExceeded;
    if (trips != (r.synthetic_to_real_risk >= 0.09)) ++gate_bad;
  }
  o.detail << "distance mismatches " << distance_bad << ", risk mismatches " << risk_bad << "; ";
  o.expect(distance_bad == 0, "min distance equals brute force");
  o.expect(risk_bad == 0, "risk equals enumeration");

  // S=4: two synthetic records in a real class of size 2, two unmatched.
  auto build = [](const std::vector<double>& ages) {
    Panel p(person_schema(1));
    for (std::size_t i = 0; i < ages.size(); ++i) {
      const auto k = p.add_patient(std::to_string(i), 1);
      p.at(k, 0, 0) = ages[i];
      p.at(k, 0, 1) = 0;
      p.at(k, 0, 2) = 60;
    }
    return p;
  };
  const double s4 = assess_risk(build({30, 30, 40}), build({30, 30, 50, 60}), qids, 0.09).synthetic_to_real_risk;
  o.detail << "S=4 risk " << s4 << "; ";
  o.expect(s4 == 0.25, "S=4 example gives 0.25");

  // Gate boundary: 100 singleton real records, k synthetic matches out of 100.
  std::vector<double> hundred(100);
  for (int i = 0; i < 100; ++i) hundred[i] = 100.0 + i;
  for (int k : {8, 9, 10}) {
    std::vector<double> syn(100);
    for (int i = 0; i < 100; ++i) syn[i] = i < k ? 100.0 + i : 500.0 + i;
    const RiskReport r = assess_risk(build(hundred), build(syn), qids, kDefaultRiskThreshold);
    const bool trips = exit_code_for(nullptr, &r) == kExitRiskExceeded;
    if (trips != (k >= 9)) ++gate_bad;
  }
  o.detail << "gate errors " << gate_bad << " ";
  o.expect(gate_bad == 0, "exit code 3 iff risk >= 0.09");
}

// ---- 8 -------------------------------------------------------------------

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    // Epoch wall times are the only nondeterministic output.
    if (e.path().filename() == "train_log.jsonl") continue;
    files[fs::relative(e.path(), root).string()] = fixtures::read_file(e.path());
  }
  return files;
}

void determinism(Outcome& o) {
  fixtures::TempDir dir("acceptance-det");
  RunConfig c = load_run_config(fixtures::source_dir() / "configs/toy.run.json");
  c.train.epochs = 10;
  c.train.checkpoint_every = 5;
  c.generate_count = 200;
  c.validate.iterations = 30;
  c.output_dir = dir / "a";
  const int ca = run_pipeline(c);
  c.output_dir = dir / "b";
  const int cb = run_pipeline(c);
  const auto a = tree(dir / "a"), b = tree(dir / "b");
  std::size_t differing = 0;
  for (const auto& [name, bytes] : a) {
    const auto it = b.find(name);
    if (it == b.end() || it->second != bytes) {
      ++differing;
      o.detail << "differs: " << name << " ";
    }
  }
  o.detail << a.size() << " files compared ";
  o.expect(ca == cb, "same exit code");
  o.expect(a.size() == b.size() && differing == 0, "byte-identical outputs");
  for (const char* f : {"synthetic.csv", "report.txt", "risk.json", "train/model.ckpt",
                        "train/checkpoint_epoch_0005.ckpt", "validate/stage2.json"}) {
    o.expect(a.count(f) == 1, std::string("output ") + f);
  }
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria = {
      {"schema widths", widths},
      {"gradient fidelity", gradients},
      {"statistical kernels", stat_kernels},
      {"stage two self-consistency", stage_two},
      {"dynamic correlations", dynamic},
      {"toy end-to-end generation", end_to_end},
      {"privacy metrics", privacy},
      {"pipeline determinism", determinism},
  };
  std::set<std::size_t> only;
  for (int i = 1; i < argc; ++i) only.insert(std::stoul(argv[i]));

  bool all = true;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    if (!only.empty() && !only.count(k + 1)) continue;
    Outcome o;
    const auto start = std::chrono::steady_clock::now();
    try {
      criteria[k].second(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << "exception: " << e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("criterion %zu %s: %s (%.1fs) %s\n", k + 1, criteria[k].first.c_str(),
                o.pass ? "PASS" : "FAIL", secs, o.detail.str().c_str());
    std::fflush(stdout);
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
