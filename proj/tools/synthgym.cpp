#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "synthgym/error.hpp"
#include "synthgym/pipeline.hpp"

using namespace synthgym;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  bool verbose = false;
  std::optional<RunConfig> run;

  // Global seed: the flag wins over the config file.
  std::uint64_t require_seed(const char* sub) const {
    if (seed) return *seed;
    if (run) return run->seed;
    throw Error(std::string(sub) + " needs --seed or a --config that declares one");
  }
};

template <class T>
T pick(const std::optional<T>& flag, const Globals& g, T RunConfig::*field, const char* name) {
  if (flag) return *flag;
  if (g.run) return (*g.run).*field;
  throw Error(std::string("missing --") + name);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"synthgym: synthetic clinical time series with WGAN-GP and realisticness audits"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "Run config (JSON)");
  app.add_option("--seed", g.seed, "Global seed");
  app.add_flag("--verbose,-v", g.verbose, "Progress on stderr");

  std::optional<fs::path> schema, input, out, transforms, real, syn, population;
  std::string id_col = "id", time_col = "time";
  auto add_layout = [&](CLI::App* sub) {
    sub->add_option("--id-col", id_col, "Patient id column");
    sub->add_option("--time-col", time_col, "Time column");
  };

  auto* pre = app.add_subcommand("preprocess", "Fit transforms and encode the real panel");
  pre->add_option("--schema", schema, "Declared schema");
  pre->add_option("--input", input, "Real CSV panel");
  pre->add_option("--out", out, "Output directory");
  bool ffill = false;
  std::size_t truncate = 0;
  pre->add_flag("--forward-fill", ffill, "Forward-fill measured variables and derive flags");
  pre->add_option("--truncate-multiple", truncate, "Floor lengths to a multiple of this");
  add_layout(pre);

  auto* tr = app.add_subcommand("train", "Train generator and critic");
  std::optional<fs::path> encoded;
  std::optional<std::size_t> epochs;
  std::optional<std::string> gp_at;
  tr->add_option("--encoded", encoded, "encoded.bin from preprocess")->required();
  tr->add_option("--out", out, "Checkpoint directory")->required();
  tr->add_option("--epochs", epochs, "Override epoch count");
  tr->add_option("--gp-at", gp_at, "Gradient penalty point: interp|syn");

  auto* gen = app.add_subcommand("generate", "Sample synthetic patients");
  std::optional<fs::path> checkpoint;
  std::size_t count = 0;
  gen->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  gen->add_option("--transforms", transforms, "transforms.json")->required();
  gen->add_option("--count", count, "Number of patients")->required();
  gen->add_option("--output", out, "Synthetic CSV")->required();
  add_layout(gen);

  auto* val = app.add_subcommand("validate", "Three-stage realisticness audit");
  std::optional<std::size_t> iterations;
  val->add_option("--real", real, "Real CSV")->required();
  val->add_option("--syn", syn, "Synthetic CSV")->required();
  val->add_option("--schema", schema, "Schema shared by both files");
  val->add_option("--transforms", transforms, "Read real on the declared schema, syn on the effective one");
  val->add_option("--out", out, "Report directory")->required();
  val->add_option("--iterations", iterations, "Stage-two iterations");
  add_layout(val);

  auto* rk = app.add_subcommand("risk", "Disclosure risk");
  std::optional<std::string> qids;
  std::optional<double> threshold;
  rk->add_option("--real", real, "Real CSV")->required();
  rk->add_option("--syn", syn, "Synthetic CSV")->required();
  rk->add_option("--schema", schema, "Schema shared by both files");
  rk->add_option("--transforms", transforms, "As for validate");
  rk->add_option("--qids", qids, "Quasi-identifiers, e.g. age:floor,gender");
  rk->add_option("--threshold", threshold, "Risk threshold");
  rk->add_option("--population", population, "Population CSV for the population-to-sample risk");
  rk->add_option("--output", out, "Risk JSON")->required();
  add_layout(rk);

  auto* rep = app.add_subcommand("report", "Summarise validate and risk outputs");
  std::optional<fs::path> validate_dir, risk_file;
  rep->add_option("--validate-dir", validate_dir, "Directory written by validate")->required();
  rep->add_option("--risk", risk_file, "Risk JSON");
  rep->add_option("--output", out, "Write here instead of stdout");

  auto* pipe = app.add_subcommand("pipeline", "Run every stage from --config");

  CLI11_PARSE(app, argc, argv);

  try {
    if (!g.config.empty()) g.run = load_run_config(g.config);
    if (g.run && (!g.seed)) g.seed = g.run->seed;
    if (!g.run && (*pipe)) throw Error("pipeline needs --config");

    if (*pre) {
      const fs::path s = pick(schema, g, &RunConfig::schema, "schema");
      const DatasetSchema declared = load_schema(s);
      PreprocessOptions opts = g.run ? g.run->preprocess : PreprocessOptions{};
      if (ffill) opts.forward_fill = true;
      if (truncate) opts.truncate_multiple = truncate;
      const fs::path out_dir = out ? *out : (g.run ? g.run->output_dir / "preprocess" : fs::path());
      if (out_dir.empty()) throw Error("missing --out");
      const auto r = run_preprocess(s, pick(input, g, &RunConfig::input, "input"), out_dir,
                                    CsvLayout::for_schema(declared, id_col, time_col), opts);
      if (g.verbose) {
        std::cerr << "wrote " << r.transforms << ", " << r.encoded << "; clamped " << r.clamped
                  << " cells, dropped " << r.dropped_ids.size() << " records\n";
      }
      return kExitOk;
    }
    if (*tr) {
      TrainConfig tc = g.run ? g.run->train : TrainConfig{};
      if (epochs) {
        tc.epochs = *epochs;
        tc.curriculum.clear();
      }
      if (gp_at) tc.gp_at = parse_penalty_point(*gp_at);
      tc.seed = subcommand_seed(g.require_seed("train"), "train");
      const fs::path model = run_train(*encoded, tc, *out, g.verbose);
      if (g.verbose) std::cerr << "wrote " << model << '\n';
      return kExitOk;
    }
    if (*gen) {
      run_generate(*checkpoint, *transforms, count,
                   subcommand_seed(g.require_seed("generate"), "generate"), *out, id_col,
                   time_col);
      return kExitOk;
    }
    if (*val || *rk) {
      if (!transforms && !schema && g.run) schema = g.run->schema;
      if (!transforms && !schema) throw Error("need --schema or --transforms");
      CsvLayout layout;
      layout.id_column = id_col;
      layout.time_column = time_col;
      const PanelPair panels =
          load_panel_pair(schema.value_or(fs::path()), transforms, *real, *syn, layout, layout);
      if (*val) {
        Stage2Config vc = g.run ? g.run->validate : Stage2Config{};
        if (iterations) vc.iterations = *iterations;
        vc.seed = subcommand_seed(g.require_seed("validate"), "validate");
        const Stage2Report r = run_validate(panels, vc, *out);
        return exit_code_for(&r, nullptr);
      }
      RiskOptions ro = g.run ? g.run->risk : RiskOptions{};
      if (qids) ro.qids = *qids;
      if (threshold) ro.threshold = *threshold;
      if (population) ro.population = *population;
      std::optional<Panel> pop;
      if (ro.population) {
        // The population is read like the real file.
        if (transforms) {
          const TransformSet t = load_transforms(*transforms);
          pop = to_effective(
              load_csv_panel(*ro.population, t.declared,
                             CsvLayout::for_schema(t.declared, id_col, time_col)),
              t);
        } else {
          const DatasetSchema s = load_schema(*schema);
          pop = load_csv_panel(*ro.population, s, CsvLayout::for_schema(s, id_col, time_col));
        }
      }
      const RiskReport r = run_risk(panels, ro, *out, pop ? &*pop : nullptr);
      return exit_code_for(nullptr, &r);
    }
    if (*rep) {
      const std::string text = render_report(*validate_dir, risk_file);
      if (out) {
        std::ofstream f(*out, std::ios::binary);
        f << text;
        if (!f) throw Error("cannot write " + out->string());
      } else {
        std::cout << text;
      }
      return kExitOk;
    }
    if (*pipe) {
      RunConfig rc = *g.run;
      rc.seed = *g.seed;
      rc.verbose = rc.verbose || g.verbose;
      return run_pipeline(rc);
    }
  } catch (const std::exception& e) {
    std::cerr << "synthgym: " << e.what() << '\n';
    return kExitError;
  }
  return kExitError;
}
