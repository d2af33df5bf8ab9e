#include "synthgym/pipeline.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "synthgym/checkpoint.hpp"
#include "synthgym/error.hpp"
#include "synthgym/rng.hpp"

namespace synthgym {

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("error while writing " + path.string());
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    nlohmann::json j;
    in >> j;
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("cannot parse " + path.string() + ": " + e.what());
  }
}

}  // namespace

std::uint64_t subcommand_seed(std::uint64_t global_seed, std::string_view subcommand) {
  return derive_seed(global_seed, subcommand);
}

RunConfig run_config_from_json(const nlohmann::json& j, const fs::path& base) {
  RunConfig c;
  try {
    for (const char* key : {"schema", "input", "seed"}) {
      if (!j.contains(key)) throw Error(std::string("run config must declare '") + key + "'");
    }
    c.schema = resolve(base, j.at("schema").get<std::string>());
    c.input = resolve(base, j.at("input").get<std::string>());
    if (j.contains("output_dir")) c.output_dir = resolve(base, j.at("output_dir").get<std::string>());
    else c.output_dir = base / c.output_dir;
    c.id_column = j.value("id_column", c.id_column);
    c.time_column = j.value("time_column", c.time_column);
    c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("preprocess")) {
      const auto& p = j.at("preprocess");
      c.preprocess.forward_fill = p.value("forward_fill", false);
      c.preprocess.truncate_multiple = p.value("truncate_multiple", std::size_t{0});
      if (p.contains("flags")) {
        for (const auto& f : p.at("flags")) {
          c.preprocess.flags.push_back(
              {f.at("variable").get<std::string>(), f.at("flag").get<std::string>()});
        }
      }
    }
    if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
    if (j.contains("generate")) c.generate_count = j.at("generate").value("count", std::size_t{0});
    if (j.contains("validate")) c.validate = stage2_config_from_json(j.at("validate"));
    if (j.contains("risk")) {
      const auto& r = j.at("risk");
      c.risk.qids = r.value("qids", std::string());
      c.risk.threshold = r.value("threshold", kDefaultRiskThreshold);
      if (r.contains("population") && !r.at("population").is_null()) {
        c.risk.population = resolve(base, r.at("population").get<std::string>());
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed run config: ") + e.what());
  }
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  return run_config_from_json(read_json(path), fs::absolute(path).parent_path());
}

std::vector<FlagPair> default_flag_pairs(const DatasetSchema& schema) {
  const std::string suffix = " (M)";
  std::vector<FlagPair> pairs;
  for (const auto& var : schema.variables) {
    if (!var.is_measurement_flag || var.name.size() <= suffix.size() ||
        var.name.compare(var.name.size() - suffix.size(), suffix.size(), suffix) != 0) {
      continue;
    }
    const std::string base = var.name.substr(0, var.name.size() - suffix.size());
    std::size_t start = 0;
    while (start <= base.size()) {
      const std::size_t slash = std::min(base.find('/', start), base.size());
      const std::string part = base.substr(start, slash - start);
      if (schema.index_of(part)) pairs.push_back({part, var.name});
      start = slash + 1;
    }
  }
  return pairs;
}

PreprocessOutputs run_preprocess(const fs::path& schema_path, const fs::path& input,
                                 const fs::path& out_dir, const CsvLayout& layout,
                                 const PreprocessOptions& options) {
  const DatasetSchema schema = load_schema(schema_path);
  Panel panel = load_csv_panel(input, schema, layout);
  PreprocessOutputs out;
  if (options.truncate_multiple > 0) {
    auto truncated = truncate_to_multiple(panel, options.truncate_multiple);
    panel = std::move(truncated.panel);
    out.dropped_ids = std::move(truncated.dropped_ids);
  }
  if (options.forward_fill) {
    const auto pairs = options.flags.empty() ? default_flag_pairs(schema) : options.flags;
    panel = forward_fill_with_flags(panel, pairs);
  }
  const auto problems = validate_panel(panel, false);
  if (!problems.empty()) {
    std::string msg = "input panel is not usable for training:";
    for (std::size_t i = 0; i < problems.size() && i < 10; ++i) msg += "\n  " + problems[i];
    throw DataError(msg);
  }
  fs::create_directories(out_dir);
  const TransformSet transforms = fit_transforms(panel);
  ClampReport clamps;
  const EncodedTensor encoded = encode_panel(panel, transforms, &clamps);
  out.transforms = out_dir / "transforms.json";
  out.encoded = out_dir / "encoded.bin";
  out.real_csv = out_dir / "real.csv";
  out.clamped = clamps.clamped;
  save_transforms(transforms, out.transforms);
  save_encoded(encoded, out.encoded);
  write_csv_panel(panel, layout, out.real_csv);
  return out;
}

fs::path run_train(const fs::path& encoded_path, const TrainConfig& config,
                   const fs::path& out_dir, bool verbose) {
  const EncodedTensor encoded = load_encoded(encoded_path);
  fs::create_directories(out_dir);
  std::ofstream log(out_dir / "train_log.jsonl", std::ios::binary);
  if (!log) throw Error("cannot write training log in " + out_dir.string());
  const DatasetSchema schema = *encoded.schema;
  TrainCallbacks callbacks;
  callbacks.on_epoch = [&](const EpochRecord& rec) {
    log << rec.to_json().dump() << '\n';
    log.flush();
    if (verbose) {
      std::cerr << "epoch " << rec.epoch << " L=" << rec.sequence_length
                << " critic=" << rec.critic_loss << " generator=" << rec.generator_loss << '\n';
    }
  };
  callbacks.on_checkpoint = [&](std::size_t epoch, const GeneratorParams& g,
                                const DiscriminatorParams& d) {
    char name[64];
    std::snprintf(name, sizeof(name), "checkpoint_epoch_%04zu.ckpt", epoch);
    save_checkpoint({schema, g, d, epoch}, out_dir / name);
  };
  const TrainResult result = train(encoded, config, callbacks);
  const fs::path model = out_dir / "model.ckpt";
  save_checkpoint({schema, result.generator, result.discriminator,
                   static_cast<std::uint64_t>(result.log.size())},
                  model);
  return model;
}

void run_generate(const fs::path& checkpoint, const fs::path& transforms_path, std::size_t count,
                  std::uint64_t seed, const fs::path& output, const std::string& id_column,
                  const std::string& time_column) {
  const ModelState state = load_checkpoint(checkpoint);
  const TransformSet transforms = load_transforms(transforms_path);
  if (schema_hash(state.schema) != schema_hash(transforms.effective)) {
    throw DataError("checkpoint schema hash does not match the transforms");
  }
  auto schema = std::make_shared<const DatasetSchema>(transforms.effective);
  const CsvLayout layout = CsvLayout::for_schema(*schema, id_column, time_column);
  Panel all(schema);
  Rng rng(seed);
  constexpr std::size_t kChunk = 256;
  for (std::size_t start = 0; start < count; start += kChunk) {
    const std::size_t n = std::min(kChunk, count - start);
    const LatentBatch z = sample_latent(n, schema->sequence_length, schema->latent_dim, rng);
    EncodedTensor x = generator_forward(state.generator, schema, z);
    for (std::size_t i = 0; i < n; ++i) x.ids[i] = std::to_string(start + i);
    const Panel part = decode_panel(x, transforms);
    for (std::size_t p = 0; p < part.patient_count(); ++p) {
      const std::size_t q = all.add_patient(part.id(p), part.length(p));
      for (std::size_t t = 0; t < part.length(p); ++t) {
        for (std::size_t v = 0; v < part.variable_count(); ++v) all.at(q, t, v) = part.at(p, t, v);
      }
    }
  }
  if (output.has_parent_path()) fs::create_directories(output.parent_path());
  write_csv_panel(all, layout, output);
}

PanelPair load_panel_pair(const fs::path& schema_path, const std::optional<fs::path>& transforms,
                          const fs::path& real_csv, const fs::path& syn_csv,
                          const CsvLayout& real_layout, const CsvLayout& syn_layout) {
  if (transforms) {
    const TransformSet t = load_transforms(*transforms);
    CsvLayout rl = CsvLayout::for_schema(t.declared, real_layout.id_column, real_layout.time_column);
    CsvLayout sl = CsvLayout::for_schema(t.effective, syn_layout.id_column, syn_layout.time_column);
    Panel real = to_effective(load_csv_panel(real_csv, t.declared, rl), t);
    Panel syn = load_csv_panel(syn_csv, t.effective, sl);
    return {std::move(real), std::move(syn)};
  }
  const DatasetSchema schema = load_schema(schema_path);
  CsvLayout rl = CsvLayout::for_schema(schema, real_layout.id_column, real_layout.time_column);
  CsvLayout sl = CsvLayout::for_schema(schema, syn_layout.id_column, syn_layout.time_column);
  return {load_csv_panel(real_csv, schema, rl), load_csv_panel(syn_csv, schema, sl)};
}

Stage2Report run_validate(const PanelPair& panels, const Stage2Config& config,
                          const fs::path& out_dir) {
  fs::create_directories(out_dir);
  nlohmann::json stage1 = {{"stage", 1}, {"variables", nlohmann::json::array()}};
  for (const auto& table : stage1_run(panels.real, panels.syn)) {
    stage1["variables"].push_back(table.to_json());
  }
  write_json(out_dir / "stage1.json", stage1);

  const Stage2Report stage2 = stage2_run(panels.real, panels.syn, config);
  write_json(out_dir / "stage2.json", stage2.to_json());

  const CorrelationReport stage3 = stage3_run(panels.real, panels.syn);
  write_json(out_dir / "stage3.json", stage3.to_json());
  const std::pair<const char*, const Eigen::MatrixXd*> matrices[] = {
      {"static_real.csv", &stage3.static_real}, {"static_syn.csv", &stage3.static_syn},
      {"trend_real.csv", &stage3.trend_real},   {"trend_syn.csv", &stage3.trend_syn},
      {"cycle_real.csv", &stage3.cycle_real},   {"cycle_syn.csv", &stage3.cycle_syn}};
  for (const auto& [name, m] : matrices) {
    write_text(out_dir / name, matrix_csv(*m, stage3.variables));
  }
  return stage2;
}

RiskReport run_risk(const PanelPair& panels, const RiskOptions& options, const fs::path& output,
                    const Panel* population) {
  const auto qids = parse_qid_spec(options.qids);
  RiskReport report = assess_risk(panels.real, panels.syn, qids, options.threshold, population);
  if (output.has_parent_path()) fs::create_directories(output.parent_path());
  write_json(output, report.to_json());
  return report;
}

namespace {

const char* mark(bool ok) { return ok ? "✓" : "✗"; }

std::string join(const std::vector<std::string>& items) {
  if (items.empty()) return "none";
  std::string s;
  for (std::size_t i = 0; i < items.size(); ++i) s += (i ? ", " : "") + items[i];
  return s;
}

std::string fixed(double v, int digits) {
  std::ostringstream o;
  o.setf(std::ios::fixed);
  o.precision(digits);
  o << v;
  return o.str();
}

}  // namespace

std::string render_report(const fs::path& dir, const std::optional<fs::path>& risk_file) {
  std::ostringstream out;
  std::vector<std::string> missing;
  out << "synthgym validation summary\n\n";

  if (fs::exists(dir / "stage1.json")) {
    const auto s1 = read_json(dir / "stage1.json");
    out << "Stage one: density tables for " << s1.at("variables").size() << " variables\n\n";
  } else {
    missing.push_back("stage1.json");
  }

  if (fs::exists(dir / "stage2.json")) {
    const Stage2Report s2 = stage2_from_json(read_json(dir / "stage2.json"));
    std::vector<std::string> passed;
    std::vector<const VariableStage2*> failed;
    for (const auto& v : s2.variables) {
      if (v.ks_pass) passed.push_back(v.name);
      else failed.push_back(&v);
    }
    out << "Stage two (" << s2.config.iterations << " iterations, batch " << s2.config.batch
        << ", pass when count > " << s2.config.pass_fraction << " x iterations)\n";
    out << "Passed the KS Test: " << join(passed) << "\n";
    out << "Failed the KS Test:";
    if (failed.empty()) {
      out << " - -\n";
    } else {
      out << "\n  variable | t-Test Status | F-Test Status\n";
      for (const auto* v : failed) {
        const bool numeric = v->kind == VariableKind::Numeric;
        out << "  " << v->name << " | " << (numeric ? mark(v->t_pass) : "n/a") << " | "
            << mark(v->f_pass) << (numeric ? "" : " (ANOVA)") << "\n";
      }
    }
    std::vector<std::string> sigma_pass;
    std::vector<std::string> sigma_fail;
    for (const auto* v : failed) {
      if (v->kind != VariableKind::Numeric) continue;
      (v->three_sigma_pass ? sigma_pass : sigma_fail).push_back(v->name);
    }
    out << "The Three Sigma Rule Test: passed: " << join(sigma_pass)
        << "; failed: " << join(sigma_fail) << "\n";
    std::vector<std::string> unrealistic;
    for (const auto& v : s2.variables) {
      if (!v.realistic) unrealistic.push_back(v.name);
    }
    if (unrealistic.empty()) out << "Verdict: all variables realistic\n\n";
    else out << "Verdict: not realistic: " << join(unrealistic) << "\n\n";
  } else {
    missing.push_back("stage2.json");
  }

  if (fs::exists(dir / "stage3.json")) {
    const auto s3 = read_json(dir / "stage3.json");
    out << "Stage three: max |tau_real - tau_syn| static " << fixed(s3.at("max_static_gap"), 4)
        << ", trend " << fixed(s3.at("max_trend_gap"), 4) << ", cycle "
        << fixed(s3.at("max_cycle_gap"), 4) << "\n\n";
  } else {
    missing.push_back("stage3.json");
  }

  if (risk_file && fs::exists(*risk_file)) {
    const RiskReport r = risk_from_json(read_json(*risk_file));
    out << "Risk: minimum Euclidean distance " << fixed(r.min_distance.distance, 6) << " (real "
        << r.min_distance_real_id << ", synthetic " << r.min_distance_syn_id << ")\n";
    out << "Risk: synthetic-to-real " << fixed(r.synthetic_to_real_risk, 6) << " over S = "
        << r.synthetic_records << " vs threshold " << r.threshold << ": "
        << (r.synthetic_pass() ? "pass" : "FAIL") << "\n";
    if (r.population_to_sample_risk) {
      out << "Risk: population-to-sample " << fixed(*r.population_to_sample_risk, 6) << ": "
          << (r.population_pass() ? "pass" : "FAIL") << "\n";
    }
  } else {
    out << "risk: not run\n";
  }

  if (!missing.empty()) out << "\nmissing stage outputs: " << join(missing) << "\n";
  return out.str();
}

int exit_code_for(const Stage2Report* validation, const RiskReport* risk) {
  if (risk != nullptr && !risk->pass()) return kExitRiskExceeded;
  if (validation != nullptr && !validation->all_realistic()) return kExitValidationFailed;
  return kExitOk;
}

int run_pipeline(const RunConfig& c) {
  const fs::path out = c.output_dir;
  fs::create_directories(out);
  const DatasetSchema schema = load_schema(c.schema);
  const CsvLayout layout = CsvLayout::for_schema(schema, c.id_column, c.time_column);
  auto note = [&](const std::string& msg) {
    if (c.verbose) std::cerr << "[pipeline] " << msg << '\n';
  };

  note("preprocess");
  const auto pre = run_preprocess(c.schema, c.input, out / "preprocess", layout, c.preprocess);

  note("train");
  TrainConfig tc = c.train;
  tc.seed = subcommand_seed(c.seed, "train");
  const fs::path model = run_train(pre.encoded, tc, out / "train", c.verbose);

  note("generate");
  std::size_t count = c.generate_count;
  if (count == 0) count = load_encoded(pre.encoded).patients;
  const fs::path syn_csv = out / "synthetic.csv";
  run_generate(model, pre.transforms, count, subcommand_seed(c.seed, "generate"), syn_csv,
               c.id_column, c.time_column);

  note("validate");
  const PanelPair panels =
      load_panel_pair(c.schema, pre.transforms, pre.real_csv, syn_csv, layout, layout);
  Stage2Config vc = c.validate;
  vc.seed = subcommand_seed(c.seed, "validate");
  const Stage2Report stage2 = run_validate(panels, vc, out / "validate");

  note("risk");
  std::optional<Panel> population;
  if (c.risk.population) {
    const TransformSet t = load_transforms(pre.transforms);
    population = to_effective(load_csv_panel(*c.risk.population, schema, layout), t);
  }
  const RiskReport risk =
      run_risk(panels, c.risk, out / "risk.json", population ? &*population : nullptr);

  note("report");
  write_text(out / "report.txt", render_report(out / "validate", out / "risk.json"));
  return exit_code_for(&stage2, &risk);
}

}  // namespace synthgym
