#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "synthgym/ingest.hpp"
#include "synthgym/privacy.hpp"
#include "synthgym/train.hpp"
#include "synthgym/validate.hpp"

namespace synthgym {

namespace fs = std::filesystem;

enum ExitCode : int {
  kExitOk = 0,
  kExitError = 1,
  kExitValidationFailed = 2,
  kExitRiskExceeded = 3,
};

struct PreprocessOptions {
  bool forward_fill = false;
  /// Explicit variable/flag pairs; when empty, flags named "<X> (M)" or "<X>/<Y> (M)"
  /// are paired with the matching variables.
  std::vector<FlagPair> flags;
  /// Floors record lengths to a multiple of this block when nonzero.
  std::size_t truncate_multiple = 0;
};

struct RiskOptions {
  std::string qids;
  double threshold = kDefaultRiskThreshold;
  std::optional<fs::path> population;
};

/// Everything `pipeline` needs. Relative paths resolve against the config file.
struct RunConfig {
  fs::path schema;
  fs::path input;
  fs::path output_dir = "synthgym-out";
  std::string id_column = "id";
  std::string time_column = "time";
  std::uint64_t seed = 0;
  PreprocessOptions preprocess;
  TrainConfig train;
  std::size_t generate_count = 0;  // 0 means as many as the real records
  Stage2Config validate;
  RiskOptions risk;
  bool verbose = false;
};

RunConfig load_run_config(const fs::path& path);
RunConfig run_config_from_json(const nlohmann::json& j, const fs::path& base_dir);

/// Per-subcommand seed derived from the global one.
std::uint64_t subcommand_seed(std::uint64_t global_seed, std::string_view subcommand);

std::vector<FlagPair> default_flag_pairs(const DatasetSchema& schema);

struct PreprocessOutputs {
  fs::path transforms;
  fs::path encoded;
  fs::path real_csv;
  std::size_t clamped = 0;
  std::vector<std::string> dropped_ids;
};

/// Writes transforms.json, encoded.bin and the cleaned real.csv into out_dir.
PreprocessOutputs run_preprocess(const fs::path& schema_path, const fs::path& input,
                                 const fs::path& out_dir, const CsvLayout& layout,
                                 const PreprocessOptions& options);

/// Writes periodic checkpoints, model.ckpt and train_log.jsonl into out_dir.
fs::path run_train(const fs::path& encoded, const TrainConfig& config, const fs::path& out_dir,
                   bool verbose = false);

/// Draws count sequences and writes them as a CSV panel over the effective schema.
void run_generate(const fs::path& checkpoint, const fs::path& transforms, std::size_t count,
                  std::uint64_t seed, const fs::path& output, const std::string& id_column = "id",
                  const std::string& time_column = "time");

struct PanelPair {
  Panel real;
  Panel syn;
};

/// Loads real and synthetic CSVs onto one schema: the effective schema when transforms
/// are given (the real side is binned), otherwise the schema file as is.
PanelPair load_panel_pair(const fs::path& schema_path, const std::optional<fs::path>& transforms,
                          const fs::path& real_csv, const fs::path& syn_csv,
                          const CsvLayout& real_layout, const CsvLayout& syn_layout);

/// Writes stage1.json, stage2.json, stage3.json and correlation CSVs; returns the stage-two report.
Stage2Report run_validate(const PanelPair& panels, const Stage2Config& config,
                          const fs::path& out_dir);

RiskReport run_risk(const PanelPair& panels, const RiskOptions& options, const fs::path& output,
                    const Panel* population = nullptr);

/// Human-readable summary of a validation directory and an optional risk report.
std::string render_report(const fs::path& validate_dir, const std::optional<fs::path>& risk_file);

int exit_code_for(const Stage2Report* validation, const RiskReport* risk);

/// Runs every stage in order; returns the process exit code.
int run_pipeline(const RunConfig& config);

}  // namespace synthgym
