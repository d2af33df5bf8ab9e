#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "synthgym/panel.hpp"

namespace synthgym {

struct CsvLayout {
  std::string id_column = "id";
  std::string time_column = "time";
  /// Must list exactly the schema's variable names (any order in the file).
  std::vector<std::string> value_columns;

  static CsvLayout for_schema(const DatasetSchema& schema, std::string id_column = "id",
                              std::string time_column = "time");
};

/// One row per (patient, timestep). Patients keep first-appearance order and
/// rows are sorted by the time column. Empty fields are missing cells.
Panel read_csv_panel(std::istream& in, const DatasetSchema& schema, const CsvLayout& layout);
Panel load_csv_panel(const std::filesystem::path& path, const DatasetSchema& schema,
                     const CsvLayout& layout);

/// Writes class labels (not indices), time as 0..length-1, shortest round-trip numerics.
void write_csv_panel(std::ostream& out, const Panel& panel, const CsvLayout& layout);
void write_csv_panel(const Panel& panel, const CsvLayout& layout,
                     const std::filesystem::path& path);

struct FlagPair {
  std::string variable;
  std::string flag;
};

/// Carries the last observation forward and sets each companion flag to True where
/// an observation occurred. Heads before the first observation are back-filled.
/// A cell already marked False in its flag counts as a previous fill, which makes
/// the operation idempotent on its own output.
Panel forward_fill_with_flags(const Panel& raw, std::span<const FlagPair> pairs);
/// Convenience form: the companion of variable X is named "X (M)".
Panel forward_fill_with_flags(const Panel& raw, const std::vector<std::string>& flagged_vars);

struct TruncationResult {
  Panel panel;
  std::vector<std::string> dropped_ids;
};

/// Floors every length to a multiple of block; records reaching zero are dropped.
TruncationResult truncate_to_multiple(const Panel& panel, std::size_t block);

namespace csv {
std::vector<std::string> split_line(const std::string& line);
std::string format_number(double value);
}  // namespace csv

}  // namespace synthgym
