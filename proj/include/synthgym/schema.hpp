#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace synthgym {

enum class VariableKind { Numeric, Binary, Categorical };

enum class TransformMethod { BoxCoxMinMax, LogMinMax, MinMaxOnly, DecileToCategorical };

std::string_view to_string(VariableKind kind);
std::string_view to_string(TransformMethod method);
VariableKind parse_variable_kind(std::string_view text);
TransformMethod parse_transform_method(std::string_view text);

struct VariableSpec {
  std::string name;
  VariableKind kind = VariableKind::Numeric;
  /// Declaration order fixes one-hot and ordinal positions.
  std::vector<std::string> class_labels;
  TransformMethod transform = TransformMethod::MinMaxOnly;
  std::string unit;
  bool is_quasi_identifier = false;
  bool is_measurement_flag = false;

  bool is_numeric() const { return kind == VariableKind::Numeric; }
  /// Number of classes; 0 for numeric variables.
  std::size_t class_count() const { return class_labels.size(); }
  std::optional<std::size_t> class_index(std::string_view label) const;

  bool operator==(const VariableSpec&) const = default;
};

struct DatasetSchema {
  std::vector<VariableSpec> variables;
  std::size_t sequence_length = 1;
  std::size_t latent_dim = 128;
  std::size_t hidden_dim = 128;
  std::size_t embed_dim_binary = 2;
  std::size_t embed_dim_categorical = 4;

  std::size_t variable_count() const { return variables.size(); }
  std::optional<std::size_t> index_of(std::string_view name) const;
  const VariableSpec& variable(std::string_view name) const;

  bool operator==(const DatasetSchema&) const = default;
};

/// Every invariant violation, empty when the schema is valid.
std::vector<std::string> validate_schema(const DatasetSchema& schema);
/// Throws SchemaError listing all violations.
void require_valid(const DatasetSchema& schema);

/// Width of one variable in the encoded (one-hot) space.
std::size_t encoded_size(const VariableSpec& variable);
/// Width of one variable after the discriminator's soft embedding.
std::size_t embedded_size(const DatasetSchema& schema, const VariableSpec& variable);

/// Sum of per-variable encoded widths (the generator output dimension).
std::size_t encoded_width(const DatasetSchema& schema);
/// Sum of per-variable widths after soft embedding (discriminator input dimension).
std::size_t embedded_width(const DatasetSchema& schema);

nlohmann::json to_json(const DatasetSchema& schema);
DatasetSchema schema_from_json(const nlohmann::json& j);
DatasetSchema load_schema(const std::filesystem::path& path);
void save_schema(const DatasetSchema& schema, const std::filesystem::path& path);

/// FNV-1a of the canonical JSON form; ties checkpoints to the schema they were trained on.
std::uint64_t schema_hash(const DatasetSchema& schema);

}  // namespace synthgym
