#include "synthgym/schema.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "synthgym/error.hpp"

namespace synthgym {

std::string_view to_string(VariableKind kind) {
  switch (kind) {
    case VariableKind::Numeric: return "Numeric";
    case VariableKind::Binary: return "Binary";
    case VariableKind::Categorical: return "Categorical";
  }
  return "?";
}

std::string_view to_string(TransformMethod method) {
  switch (method) {
    case TransformMethod::BoxCoxMinMax: return "BoxCoxMinMax";
    case TransformMethod::LogMinMax: return "LogMinMax";
    case TransformMethod::MinMaxOnly: return "MinMaxOnly";
    case TransformMethod::DecileToCategorical: return "DecileToCategorical";
  }
  return "?";
}

VariableKind parse_variable_kind(std::string_view text) {
  if (text == "Numeric") return VariableKind::Numeric;
  if (text == "Binary") return VariableKind::Binary;
  if (text == "Categorical") return VariableKind::Categorical;
  throw SchemaError("unknown variable kind '" + std::string(text) + "'");
}

TransformMethod parse_transform_method(std::string_view text) {
  if (text == "BoxCoxMinMax") return TransformMethod::BoxCoxMinMax;
  if (text == "LogMinMax") return TransformMethod::LogMinMax;
  if (text == "MinMaxOnly") return TransformMethod::MinMaxOnly;
  if (text == "DecileToCategorical") return TransformMethod::DecileToCategorical;
  throw SchemaError("unknown transform '" + std::string(text) + "'");
}

std::optional<std::size_t> VariableSpec::class_index(std::string_view label) const {
  for (std::size_t k = 0; k < class_labels.size(); ++k) {
    if (class_labels[k] == label) return k;
  }
  return std::nullopt;
}

std::optional<std::size_t> DatasetSchema::index_of(std::string_view name) const {
  for (std::size_t v = 0; v < variables.size(); ++v) {
    if (variables[v].name == name) return v;
  }
  return std::nullopt;
}

const VariableSpec& DatasetSchema::variable(std::string_view name) const {
  const auto v = index_of(name);
  if (!v) throw SchemaError("unknown variable '" + std::string(name) + "'");
  return variables[*v];
}

std::vector<std::string> validate_schema(const DatasetSchema& schema) {
  std::vector<std::string> errors;
  if (schema.variables.empty()) errors.emplace_back("no variables");
  if (schema.sequence_length == 0) errors.emplace_back("sequence_length must be positive");
  if (schema.latent_dim == 0) errors.emplace_back("latent_dim must be positive");
  if (schema.hidden_dim == 0) errors.emplace_back("hidden_dim must be positive");
  if (schema.embed_dim_binary == 0) errors.emplace_back("embed_dim_binary must be positive");
  if (schema.embed_dim_categorical == 0) {
    errors.emplace_back("embed_dim_categorical must be positive");
  }

  std::set<std::string> seen;
  for (const auto& var : schema.variables) {
    const std::string who = "variable '" + var.name + "': ";
    if (var.name.empty()) errors.emplace_back("variable with empty name");
    if (!seen.insert(var.name).second) errors.push_back(who + "duplicate name");
    const std::size_t k = var.class_count();
    switch (var.kind) {
      case VariableKind::Numeric:
        if (k != 0) errors.push_back(who + "class count must be 0 for Numeric");
        break;
      case VariableKind::Binary:
        if (k != 2) {
          errors.push_back(who + "class count must be exactly 2 for Binary, got " +
                           std::to_string(k));
        }
        break;
      case VariableKind::Categorical:
        if (k < 2) {
          errors.push_back(who + "class count must be >= 2 for Categorical, got " +
                           std::to_string(k));
        }
        break;
    }
    if (std::set<std::string>(var.class_labels.begin(), var.class_labels.end()).size() != k) {
      errors.push_back(who + "duplicate class labels");
    }
    if (var.transform == TransformMethod::DecileToCategorical && !var.is_numeric()) {
      errors.push_back(who + "DecileToCategorical requires a Numeric declaration");
    }
  }
  return errors;
}

void require_valid(const DatasetSchema& schema) {
  const auto errors = validate_schema(schema);
  if (errors.empty()) return;
  std::ostringstream msg;
  msg << "invalid schema:";
  for (const auto& e : errors) msg << "\n  - " << e;
  throw SchemaError(msg.str());
}

std::size_t encoded_size(const VariableSpec& variable) {
  return variable.is_numeric() ? 1 : variable.class_count();
}

std::size_t embedded_size(const DatasetSchema& schema, const VariableSpec& variable) {
  switch (variable.kind) {
    case VariableKind::Numeric: return 1;
    case VariableKind::Binary: return schema.embed_dim_binary;
    case VariableKind::Categorical: return schema.embed_dim_categorical;
  }
  return 0;
}

std::size_t encoded_width(const DatasetSchema& schema) {
  std::size_t w = 0;
  for (const auto& v : schema.variables) w += encoded_size(v);
  return w;
}

std::size_t embedded_width(const DatasetSchema& schema) {
  std::size_t w = 0;
  for (const auto& v : schema.variables) w += embedded_size(schema, v);
  return w;
}

nlohmann::json to_json(const DatasetSchema& schema) {
  nlohmann::json vars = nlohmann::json::array();
  for (const auto& v : schema.variables) {
    vars.push_back({
        {"name", v.name},
        {"kind", std::string(to_string(v.kind))},
        {"class_labels", v.class_labels},
        {"transform", std::string(to_string(v.transform))},
        {"unit", v.unit},
        {"is_quasi_identifier", v.is_quasi_identifier},
        {"is_measurement_flag", v.is_measurement_flag},
    });
  }
  return {
      {"variables", vars},
      {"sequence_length", schema.sequence_length},
      {"latent_dim", schema.latent_dim},
      {"hidden_dim", schema.hidden_dim},
      {"embed_dim_binary", schema.embed_dim_binary},
      {"embed_dim_categorical", schema.embed_dim_categorical},
  };
}

DatasetSchema schema_from_json(const nlohmann::json& j) {
  try {
    DatasetSchema s;
    s.sequence_length = j.at("sequence_length").get<std::size_t>();
    s.latent_dim = j.value("latent_dim", std::size_t{128});
    s.hidden_dim = j.value("hidden_dim", std::size_t{128});
    s.embed_dim_binary = j.value("embed_dim_binary", std::size_t{2});
    s.embed_dim_categorical = j.value("embed_dim_categorical", std::size_t{4});
    for (const auto& jv : j.at("variables")) {
      VariableSpec v;
      v.name = jv.at("name").get<std::string>();
      v.kind = parse_variable_kind(jv.at("kind").get<std::string>());
      v.class_labels = jv.value("class_labels", std::vector<std::string>{});
      if (v.kind == VariableKind::Binary && v.class_labels.empty()) {
        v.class_labels = {"False", "True"};
      }
      v.transform = parse_transform_method(jv.value("transform", std::string("MinMaxOnly")));
      v.unit = jv.value("unit", std::string{});
      v.is_quasi_identifier = jv.value("is_quasi_identifier", false);
      v.is_measurement_flag = jv.value("is_measurement_flag", false);
      s.variables.push_back(std::move(v));
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed schema: ") + e.what());
  }
}

DatasetSchema load_schema(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open schema file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("cannot parse schema file " + path.string() + ": " + e.what());
  }
  DatasetSchema s = schema_from_json(j);
  require_valid(s);
  return s;
}

void save_schema(const DatasetSchema& schema, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw SchemaError("cannot write schema file " + path.string());
  out << to_json(schema).dump(2) << '\n';
}

std::uint64_t schema_hash(const DatasetSchema& schema) {
  const std::string text = to_json(schema).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace synthgym
