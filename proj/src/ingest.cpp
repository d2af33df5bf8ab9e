#include "synthgym/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <unordered_map>

#include "synthgym/error.hpp"

namespace synthgym {

CsvLayout CsvLayout::for_schema(const DatasetSchema& schema, std::string id_column,
                                std::string time_column) {
  CsvLayout layout;
  layout.id_column = std::move(id_column);
  layout.time_column = std::move(time_column);
  for (const auto& v : schema.variables) layout.value_columns.push_back(v.name);
  return layout;
}

namespace csv {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

std::string format_number(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

namespace {
std::string quote(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (const char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}
}  // namespace

}  // namespace csv

namespace {

bool parse_double(const std::string& text, double& out) {
  const char* first = text.data();
  const char* last = text.data() + text.size();
  while (first < last && *first == ' ') ++first;
  while (last > first && last[-1] == ' ') --last;
  if (first == last) return false;
  const auto res = std::from_chars(first, last, out);
  return res.ec == std::errc() && res.ptr == last;
}

struct RawRow {
  double time;
  std::vector<std::string> fields;
};

}  // namespace

Panel read_csv_panel(std::istream& in, const DatasetSchema& schema, const CsvLayout& layout) {
  std::vector<std::string> sorted_layout = layout.value_columns;
  std::vector<std::string> sorted_schema;
  for (const auto& v : schema.variables) sorted_schema.push_back(v.name);
  std::sort(sorted_layout.begin(), sorted_layout.end());
  std::sort(sorted_schema.begin(), sorted_schema.end());
  if (sorted_layout != sorted_schema) {
    throw DataError("CSV layout value columns do not match the schema variables");
  }

  std::string line;
  if (!std::getline(in, line)) throw DataError("CSV is empty (missing header)");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = csv::split_line(line);
  std::unordered_map<std::string, std::size_t> column_of;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (!column_of.emplace(header[c], c).second) {
      throw DataError("duplicate CSV column '" + header[c] + "'");
    }
  }
  auto find_column = [&](const std::string& name) {
    const auto it = column_of.find(name);
    if (it == column_of.end()) throw DataError("missing column '" + name + "'");
    return it->second;
  };
  const std::size_t id_col = find_column(layout.id_column);
  const std::size_t time_col = find_column(layout.time_column);
  std::vector<std::size_t> var_col(schema.variables.size());
  for (std::size_t v = 0; v < schema.variables.size(); ++v) {
    var_col[v] = find_column(schema.variables[v].name);
  }
  if (header.size() != schema.variables.size() + 2) {
    for (const auto& h : header) {
      if (h != layout.id_column && h != layout.time_column && !schema.index_of(h)) {
        throw DataError("unexpected column '" + h + "'");
      }
    }
  }

  std::vector<std::string> order;
  std::unordered_map<std::string, std::vector<RawRow>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto fields = csv::split_line(line);
    if (fields.size() != header.size()) {
      throw DataError("line " + std::to_string(line_no) + ": expected " +
                      std::to_string(header.size()) + " fields, got " +
                      std::to_string(fields.size()));
    }
    double time = 0.0;
    if (!parse_double(fields[time_col], time)) {
      throw DataError("line " + std::to_string(line_no) + ": ragged time index '" +
                      fields[time_col] + "'");
    }
    const std::string& id = fields[id_col];
    auto [it, inserted] = rows.try_emplace(id);
    if (inserted) order.push_back(id);
    it->second.push_back({time, std::move(fields)});
  }

  Panel panel(schema);
  for (const auto& id : order) {
    auto& patient_rows = rows[id];
    std::stable_sort(patient_rows.begin(), patient_rows.end(),
                     [](const RawRow& a, const RawRow& b) { return a.time < b.time; });
    for (std::size_t r = 1; r < patient_rows.size(); ++r) {
      if (patient_rows[r].time == patient_rows[r - 1].time) {
        throw DataError("patient '" + id + "': ragged time index (duplicate time " +
                        csv::format_number(patient_rows[r].time) + ")");
      }
    }
    if (patient_rows.size() > schema.sequence_length) {
      throw DataError("patient '" + id + "': " + std::to_string(patient_rows.size()) +
                      " rows exceed sequence_length " +
                      std::to_string(schema.sequence_length));
    }
    const std::size_t p = panel.add_patient(id, patient_rows.size());
    for (std::size_t t = 0; t < patient_rows.size(); ++t) {
      const auto& fields = patient_rows[t].fields;
      for (std::size_t v = 0; v < schema.variables.size(); ++v) {
        const auto& var = schema.variables[v];
        const std::string& text = fields[var_col[v]];
        if (text.empty()) continue;
        if (var.is_numeric()) {
          double value = 0.0;
          if (!parse_double(text, value)) {
            throw DataError("patient '" + id + "': non-numeric value '" + text + "' for " +
                            var.name);
          }
          panel.at(p, t, v) = value;
        } else {
          const auto k = var.class_index(text);
          if (!k) {
            throw DataError("patient '" + id + "': unknown class label '" + text + "' for " +
                            var.name);
          }
          panel.at(p, t, v) = static_cast<double>(*k);
        }
      }
    }
  }
  return panel;
}

Panel load_csv_panel(const std::filesystem::path& path, const DatasetSchema& schema,
                     const CsvLayout& layout) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open CSV " + path.string());
  return read_csv_panel(in, schema, layout);
}

void write_csv_panel(std::ostream& out, const Panel& panel, const CsvLayout& layout) {
  const auto& schema = panel.schema();
  std::vector<std::size_t> var_of;
  for (const auto& name : layout.value_columns) {
    const auto v = schema.index_of(name);
    if (!v) throw DataError("layout column '" + name + "' not in schema");
    var_of.push_back(*v);
  }
  out << csv::quote(layout.id_column) << ',' << csv::quote(layout.time_column);
  for (const auto& name : layout.value_columns) out << ',' << csv::quote(name);
  out << '\n';
  for (std::size_t p = 0; p < panel.patient_count(); ++p) {
    const std::string id = csv::quote(panel.id(p));
    for (std::size_t t = 0; t < panel.length(p); ++t) {
      out << id << ',' << t;
      for (const std::size_t v : var_of) {
        out << ',';
        const double cell = panel.at(p, t, v);
        if (is_missing(cell)) continue;
        const auto& var = schema.variables[v];
        if (var.is_numeric()) {
          out << csv::format_number(cell);
        } else {
          out << csv::quote(var.class_labels.at(static_cast<std::size_t>(cell)));
        }
      }
      out << '\n';
    }
  }
}

void write_csv_panel(const Panel& panel, const CsvLayout& layout,
                     const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write CSV " + path.string());
  write_csv_panel(out, panel, layout);
  if (!out) throw DataError("error while writing CSV " + path.string());
}

Panel forward_fill_with_flags(const Panel& raw, std::span<const FlagPair> pairs) {
  const auto& schema = raw.schema();
  struct Resolved {
    std::size_t var, flag;
  };
  std::vector<Resolved> resolved;
  for (const auto& pair : pairs) {
    const auto v = schema.index_of(pair.variable);
    const auto f = schema.index_of(pair.flag);
    if (!v) throw SchemaError("forward fill: unknown variable '" + pair.variable + "'");
    if (!f) throw SchemaError("forward fill: no companion flag '" + pair.flag + "'");
    if (schema.variables[*f].kind != VariableKind::Binary) {
      throw SchemaError("forward fill: flag '" + pair.flag + "' is not Binary");
    }
    resolved.push_back({*v, *f});
  }

  Panel out = raw;
  // Flags shared by several variables are True where any of them was observed.
  std::map<std::size_t, std::vector<std::size_t>> flag_users;
  for (const auto& r : resolved) flag_users[r.flag].push_back(r.var);

  for (std::size_t p = 0; p < raw.patient_count(); ++p) {
    const std::size_t len = raw.length(p);
    for (const auto& [flag, vars] : flag_users) {
      std::vector<bool> any_observed(len, false);
      for (const std::size_t v : vars) {
        std::vector<bool> observed(len, false);
        for (std::size_t t = 0; t < len; ++t) {
          const double value = raw.at(p, t, v);
          const double prior_flag = raw.at(p, t, flag);
          observed[t] = !is_missing(value) && (is_missing(prior_flag) || prior_flag != 0.0);
        }
        const auto first = std::find(observed.begin(), observed.end(), true);
        if (first == observed.end()) {
          throw DataError("forward fill: variable '" + schema.variables[v].name +
                          "' entirely missing for patient '" + raw.id(p) + "'");
        }
        double last = raw.at(p, static_cast<std::size_t>(first - observed.begin()), v);
        for (std::size_t t = 0; t < len; ++t) {
          if (observed[t]) last = raw.at(p, t, v);
          out.at(p, t, v) = last;
          if (observed[t]) any_observed[t] = true;
        }
      }
      for (std::size_t t = 0; t < len; ++t) out.at(p, t, flag) = any_observed[t] ? 1.0 : 0.0;
    }
  }
  return out;
}

Panel forward_fill_with_flags(const Panel& raw, const std::vector<std::string>& flagged_vars) {
  std::vector<FlagPair> pairs;
  for (const auto& name : flagged_vars) pairs.push_back({name, name + " (M)"});
  return forward_fill_with_flags(raw, pairs);
}

TruncationResult truncate_to_multiple(const Panel& panel, std::size_t block) {
  if (block == 0) throw DataError("truncate: block must be >= 1");
  TruncationResult result{Panel(panel.schema_ptr()), {}};
  const std::size_t nv = panel.variable_count();
  for (std::size_t p = 0; p < panel.patient_count(); ++p) {
    const std::size_t len = panel.length(p) / block * block;
    if (len == 0) {
      result.dropped_ids.push_back(panel.id(p));
      continue;
    }
    const std::size_t q = result.panel.add_patient(panel.id(p), len);
    for (std::size_t t = 0; t < len; ++t) {
      for (std::size_t v = 0; v < nv; ++v) result.panel.at(q, t, v) = panel.at(p, t, v);
    }
  }
  return result;
}

}  // namespace synthgym
