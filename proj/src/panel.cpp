#include "synthgym/panel.hpp"

#include "synthgym/error.hpp"

namespace synthgym {

Panel::Panel(DatasetSchema schema)
    : schema_(std::make_shared<const DatasetSchema>(std::move(schema))) {}

Panel::Panel(std::shared_ptr<const DatasetSchema> schema) : schema_(std::move(schema)) {
  if (!schema_) throw SchemaError("panel requires a schema");
}

std::size_t Panel::add_patient(std::string id, std::size_t length) {
  ids_.push_back(std::move(id));
  lengths_.push_back(length);
  cells_.emplace_back(length * variable_count(), kMissing);
  return ids_.size() - 1;
}

void Panel::truncate(std::size_t patient, std::size_t new_length) {
  if (new_length > lengths_[patient]) throw DataError("truncate cannot extend a record");
  lengths_[patient] = new_length;
  cells_[patient].resize(new_length * variable_count());
}

std::vector<double> Panel::pooled_column(std::size_t var) const {
  std::vector<double> out;
  out.reserve(total_rows());
  for (std::size_t p = 0; p < patient_count(); ++p) {
    for (std::size_t t = 0; t < lengths_[p]; ++t) out.push_back(at(p, t, var));
  }
  return out;
}

std::size_t Panel::total_rows() const {
  std::size_t n = 0;
  for (const auto l : lengths_) n += l;
  return n;
}

bool Panel::same_cells(const Panel& other) const {
  if (ids_ != other.ids_ || lengths_ != other.lengths_) return false;
  if (variable_count() != other.variable_count()) return false;
  for (std::size_t p = 0; p < cells_.size(); ++p) {
    const auto& a = cells_[p];
    const auto& b = other.cells_[p];
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (is_missing(a[i]) && is_missing(b[i])) continue;
      if (a[i] != b[i]) return false;
    }
  }
  return true;
}

std::vector<std::string> validate_panel(const Panel& panel, bool allow_missing) {
  std::vector<std::string> errors;
  const auto& schema = panel.schema();
  for (std::size_t p = 0; p < panel.patient_count(); ++p) {
    const std::size_t len = panel.length(p);
    if (len < 1 || len > schema.sequence_length) {
      errors.push_back("patient '" + panel.id(p) + "': length " + std::to_string(len) +
                       " outside [1, " + std::to_string(schema.sequence_length) + "]");
    }
    for (std::size_t t = 0; t < len; ++t) {
      for (std::size_t v = 0; v < panel.variable_count(); ++v) {
        const double cell = panel.at(p, t, v);
        const auto& var = schema.variables[v];
        if (is_missing(cell)) {
          if (!allow_missing) {
            errors.push_back("patient '" + panel.id(p) + "': missing " + var.name + " at t=" +
                             std::to_string(t));
          }
          continue;
        }
        if (var.is_numeric()) continue;
        if (cell < 0 || cell != std::floor(cell) ||
            static_cast<std::size_t>(cell) >= var.class_count()) {
          errors.push_back("patient '" + panel.id(p) + "': class index out of range for " +
                           var.name);
        }
      }
    }
  }
  return errors;
}

}  // namespace synthgym
