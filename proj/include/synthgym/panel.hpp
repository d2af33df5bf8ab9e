#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "synthgym/schema.hpp"

namespace synthgym {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
inline bool is_missing(double cell) { return std::isnan(cell); }

/// Patients x timesteps x variables. Numeric cells hold real values, binary and
/// categorical cells hold class indices; a NaN cell is missing. Each patient
/// stores only its effective length, the remainder up to T is implicit padding.
class Panel {
 public:
  explicit Panel(DatasetSchema schema);
  explicit Panel(std::shared_ptr<const DatasetSchema> schema);

  const DatasetSchema& schema() const { return *schema_; }
  const std::shared_ptr<const DatasetSchema>& schema_ptr() const { return schema_; }

  std::size_t patient_count() const { return ids_.size(); }
  std::size_t variable_count() const { return schema_->variables.size(); }

  /// Appends a patient with all cells missing; returns its index.
  std::size_t add_patient(std::string id, std::size_t length);

  const std::string& id(std::size_t patient) const { return ids_[patient]; }
  std::size_t length(std::size_t patient) const { return lengths_[patient]; }
  const std::vector<std::string>& ids() const { return ids_; }

  double at(std::size_t patient, std::size_t t, std::size_t var) const {
    return cells_[patient][t * variable_count() + var];
  }
  double& at(std::size_t patient, std::size_t t, std::size_t var) {
    return cells_[patient][t * variable_count() + var];
  }
  std::size_t class_at(std::size_t patient, std::size_t t, std::size_t var) const {
    return static_cast<std::size_t>(at(patient, t, var));
  }

  /// Row-major length x V grid of one patient.
  std::span<const double> cells(std::size_t patient) const { return cells_[patient]; }

  /// Shortens a patient record in place; new_length must not exceed the current length.
  void truncate(std::size_t patient, std::size_t new_length);

  /// Every valid (patient, timestep) value of a variable, pooled in patient-major order.
  std::vector<double> pooled_column(std::size_t var) const;

  std::size_t total_rows() const;

  /// Cell-for-cell equality; two missing cells compare equal.
  bool same_cells(const Panel& other) const;

 private:
  std::shared_ptr<const DatasetSchema> schema_;
  std::vector<std::string> ids_;
  std::vector<std::size_t> lengths_;
  std::vector<std::vector<double>> cells_;
};

/// Checks class-index ranges and lengths; returns human-readable violations.
std::vector<std::string> validate_panel(const Panel& panel, bool allow_missing = false);

}  // namespace synthgym
