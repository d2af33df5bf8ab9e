#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "synthgym/panel.hpp"
#include "synthgym/schema.hpp"

namespace synthgym {

// Box-Cox power transform and its inverse; lambda == 0 is the log limit.
double boxcox(double x, double lambda);
double boxcox_inverse(double y, double lambda);
/// Profile log-likelihood of the Box-Cox model for strictly positive data.
double boxcox_log_likelihood(std::span<const double> x, double lambda);
/// Lambda maximising the log-likelihood on [-5, 5] (coarse grid, then golden section).
double fit_boxcox_lambda(std::span<const double> x);

inline constexpr std::size_t kDecileCount = 10;

/// Fitted per-variable mapping from clinical units to [0, 1] (or to decile classes).
struct FittedTransform {
  std::string variable;
  TransformMethod method = TransformMethod::MinMaxOnly;
  double boxcox_lambda = 1.0;
  double shift = 0.0;
  double minmax_min = 0.0;
  double minmax_range = 1.0;
  std::vector<double> decile_cuts;
  double data_min = 0.0;
  double data_max = 0.0;

  /// Power transform after the positivity shift (identity for MinMaxOnly).
  double power(double x) const;
  double power_inverse(double y) const;
  /// Clinical value to the unit interval (not clamped).
  double forward(double x) const;
  /// Unit-interval value back to clinical units; the input is clamped to [0, 1].
  double inverse(double u) const;

  /// Decile class 0..9 with half-open bins [cut_{k-1}, cut_k).
  std::size_t bin(double x) const;
  /// Midpoint of a decile bin; the outer bins use the fitted data range.
  double bin_representative(std::size_t k) const;
};

FittedTransform fit_transform(std::span<const double> values, TransformMethod method,
                              std::string variable = {});
FittedTransform fit_deciles(std::span<const double> values, std::string variable = {});

/// Transforms fitted on a real panel. DecileToCategorical variables are rewritten
/// to 10-class categoricals (labels C1..C10) in the effective schema.
struct TransformSet {
  DatasetSchema declared;
  DatasetSchema effective;
  /// Indexed by the effective schema's variables; present for numeric and decile variables.
  std::vector<std::optional<FittedTransform>> transforms;

  std::size_t decile_variable_count() const;
};

TransformSet fit_transforms(const Panel& real);
/// Maps a panel over the declared schema onto the effective schema (binning deciles).
/// Panels already on the effective schema are returned unchanged.
Panel to_effective(const Panel& panel, const TransformSet& transforms);

nlohmann::json to_json(const TransformSet& transforms);
TransformSet transforms_from_json(const nlohmann::json& j);
void save_transforms(const TransformSet& transforms, const std::filesystem::path& path);
TransformSet load_transforms(const std::filesystem::path& path);

struct ActivationSegment {
  enum class Kind { Sigmoid, Softmax };
  Kind kind;
  std::size_t offset;
  std::size_t width;
};

/// One segment per variable in schema order: sigmoid for numerics, softmax blocks otherwise.
std::vector<ActivationSegment> activation_layout(const DatasetSchema& schema);

/// N patients x T steps x O encoded dims, row-major; padding rows are zero.
struct EncodedTensor {
  std::shared_ptr<const DatasetSchema> schema;
  std::vector<ActivationSegment> layout;
  std::size_t patients = 0;
  std::size_t steps = 0;
  std::size_t width = 0;
  std::vector<double> data;
  std::vector<std::size_t> lengths;
  std::vector<std::string> ids;

  static EncodedTensor zeros(std::shared_ptr<const DatasetSchema> schema, std::size_t patients,
                             std::size_t steps);

  double& at(std::size_t n, std::size_t t, std::size_t d) {
    return data[(n * steps + t) * width + d];
  }
  double at(std::size_t n, std::size_t t, std::size_t d) const {
    return data[(n * steps + t) * width + d];
  }
  std::span<const double> row(std::size_t n, std::size_t t) const {
    return {data.data() + (n * steps + t) * width, width};
  }
};

struct ClampReport {
  std::size_t clamped = 0;
};

/// Numeric cells through their fitted transform, class cells to exact one-hot blocks.
EncodedTensor encode_panel(const Panel& panel, const TransformSet& transforms,
                           ClampReport* clamps = nullptr);
/// Argmax per block (ties to the lowest index), inverse transforms for numerics.
Panel decode_panel(const EncodedTensor& tensor, const TransformSet& transforms);

/// Checks numeric dims in [0,1] and blocks nonnegative summing to 1 within tol.
std::vector<std::string> check_encoded(const EncodedTensor& tensor, double tol = 1e-6);

void save_encoded(const EncodedTensor& tensor, const std::filesystem::path& path);
EncodedTensor load_encoded(const std::filesystem::path& path);

}  // namespace synthgym
