#include "synthgym/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "binary_io.hpp"
#include "synthgym/error.hpp"

namespace synthgym {

double boxcox(double x, double lambda) {
  if (lambda == 0.0) return std::log(x);
  return std::expm1(lambda * std::log(x)) / lambda;
}

double boxcox_inverse(double y, double lambda) {
  if (lambda == 0.0) return std::exp(y);
  return std::exp(std::log1p(lambda * y) / lambda);
}

double boxcox_log_likelihood(std::span<const double> x, double lambda) {
  const double n = static_cast<double>(x.size());
  double sum_log = 0.0;
  double mean = 0.0;
  for (const double v : x) {
    sum_log += std::log(v);
    mean += boxcox(v, lambda);
  }
  mean /= n;
  double var = 0.0;
  for (const double v : x) {
    const double d = boxcox(v, lambda) - mean;
    var += d * d;
  }
  var /= n;
  if (!(var > 0.0) || !std::isfinite(var)) return -std::numeric_limits<double>::infinity();
  return (lambda - 1.0) * sum_log - 0.5 * n * std::log(var);
}

double fit_boxcox_lambda(std::span<const double> x) {
  constexpr double lo = -5.0;
  constexpr double hi = 5.0;
  constexpr double step = 0.1;
  double best = lo;
  double best_ll = -std::numeric_limits<double>::infinity();
  for (int i = 0; i <= 100; ++i) {
    const double lam = lo + step * i;
    const double ll = boxcox_log_likelihood(x, lam);
    if (ll > best_ll) {
      best_ll = ll;
      best = lam;
    }
  }
  // Golden-section refinement inside the bracketing grid cells.
  double a = std::max(lo, best - step);
  double b = std::min(hi, best + step);
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - g * (b - a);
  double d = a + g * (b - a);
  double fc = boxcox_log_likelihood(x, c);
  double fd = boxcox_log_likelihood(x, d);
  while (b - a > 1e-6) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = boxcox_log_likelihood(x, c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = boxcox_log_likelihood(x, d);
    }
  }
  const double refined = 0.5 * (a + b);
  return boxcox_log_likelihood(x, refined) >= best_ll ? refined : best;
}

double FittedTransform::power(double x) const {
  switch (method) {
    case TransformMethod::BoxCoxMinMax: return boxcox(x + shift, boxcox_lambda);
    case TransformMethod::LogMinMax: return std::log(x + shift);
    case TransformMethod::MinMaxOnly: return x;
    case TransformMethod::DecileToCategorical: break;
  }
  throw DataError("decile transform has no power form (" + variable + ")");
}

double FittedTransform::power_inverse(double y) const {
  switch (method) {
    case TransformMethod::BoxCoxMinMax: return boxcox_inverse(y, boxcox_lambda) - shift;
    case TransformMethod::LogMinMax: return std::exp(y) - shift;
    case TransformMethod::MinMaxOnly: return y;
    case TransformMethod::DecileToCategorical: break;
  }
  throw DataError("decile transform has no power form (" + variable + ")");
}

double FittedTransform::forward(double x) const {
  return (power(x) - minmax_min) / minmax_range;
}

double FittedTransform::inverse(double u) const {
  const double clamped = std::clamp(u, 0.0, 1.0);
  return power_inverse(minmax_min + clamped * minmax_range);
}

std::size_t FittedTransform::bin(double x) const {
  return static_cast<std::size_t>(
      std::upper_bound(decile_cuts.begin(), decile_cuts.end(), x) - decile_cuts.begin());
}

double FittedTransform::bin_representative(std::size_t k) const {
  const double lo = k == 0 ? data_min : decile_cuts.at(k - 1);
  const double hi = k + 1 >= kDecileCount ? data_max : decile_cuts.at(k);
  return 0.5 * (lo + hi);
}

namespace {

std::vector<double> finite_values(std::span<const double> values) {
  std::vector<double> out;
  out.reserve(values.size());
  for (const double v : values) {
    if (std::isfinite(v)) out.push_back(v);
  }
  return out;
}

std::size_t distinct_count(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return static_cast<std::size_t>(std::unique(v.begin(), v.end()) - v.begin());
}

}  // namespace

FittedTransform fit_transform(std::span<const double> values, TransformMethod method,
                              std::string variable) {
  if (method == TransformMethod::DecileToCategorical) {
    return fit_deciles(values, std::move(variable));
  }
  const auto x = finite_values(values);
  if (distinct_count(x) < 2) {
    throw DataError("degenerate column '" + variable + "' (fewer than 2 distinct values)");
  }
  FittedTransform ft;
  ft.variable = std::move(variable);
  ft.method = method;
  const auto [mn, mx] = std::minmax_element(x.begin(), x.end());
  ft.data_min = *mn;
  ft.data_max = *mx;

  if (method != TransformMethod::MinMaxOnly) {
    ft.shift = ft.data_min <= 0.0 ? 1e-6 - ft.data_min : 0.0;
    if (!(ft.data_min + ft.shift > 0.0)) {
      throw DataError("nonpositive values in '" + ft.variable + "' for log/Box-Cox");
    }
  }
  if (method == TransformMethod::BoxCoxMinMax) {
    std::vector<double> shifted(x);
    for (auto& v : shifted) v += ft.shift;
    ft.boxcox_lambda = fit_boxcox_lambda(shifted);
  }

  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const double v : x) {
    const double y = ft.power(v);
    lo = std::min(lo, y);
    hi = std::max(hi, y);
  }
  if (!(hi > lo) || !std::isfinite(hi - lo)) {
    throw DataError("degenerate column '" + ft.variable + "' after transform");
  }
  ft.minmax_min = lo;
  ft.minmax_range = hi - lo;
  return ft;
}

FittedTransform fit_deciles(std::span<const double> values, std::string variable) {
  auto x = finite_values(values);
  if (distinct_count(x) < kDecileCount) {
    throw DataError("decile binning of '" + variable + "' needs at least 10 distinct values");
  }
  std::sort(x.begin(), x.end());
  FittedTransform ft;
  ft.variable = std::move(variable);
  ft.method = TransformMethod::DecileToCategorical;
  ft.data_min = x.front();
  ft.data_max = x.back();
  const double n1 = static_cast<double>(x.size() - 1);
  for (std::size_t k = 1; k < kDecileCount; ++k) {
    // Linear interpolation between order statistics.
    const double pos = n1 * static_cast<double>(k) / static_cast<double>(kDecileCount);
    const auto i = static_cast<std::size_t>(std::floor(pos));
    const double frac = pos - static_cast<double>(i);
    const double q = i + 1 < x.size() ? x[i] + frac * (x[i + 1] - x[i]) : x[i];
    ft.decile_cuts.push_back(q);
  }
  for (std::size_t k = 1; k < ft.decile_cuts.size(); ++k) {
    if (!(ft.decile_cuts[k] > ft.decile_cuts[k - 1])) {
      throw DataError("decile cuts of '" + ft.variable + "' are not strictly ascending");
    }
  }
  return ft;
}

std::size_t TransformSet::decile_variable_count() const {
  std::size_t n = 0;
  for (const auto& t : transforms) {
    if (t && t->method == TransformMethod::DecileToCategorical) ++n;
  }
  return n;
}

TransformSet fit_transforms(const Panel& real) {
  TransformSet set;
  set.declared = real.schema();
  set.effective = real.schema();
  set.transforms.resize(real.variable_count());
  for (std::size_t v = 0; v < real.variable_count(); ++v) {
    const auto& var = set.declared.variables[v];
    if (!var.is_numeric()) continue;
    const auto column = real.pooled_column(v);
    set.transforms[v] = fit_transform(column, var.transform, var.name);
    if (var.transform == TransformMethod::DecileToCategorical) {
      auto& eff = set.effective.variables[v];
      eff.kind = VariableKind::Categorical;
      eff.transform = TransformMethod::MinMaxOnly;
      eff.class_labels.clear();
      for (std::size_t k = 1; k <= kDecileCount; ++k) {
        eff.class_labels.push_back("C" + std::to_string(k));
      }
    }
  }
  return set;
}

Panel to_effective(const Panel& panel, const TransformSet& transforms) {
  if (panel.schema() == transforms.effective) return panel;
  if (!(panel.schema() == transforms.declared)) {
    throw SchemaError("panel schema matches neither the declared nor the effective schema");
  }
  Panel out(transforms.effective);
  for (std::size_t p = 0; p < panel.patient_count(); ++p) {
    const std::size_t q = out.add_patient(panel.id(p), panel.length(p));
    for (std::size_t t = 0; t < panel.length(p); ++t) {
      for (std::size_t v = 0; v < panel.variable_count(); ++v) {
        const double cell = panel.at(p, t, v);
        const auto& ft = transforms.transforms[v];
        if (ft && ft->method == TransformMethod::DecileToCategorical && !is_missing(cell)) {
          out.at(q, t, v) = static_cast<double>(ft->bin(cell));
        } else {
          out.at(q, t, v) = cell;
        }
      }
    }
  }
  return out;
}

nlohmann::json to_json(const TransformSet& transforms) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& t : transforms.transforms) {
    if (!t) {
      list.push_back(nullptr);
      continue;
    }
    list.push_back({
        {"variable", t->variable},
        {"method", std::string(to_string(t->method))},
        {"boxcox_lambda", t->boxcox_lambda},
        {"shift", t->shift},
        {"minmax_min", t->minmax_min},
        {"minmax_range", t->minmax_range},
        {"decile_cuts", t->decile_cuts},
        {"data_min", t->data_min},
        {"data_max", t->data_max},
    });
  }
  return {{"format", "synthgym-transforms"},
          {"version", 1},
          {"declared_schema", to_json(transforms.declared)},
          {"effective_schema", to_json(transforms.effective)},
          {"transforms", list}};
}

TransformSet transforms_from_json(const nlohmann::json& j) {
  try {
    TransformSet set;
    set.declared = schema_from_json(j.at("declared_schema"));
    set.effective = schema_from_json(j.at("effective_schema"));
    for (const auto& jt : j.at("transforms")) {
      if (jt.is_null()) {
        set.transforms.emplace_back();
        continue;
      }
      FittedTransform t;
      t.variable = jt.at("variable").get<std::string>();
      t.method = parse_transform_method(jt.at("method").get<std::string>());
      t.boxcox_lambda = jt.at("boxcox_lambda").get<double>();
      t.shift = jt.at("shift").get<double>();
      t.minmax_min = jt.at("minmax_min").get<double>();
      t.minmax_range = jt.at("minmax_range").get<double>();
      t.decile_cuts = jt.at("decile_cuts").get<std::vector<double>>();
      t.data_min = jt.at("data_min").get<double>();
      t.data_max = jt.at("data_max").get<double>();
      set.transforms.push_back(std::move(t));
    }
    if (set.transforms.size() != set.effective.variables.size()) {
      throw DataError("transform count does not match the schema");
    }
    return set;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed transforms file: ") + e.what());
  }
}

void save_transforms(const TransformSet& transforms, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write transforms file " + path.string());
  out << to_json(transforms).dump(2) << '\n';
}

TransformSet load_transforms(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open transforms file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("cannot parse transforms file " + path.string() + ": " + e.what());
  }
  return transforms_from_json(j);
}

std::vector<ActivationSegment> activation_layout(const DatasetSchema& schema) {
  std::vector<ActivationSegment> layout;
  std::size_t offset = 0;
  for (const auto& v : schema.variables) {
    const std::size_t w = encoded_size(v);
    layout.push_back({v.is_numeric() ? ActivationSegment::Kind::Sigmoid
                                     : ActivationSegment::Kind::Softmax,
                      offset, w});
    offset += w;
  }
  return layout;
}

EncodedTensor EncodedTensor::zeros(std::shared_ptr<const DatasetSchema> schema,
                                   std::size_t patients, std::size_t steps) {
  EncodedTensor t;
  t.layout = activation_layout(*schema);
  t.width = encoded_width(*schema);
  t.schema = std::move(schema);
  t.patients = patients;
  t.steps = steps;
  t.data.assign(patients * steps * t.width, 0.0);
  t.lengths.assign(patients, steps);
  t.ids.resize(patients);
  return t;
}

EncodedTensor encode_panel(const Panel& input, const TransformSet& transforms,
                           ClampReport* clamps) {
  const Panel panel = to_effective(input, transforms);
  const auto& schema = panel.schema();
  EncodedTensor out =
      EncodedTensor::zeros(panel.schema_ptr(), panel.patient_count(), schema.sequence_length);
  std::size_t clamped = 0;
  for (std::size_t p = 0; p < panel.patient_count(); ++p) {
    out.ids[p] = panel.id(p);
    out.lengths[p] = panel.length(p);
    for (std::size_t t = 0; t < panel.length(p); ++t) {
      for (std::size_t v = 0; v < panel.variable_count(); ++v) {
        const double cell = panel.at(p, t, v);
        const auto& var = schema.variables[v];
        const auto& seg = out.layout[v];
        if (is_missing(cell)) {
          throw DataError("cannot encode missing " + var.name + " for patient '" + panel.id(p) +
                          "' at t=" + std::to_string(t));
        }
        if (var.is_numeric()) {
          const auto& ft = transforms.transforms[v];
          if (!ft) throw DataError("no fitted transform for '" + var.name + "'");
          double u = ft->forward(cell);
          if (u < 0.0 || u > 1.0 || !std::isfinite(u)) {
            ++clamped;
            u = std::isfinite(u) ? std::clamp(u, 0.0, 1.0) : 0.0;
          }
          out.at(p, t, seg.offset) = u;
        } else {
          out.at(p, t, seg.offset + static_cast<std::size_t>(cell)) = 1.0;
        }
      }
    }
  }
  if (clamps) clamps->clamped += clamped;
  return out;
}

Panel decode_panel(const EncodedTensor& tensor, const TransformSet& transforms) {
  if (!(*tensor.schema == transforms.effective)) {
    throw SchemaError("encoded tensor schema does not match the transforms");
  }
  Panel out(tensor.schema);
  const auto& schema = *tensor.schema;
  for (std::size_t n = 0; n < tensor.patients; ++n) {
    const std::string id = n < tensor.ids.size() && !tensor.ids[n].empty()
                               ? tensor.ids[n]
                               : std::to_string(n);
    const std::size_t p = out.add_patient(id, tensor.lengths[n]);
    for (std::size_t t = 0; t < tensor.lengths[n]; ++t) {
      for (std::size_t v = 0; v < schema.variables.size(); ++v) {
        const auto& seg = tensor.layout[v];
        if (schema.variables[v].is_numeric()) {
          out.at(p, t, v) = transforms.transforms[v]->inverse(tensor.at(n, t, seg.offset));
        } else {
          std::size_t best = 0;
          for (std::size_t k = 1; k < seg.width; ++k) {
            if (tensor.at(n, t, seg.offset + k) > tensor.at(n, t, seg.offset + best)) best = k;
          }
          out.at(p, t, v) = static_cast<double>(best);
        }
      }
    }
  }
  return out;
}

std::vector<std::string> check_encoded(const EncodedTensor& tensor, double tol) {
  std::vector<std::string> errors;
  for (std::size_t n = 0; n < tensor.patients; ++n) {
    for (std::size_t t = 0; t < tensor.lengths[n]; ++t) {
      for (const auto& seg : tensor.layout) {
        if (seg.kind == ActivationSegment::Kind::Sigmoid) {
          const double u = tensor.at(n, t, seg.offset);
          if (!(u >= 0.0 && u <= 1.0)) {
            errors.push_back("numeric dim " + std::to_string(seg.offset) + " out of [0,1]");
          }
          continue;
        }
        double sum = 0.0;
        for (std::size_t k = 0; k < seg.width; ++k) {
          const double p = tensor.at(n, t, seg.offset + k);
          if (!(p >= 0.0)) errors.push_back("negative block entry");
          sum += p;
        }
        if (!(std::abs(sum - 1.0) <= tol)) {
          errors.push_back("block at dim " + std::to_string(seg.offset) + " sums to " +
                           std::to_string(sum));
        }
      }
    }
  }
  return errors;
}

namespace {
constexpr char kEncodedMagic[9] = "SGENC001";
}

void save_encoded(const EncodedTensor& tensor, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write encoded file " + path.string());
  out.write(kEncodedMagic, 8);
  binio::write_u64(out, schema_hash(*tensor.schema));
  binio::write_string(out, to_json(*tensor.schema).dump());
  binio::write_u64(out, tensor.patients);
  binio::write_u64(out, tensor.steps);
  binio::write_u64(out, tensor.width);
  for (std::size_t n = 0; n < tensor.patients; ++n) {
    binio::write_string(out, tensor.ids[n]);
    binio::write_u64(out, tensor.lengths[n]);
  }
  binio::write_doubles(out, tensor.data.data(), tensor.data.size());
  if (!out) throw DataError("error while writing " + path.string());
}

EncodedTensor load_encoded(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open encoded file " + path.string());
  binio::expect_magic(in, kEncodedMagic, "encoded tensor");
  const std::uint64_t hash = binio::read_u64(in);
  auto schema = std::make_shared<const DatasetSchema>(
      schema_from_json(nlohmann::json::parse(binio::read_string(in))));
  if (schema_hash(*schema) != hash) throw DataError("encoded file schema hash mismatch");
  const std::size_t patients = binio::read_u64(in);
  const std::size_t steps = binio::read_u64(in);
  const std::size_t width = binio::read_u64(in);
  if (width != encoded_width(*schema) || steps != schema->sequence_length) {
    throw DataError("encoded file dimensions disagree with its schema");
  }
  EncodedTensor t = EncodedTensor::zeros(schema, patients, steps);
  for (std::size_t n = 0; n < patients; ++n) {
    t.ids[n] = binio::read_string(in);
    t.lengths[n] = binio::read_u64(in);
  }
  binio::read_doubles(in, t.data.data(), t.data.size());
  return t;
}

}  // namespace synthgym
