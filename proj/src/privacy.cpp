#include "synthgym/privacy.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>

#include "synthgym/error.hpp"
#include "synthgym/ingest.hpp"

namespace synthgym {

std::vector<double> flatten_record(const Panel& panel, std::size_t patient) {
  const std::size_t T = panel.schema().sequence_length;
  const std::size_t V = panel.variable_count();
  std::vector<double> out(T * V, 0.0);
  const auto cells = panel.cells(patient);
  for (std::size_t i = 0; i < cells.size(); ++i) out[i] = is_missing(cells[i]) ? 0.0 : cells[i];
  return out;
}

namespace {

std::vector<std::vector<double>> flatten_all(const Panel& panel) {
  std::vector<std::vector<double>> out;
  out.reserve(panel.patient_count());
  for (std::size_t p = 0; p < panel.patient_count(); ++p) out.push_back(flatten_record(panel, p));
  return out;
}

void require_distance_inputs(const Panel& real, const Panel& syn) {
  if (!(real.schema() == syn.schema())) {
    throw SchemaError("real and synthetic panels use different schemas");
  }
  if (real.patient_count() == 0 || syn.patient_count() == 0) {
    throw DataError("minimum distance needs nonempty panels");
  }
}

bool better(double d, std::size_t r, std::size_t s, const DistanceResult& best) {
  if (d != best.distance) return d < best.distance;
  return r < best.real_index || (r == best.real_index && s < best.syn_index);
}

}  // namespace

DistanceResult min_euclidean_distance(const Panel& real, const Panel& syn) {
  require_distance_inputs(real, syn);
  const auto a = flatten_all(real);
  const auto b = flatten_all(syn);
  const std::size_t dim = a.front().size();
  const auto nr = static_cast<std::ptrdiff_t>(a.size());
  constexpr double inf = std::numeric_limits<double>::infinity();
  // Squared distances are accumulated in the same order as the brute-force scan; a
  // candidate is abandoned only once its partial sum already exceeds the best.
  std::vector<DistanceResult> row_best(a.size(), DistanceResult{inf, 0, 0});
#pragma omp parallel
  {
    double best = inf;
#pragma omp for schedule(dynamic, 4)
    for (std::ptrdiff_t ri = 0; ri < nr; ++ri) {
      const auto r = static_cast<std::size_t>(ri);
      DistanceResult local{inf, r, 0};
      for (std::size_t s = 0; s < b.size(); ++s) {
        const double bound = std::min(best, local.distance);
        double sum = 0.0;
        std::size_t k = 0;
        for (; k < dim; ++k) {
          const double d = a[r][k] - b[s][k];
          sum += d * d;
          if (sum > bound) break;
        }
        if (k < dim) continue;
        if (sum < local.distance) local = {sum, r, s};
      }
      row_best[r] = local;
      best = std::min(best, local.distance);
    }
  }
  DistanceResult result{inf, 0, 0};
  for (const auto& rb : row_best) {
    if (rb.distance < inf && better(rb.distance, rb.real_index, rb.syn_index, result)) result = rb;
  }
  if (result.distance == inf) throw Error("minimum distance scan found no finite pair");
  result.distance = std::sqrt(result.distance);
  return result;
}

namespace serial {

DistanceResult min_euclidean_distance(const Panel& real, const Panel& syn) {
  require_distance_inputs(real, syn);
  const auto a = flatten_all(real);
  const auto b = flatten_all(syn);
  DistanceResult best{std::numeric_limits<double>::infinity(), 0, 0};
  for (std::size_t r = 0; r < a.size(); ++r) {
    for (std::size_t s = 0; s < b.size(); ++s) {
      double sum = 0.0;
      for (std::size_t k = 0; k < a[r].size(); ++k) {
        const double d = a[r][k] - b[s][k];
        sum += d * d;
      }
      if (sum < best.distance) best = {sum, r, s};
    }
  }
  best.distance = std::sqrt(best.distance);
  return best;
}

}  // namespace serial

std::vector<QidRule> parse_qid_spec(std::string_view spec) {
  std::vector<QidRule> out;
  auto trim = [](std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
  };
  std::size_t start = 0;
  while (start <= spec.size()) {
    const std::size_t comma = std::min(spec.find(',', start), spec.size());
    std::string_view item = trim(spec.substr(start, comma - start));
    start = comma + 1;
    if (item.empty()) continue;
    QidRule rule;
    const std::size_t colon = item.rfind(':');
    if (colon != std::string_view::npos) {
      const std::string_view r = trim(item.substr(colon + 1));
      if (r == "floor") rule.rule = QidRule::Discretize::Floor;
      else if (r == "exact") rule.rule = QidRule::Discretize::Exact;
      else throw Error("unknown quasi-identifier rule '" + std::string(r) + "'");
      item = trim(item.substr(0, colon));
    }
    rule.variable = std::string(item);
    out.push_back(std::move(rule));
  }
  return out;
}

EquivalenceClassing build_equivalence_classes(const Panel& panel,
                                              const std::vector<QidRule>& qids) {
  const auto& schema = panel.schema();
  std::vector<std::size_t> idx;
  for (const auto& q : qids) {
    const auto v = schema.index_of(q.variable);
    if (!v) throw SchemaError("quasi-identifier '" + q.variable + "' is not in the schema");
    idx.push_back(*v);
  }
  EquivalenceClassing c;
  c.qids = qids;
  for (std::size_t p = 0; p < panel.patient_count(); ++p) {
    std::string key;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      if (k > 0) key += '|';
      const auto& var = schema.variables[idx[k]];
      const double cell = panel.length(p) > 0 ? panel.at(p, 0, idx[k]) : kMissing;
      if (is_missing(cell)) {
        key += "NA";
      } else if (!var.is_numeric()) {
        key += var.class_labels.at(static_cast<std::size_t>(cell));
      } else {
        const double v = qids[k].rule == QidRule::Discretize::Floor ? std::floor(cell) : cell;
        key += csv::format_number(v + 0.0);
      }
    }
    ++c.sizes[key];
    c.keys.push_back(std::move(key));
  }
  return c;
}

double synthetic_to_real_risk(const EquivalenceClassing& real, const EquivalenceClassing& syn) {
  if (syn.records() == 0) throw DataError("empty synthetic dataset");
  double sum = 0.0;
  for (const auto& key : syn.keys) {
    const auto it = real.sizes.find(key);
    if (it != real.sizes.end() && it->second >= 1) sum += 1.0 / static_cast<double>(it->second);
  }
  return sum / static_cast<double>(syn.records());
}

double population_to_sample_risk(const EquivalenceClassing& population,
                                 const EquivalenceClassing& sample) {
  if (population.records() == 0) throw DataError("empty population");
  double sum = 0.0;
  for (const auto& key : sample.keys) sum += 1.0 / static_cast<double>(sample.sizes.at(key));
  return sum / static_cast<double>(population.records());
}

nlohmann::json RiskReport::to_json() const {
  nlohmann::json cls = nlohmann::json::array();
  for (const auto& [key, counts] : classes) {
    cls.push_back({{"key", key}, {"F_s", counts.first}, {"synthetic_matches", counts.second}});
  }
  nlohmann::json j = {
      {"min_euclidean", {{"distance", min_distance.distance},
                         {"real_index", min_distance.real_index},
                         {"syn_index", min_distance.syn_index},
                         {"real_id", min_distance_real_id},
                         {"syn_id", min_distance_syn_id}}},
      {"quasi_identifiers", qids},
      {"S", synthetic_records},
      {"real_records", real_records},
      {"matched_synthetic_records", matched_records},
      {"synthetic_to_real_risk", synthetic_to_real_risk},
      {"threshold", threshold},
      {"synthetic_to_real_pass", synthetic_pass()},
      {"real_classes", cls},
      {"pass", pass()}};
  if (population_to_sample_risk) {
    j["population_to_sample_risk"] = *population_to_sample_risk;
    j["population_to_sample_pass"] = population_pass();
  }
  return j;
}

RiskReport risk_from_json(const nlohmann::json& j) {
  try {
    RiskReport r;
    r.synthetic_to_real_risk = j.at("synthetic_to_real_risk").get<double>();
    r.threshold = j.at("threshold").get<double>();
    r.synthetic_records = j.at("S").get<std::size_t>();
    r.real_records = j.at("real_records").get<std::size_t>();
    r.matched_records = j.at("matched_synthetic_records").get<std::size_t>();
    r.qids = j.at("quasi_identifiers").get<std::vector<std::string>>();
    const auto& m = j.at("min_euclidean");
    r.min_distance.distance = m.at("distance").get<double>();
    r.min_distance.real_index = m.at("real_index").get<std::size_t>();
    r.min_distance.syn_index = m.at("syn_index").get<std::size_t>();
    r.min_distance_real_id = m.at("real_id").get<std::string>();
    r.min_distance_syn_id = m.at("syn_id").get<std::string>();
    if (j.contains("population_to_sample_risk")) {
      r.population_to_sample_risk = j.at("population_to_sample_risk").get<double>();
    }
    for (const auto& c : j.at("real_classes")) {
      r.classes[c.at("key").get<std::string>()] = {c.at("F_s").get<std::size_t>(),
                                                   c.at("synthetic_matches").get<std::size_t>()};
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed risk report: ") + e.what());
  }
}

RiskReport assess_risk(const Panel& real, const Panel& syn, const std::vector<QidRule>& qids,
                       double threshold, const Panel* population) {
  RiskReport r;
  r.threshold = threshold;
  r.min_distance = min_euclidean_distance(real, syn);
  r.min_distance_real_id = real.id(r.min_distance.real_index);
  r.min_distance_syn_id = syn.id(r.min_distance.syn_index);
  const auto real_classes = build_equivalence_classes(real, qids);
  const auto syn_classes = build_equivalence_classes(syn, qids);
  r.synthetic_to_real_risk = synthetic_to_real_risk(real_classes, syn_classes);
  r.synthetic_records = syn_classes.records();
  r.real_records = real_classes.records();
  for (const auto& q : qids) r.qids.push_back(q.variable);
  for (const auto& [key, size] : real_classes.sizes) r.classes[key] = {size, 0};
  for (const auto& key : syn_classes.keys) {
    auto it = r.classes.find(key);
    if (it != r.classes.end()) {
      ++it->second.second;
      ++r.matched_records;
    }
  }
  if (population != nullptr) {
    r.population_to_sample_risk = population_to_sample_risk(
        build_equivalence_classes(*population, qids), real_classes);
  }
  return r;
}

}  // namespace synthgym
