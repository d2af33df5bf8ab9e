#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "synthgym/panel.hpp"

namespace synthgym {

/// One vector per patient: T x V cells, zero-padded beyond the record length.
/// Class cells contribute their class index, missing cells contribute 0.
std::vector<double> flatten_record(const Panel& panel, std::size_t patient);

struct DistanceResult {
  double distance = 0.0;
  std::size_t real_index = 0;
  std::size_t syn_index = 0;
};

/// Minimum Euclidean distance over all real x synthetic record pairs; ties go to
/// the lowest (real, synthetic) index pair.
DistanceResult min_euclidean_distance(const Panel& real, const Panel& syn);

struct QidRule {
  enum class Discretize { Floor, Exact };
  std::string variable;
  Discretize rule = Discretize::Floor;
};

/// Parses "age:floor,gender,weight:exact". Numeric qids default to floor.
std::vector<QidRule> parse_qid_spec(std::string_view spec);

struct EquivalenceClassing {
  std::vector<QidRule> qids;
  /// Class key of every record (patient), from its first timestep.
  std::vector<std::string> keys;
  std::map<std::string, std::size_t> sizes;

  std::size_t records() const { return keys.size(); }
};

EquivalenceClassing build_equivalence_classes(const Panel& panel, const std::vector<QidRule>& qids);

/// (1/S) sum over synthetic records of I_s / F_s, F_s the real class size.
double synthetic_to_real_risk(const EquivalenceClassing& real, const EquivalenceClassing& syn);
/// (1/P) sum over sample records of 1 / f_s, f_s the sample class size.
double population_to_sample_risk(const EquivalenceClassing& population,
                                 const EquivalenceClassing& sample);

inline constexpr double kDefaultRiskThreshold = 0.09;

struct RiskReport {
  DistanceResult min_distance;
  std::string min_distance_real_id;
  std::string min_distance_syn_id;
  double synthetic_to_real_risk = 0.0;
  std::optional<double> population_to_sample_risk;
  double threshold = kDefaultRiskThreshold;
  std::size_t synthetic_records = 0;
  std::size_t real_records = 0;
  std::size_t matched_records = 0;
  std::vector<std::string> qids;
  /// Per real class: F_s and the number of synthetic records sharing the key.
  std::map<std::string, std::pair<std::size_t, std::size_t>> classes;

  bool synthetic_pass() const { return synthetic_to_real_risk < threshold; }
  bool population_pass() const {
    return !population_to_sample_risk || *population_to_sample_risk < threshold;
  }
  bool pass() const { return synthetic_pass() && population_pass(); }
  nlohmann::json to_json() const;
};

RiskReport assess_risk(const Panel& real, const Panel& syn, const std::vector<QidRule>& qids,
                       double threshold, const Panel* population = nullptr);
RiskReport risk_from_json(const nlohmann::json& j);

namespace serial {
DistanceResult min_euclidean_distance(const Panel& real, const Panel& syn);
}

}  // namespace synthgym
