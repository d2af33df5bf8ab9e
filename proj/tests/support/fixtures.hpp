#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <sstream>
#include <string>

#include <json.hpp>

#include "synthgym/panel.hpp"
#include "synthgym/rng.hpp"
#include "synthgym/schema.hpp"

namespace fixtures {

namespace fs = std::filesystem;

inline fs::path source_dir() { return fs::path(SYNTHGYM_SOURCE_DIR); }

inline synthgym::DatasetSchema hypotension_schema() {
  return synthgym::load_schema(source_dir() / "configs" / "hypotension.schema.json");
}

inline nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  nlohmann::json j;
  in >> j;
  return j;
}

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = fs::temp_directory_path() /
            ("synthgym-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline synthgym::VariableSpec numeric(std::string name,
                                      synthgym::TransformMethod t = synthgym::TransformMethod::MinMaxOnly) {
  synthgym::VariableSpec v;
  v.name = std::move(name);
  v.transform = t;
  return v;
}

inline synthgym::VariableSpec categorical(std::string name, std::vector<std::string> labels) {
  synthgym::VariableSpec v;
  v.name = std::move(name);
  v.kind = labels.size() == 2 && labels[0] == "False" ? synthgym::VariableKind::Binary
                                                      : synthgym::VariableKind::Categorical;
  v.class_labels = std::move(labels);
  return v;
}

inline synthgym::VariableSpec binary(std::string name) {
  return categorical(std::move(name), {"False", "True"});
}

/// Fully observed panel with random lengths in [min_len, T]; numerics N(mu, 1).
inline synthgym::Panel random_panel(const synthgym::DatasetSchema& schema, std::size_t patients,
                                    std::uint64_t seed, std::size_t min_len = 1) {
  synthgym::Panel panel(schema);
  synthgym::Rng rng(seed);
  const std::size_t T = schema.sequence_length;
  for (std::size_t p = 0; p < patients; ++p) {
    const std::size_t len = min_len + rng.index(T - min_len + 1);
    const std::size_t q = panel.add_patient("r" + std::to_string(p), len);
    for (std::size_t t = 0; t < len; ++t) {
      for (std::size_t v = 0; v < schema.variable_count(); ++v) {
        const auto& spec = schema.variables[v];
        panel.at(q, t, v) = spec.is_numeric() ? 5.0 + 3.0 * v + rng.normal()
                                              : static_cast<double>(rng.index(spec.class_count()));
      }
    }
  }
  return panel;
}

}  // namespace fixtures
