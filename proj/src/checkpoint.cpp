#include "synthgym/checkpoint.hpp"

#include <fstream>
#include <map>

#include "binary_io.hpp"
#include "synthgym/error.hpp"

namespace synthgym {

namespace {
constexpr char kMagic[9] = "SGCKPT01";
constexpr std::uint64_t kVersion = 1;

void write_arrays(std::ostream& out, const std::vector<NamedTensor>& arrays) {
  binio::write_u64(out, arrays.size());
  for (const auto& a : arrays) {
    const auto& m = a.tensor.value();
    binio::write_string(out, a.name);
    binio::write_u64(out, static_cast<std::uint64_t>(m.rows()));
    binio::write_u64(out, static_cast<std::uint64_t>(m.cols()));
    binio::write_doubles(out, m.data(), static_cast<std::size_t>(m.size()));
  }
}
}  // namespace

void save_checkpoint(const ModelState& state, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out.write(kMagic, 8);
  binio::write_u64(out, kVersion);
  binio::write_u64(out, schema_hash(state.schema));
  binio::write_string(out, to_json(state.schema).dump());
  binio::write_u64(out, state.epoch);
  auto arrays = state.generator.named();
  for (auto& a : state.discriminator.named()) arrays.push_back(std::move(a));
  write_arrays(out, arrays);
  if (!out) throw Error("error while writing checkpoint " + path.string());
}

ModelState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  binio::expect_magic(in, kMagic, "checkpoint");
  const std::uint64_t version = binio::read_u64(in);
  if (version != kVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint64_t hash = binio::read_u64(in);
  ModelState state;
  state.schema = schema_from_json(nlohmann::json::parse(binio::read_string(in)));
  if (schema_hash(state.schema) != hash) throw DataError("checkpoint schema hash mismatch");
  state.epoch = binio::read_u64(in);

  std::map<std::string, ag::Matrix> arrays;
  const std::uint64_t count = binio::read_u64(in);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = binio::read_string(in, 4096);
    const auto rows = static_cast<ag::Index>(binio::read_u64(in));
    const auto cols = static_cast<ag::Index>(binio::read_u64(in));
    if (rows < 0 || cols < 0 || rows * cols > (ag::Index{1} << 32)) {
      throw DataError("corrupt checkpoint array " + name);
    }
    ag::Matrix m(rows, cols);
    binio::read_doubles(in, m.data(), static_cast<std::size_t>(m.size()));
    arrays.emplace(std::move(name), std::move(m));
  }

  auto [g, d] = init_params(state.schema, 0);
  state.generator = std::move(g);
  state.discriminator = std::move(d);
  auto targets = state.generator.named();
  for (auto& a : state.discriminator.named()) targets.push_back(std::move(a));
  if (targets.size() != arrays.size()) throw DataError("checkpoint array count mismatch");
  for (auto& t : targets) {
    auto it = arrays.find(t.name);
    if (it == arrays.end()) throw DataError("checkpoint lacks array " + t.name);
    if (it->second.rows() != t.tensor.rows() || it->second.cols() != t.tensor.cols()) {
      throw DataError("checkpoint array " + t.name + " has the wrong shape");
    }
    t.tensor.mutable_value() = it->second;
  }
  return state;
}

}  // namespace synthgym
