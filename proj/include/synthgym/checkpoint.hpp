#pragma once

#include <cstdint>
#include <filesystem>

#include "synthgym/net.hpp"
#include "synthgym/schema.hpp"

namespace synthgym {

struct ModelState {
  DatasetSchema schema;
  GeneratorParams generator;
  DiscriminatorParams discriminator;
  std::uint64_t epoch = 0;
};

/// Binary container: magic, format version, schema hash, schema JSON, epoch,
/// then every named parameter array with its shape and raw doubles.
void save_checkpoint(const ModelState& state, const std::filesystem::path& path);
ModelState load_checkpoint(const std::filesystem::path& path);

}  // namespace synthgym
