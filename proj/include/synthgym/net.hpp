#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "synthgym/autograd.hpp"
#include "synthgym/preprocess.hpp"
#include "synthgym/schema.hpp"

namespace synthgym {

// Sequences inside the networks are time-major matrices: row t * B + b holds
// timestep t of batch member b.

struct NamedTensor {
  std::string name;
  ag::Tensor tensor;
};

struct Dense {
  ag::Tensor weight;  // in x out
  ag::Tensor bias;    // 1 x out
};

/// Gate columns are ordered input, forget, candidate, output.
struct LstmCell {
  ag::Tensor w_input;      // in x 4H
  ag::Tensor w_recurrent;  // H x 4H
  ag::Tensor bias;         // 1 x 4H
};

struct GeneratorParams {
  LstmCell forward;
  LstmCell backward;
  Dense merge;   // 2H -> H
  Dense dense2;  // H -> H
  Dense dense3;  // H -> O

  std::vector<NamedTensor> named() const;
};

struct DiscriminatorParams {
  /// Per schema variable; undefined for numeric variables.
  std::vector<ag::Tensor> embeddings;
  Dense dense1;  // embedded width -> H
  Dense dense2;  // H -> H
  LstmCell forward;
  LstmCell backward;
  Dense final_dense;  // 2H -> 1

  std::vector<NamedTensor> named() const;
};

std::pair<GeneratorParams, DiscriminatorParams> init_params(const DatasetSchema& schema,
                                                            std::uint64_t seed);

/// Deep copies with fresh leaf tensors.
GeneratorParams clone(const GeneratorParams& params);
DiscriminatorParams clone(const DiscriminatorParams& params);

/// Every parameter set to zero (useful for analytic checks).
void zero_all(std::span<const NamedTensor> params);

/// Standard-normal latent draws, stored batch-major (n, t, i).
struct LatentBatch {
  std::size_t batch = 0;
  std::size_t steps = 0;
  std::size_t dim = 0;
  std::uint64_t seed = 0;
  std::vector<double> z;

  double at(std::size_t n, std::size_t t, std::size_t i) const {
    return z[(n * steps + t) * dim + i];
  }
  ag::Matrix time_major() const;
};

LatentBatch sample_latent(std::size_t batch, std::size_t steps, std::size_t dim,
                          std::uint64_t seed);
class Rng;
LatentBatch sample_latent(std::size_t batch, std::size_t steps, std::size_t dim, Rng& rng);

// Graph-building forms used by training.
ag::Tensor lstm_sequence(const LstmCell& cell, const ag::Tensor& x, ag::Index batch,
                         ag::Index steps, bool reverse, const ag::Matrix* mask = nullptr);
/// First-order op: sigmoid on numeric dims, softmax over each class block.
ag::Tensor output_activation(const ag::Tensor& logits, std::span<const ActivationSegment> layout);
ag::Tensor generator_graph(const GeneratorParams& params, const DatasetSchema& schema,
                           const ag::Tensor& z, ag::Index batch, ag::Index steps);
ag::Tensor soft_embed_graph(const DiscriminatorParams& params, const DatasetSchema& schema,
                            const ag::Tensor& x);
/// mask is a (steps * batch) x 1 column of 0/1 validity flags; returns batch x 1 scores.
ag::Tensor discriminator_graph(const DiscriminatorParams& params, const DatasetSchema& schema,
                               const ag::Tensor& x, ag::Index batch, ag::Index steps,
                               const ag::Matrix& mask);

/// Validity column for the given per-member lengths, truncated to steps.
ag::Matrix sequence_mask(std::span<const std::size_t> lengths, std::size_t steps);
/// Time-major rows of the selected patients' first steps timesteps.
ag::Matrix to_time_major(const EncodedTensor& tensor, std::span<const std::size_t> members,
                         std::size_t steps);

// Value-level forms.
EncodedTensor generator_forward(const GeneratorParams& params,
                                std::shared_ptr<const DatasetSchema> schema,
                                const LatentBatch& z);

struct EmbeddedTensor {
  std::size_t patients = 0;
  std::size_t steps = 0;
  std::size_t width = 0;
  std::vector<double> data;

  double at(std::size_t n, std::size_t t, std::size_t d) const {
    return data[(n * steps + t) * width + d];
  }
};

EmbeddedTensor soft_embed(const DiscriminatorParams& params, const EncodedTensor& x);
std::vector<double> discriminator_forward(const DiscriminatorParams& params,
                                          const EncodedTensor& x);

}  // namespace synthgym
