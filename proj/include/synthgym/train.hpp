#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "synthgym/net.hpp"
#include "synthgym/preprocess.hpp"

namespace synthgym {

struct CurriculumStage {
  std::size_t sequence_length = 0;
  std::size_t epochs = 0;
};

enum class PenaltyPoint { Interpolate, Synthetic };

struct TrainConfig {
  double lambda_gp = 10.0;
  double lambda_corr = 10.0;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.9;
  double adam_epsilon = 1e-8;
  std::size_t critic_steps_per_gen = 5;
  std::size_t epochs = 500;
  /// Empty means default_curriculum(T, epochs).
  std::vector<CurriculumStage> curriculum;
  std::uint64_t seed = 0;
  PenaltyPoint gp_at = PenaltyPoint::Interpolate;
  std::size_t checkpoint_every = 50;
  double divergence_threshold = 1e6;
  std::size_t divergence_patience = 3;
};

/// Lengths ceil(T/4), ceil(T/2), T over 20%, 20% and 60% of the epochs.
std::vector<CurriculumStage> default_curriculum(std::size_t sequence_length, std::size_t epochs);
std::vector<CurriculumStage> effective_curriculum(const TrainConfig& config,
                                                  std::size_t sequence_length);
std::vector<std::string> validate_train_config(const TrainConfig& config,
                                               std::size_t sequence_length);

nlohmann::json to_json(const TrainConfig& config);
/// Fields absent from j keep the values of base.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});
PenaltyPoint parse_penalty_point(std::string_view text);

/// Per-variable scalar summaries of encoded rows: numeric value, probability of
/// class 1 for binaries, probability-weighted class index for categoricals.
ag::Matrix summary_projection(const DatasetSchema& schema);
/// Pairwise Pearson correlations of the columns; zero-variance columns give r = 0.
ag::Matrix pearson_matrix(const ag::Matrix& columns);
/// First-order op: sum over i > j of |r_syn(i,j) - r_real(i,j)|.
ag::Tensor pearson_alignment(const ag::Tensor& syn_summaries, const ag::Matrix& real_summaries);
/// Value form over encoded rows (N x O each).
double alignment_loss(const ag::Matrix& syn_rows, const ag::Matrix& real_rows,
                      const DatasetSchema& schema);

/// One minibatch in time-major layout.
struct Batch {
  ag::Matrix x;     // (steps * batch) x O
  ag::Matrix mask;  // (steps * batch) x 1
  ag::Index batch = 0;
  ag::Index steps = 0;
};

struct LossResult {
  double loss = 0.0;
  double wasserstein = 0.0;
  double penalty = 0.0;
  double alignment = 0.0;
  /// Mirrors the named() order of the differentiated parameter set.
  std::vector<ag::Matrix> gradients;
};

/// Critic loss with gradient penalty. z is (steps * batch) x latent; epsilon holds
/// one interpolation weight per batch member.
LossResult critic_loss(const DiscriminatorParams& d, const GeneratorParams& g,
                       const DatasetSchema& schema, const Batch& real, const ag::Matrix& z,
                       const ag::Matrix& epsilon, const TrainConfig& config);
/// Adversarial term plus the weighted alignment penalty against the real batch.
LossResult generator_loss(const DiscriminatorParams& d, const GeneratorParams& g,
                          const DatasetSchema& schema, const Batch& real, const ag::Matrix& z,
                          const TrainConfig& config);

class Adam {
 public:
  Adam(double learning_rate, double beta1, double beta2, double epsilon);
  void step(const std::vector<NamedTensor>& params, const std::vector<ag::Matrix>& grads);
  std::size_t steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<ag::Matrix> m_, v_;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based across all stages
  std::size_t stage = 0;
  std::size_t sequence_length = 0;
  double critic_loss = 0.0;
  double generator_loss = 0.0;
  double alignment = 0.0;
  std::size_t critic_updates = 0;
  std::size_t generator_updates = 0;
  double wall_seconds = 0.0;

  nlohmann::json to_json() const;
};

struct TrainCallbacks {
  std::function<void(const EpochRecord&)> on_epoch;
  std::function<void(std::size_t epoch, const GeneratorParams&, const DiscriminatorParams&)>
      on_checkpoint;
};

struct TrainResult {
  GeneratorParams generator;
  DiscriminatorParams discriminator;
  std::vector<EpochRecord> log;
  std::size_t critic_updates = 0;
  std::size_t generator_updates = 0;
};

TrainResult train(const EncodedTensor& real, const TrainConfig& config,
                  const TrainCallbacks& callbacks = {});

}  // namespace synthgym
