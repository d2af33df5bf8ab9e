#include "synthgym/train.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

#include "synthgym/error.hpp"
#include "synthgym/rng.hpp"

namespace synthgym {

using ag::Index;
using ag::Matrix;
using ag::Tensor;

std::vector<CurriculumStage> default_curriculum(std::size_t T, std::size_t epochs) {
  const auto e1 = static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(epochs)));
  const std::size_t e2 = std::min(e1, epochs - e1);
  const std::size_t e3 = epochs - e1 - e2;
  std::vector<CurriculumStage> stages;
  const std::size_t lens[] = {(T + 3) / 4, (T + 1) / 2, T};
  const std::size_t spans[] = {e1, e2, e3};
  for (int i = 0; i < 3; ++i) {
    if (spans[i] > 0) stages.push_back({lens[i], spans[i]});
  }
  return stages;
}

std::vector<CurriculumStage> effective_curriculum(const TrainConfig& config, std::size_t T) {
  return config.curriculum.empty() ? default_curriculum(T, config.epochs) : config.curriculum;
}

std::vector<std::string> validate_train_config(const TrainConfig& c, std::size_t T) {
  std::vector<std::string> errors;
  if (!(c.lambda_gp >= 0.0)) errors.push_back("lambda_gp must be nonnegative");
  if (!(c.lambda_corr >= 0.0)) errors.push_back("lambda_corr must be nonnegative");
  if (c.batch_size < 2) errors.push_back("batch_size must be at least 2");
  if (!(c.learning_rate > 0.0)) errors.push_back("learning_rate must be positive");
  if (!(c.adam_beta1 >= 0.0 && c.adam_beta1 < 1.0)) errors.push_back("adam_beta1 must be in [0,1)");
  if (!(c.adam_beta2 >= 0.0 && c.adam_beta2 < 1.0)) errors.push_back("adam_beta2 must be in [0,1)");
  if (c.critic_steps_per_gen == 0) errors.push_back("critic_steps_per_gen must be positive");
  if (c.epochs == 0) errors.push_back("epochs must be positive");
  if (c.checkpoint_every == 0) errors.push_back("checkpoint_every must be positive");
  if (c.divergence_patience == 0) errors.push_back("divergence_patience must be positive");
  const auto stages = effective_curriculum(c, T);
  std::size_t total = 0;
  std::size_t prev = 0;
  for (const auto& s : stages) {
    if (s.sequence_length == 0 || s.sequence_length > T) {
      errors.push_back("curriculum length out of range");
    }
    if (s.sequence_length < prev) errors.push_back("curriculum lengths must be non-decreasing");
    if (s.epochs == 0) errors.push_back("curriculum stage with zero epochs");
    prev = s.sequence_length;
    total += s.epochs;
  }
  if (stages.empty() || stages.back().sequence_length != T) {
    errors.push_back("curriculum must end at the sequence length");
  }
  if (!c.curriculum.empty() && total != c.epochs) {
    errors.push_back("curriculum epoch spans must add up to epochs");
  }
  return errors;
}

PenaltyPoint parse_penalty_point(std::string_view text) {
  if (text == "interp") return PenaltyPoint::Interpolate;
  if (text == "syn") return PenaltyPoint::Synthetic;
  throw Error("unknown gradient-penalty point '" + std::string(text) + "' (use syn or interp)");
}

nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : c.curriculum) {
    stages.push_back({{"sequence_length", s.sequence_length}, {"epochs", s.epochs}});
  }
  return {{"lambda_gp", c.lambda_gp},
          {"lambda_corr", c.lambda_corr},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_epsilon", c.adam_epsilon},
          {"critic_steps_per_gen", c.critic_steps_per_gen},
          {"epochs", c.epochs},
          {"curriculum", stages},
          {"seed", c.seed},
          {"gp_at", c.gp_at == PenaltyPoint::Interpolate ? "interp" : "syn"},
          {"checkpoint_every", c.checkpoint_every},
          {"divergence_threshold", c.divergence_threshold},
          {"divergence_patience", c.divergence_patience}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
  try {
    auto take = [&j](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    take("lambda_gp", c.lambda_gp);
    take("lambda_corr", c.lambda_corr);
    take("batch_size", c.batch_size);
    take("learning_rate", c.learning_rate);
    take("adam_beta1", c.adam_beta1);
    take("adam_beta2", c.adam_beta2);
    take("adam_epsilon", c.adam_epsilon);
    take("critic_steps_per_gen", c.critic_steps_per_gen);
    take("epochs", c.epochs);
    take("seed", c.seed);
    take("checkpoint_every", c.checkpoint_every);
    take("divergence_threshold", c.divergence_threshold);
    take("divergence_patience", c.divergence_patience);
    if (j.contains("gp_at")) c.gp_at = parse_penalty_point(j.at("gp_at").get<std::string>());
    if (j.contains("curriculum")) {
      c.curriculum.clear();
      for (const auto& s : j.at("curriculum")) {
        c.curriculum.push_back({s.at("sequence_length").get<std::size_t>(),
                                s.at("epochs").get<std::size_t>()});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed training config: ") + e.what());
  }
  return c;
}

Matrix summary_projection(const DatasetSchema& schema) {
  const auto layout = activation_layout(schema);
  Matrix m = Matrix::Zero(static_cast<Index>(encoded_width(schema)),
                          static_cast<Index>(schema.variables.size()));
  for (std::size_t v = 0; v < schema.variables.size(); ++v) {
    const auto& seg = layout[v];
    const auto col = static_cast<Index>(v);
    if (schema.variables[v].is_numeric()) {
      m(static_cast<Index>(seg.offset), col) = 1.0;
    } else if (schema.variables[v].kind == VariableKind::Binary) {
      m(static_cast<Index>(seg.offset) + 1, col) = 1.0;
    } else {
      for (std::size_t k = 0; k < seg.width; ++k) {
        m(static_cast<Index>(seg.offset + k), col) = static_cast<double>(k);
      }
    }
  }
  return m;
}

namespace {

struct Centered {
  Matrix u;                 // unit-norm centered columns (zero where degenerate)
  Eigen::VectorXd norms;    // norms of the centered columns
};

Centered center_columns(const Matrix& x) {
  Centered c;
  c.u = x.rowwise() - x.colwise().mean();
  c.norms.resize(x.cols());
  for (Index j = 0; j < x.cols(); ++j) {
    const double n = c.u.col(j).norm();
    // Relative guard against columns that are constant up to rounding.
    const double scale = x.col(j).cwiseAbs().maxCoeff();
    const bool degenerate = !(n > 1e-12 * std::max(1.0, scale) * std::sqrt(double(x.rows())));
    c.norms(j) = degenerate ? 0.0 : n;
    if (degenerate) c.u.col(j).setZero();
    else c.u.col(j) /= n;
  }
  return c;
}

Matrix correlations(const Centered& c) {
  Matrix r = c.u.transpose() * c.u;
  for (Index j = 0; j < r.cols(); ++j) {
    r(j, j) = c.norms(j) > 0.0 ? 1.0 : 0.0;
  }
  return r;
}

}  // namespace

Matrix pearson_matrix(const Matrix& columns) { return correlations(center_columns(columns)); }

Tensor pearson_alignment(const Tensor& syn, const Matrix& real_summaries) {
  const Centered cs = center_columns(syn.value());
  const Matrix rs = correlations(cs);
  const Matrix rr = pearson_matrix(real_summaries);
  const Index V = rs.cols();
  double total = 0.0;
  Matrix w = Matrix::Zero(V, V);
  for (Index i = 0; i < V; ++i) {
    for (Index j = 0; j < i; ++j) {
      const double diff = rs(i, j) - rr(i, j);
      total += std::abs(diff);
      const double s = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
      w(i, j) = s;
      w(j, i) = s;
    }
  }
  Matrix value(1, 1);
  value(0, 0) = total;
  return ag::make_op(
      std::move(value), {syn},
      [cs, rs, w](const Tensor& g, const Tensor&, const std::vector<bool>&) {
        const Index V = rs.cols();
        Matrix d = Matrix::Zero(cs.u.rows(), V);
        for (Index i = 0; i < V; ++i) {
          if (cs.norms(i) == 0.0) continue;
          for (Index j = 0; j < V; ++j) {
            if (j == i || w(i, j) == 0.0 || cs.norms(j) == 0.0) continue;
            d.col(i) += w(i, j) * (cs.u.col(j) - rs(i, j) * cs.u.col(i));
          }
          d.col(i) /= cs.norms(i);
        }
        return std::vector<ag::Grad>{ag::constant(d * g.item())};
      });
}

double alignment_loss(const Matrix& syn_rows, const Matrix& real_rows,
                      const DatasetSchema& schema) {
  if (syn_rows.rows() == 0 || real_rows.rows() == 0) {
    throw DataError("alignment loss needs nonempty batches");
  }
  const Matrix proj = summary_projection(schema);
  ag::NoGradGuard no_grad;
  return pearson_alignment(ag::constant(syn_rows * proj), real_rows * proj).item();
}

namespace {

std::vector<Tensor> leaves(const std::vector<NamedTensor>& named) {
  std::vector<Tensor> out;
  for (const auto& n : named) out.push_back(n.tensor);
  return out;
}

std::vector<Matrix> values(const std::vector<Tensor>& grads) {
  std::vector<Matrix> out;
  for (const auto& g : grads) out.push_back(g.value());
  return out;
}

Matrix valid_rows(const Matrix& x, const Matrix& mask) {
  Index n = 0;
  for (Index r = 0; r < mask.rows(); ++r) n += mask(r, 0) > 0.0 ? 1 : 0;
  Matrix out(n, x.cols());
  Index k = 0;
  for (Index r = 0; r < mask.rows(); ++r) {
    if (mask(r, 0) > 0.0) out.row(k++) = x.row(r);
  }
  return out;
}

}  // namespace

LossResult critic_loss(const DiscriminatorParams& d, const GeneratorParams& g,
                       const DatasetSchema& schema, const Batch& real, const Matrix& z,
                       const Matrix& epsilon, const TrainConfig& config) {
  const Index B = real.batch;
  const Index T = real.steps;
  Matrix x_syn;
  {
    ag::NoGradGuard no_grad;
    x_syn = generator_graph(g, schema, ag::constant(z), B, T).value();
  }
  const Matrix full = Matrix::Ones(B * T, 1);
  const Tensor real_scores = discriminator_graph(d, schema, ag::constant(real.x), B, T, real.mask);
  const Tensor syn_scores = discriminator_graph(d, schema, ag::constant(x_syn), B, T, full);
  const Tensor wasserstein = ag::sub(ag::mean(syn_scores), ag::mean(real_scores));

  Matrix hat_value = x_syn;
  if (config.gp_at == PenaltyPoint::Interpolate) {
    for (Index t = 0; t < T; ++t) {
      for (Index b = 0; b < B; ++b) {
        const double e = epsilon(b, 0);
        hat_value.row(t * B + b) = e * real.x.row(t * B + b) + (1.0 - e) * x_syn.row(t * B + b);
      }
    }
  }
  const Tensor x_hat = ag::parameter(std::move(hat_value));
  const Tensor hat_scores = discriminator_graph(d, schema, x_hat, B, T, real.mask);
  const Tensor hat_inputs[] = {x_hat};
  const Tensor input_grad = ag::grad(ag::sum_all(hat_scores), hat_inputs, true)[0];

  Matrix per_member = Matrix::Zero(B, B * T);
  for (Index t = 0; t < T; ++t) {
    for (Index b = 0; b < B; ++b) per_member(b, t * B + b) = 1.0;
  }
  const Tensor sq_norms =
      ag::matmul(ag::constant(std::move(per_member)), ag::sum_cols(ag::square(input_grad)));
  const Tensor deviation = ag::affine(ag::sqrt(sq_norms), 1.0, -1.0);
  const Tensor penalty = ag::affine(ag::mean(ag::square(deviation)), config.lambda_gp);
  const Tensor loss = ag::add(wasserstein, penalty);

  LossResult result;
  result.loss = loss.item();
  result.wasserstein = wasserstein.item();
  result.penalty = penalty.item();
  if (!std::isfinite(result.loss)) {
    throw TrainingError("non-finite critic loss (wasserstein " + std::to_string(result.wasserstein) +
                        ", gradient penalty " + std::to_string(result.penalty) + ")");
  }
  const auto params = leaves(d.named());
  result.gradients = values(ag::grad(loss, params, false));
  return result;
}

LossResult generator_loss(const DiscriminatorParams& d, const GeneratorParams& g,
                          const DatasetSchema& schema, const Batch& real, const Matrix& z,
                          const TrainConfig& config) {
  const Index B = real.batch;
  const Index T = real.steps;
  const Tensor x_syn = generator_graph(g, schema, ag::constant(z), B, T);
  const Tensor scores = discriminator_graph(d, schema, x_syn, B, T, Matrix::Ones(B * T, 1));
  const Tensor adversarial = ag::affine(ag::mean(scores), -1.0);

  LossResult result;
  Tensor loss = adversarial;
  if (config.lambda_corr != 0.0) {
    const Matrix proj = summary_projection(schema);
    const Tensor syn_summary = ag::matmul(x_syn, ag::constant(proj));
    const Tensor align = pearson_alignment(syn_summary, valid_rows(real.x, real.mask) * proj);
    result.alignment = align.item();
    loss = ag::add(loss, ag::affine(align, config.lambda_corr));
  }
  result.wasserstein = adversarial.item();
  result.loss = loss.item();
  if (!std::isfinite(result.loss)) {
    throw TrainingError("non-finite generator loss (adversarial " +
                        std::to_string(result.wasserstein) + ", alignment " +
                        std::to_string(result.alignment) + ")");
  }
  const auto params = leaves(g.named());
  result.gradients = values(ag::grad(loss, params, false));
  return result;
}

Adam::Adam(double learning_rate, double beta1, double beta2, double epsilon)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {}

void Adam::step(const std::vector<NamedTensor>& params, const std::vector<Matrix>& grads) {
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.push_back(Matrix::Zero(p.tensor.rows(), p.tensor.cols()));
      v_.push_back(Matrix::Zero(p.tensor.rows(), p.tensor.cols()));
    }
  }
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw TrainingError("optimizer parameter count changed");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grads[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grads[i].cwiseProduct(grads[i]);
    Tensor p = params[i].tensor;
    p.mutable_value().array() -=
        lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
  }
}

nlohmann::json EpochRecord::to_json() const {
  return {{"epoch", epoch},
          {"stage", stage},
          {"sequence_length", sequence_length},
          {"critic_loss", critic_loss},
          {"generator_loss", generator_loss},
          {"alignment", alignment},
          {"critic_updates", critic_updates},
          {"generator_updates", generator_updates},
          {"wall_seconds", wall_seconds}};
}

namespace {

Batch make_batch(const EncodedTensor& real, std::span<const std::size_t> members,
                 std::size_t steps) {
  Batch b;
  b.batch = static_cast<Index>(members.size());
  b.steps = static_cast<Index>(steps);
  b.x = to_time_major(real, members, steps);
  std::vector<std::size_t> lengths;
  for (const auto m : members) lengths.push_back(std::min(real.lengths[m], steps));
  b.mask = sequence_mask(lengths, steps);
  // Padding rows are zero in storage already; keep them zero after truncation.
  return b;
}

Matrix normal_matrix(Index rows, Index cols, Rng& rng) {
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) m(r, c) = rng.normal();
  }
  return m;
}

}  // namespace

TrainResult train(const EncodedTensor& real, const TrainConfig& config,
                  const TrainCallbacks& callbacks) {
  const DatasetSchema& schema = *real.schema;
  const auto errors = validate_train_config(config, schema.sequence_length);
  if (!errors.empty()) {
    std::string msg = "invalid training config:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw Error(msg);
  }
  if (real.patients < 2) throw DataError("training needs at least 2 patients");

  auto [g, d] = init_params(schema, derive_seed(config.seed, "init"));
  TrainResult result{std::move(g), std::move(d), {}, 0, 0};
  Adam critic_opt(config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_epsilon);
  Adam gen_opt(config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_epsilon);
  const auto d_named = result.discriminator.named();
  const auto g_named = result.generator.named();

  Rng rng(derive_seed(config.seed, "train"));
  std::vector<std::size_t> order(real.patients);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto I = static_cast<Index>(schema.latent_dim);
  const auto start = std::chrono::steady_clock::now();

  std::size_t epoch = 0;
  std::size_t over_limit = 0;
  std::size_t last_checkpoint = 0;
  const auto stages = effective_curriculum(config, schema.sequence_length);
  for (std::size_t s = 0; s < stages.size(); ++s) {
    const std::size_t L = stages[s].sequence_length;
    for (std::size_t e = 0; e < stages[s].epochs; ++e) {
      ++epoch;
      shuffle(order.begin(), order.end(), rng);
      double critic_sum = 0.0;
      double gen_sum = 0.0;
      double align_sum = 0.0;
      std::size_t critic_n = 0;
      std::size_t gen_n = 0;
      for (std::size_t off = 0; off < order.size(); off += config.batch_size) {
        const std::size_t n = std::min(config.batch_size, order.size() - off);
        if (n < 2) break;
        const std::span<const std::size_t> members(order.data() + off, n);
        const Batch batch = make_batch(real, members, L);
        const auto rows = static_cast<Index>(n * L);

        const Matrix z = normal_matrix(rows, I, rng);
        Matrix eps(static_cast<Index>(n), 1);
        for (Index b = 0; b < eps.rows(); ++b) eps(b, 0) = rng.uniform();
        const LossResult lc = critic_loss(result.discriminator, result.generator, schema, batch, z,
                                          eps, config);
        critic_opt.step(d_named, lc.gradients);
        critic_sum += lc.loss;
        ++critic_n;
        ++result.critic_updates;

        if (result.critic_updates % config.critic_steps_per_gen == 0) {
          const Matrix zg = normal_matrix(rows, I, rng);
          const LossResult lg =
              generator_loss(result.discriminator, result.generator, schema, batch, zg, config);
          gen_opt.step(g_named, lg.gradients);
          gen_sum += lg.loss;
          align_sum += lg.alignment;
          ++gen_n;
          ++result.generator_updates;
        }
      }

      EpochRecord rec;
      rec.epoch = epoch;
      rec.stage = s;
      rec.sequence_length = L;
      rec.critic_loss = critic_n ? critic_sum / double(critic_n) : 0.0;
      rec.generator_loss = gen_n ? gen_sum / double(gen_n) : 0.0;
      rec.alignment = gen_n ? align_sum / double(gen_n) : 0.0;
      rec.critic_updates = critic_n;
      rec.generator_updates = gen_n;
      rec.wall_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      result.log.push_back(rec);
      if (callbacks.on_epoch) callbacks.on_epoch(rec);

      const bool too_large = std::abs(rec.critic_loss) > config.divergence_threshold ||
                             std::abs(rec.generator_loss) > config.divergence_threshold;
      over_limit = too_large ? over_limit + 1 : 0;
      if (over_limit >= config.divergence_patience) {
        throw TrainingError("training diverged: loss magnitude above " +
                            std::to_string(config.divergence_threshold) + " for " +
                            std::to_string(over_limit) + " consecutive epochs (epoch " +
                            std::to_string(epoch) + ")");
      }
      if (callbacks.on_checkpoint && epoch % config.checkpoint_every == 0) {
        callbacks.on_checkpoint(epoch, result.generator, result.discriminator);
        last_checkpoint = epoch;
      }
    }
  }
  if (callbacks.on_checkpoint && last_checkpoint != epoch) {
    callbacks.on_checkpoint(epoch, result.generator, result.discriminator);
  }
  return result;
}

}  // namespace synthgym
