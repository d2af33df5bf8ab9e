#include "synthgym/net.hpp"

#include <cmath>
#include <stdexcept>

#include "synthgym/error.hpp"
#include "synthgym/rng.hpp"

namespace synthgym {

using ag::Index;
using ag::Matrix;
using ag::Tensor;

namespace {

Matrix uniform_matrix(Index rows, Index cols, double bound, Rng& rng) {
  Matrix m(rows, cols);
  // Fill row by row so the draw order matches the documented layout.
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) m(r, c) = (2.0 * rng.uniform() - 1.0) * bound;
  }
  return m;
}

Matrix normal_matrix(Index rows, Index cols, Rng& rng) {
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) m(r, c) = rng.normal();
  }
  return m;
}

Dense make_dense(Index in, Index out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Dense d;
  d.weight = ag::parameter(uniform_matrix(in, out, bound, rng));
  d.bias = ag::parameter(uniform_matrix(1, out, bound, rng));
  return d;
}

LstmCell make_lstm(Index in, Index hidden, Rng& rng) {
  LstmCell c;
  c.w_input = ag::parameter(uniform_matrix(in, 4 * hidden, 1.0 / std::sqrt(double(in)), rng));
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  c.w_recurrent = ag::parameter(uniform_matrix(hidden, 4 * hidden, bound, rng));
  c.bias = ag::parameter(uniform_matrix(1, 4 * hidden, bound, rng));
  return c;
}

void push_dense(std::vector<NamedTensor>& out, const std::string& prefix, const Dense& d) {
  out.push_back({prefix + ".weight", d.weight});
  out.push_back({prefix + ".bias", d.bias});
}

void push_lstm(std::vector<NamedTensor>& out, const std::string& prefix, const LstmCell& c) {
  out.push_back({prefix + ".w_input", c.w_input});
  out.push_back({prefix + ".w_recurrent", c.w_recurrent});
  out.push_back({prefix + ".bias", c.bias});
}

Tensor copy_leaf(const Tensor& t) {
  return t.defined() ? ag::parameter(t.value()) : Tensor();
}

Dense copy(const Dense& d) { return {copy_leaf(d.weight), copy_leaf(d.bias)}; }
LstmCell copy(const LstmCell& c) {
  return {copy_leaf(c.w_input), copy_leaf(c.w_recurrent), copy_leaf(c.bias)};
}

Tensor dense_apply(const Dense& d, const Tensor& x) {
  return ag::add_row(ag::matmul(x, d.weight), d.bias);
}

}  // namespace

std::vector<NamedTensor> GeneratorParams::named() const {
  std::vector<NamedTensor> out;
  push_lstm(out, "generator.lstm_forward", forward);
  push_lstm(out, "generator.lstm_backward", backward);
  push_dense(out, "generator.merge", merge);
  push_dense(out, "generator.dense2", dense2);
  push_dense(out, "generator.dense3", dense3);
  return out;
}

std::vector<NamedTensor> DiscriminatorParams::named() const {
  std::vector<NamedTensor> out;
  for (std::size_t v = 0; v < embeddings.size(); ++v) {
    if (embeddings[v].defined()) {
      out.push_back({"discriminator.embedding." + std::to_string(v), embeddings[v]});
    }
  }
  push_dense(out, "discriminator.dense1", dense1);
  push_dense(out, "discriminator.dense2", dense2);
  push_lstm(out, "discriminator.lstm_forward", forward);
  push_lstm(out, "discriminator.lstm_backward", backward);
  push_dense(out, "discriminator.final", final_dense);
  return out;
}

std::pair<GeneratorParams, DiscriminatorParams> init_params(const DatasetSchema& schema,
                                                            std::uint64_t seed) {
  require_valid(schema);
  const auto I = static_cast<Index>(schema.latent_dim);
  const auto H = static_cast<Index>(schema.hidden_dim);
  const auto O = static_cast<Index>(encoded_width(schema));
  const auto E = static_cast<Index>(embedded_width(schema));

  Rng g_rng(derive_seed(seed, "generator-init"));
  GeneratorParams g;
  g.forward = make_lstm(I, H, g_rng);
  g.backward = make_lstm(I, H, g_rng);
  g.merge = make_dense(2 * H, H, g_rng);
  g.dense2 = make_dense(H, H, g_rng);
  g.dense3 = make_dense(H, O, g_rng);

  Rng d_rng(derive_seed(seed, "discriminator-init"));
  DiscriminatorParams d;
  d.embeddings.resize(schema.variables.size());
  for (std::size_t v = 0; v < schema.variables.size(); ++v) {
    const auto& var = schema.variables[v];
    if (var.is_numeric()) continue;
    const auto k = static_cast<Index>(embedded_size(schema, var));
    d.embeddings[v] = ag::parameter(normal_matrix(static_cast<Index>(var.class_count()), k, d_rng));
  }
  d.dense1 = make_dense(E, H, d_rng);
  d.dense2 = make_dense(H, H, d_rng);
  d.forward = make_lstm(H, H, d_rng);
  d.backward = make_lstm(H, H, d_rng);
  d.final_dense = make_dense(2 * H, 1, d_rng);
  return {std::move(g), std::move(d)};
}

GeneratorParams clone(const GeneratorParams& p) {
  return {copy(p.forward), copy(p.backward), copy(p.merge), copy(p.dense2), copy(p.dense3)};
}

DiscriminatorParams clone(const DiscriminatorParams& p) {
  DiscriminatorParams d;
  for (const auto& e : p.embeddings) d.embeddings.push_back(copy_leaf(e));
  d.dense1 = copy(p.dense1);
  d.dense2 = copy(p.dense2);
  d.forward = copy(p.forward);
  d.backward = copy(p.backward);
  d.final_dense = copy(p.final_dense);
  return d;
}

void zero_all(std::span<const NamedTensor> params) {
  for (const auto& p : params) {
    Tensor t = p.tensor;
    t.mutable_value().setZero();
  }
}

Matrix LatentBatch::time_major() const {
  Matrix m(static_cast<Index>(steps * batch), static_cast<Index>(dim));
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t n = 0; n < batch; ++n) {
      for (std::size_t i = 0; i < dim; ++i) {
        m(static_cast<Index>(t * batch + n), static_cast<Index>(i)) = at(n, t, i);
      }
    }
  }
  return m;
}

LatentBatch sample_latent(std::size_t batch, std::size_t steps, std::size_t dim, Rng& rng) {
  LatentBatch z;
  z.batch = batch;
  z.steps = steps;
  z.dim = dim;
  z.z.resize(batch * steps * dim);
  for (auto& v : z.z) v = rng.normal();
  return z;
}

LatentBatch sample_latent(std::size_t batch, std::size_t steps, std::size_t dim,
                          std::uint64_t seed) {
  Rng rng(seed);
  LatentBatch z = sample_latent(batch, steps, dim, rng);
  z.seed = seed;
  return z;
}

Tensor lstm_sequence(const LstmCell& cell, const Tensor& x, Index batch, Index steps,
                     bool reverse, const Matrix* mask) {
  const Index H = cell.w_recurrent.rows();
  if (x.rows() != batch * steps || x.cols() != cell.w_input.rows()) {
    throw std::invalid_argument("lstm_sequence: input shape mismatch");
  }
  const Tensor projected = ag::add_row(ag::matmul(x, cell.w_input), cell.bias);
  std::vector<Tensor> outputs(static_cast<std::size_t>(steps));
  Tensor h;
  Tensor c;
  for (Index s = 0; s < steps; ++s) {
    const Index t = reverse ? steps - 1 - s : s;
    Tensor gates = ag::block(projected, t * batch, 0, batch, 4 * H);
    if (h.defined()) gates = ag::add(gates, ag::matmul(h, cell.w_recurrent));
    const Tensor i = ag::sigmoid(ag::block(gates, 0, 0, batch, H));
    const Tensor f = ag::sigmoid(ag::block(gates, 0, H, batch, H));
    const Tensor g = ag::tanh(ag::block(gates, 0, 2 * H, batch, H));
    const Tensor o = ag::sigmoid(ag::block(gates, 0, 3 * H, batch, H));
    Tensor c_new = c.defined() ? ag::add(ag::mul(f, c), ag::mul(i, g)) : ag::mul(i, g);
    Tensor h_new = ag::mul(o, ag::tanh(c_new));
    if (mask != nullptr) {
      const Matrix m = mask->middleRows(t * batch, batch);
      if (m.minCoeff() < 1.0) {
        // Padded steps carry the previous state through unchanged.
        const Tensor keep = ag::constant(m);
        const Tensor hold = ag::constant((1.0 - m.array()).matrix());
        c_new = ag::mul_col(c_new, keep);
        h_new = ag::mul_col(h_new, keep);
        if (c.defined()) {
          c_new = ag::add(c_new, ag::mul_col(c, hold));
          h_new = ag::add(h_new, ag::mul_col(h, hold));
        }
      }
    }
    c = c_new;
    h = h_new;
    outputs[static_cast<std::size_t>(t)] = h;
  }
  return ag::vstack(outputs);
}

Tensor output_activation(const Tensor& logits, std::span<const ActivationSegment> layout) {
  const Matrix& x = logits.value();
  Matrix y(x.rows(), x.cols());
  for (const auto& seg : layout) {
    const auto off = static_cast<Index>(seg.offset);
    const auto w = static_cast<Index>(seg.width);
    if (seg.kind == ActivationSegment::Kind::Sigmoid) {
      y.middleCols(off, w) = (1.0 / (1.0 + (-x.middleCols(off, w).array()).exp())).matrix();
      continue;
    }
    for (Index r = 0; r < x.rows(); ++r) {
      const double mx = x.row(r).segment(off, w).maxCoeff();
      double sum = 0.0;
      for (Index k = 0; k < w; ++k) {
        y(r, off + k) = std::exp(x(r, off + k) - mx);
        sum += y(r, off + k);
      }
      for (Index k = 0; k < w; ++k) y(r, off + k) /= sum;
    }
  }
  std::vector<ActivationSegment> segs(layout.begin(), layout.end());
  return ag::make_op(
      std::move(y), {logits},
      [segs](const Tensor& g, const Tensor& self, const std::vector<bool>&) {
        const Matrix& yv = self.value();
        const Matrix& gv = g.value();
        Matrix dx(yv.rows(), yv.cols());
        for (const auto& seg : segs) {
          const auto off = static_cast<Index>(seg.offset);
          const auto w = static_cast<Index>(seg.width);
          if (seg.kind == ActivationSegment::Kind::Sigmoid) {
            const auto ys = yv.middleCols(off, w).array();
            dx.middleCols(off, w) = (gv.middleCols(off, w).array() * ys * (1.0 - ys)).matrix();
            continue;
          }
          for (Index r = 0; r < yv.rows(); ++r) {
            double dot = 0.0;
            for (Index k = 0; k < w; ++k) dot += gv(r, off + k) * yv(r, off + k);
            for (Index k = 0; k < w; ++k) dx(r, off + k) = yv(r, off + k) * (gv(r, off + k) - dot);
          }
        }
        return std::vector<ag::Grad>{ag::constant(std::move(dx))};
      });
}

Tensor generator_graph(const GeneratorParams& p, const DatasetSchema& schema, const Tensor& z,
                       Index batch, Index steps) {
  if (z.cols() != p.forward.w_input.rows() || z.rows() != batch * steps) {
    throw std::invalid_argument("generator: latent shape mismatch");
  }
  const Tensor fw = lstm_sequence(p.forward, z, batch, steps, false);
  const Tensor bw = lstm_sequence(p.backward, z, batch, steps, true);
  const Tensor both[] = {fw, bw};
  Tensor h = ag::relu(dense_apply(p.merge, ag::concat_cols(both)));
  h = ag::relu(dense_apply(p.dense2, h));
  const Tensor logits = dense_apply(p.dense3, h);
  const auto layout = activation_layout(schema);
  return output_activation(logits, layout);
}

Tensor soft_embed_graph(const DiscriminatorParams& p, const DatasetSchema& schema,
                        const Tensor& x) {
  const auto layout = activation_layout(schema);
  if (x.cols() != static_cast<Index>(encoded_width(schema))) {
    throw std::invalid_argument("soft_embed: encoded width mismatch");
  }
  std::vector<Tensor> parts;
  for (std::size_t v = 0; v < schema.variables.size(); ++v) {
    const auto& seg = layout[v];
    const Tensor slice = ag::block(x, 0, static_cast<Index>(seg.offset), x.rows(),
                                   static_cast<Index>(seg.width));
    parts.push_back(schema.variables[v].is_numeric() ? slice
                                                     : ag::matmul(slice, p.embeddings[v]));
  }
  return ag::concat_cols(parts);
}

Tensor discriminator_graph(const DiscriminatorParams& p, const DatasetSchema& schema,
                           const Tensor& x, Index batch, Index steps, const Matrix& mask) {
  if (x.rows() != batch * steps || mask.rows() != batch * steps) {
    throw std::invalid_argument("discriminator: input shape mismatch");
  }
  const Tensor e = soft_embed_graph(p, schema, x);
  Tensor h = ag::relu(dense_apply(p.dense1, e));
  h = ag::relu(dense_apply(p.dense2, h));
  const Tensor fw = lstm_sequence(p.forward, h, batch, steps, false, &mask);
  const Tensor bw = lstm_sequence(p.backward, h, batch, steps, true, &mask);
  const Tensor both[] = {fw, bw};
  const Tensor states = ag::concat_cols(both);

  // Mean over each member's valid timesteps.
  Matrix pool = Matrix::Zero(batch, batch * steps);
  for (Index b = 0; b < batch; ++b) {
    double count = 0.0;
    for (Index t = 0; t < steps; ++t) count += mask(t * batch + b, 0);
    if (count <= 0.0) throw DataError("sequence with no valid timesteps");
    for (Index t = 0; t < steps; ++t) pool(b, t * batch + b) = mask(t * batch + b, 0) / count;
  }
  const Tensor pooled = ag::matmul(ag::constant(std::move(pool)), states);
  return dense_apply(p.final_dense, pooled);
}

Matrix sequence_mask(std::span<const std::size_t> lengths, std::size_t steps) {
  const auto B = static_cast<Index>(lengths.size());
  Matrix m(B * static_cast<Index>(steps), 1);
  for (std::size_t t = 0; t < steps; ++t) {
    for (Index b = 0; b < B; ++b) {
      m(static_cast<Index>(t) * B + b, 0) = t < lengths[static_cast<std::size_t>(b)] ? 1.0 : 0.0;
    }
  }
  return m;
}

Matrix to_time_major(const EncodedTensor& tensor, std::span<const std::size_t> members,
                     std::size_t steps) {
  if (steps > tensor.steps) throw std::invalid_argument("to_time_major: too many steps");
  const auto B = static_cast<Index>(members.size());
  Matrix m(B * static_cast<Index>(steps), static_cast<Index>(tensor.width));
  for (std::size_t t = 0; t < steps; ++t) {
    for (Index b = 0; b < B; ++b) {
      const auto row = tensor.row(members[static_cast<std::size_t>(b)], t);
      for (std::size_t d = 0; d < tensor.width; ++d) {
        m(static_cast<Index>(t) * B + b, static_cast<Index>(d)) = row[d];
      }
    }
  }
  return m;
}

EncodedTensor generator_forward(const GeneratorParams& params,
                                std::shared_ptr<const DatasetSchema> schema,
                                const LatentBatch& z) {
  if (z.dim != schema->latent_dim) throw std::invalid_argument("latent dim mismatch");
  ag::NoGradGuard no_grad;
  EncodedTensor out = EncodedTensor::zeros(schema, z.batch, z.steps);
  if (z.batch == 0 || z.steps == 0) return out;
  const auto B = static_cast<Index>(z.batch);
  const Tensor y = generator_graph(params, *schema, ag::constant(z.time_major()), B,
                                   static_cast<Index>(z.steps));
  const Matrix& v = y.value();
  for (std::size_t t = 0; t < z.steps; ++t) {
    for (std::size_t n = 0; n < z.batch; ++n) {
      for (std::size_t d = 0; d < out.width; ++d) {
        out.at(n, t, d) = v(static_cast<Index>(t) * B + static_cast<Index>(n), static_cast<Index>(d));
      }
    }
  }
  return out;
}

namespace {
std::vector<std::size_t> all_members(std::size_t n) {
  std::vector<std::size_t> m(n);
  for (std::size_t i = 0; i < n; ++i) m[i] = i;
  return m;
}
}  // namespace

EmbeddedTensor soft_embed(const DiscriminatorParams& params, const EncodedTensor& x) {
  ag::NoGradGuard no_grad;
  EmbeddedTensor out;
  out.patients = x.patients;
  out.steps = x.steps;
  out.width = embedded_width(*x.schema);
  out.data.assign(out.patients * out.steps * out.width, 0.0);
  if (x.patients == 0) return out;
  const auto members = all_members(x.patients);
  const Tensor e = soft_embed_graph(params, *x.schema, ag::constant(to_time_major(x, members, x.steps)));
  const auto B = static_cast<Index>(x.patients);
  for (std::size_t t = 0; t < x.steps; ++t) {
    for (std::size_t n = 0; n < x.patients; ++n) {
      for (std::size_t d = 0; d < out.width; ++d) {
        out.data[(n * out.steps + t) * out.width + d] =
            e.value()(static_cast<Index>(t) * B + static_cast<Index>(n), static_cast<Index>(d));
      }
    }
  }
  return out;
}

std::vector<double> discriminator_forward(const DiscriminatorParams& params,
                                          const EncodedTensor& x) {
  ag::NoGradGuard no_grad;
  if (x.patients == 0) return {};
  const auto members = all_members(x.patients);
  const Matrix mask = sequence_mask(x.lengths, x.steps);
  const Tensor s = discriminator_graph(params, *x.schema,
                                       ag::constant(to_time_major(x, members, x.steps)),
                                       static_cast<Index>(x.patients),
                                       static_cast<Index>(x.steps), mask);
  return std::vector<double>(s.value().data(), s.value().data() + s.rows());
}

}  // namespace synthgym
