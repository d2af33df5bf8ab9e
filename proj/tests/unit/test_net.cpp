#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "synthgym/net.hpp"
#include "synthgym/preprocess.hpp"

using namespace synthgym;
using ag::Matrix;
using Vec = std::vector<double>;

namespace {

DatasetSchema small_schema(std::size_t T = 5, std::size_t H = 6) {
  DatasetSchema s;
  s.sequence_length = T;
  s.hidden_dim = H;
  s.latent_dim = 7;
  s.variables = {fixtures::numeric("n1"), fixtures::categorical("c", {"a", "b", "c", "d"}),
                 fixtures::numeric("n2"), fixtures::binary("f")};
  return s;
}

// Plain-loop reference implementations.
Vec dense(const Vec& x, const ag::Tensor& w, const ag::Tensor& b) {
  const Matrix& W = w.value();
  Vec y(static_cast<std::size_t>(W.cols()));
  for (Eigen::Index j = 0; j < W.cols(); ++j) {
    double s = b.value()(0, j);
    for (Eigen::Index i = 0; i < W.rows(); ++i) s += x[static_cast<std::size_t>(i)] * W(i, j);
    y[static_cast<std::size_t>(j)] = s;
  }
  return y;
}

Vec relu(Vec x) {
  for (auto& v : x) v = std::max(0.0, v);
  return x;
}

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::vector<Vec> lstm(const LstmCell& cell, const std::vector<Vec>& xs, bool reverse) {
  const std::size_t H = static_cast<std::size_t>(cell.w_recurrent.rows());
  Vec h(H, 0.0), c(H, 0.0);
  std::vector<Vec> out(xs.size());
  for (std::size_t s = 0; s < xs.size(); ++s) {
    const std::size_t t = reverse ? xs.size() - 1 - s : s;
    Vec gates = dense(xs[t], cell.w_input, cell.bias);
    for (std::size_t j = 0; j < 4 * H; ++j) {
      for (std::size_t k = 0; k < H; ++k) {
        gates[j] += h[k] * cell.w_recurrent.value()(static_cast<Eigen::Index>(k),
                                                    static_cast<Eigen::Index>(j));
      }
    }
    for (std::size_t k = 0; k < H; ++k) {
      const double i = sig(gates[k]), f = sig(gates[H + k]);
      const double g = std::tanh(gates[2 * H + k]), o = sig(gates[3 * H + k]);
      c[k] = f * c[k] + i * g;
      h[k] = o * std::tanh(c[k]);
    }
    out[t] = h;
  }
  return out;
}

std::vector<std::vector<Vec>> naive_generator(const GeneratorParams& p, const DatasetSchema& s,
                                              const LatentBatch& z) {
  std::vector<std::vector<Vec>> result(z.batch);
  const auto layout = activation_layout(s);
  for (std::size_t n = 0; n < z.batch; ++n) {
    std::vector<Vec> xs(z.steps, Vec(z.dim));
    for (std::size_t t = 0; t < z.steps; ++t) {
      for (std::size_t i = 0; i < z.dim; ++i) xs[t][i] = z.at(n, t, i);
    }
    const auto fw = lstm(p.forward, xs, false);
    const auto bw = lstm(p.backward, xs, true);
    for (std::size_t t = 0; t < z.steps; ++t) {
      Vec cat = fw[t];
      cat.insert(cat.end(), bw[t].begin(), bw[t].end());
      Vec h = relu(dense(cat, p.merge.weight, p.merge.bias));
      h = relu(dense(h, p.dense2.weight, p.dense2.bias));
      Vec y = dense(h, p.dense3.weight, p.dense3.bias);
      for (const auto& seg : layout) {
        if (seg.kind == ActivationSegment::Kind::Sigmoid) {
          for (std::size_t k = 0; k < seg.width; ++k) y[seg.offset + k] = sig(y[seg.offset + k]);
        } else {
          double total = 0.0;
          for (std::size_t k = 0; k < seg.width; ++k) total += std::exp(y[seg.offset + k]);
          for (std::size_t k = 0; k < seg.width; ++k) y[seg.offset + k] = std::exp(y[seg.offset + k]) / total;
        }
      }
      result[n].push_back(y);
    }
  }
  return result;
}

Vec embed_row(const DiscriminatorParams& p, const DatasetSchema& s, std::span<const double> x) {
  const auto layout = activation_layout(s);
  Vec e;
  for (std::size_t v = 0; v < s.variable_count(); ++v) {
    if (s.variables[v].is_numeric()) {
      e.push_back(x[layout[v].offset]);
      continue;
    }
    const Matrix& W = p.embeddings[v].value();
    for (Eigen::Index j = 0; j < W.cols(); ++j) {
      double acc = 0.0;
      for (Eigen::Index k = 0; k < W.rows(); ++k) acc += x[layout[v].offset + k] * W(k, j);
      e.push_back(acc);
    }
  }
  return e;
}

// Runs only over each record's valid prefix and averages the states.
Vec naive_discriminator(const DiscriminatorParams& p, const EncodedTensor& x) {
  Vec scores;
  for (std::size_t n = 0; n < x.patients; ++n) {
    std::vector<Vec> hs;
    for (std::size_t t = 0; t < x.lengths[n]; ++t) {
      Vec h = relu(dense(embed_row(p, *x.schema, x.row(n, t)), p.dense1.weight, p.dense1.bias));
      hs.push_back(relu(dense(h, p.dense2.weight, p.dense2.bias)));
    }
    const auto fw = lstm(p.forward, hs, false);
    const auto bw = lstm(p.backward, hs, true);
    Vec pooled(fw[0].size() * 2, 0.0);
    for (std::size_t t = 0; t < hs.size(); ++t) {
      for (std::size_t k = 0; k < fw[t].size(); ++k) {
        pooled[k] += fw[t][k] / double(hs.size());
        pooled[fw[t].size() + k] += bw[t][k] / double(hs.size());
      }
    }
    scores.push_back(dense(pooled, p.final_dense.weight, p.final_dense.bias)[0]);
  }
  return scores;
}

bool same_values(const std::vector<NamedTensor>& a, const std::vector<NamedTensor>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].name != b[i].name || a[i].tensor.value() != b[i].tensor.value()) return false;
  }
  return true;
}

}  // namespace

TEST_SUITE("net") {
  TEST_CASE("initialisation is seeded and shaped by the schema") {
    const DatasetSchema s = fixtures::hypotension_schema();
    auto [g1, d1] = init_params(s, 42);
    auto [g2, d2] = init_params(s, 42);
    auto [g3, d3] = init_params(s, 43);
    CHECK(same_values(g1.named(), g2.named()));
    CHECK(same_values(d1.named(), d2.named()));
    CHECK_FALSE(same_values(g1.named(), g3.named()));
    CHECK_FALSE(same_values(d1.named(), d3.named()));
    CHECK(g1.dense3.weight.rows() == 128);
    CHECK(g1.dense3.weight.cols() == 54);
    CHECK(g1.forward.w_input.rows() == 128);
    CHECK(g1.forward.w_input.cols() == 4 * 128);
    CHECK(d1.dense1.weight.rows() == 39);
    CHECK(d1.final_dense.weight.cols() == 1);
    std::size_t embeddings = 0;
    for (std::size_t v = 0; v < s.variable_count(); ++v) {
      if (s.variables[v].is_numeric()) {
        CHECK_FALSE(d1.embeddings[v].defined());
        continue;
      }
      ++embeddings;
      CHECK(d1.embeddings[v].rows() == static_cast<Eigen::Index>(s.variables[v].class_count()));
      CHECK(d1.embeddings[v].cols() == (s.variables[v].kind == VariableKind::Binary ? 2 : 4));
    }
    CHECK(embeddings == 11);
    for (const auto& t : g1.named()) CHECK(t.tensor.value().allFinite());
  }

  TEST_CASE("latent draws are reproducible") {
    const auto a = sample_latent(3, 4, 5, 9);
    const auto b = sample_latent(3, 4, 5, 9);
    CHECK(a.z == b.z);
    CHECK(a.z != sample_latent(3, 4, 5, 10).z);
  }

  TEST_CASE("generator output ranges and reproducibility") {
    auto s = std::make_shared<const DatasetSchema>(small_schema());
    auto [g, d] = init_params(*s, 1);
    const auto z = sample_latent(6, s->sequence_length, s->latent_dim, 2);
    const EncodedTensor x = generator_forward(g, s, z);
    CHECK(check_encoded(x).empty());
    for (std::size_t n = 0; n < x.patients; ++n) {
      for (std::size_t t = 0; t < x.steps; ++t) {
        CHECK(x.at(n, t, 0) > 0.0);
        CHECK(x.at(n, t, 0) < 1.0);
        double block = 0.0;
        for (std::size_t k = 1; k <= 4; ++k) block += x.at(n, t, k);
        CHECK(block == doctest::Approx(1.0).epsilon(1e-12));
      }
    }
    CHECK(generator_forward(g, s, z).data == x.data);
  }

  TEST_CASE("zero parameters give flat outputs and zero scores") {
    auto s = std::make_shared<const DatasetSchema>(small_schema());
    auto [g, d] = init_params(*s, 3);
    zero_all(g.named());
    zero_all(d.named());
    const EncodedTensor x = generator_forward(g, s, sample_latent(2, 5, 7, 4));
    for (std::size_t n = 0; n < 2; ++n) {
      for (std::size_t t = 0; t < 5; ++t) {
        CHECK(x.at(n, t, 0) == 0.5);
        for (std::size_t k = 1; k <= 4; ++k) CHECK(x.at(n, t, k) == doctest::Approx(0.25));
        CHECK(x.at(n, t, 5) == 0.5);
        CHECK(x.at(n, t, 6) == doctest::Approx(0.5));
      }
    }
    auto [g2, unused] = init_params(*s, 5);
    for (double score : discriminator_forward(d, generator_forward(g2, s, sample_latent(3, 5, 7, 6)))) {
      CHECK(score == 0.0);
    }
  }

  TEST_CASE("generator matches a naive loop implementation") {
    auto s = std::make_shared<const DatasetSchema>(small_schema());
    auto [g, d] = init_params(*s, 11);
    const auto z = sample_latent(4, 5, 7, 12);
    const EncodedTensor x = generator_forward(g, s, z);
    const auto ref = naive_generator(g, *s, z);
    double worst = 0.0;
    for (std::size_t n = 0; n < 4; ++n) {
      for (std::size_t t = 0; t < 5; ++t) {
        for (std::size_t k = 0; k < x.width; ++k) {
          worst = std::max(worst, std::abs(x.at(n, t, k) - ref[n][t][k]));
        }
      }
    }
    CHECK(worst < 1e-6);
  }

  TEST_CASE("discriminator matches a naive loop over valid prefixes") {
    auto s = std::make_shared<const DatasetSchema>(small_schema());
    auto [g, d] = init_params(*s, 21);
    EncodedTensor x = generator_forward(g, s, sample_latent(5, 5, 7, 22));
    x.lengths = {5, 1, 3, 4, 2};
    const auto scores = discriminator_forward(d, x);
    const auto ref = naive_discriminator(d, x);
    REQUIRE(scores.size() == ref.size());
    for (std::size_t n = 0; n < ref.size(); ++n) CHECK(std::abs(scores[n] - ref[n]) < 1e-6);
  }

  TEST_CASE("discriminator scores are finite and pure") {
    auto s = std::make_shared<const DatasetSchema>(small_schema());
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      auto [g, d] = init_params(*s, seed);
      EncodedTensor x = generator_forward(g, s, sample_latent(2, 5, 7, seed + 1000));
      x.lengths = {5, 1 + seed % 5};
      const auto a = discriminator_forward(d, x);
      for (double v : a) CHECK(std::isfinite(v));
      CHECK(discriminator_forward(d, x) == a);
    }
    // Copies of one record score identically.
    auto [g, d] = init_params(*s, 7);
    EncodedTensor one = generator_forward(g, s, sample_latent(1, 5, 7, 8));
    EncodedTensor two = EncodedTensor::zeros(s, 2, 5);
    std::copy(one.data.begin(), one.data.end(), two.data.begin());
    std::copy(one.data.begin(), one.data.end(), two.data.begin() + one.data.size());
    const auto sc = discriminator_forward(d, two);
    CHECK(sc[0] == sc[1]);
  }

  TEST_CASE("soft embedding selects and interpolates rows") {
    DatasetSchema base;
    base.sequence_length = 1;
    base.variables = {fixtures::categorical("c", {"a", "b", "c", "d"}), fixtures::binary("f")};
    auto s = std::make_shared<const DatasetSchema>(base);
    auto [g, d] = init_params(*s, 5);
    EncodedTensor x = EncodedTensor::zeros(s, 1, 1);
    x.at(0, 0, 2) = 1.0;   // class index 2 of c
    x.at(0, 0, 4) = 0.5;   // soft binary
    x.at(0, 0, 5) = 0.5;
    const EmbeddedTensor e = soft_embed(d, x);
    REQUIRE(e.width == 6);
    const Matrix& wc = d.embeddings[0].value();
    const Matrix& wf = d.embeddings[1].value();
    for (int j = 0; j < 4; ++j) CHECK(e.at(0, 0, j) == wc(2, j));
    for (int j = 0; j < 2; ++j) {
      CHECK(e.at(0, 0, 4 + j) == doctest::Approx(0.5 * (wf(0, j) + wf(1, j))));
    }
  }

  TEST_CASE("hypotension embedding width") {
    auto s = std::make_shared<const DatasetSchema>(fixtures::hypotension_schema());
    auto [g, d] = init_params(*s, 1);
    const EncodedTensor x = EncodedTensor::zeros(s, 1, 2);
    CHECK(soft_embed(d, x).width == 39);
  }

  TEST_CASE("clone makes independent leaves") {
    auto [g, d] = init_params(small_schema(), 1);
    GeneratorParams c = clone(g);
    CHECK(same_values(c.named(), g.named()));
    c.dense3.bias.mutable_value()(0, 0) += 1.0;
    CHECK_FALSE(same_values(c.named(), g.named()));
  }
}
