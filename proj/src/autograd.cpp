#include "synthgym/autograd.hpp"

#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace synthgym::ag {

namespace {
thread_local bool g_grad_enabled = true;

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
  }
}
}  // namespace

const Matrix& Tensor::value() const { return node_->value; }
Matrix& Tensor::mutable_value() { return node_->value; }
double Tensor::item() const { return node_->value(0, 0); }
bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

namespace {
class GradModeGuard {
 public:
  explicit GradModeGuard(bool enabled) : previous_(g_grad_enabled) { g_grad_enabled = enabled; }
  ~GradModeGuard() { g_grad_enabled = previous_; }

 private:
  bool previous_;
};
}  // namespace

Tensor constant(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Tensor(std::move(node));
}

Tensor parameter(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Tensor(std::move(node));
}

Tensor detach(const Tensor& x) { return constant(x.value()); }

Tensor zeros(Index rows, Index cols) { return constant(Matrix::Zero(rows, cols)); }

Tensor make_op(Matrix value, std::vector<Tensor> parents, BackwardFn backward) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (g_grad_enabled) {
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    if (any) {
      node->requires_grad = true;
      node->parents = std::move(parents);
      node->backward = std::move(backward);
    }
  }
  return Tensor(std::move(node));
}

Tensor matmul(const Tensor& a, const Tensor& b, bool ta, bool tb) {
  Matrix v;
  if (!ta && !tb) v.noalias() = a.value() * b.value();
  else if (ta && !tb) v.noalias() = a.value().transpose() * b.value();
  else if (!ta && tb) v.noalias() = a.value() * b.value().transpose();
  else v.noalias() = a.value().transpose() * b.value().transpose();
  return make_op(std::move(v), {a, b},
                 [ta, tb](const Tensor& g, const Tensor& self, const std::vector<bool>& need) {
                   const Tensor& A = self.get()->parents[0];
                   const Tensor& B = self.get()->parents[1];
                   std::vector<Grad> out(2);
                   if (need[0]) out[0] = ta ? matmul(B, g, tb, true) : matmul(g, B, false, !tb);
                   if (need[1]) out[1] = tb ? matmul(g, A, true, ta) : matmul(A, g, !ta, false);
                   return out;
                 });
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  return make_op(a.value() + b.value(), {a, b},
                 [](const Tensor& g, const Tensor&, const std::vector<bool>&) {
                   return std::vector<Grad>{g, g};
                 });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  return make_op(a.value() - b.value(), {a, b},
                 [](const Tensor& g, const Tensor&, const std::vector<bool>& need) {
                   std::vector<Grad> out{g, Tensor()};
                   if (need[1]) out[1] = affine(g, -1.0);
                   return out;
                 });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  return make_op(a.value().cwiseProduct(b.value()), {a, b},
                 [](const Tensor& g, const Tensor& self, const std::vector<bool>& need) {
                   const auto& p = self.get()->parents;
                   std::vector<Grad> out(2);
                   if (need[0]) out[0] = mul(g, p[1]);
                   if (need[1]) out[1] = mul(g, p[0]);
                   return out;
                 });
}

Tensor affine(const Tensor& a, double scale, double shift) {
  Matrix v = (a.value().array() * scale + shift).matrix();
  return make_op(std::move(v), {a},
                 [scale](const Tensor& g, const Tensor&, const std::vector<bool>&) {
                   return std::vector<Grad>{affine(g, scale)};
                 });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw std::invalid_argument("add_row: shape mismatch");
  }
  Matrix v = a.value().rowwise() + row.value().row(0);
  return make_op(std::move(v), {a, row},
                 [](const Tensor& g, const Tensor&, const std::vector<bool>& need) {
                   std::vector<Grad> out{g, Tensor()};
                   if (need[1]) out[1] = sum_rows(g);
                   return out;
                 });
}

Tensor mul_col(const Tensor& a, const Tensor& col) {
  if (col.cols() != 1 || col.rows() != a.rows()) {
    throw std::invalid_argument("mul_col: shape mismatch");
  }
  Matrix v = (a.value().array().colwise() * col.value().col(0).array()).matrix();
  return make_op(std::move(v), {a, col},
                 [](const Tensor& g, const Tensor& self, const std::vector<bool>& need) {
                   const auto& p = self.get()->parents;
                   std::vector<Grad> out(2);
                   if (need[0]) out[0] = mul_col(g, p[1]);
                   if (need[1]) out[1] = sum_cols(mul(g, p[0]));
                   return out;
                 });
}

Tensor sigmoid(const Tensor& a) {
  Matrix v = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  return make_op(std::move(v), {a},
                 [](const Tensor& g, const Tensor& self, const std::vector<bool>&) {
                   return std::vector<Grad>{mul(g, sub(self, mul(self, self)))};
                 });
}

Tensor tanh(const Tensor& a) {
  Matrix v = a.value().array().tanh().matrix();
  return make_op(std::move(v), {a},
                 [](const Tensor& g, const Tensor& self, const std::vector<bool>&) {
                   return std::vector<Grad>{mul(g, affine(mul(self, self), -1.0, 1.0))};
                 });
}

Tensor relu(const Tensor& a) {
  Matrix v = a.value().cwiseMax(0.0);
  return make_op(std::move(v), {a},
                 [](const Tensor& g, const Tensor& self, const std::vector<bool>&) {
                   const Matrix& x = self.get()->parents[0].value();
                   Matrix mask = (x.array() > 0.0).cast<double>().matrix();
                   return std::vector<Grad>{mul(g, constant(std::move(mask)))};
                 });
}

Tensor square(const Tensor& a) {
  return make_op(a.value().array().square().matrix(), {a},
                 [](const Tensor& g, const Tensor& self, const std::vector<bool>&) {
                   return std::vector<Grad>{mul(g, affine(self.get()->parents[0], 2.0))};
                 });
}

Tensor sqrt(const Tensor& a) {
  Matrix v = a.value().array().sqrt().matrix();
  return make_op(std::move(v), {a},
                 [](const Tensor& g, const Tensor& self, const std::vector<bool>&) {
                   const Matrix& y = self.value();
                   Matrix d = (y.array() > 0.0).select(0.5 / y.array(), 0.0).matrix();
                   return std::vector<Grad>{mul(g, constant(std::move(d)))};
                 });
}

Tensor block(const Tensor& a, Index row, Index col, Index rows, Index cols) {
  if (row < 0 || col < 0 || row + rows > a.rows() || col + cols > a.cols()) {
    throw std::invalid_argument("block: out of range");
  }
  return make_op(a.value().block(row, col, rows, cols), {a},
                 [=](const Tensor& g, const Tensor&, const std::vector<bool>&) {
                   return std::vector<Grad>{Grad(g, row, col)};
                 });
}

Tensor place(const Tensor& a, Index rows, Index cols, Index row, Index col) {
  Matrix v = Matrix::Zero(rows, cols);
  v.block(row, col, a.rows(), a.cols()) = a.value();
  const Index r = a.rows();
  const Index c = a.cols();
  return make_op(std::move(v), {a},
                 [=](const Tensor& g, const Tensor&, const std::vector<bool>&) {
                   return std::vector<Grad>{block(g, row, col, r, c)};
                 });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
  const Index R = parts[0].rows();
  Index C = 0;
  for (const auto& p : parts) {
    if (p.rows() != R) throw std::invalid_argument("concat_cols: row mismatch");
    C += p.cols();
  }
  Matrix v(R, C);
  std::vector<Index> offsets;
  Index off = 0;
  for (const auto& p : parts) {
    v.middleCols(off, p.cols()) = p.value();
    offsets.push_back(off);
    off += p.cols();
  }
  return make_op(std::move(v), std::vector<Tensor>(parts.begin(), parts.end()),
                 [offsets, R](const Tensor& g, const Tensor& self, const std::vector<bool>& need) {
                   const auto& p = self.get()->parents;
                   std::vector<Grad> out(p.size());
                   for (std::size_t i = 0; i < p.size(); ++i) {
                     if (need[i]) out[i] = block(g, 0, offsets[i], R, p[i].cols());
                   }
                   return out;
                 });
}

Tensor vstack(std::span<const Tensor> parts) {
  if (parts.empty()) throw std::invalid_argument("vstack: no parts");
  const Index C = parts[0].cols();
  Index R = 0;
  for (const auto& p : parts) {
    if (p.cols() != C) throw std::invalid_argument("vstack: column mismatch");
    R += p.rows();
  }
  Matrix v(R, C);
  std::vector<Index> offsets;
  Index off = 0;
  for (const auto& p : parts) {
    v.middleRows(off, p.rows()) = p.value();
    offsets.push_back(off);
    off += p.rows();
  }
  return make_op(std::move(v), std::vector<Tensor>(parts.begin(), parts.end()),
                 [offsets, C](const Tensor& g, const Tensor& self, const std::vector<bool>& need) {
                   const auto& p = self.get()->parents;
                   std::vector<Grad> out(p.size());
                   for (std::size_t i = 0; i < p.size(); ++i) {
                     if (need[i]) out[i] = block(g, offsets[i], 0, p[i].rows(), C);
                   }
                   return out;
                 });
}

Tensor sum_rows(const Tensor& a) {
  const Index R = a.rows();
  return make_op(a.value().colwise().sum(), {a},
                 [R](const Tensor& g, const Tensor&, const std::vector<bool>&) {
                   return std::vector<Grad>{repeat_rows(g, R)};
                 });
}

Tensor sum_cols(const Tensor& a) {
  const Index C = a.cols();
  return make_op(a.value().rowwise().sum(), {a},
                 [C](const Tensor& g, const Tensor&, const std::vector<bool>&) {
                   return std::vector<Grad>{repeat_cols(g, C)};
                 });
}

Tensor repeat_rows(const Tensor& row, Index n) {
  if (row.rows() != 1) throw std::invalid_argument("repeat_rows: expects a row");
  return make_op(row.value().replicate(n, 1), {row},
                 [](const Tensor& g, const Tensor&, const std::vector<bool>&) {
                   return std::vector<Grad>{sum_rows(g)};
                 });
}

Tensor repeat_cols(const Tensor& col, Index n) {
  if (col.cols() != 1) throw std::invalid_argument("repeat_cols: expects a column");
  return make_op(col.value().replicate(1, n), {col},
                 [](const Tensor& g, const Tensor&, const std::vector<bool>&) {
                   return std::vector<Grad>{sum_cols(g)};
                 });
}

Tensor sum_all(const Tensor& a) {
  const Index R = a.rows();
  const Index C = a.cols();
  Matrix v(1, 1);
  v(0, 0) = a.value().sum();
  return make_op(std::move(v), {a},
                 [R, C](const Tensor& g, const Tensor&, const std::vector<bool>&) {
                   return std::vector<Grad>{fill(g, R, C)};
                 });
}

Tensor fill(const Tensor& scalar, Index rows, Index cols) {
  if (scalar.rows() != 1 || scalar.cols() != 1) throw std::invalid_argument("fill: expects 1x1");
  return make_op(Matrix::Constant(rows, cols, scalar.item()), {scalar},
                 [](const Tensor& g, const Tensor&, const std::vector<bool>&) {
                   return std::vector<Grad>{sum_all(g)};
                 });
}

Tensor mean(const Tensor& a) {
  return affine(sum_all(a), 1.0 / static_cast<double>(a.rows() * a.cols()));
}

Tensor accumulate(std::span<const Grad> parts, Index rows, Index cols) {
  if (parts.size() == 1 && parts[0].value.rows() == rows && parts[0].value.cols() == cols) {
    return parts[0].value;
  }
  Matrix v = Matrix::Zero(rows, cols);
  std::vector<Tensor> parents;
  std::vector<std::pair<Index, Index>> offsets;
  for (const auto& p : parts) {
    if (p.row + p.value.rows() > rows || p.col + p.value.cols() > cols) {
      throw std::invalid_argument("accumulate: contribution out of range");
    }
    v.block(p.row, p.col, p.value.rows(), p.value.cols()) += p.value.value();
    parents.push_back(p.value);
    offsets.emplace_back(p.row, p.col);
  }
  return make_op(std::move(v), std::move(parents),
                 [offsets](const Tensor& g, const Tensor& self, const std::vector<bool>& need) {
                   const auto& p = self.get()->parents;
                   std::vector<Grad> out(p.size());
                   for (std::size_t i = 0; i < p.size(); ++i) {
                     if (!need[i]) continue;
                     const bool full = p[i].rows() == g.rows() && p[i].cols() == g.cols();
                     out[i] = full ? g
                                   : block(g, offsets[i].first, offsets[i].second, p[i].rows(),
                                           p[i].cols());
                   }
                   return out;
                 });
}

std::vector<Tensor> grad(const Tensor& output, std::span<const Tensor> inputs,
                         bool create_graph) {
  std::vector<Tensor> result;
  result.reserve(inputs.size());
  if (!output.requires_grad()) {
    for (const auto& in : inputs) result.push_back(zeros(in.rows(), in.cols()));
    return result;
  }

  // Iterative post-order over the recorded graph.
  std::vector<std::shared_ptr<Node>> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<std::shared_ptr<Node>, std::size_t>> stack;
  stack.emplace_back(output.node(), 0);
  visited.insert(output.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      const auto& parent = node->parents[next++].node();
      if (parent->requires_grad && visited.insert(parent.get()).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  std::unordered_set<Node*> input_set;
  for (const auto& in : inputs) input_set.insert(in.get());
  std::unordered_set<Node*> relevant;
  for (const auto& node : order) {
    bool r = input_set.count(node.get()) > 0;
    for (const auto& p : node->parents) r = r || relevant.count(p.get()) > 0;
    if (r) relevant.insert(node.get());
  }

  GradModeGuard mode(create_graph);
  std::unordered_map<Node*, std::vector<Grad>> pending;
  std::unordered_map<Node*, Tensor> input_grads;
  pending[output.get()].emplace_back(constant(Matrix::Ones(output.rows(), output.cols())));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const auto& node = *it;
    auto found = pending.find(node.get());
    if (found == pending.end()) continue;
    const Tensor g = accumulate(found->second, node->value.rows(), node->value.cols());
    pending.erase(found);
    if (input_set.count(node.get()) > 0) input_grads[node.get()] = g;
    if (!node->backward || relevant.count(node.get()) == 0) continue;
    std::vector<bool> need(node->parents.size());
    bool any = false;
    for (std::size_t i = 0; i < need.size(); ++i) {
      need[i] = node->parents[i].requires_grad() && relevant.count(node->parents[i].get()) > 0;
      any = any || need[i];
    }
    if (!any) continue;
    auto contributions = node->backward(g, Tensor(node), need);
    for (std::size_t i = 0; i < need.size(); ++i) {
      if (!need[i] || !contributions[i].value.defined()) continue;
      pending[node->parents[i].get()].push_back(std::move(contributions[i]));
    }
  }

  for (const auto& in : inputs) {
    auto found = input_grads.find(in.get());
    result.push_back(found != input_grads.end() ? found->second : zeros(in.rows(), in.cols()));
  }
  return result;
}

}  // namespace synthgym::ag
