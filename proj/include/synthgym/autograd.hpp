#pragma once

// Matrix-valued reverse-mode differentiation. Backward rules are expressed with the
// same ops, so gradients can themselves be differentiated (needed by the gradient
// penalty). A few ops are marked first-order: their backward uses constants and must
// not sit on a path that is differentiated twice.

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace synthgym::ag {

using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

struct Node;

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  bool defined() const { return static_cast<bool>(node_); }
  const Matrix& value() const;
  Matrix& mutable_value();
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  double item() const;
  bool requires_grad() const;
  Node* get() const { return node_.get(); }
  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// A gradient contribution; a value smaller than its parent covers the block at (row, col).
struct Grad {
  Tensor value;
  Index row = 0;
  Index col = 0;

  Grad() = default;
  Grad(Tensor v) : value(std::move(v)) {}  // NOLINT(google-explicit-constructor)
  Grad(Tensor v, Index r, Index c) : value(std::move(v)), row(r), col(c) {}
};

/// Gradient contributions for each parent; undefined entries mean "no contribution".
using BackwardFn = std::function<std::vector<Grad>(const Tensor& grad, const Tensor& self,
                                                   const std::vector<bool>& needed)>;

struct Node {
  Matrix value;
  bool requires_grad = false;
  std::vector<Tensor> parents;
  BackwardFn backward;
};

bool grad_enabled();

/// Disables graph recording for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

Tensor constant(Matrix value);
Tensor parameter(Matrix value);
Tensor detach(const Tensor& x);
Tensor zeros(Index rows, Index cols);

// op_a(a) * op_b(b), where op transposes when the flag is set.
Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_a = false,
              bool transpose_b = false);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// a * scale + shift elementwise.
Tensor affine(const Tensor& a, double scale, double shift = 0.0);
/// Adds a 1 x C row to every row of a.
Tensor add_row(const Tensor& a, const Tensor& row);
/// Multiplies row r of a by column entry c(r).
Tensor mul_col(const Tensor& a, const Tensor& col);

Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor square(const Tensor& a);
/// First-order: sqrt with zero derivative at zero.
Tensor sqrt(const Tensor& a);

Tensor block(const Tensor& a, Index row, Index col, Index rows, Index cols);
/// Zero matrix of rows x cols with a placed at (row, col).
Tensor place(const Tensor& a, Index rows, Index cols, Index row, Index col);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor vstack(std::span<const Tensor> parts);

Tensor sum_rows(const Tensor& a);  // R x C -> 1 x C
Tensor sum_cols(const Tensor& a);  // R x C -> R x 1
Tensor repeat_rows(const Tensor& row, Index n);
Tensor repeat_cols(const Tensor& col, Index n);
Tensor sum_all(const Tensor& a);
/// 1 x 1 tensor broadcast to rows x cols.
Tensor fill(const Tensor& scalar, Index rows, Index cols);
Tensor mean(const Tensor& a);

/// Sum of contributions placed into a rows x cols zero matrix.
Tensor accumulate(std::span<const Grad> parts, Index rows, Index cols);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

/// Builds a node from a value and a backward rule (used by custom ops).
Tensor make_op(Matrix value, std::vector<Tensor> parents, BackwardFn backward);

/// Gradients of a scalar output with respect to inputs. Inputs unreachable from
/// the output receive zero matrices. With create_graph the result is differentiable.
std::vector<Tensor> grad(const Tensor& output, std::span<const Tensor> inputs,
                         bool create_graph = false);

}  // namespace synthgym::ag
