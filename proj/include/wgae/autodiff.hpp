#pragma once

#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

namespace wgae::ad {

using Matrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

class Tape;

// Handle to a tape node. Cheap to copy; valid while its tape lives.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const;
};

// Append-only record of matrix-valued primitives. Adjoints accumulate
// additively, so fan-out needs no special handling.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var parameter(Matrix value);
  Var scalar_constant(double value);

  // Root must be 1 x 1.
  void backward(Var root);
  // Zero matrix when no gradient reached the node.
  Matrix grad(Var v) const;
  bool has_grad(Var v) const;

  std::size_t size() const { return nodes_.size(); }

  // Any kinked primitive evaluated within `radius` of its kink raises the
  // flag; gradient checks use it to skip non-differentiable points.
  void set_kink_radius(double radius) { kink_radius_ = radius; }
  bool kink_hit() const { return !kink_op_.empty(); }
  const std::string& kink_op() const { return kink_op_; }

  // Internal interface for primitives.
  struct Node {
    Matrix value;
    Matrix adjoint;
    bool requires_grad = false;
    bool has_adjoint = false;
    const char* op = "leaf";
    std::function<void()> backward;
  };
  Var push(const char* op, Matrix value, std::initializer_list<Var> inputs);
  Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  // Accumulates `delta` into the adjoint of `v` if it requires a gradient.
  void accumulate(Var v, const Matrix& delta);
  void note_kink(const char* op, double distance);
  bool requires_grad(Var v) const { return node(v.id).requires_grad; }

 private:
  std::deque<Node> nodes_;
  double kink_radius_ = 0.0;
  std::string kink_op_;
};

// Elementwise arithmetic (equal shapes).
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var neg(Var a);
// a (N x K) combined with a 1 x K row, broadcast over rows.
Var mul_row(Var a, Var row);
Var add_row(Var a, Var row);
// a (N x K) scaled per row by an N x 1 column.
Var mul_col(Var a, Var col);

Var matmul(Var a, Var b);
// Constant sparse matrix times a dense variable.
Var spmm(const SparseMatrix& s, Var b);
// out[rows[e]] += values[e] * b[cols[e]]; gradients reach values and b.
Var edge_spmm(Var values, std::span<const int> rows, std::span<const int> cols, Eigen::Index out_rows, Var b);

Var exp(Var a);
Var log(Var a);
Var softplus(Var a);
Var leaky_relu(Var a, double negative_slope);
Var lgamma(Var a);
Var digamma(Var a);
Var reciprocal(Var a);
// log(1 - exp(-a)) for a > 0
Var log1mexp(Var a);
// max(a, floor); zero gradient where the floor is active.
Var clamp_min(Var a, double floor);

Var sum(Var a);
Var col_sum(Var a);  // 1 x K
Var row_sum(Var a);  // N x 1
Var row_logsumexp(Var a);  // N x 1, max-shifted
Var gather_rows(Var a, std::span<const int> index);
// Softmax of a column vector within contiguous segments [offsets[s], offsets[s+1]).
Var segment_softmax(Var a, std::span<const int> offsets);

// scale * (-ln(1 - eps))^(1 / shape), elementwise with constant eps.
Var weibull_reparam(Var shape, Var scale, const Matrix& eps);

// sum_{(j,v)} x_jv log((theta phi^T)_jv) - sum_jk theta_jk colsum(phi)_k,
// with x an N x V sparse count matrix and phi a constant V x K matrix.
Var poisson_loglik(Var theta, const Matrix& phi, const SparseMatrix& x);

struct GradientCheckReport {
  double max_rel_error = 0.0;
  double value = 0.0;
  bool non_checkable = false;  // evaluation touched a kink
  std::string kink_op;
  struct Failure {
    std::size_t parameter;
    Eigen::Index row, col;
    double analytic, numeric, rel_error;
  };
  std::vector<Failure> failures;
  bool passed() const { return !non_checkable && failures.empty(); }
};

using Objective = std::function<Var(Tape&, std::span<const Var>)>;

// Evaluates the scalar objective and its reverse-mode gradients.
struct Evaluation {
  double value;
  std::vector<Matrix> gradients;
};
Evaluation evaluate_with_gradients(const Objective& f, std::span<const Matrix> parameters);

// Central finite differences per coordinate with step 1e-5 * max(1, |x|).
// Relative error is |a - n| / max(|a|, |n|, 1e-6 * max(1, |f|)).
GradientCheckReport check_gradients(const Objective& f, std::span<const Matrix> parameters, double tolerance,
                                    double relative_step = 1e-5);

}  // namespace wgae::ad
