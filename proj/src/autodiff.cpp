#include "wgae/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include "wgae/error.hpp"

namespace wgae::ad {
namespace {

void same_shape(Var a, Var b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    fail(ErrorCode::kInternal, std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                                   std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                   std::to_string(b.cols()));
  }
}

// Elementwise unary primitive: value f(x), derivative df(x, y).
template <typename F, typename D>
Var unary(const char* op, Var a, F f, D df) {
  Tape& t = *a.tape;
  Matrix out = a.value().unaryExpr(f);
  Var r = t.push(op, std::move(out), {a});
  if (t.requires_grad(r)) {
    t.node(r.id).backward = [&t, a, r, df]() {
      const Matrix& x = a.value();
      const Matrix& y = r.value();
      const Matrix& g = t.node(r.id).adjoint;
      Matrix d(x.rows(), x.cols());
      for (Eigen::Index k = 0; k < x.size(); ++k) d(k) = g(k) * df(x(k), y(k));
      t.accumulate(a, d);
    };
  }
  return r;
}

}  // namespace

const Matrix& Var::value() const { return tape->node(id).value; }

double Var::scalar() const {
  const Matrix& v = value();
  require(v.rows() == 1 && v.cols() == 1, ErrorCode::kInternal, "scalar(): node is not 1 x 1");
  return v(0, 0);
}

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.op = "constant";
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::parameter(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.op = "parameter";
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::scalar_constant(double value) { return constant(Matrix::Constant(1, 1, value)); }

Var Tape::push(const char* op, Matrix value, std::initializer_list<Var> inputs) {
  if (!value.allFinite()) fail(ErrorCode::kNumeric, std::string("non-finite value produced by ") + op);
  Node n;
  n.value = std::move(value);
  n.op = op;
  for (Var in : inputs) {
    require(in.tape == this, ErrorCode::kInternal, "mixing variables from different tapes");
    n.requires_grad = n.requires_grad || node(in.id).requires_grad;
  }
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

void Tape::accumulate(Var v, const Matrix& delta) {
  Node& n = node(v.id);
  if (!n.requires_grad) return;
  if (!n.has_adjoint) {
    n.adjoint = delta;
    n.has_adjoint = true;
  } else {
    n.adjoint += delta;
  }
}

void Tape::note_kink(const char* op, double distance) {
  if (kink_radius_ > 0.0 && distance < kink_radius_ && kink_op_.empty()) kink_op_ = op;
}

void Tape::backward(Var root) {
  require(root.tape == this, ErrorCode::kInternal, "backward: foreign variable");
  const Matrix& v = root.value();
  if (v.rows() != 1 || v.cols() != 1) fail(ErrorCode::kInternal, "backward requires a scalar (1 x 1) root");
  for (auto& n : nodes_) {
    n.has_adjoint = false;
    n.adjoint.resize(0, 0);
  }
  accumulate(root, Matrix::Ones(1, 1));
  for (int id = root.id; id >= 0; --id) {
    Node& n = node(id);
    if (n.has_adjoint && n.backward) n.backward();
  }
}

Matrix Tape::grad(Var v) const {
  const Node& n = node(v.id);
  if (!n.has_adjoint) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.adjoint;
}

bool Tape::has_grad(Var v) const { return node(v.id).has_adjoint; }

Var add(Var a, Var b) {
  same_shape(a, b, "add");
  Tape& t = *a.tape;
  Var r = t.push("add", a.value() + b.value(), {a, b});
  if (t.requires_grad(r)) {
    t.node(r.id).backward = [&t, a, b, r]() {
      t.accumulate(a, t.node(r.id).adjoint);
      t.accumulate(b, t.node(r.id).adjoint);
    };
  }
  return r;
}

Var sub(Var a, Var b) {
  same_shape(a, b, "sub");
  Tape& t = *a.tape;
  Var r = t.push("sub", a.value() - b.value(), {a, b});
  if (t.requires_grad(r)) {
    t.node(r.id).backward = [&t, a, b, r]() {
      t.accumulate(a, t.node(r.id).adjoint);
      t.accumulate(b, -t.node(r.id).adjoint);
    };
  }
  return r;
}

Var mul(Var a, Var b) {
  same_shape(a, b, "mul");
  Tape& t = *a.tape;
  Var r = t.push("mul", a.value().cwiseProduct(b.value()), {a, b});
  if (t.requires_grad(r)) {
    t.node(r.id).backward = [&t, a, b, r]() {
      const Matrix& g = t.node(r.id).adjoint;
      if (t.requires_grad(a)) t.accumulate(a, g.cwiseProduct(b.value()));
      if (t.requires_grad(b)) t.accumulate(b, g.cwiseProduct(a.value()));
    };
  }
  return r;
}

Var div(Var a, Var b) {
  same_shape(a, b, "div");
  Tape& t = *a.tape;
  Var r = t.push("div", a.value().cwiseQuotient(b.value()), {a, b});
  if (t.requires_grad(r)) {
    t.node(r.id).backward = [&t, a, b, r]() {
      const Matrix& g = t.node(r.id).adjoint;
      if (t.requires_grad(a)) t.accumulate(a, g.cwiseQuotient(b.value()));
      if (t.requires_grad(b)) {
        t.accumulate(b, -g.cwiseProduct(r.value()).cwiseQuotient(b.value()));
      }
    };
  }
  return r;
}

Var scale(Var a, double s) {
  Tape& t = *a.tape;
  Var r = t.push("scale", a.value() * s, {a});
  if (t.requires_grad(r)) {
    t.node(r.id).backward = [&t, a, r, s]() { t.accumulate(a, t.node(r.id).adjoint * s); };
  }
  return r;
}

Var add_scalar(Var a, double s) {
  Tape& t = *a.tape;
  Var r = t.push("add_scalar", a.value().array() + s, {a});
  if (t.requires_grad(r)) {
    t.node(r.id).backward = [&t, a, r]() { t.accumulate(a, t.node(r.id).adjoint); };
  }
  return r;
}

Var neg(Var a) { return scale(a, -1.0); }

Var mul_row(Var a, Var row) {
  require(row.rows() == 1 && row.cols() == a.cols(), ErrorCode::kInternal, "mul_row: shape mismatch");
  Tape& t = *a.tape;
  Matrix out = a.value().array().rowwise() * row.value().row(0).array();
  Var r = t.push("mul_row", std::move(out), {a, row});
  if (t.requires_grad(r)) {
    t.node(r.id).backward = [&t, a, row, r]() {
      const Matrix& g = t.node(r.id).adjoint;
      if (t.requires_grad(a)) t.accumulate(a, g.array().rowwise() * row.value().row(0).array());
      if (t.requires_grad(row)) t.accumulate(row, g.cwiseProduct(a.value()).colwise().sum());
    };
  }
  return r;
}

Var add_row(Var a, Var row) {
  require(row.rows() == 1 && row.cols() == a.cols(), ErrorCode::kInternal, "add_row: shape mismatch");
  Tape& t = *a.tape;
  Matrix out = a.value().rowwise() + row.value().row(0);
  Var r = t.push("add_row", std::move(out), {a, row});
  if (t.requires_grad(r)) {
    t.node(r.id).backward = [&t, a, row, r]() {
      const Matrix& g = t.node(r.id).adjoint;
      t.accumulate(a, g);
      t.accumulate(row, g.colwise().sum());
    };
  }
  return r;
}

Var mul_col(Var a, Var col) {
  require(col.cols() == 1 && col.rows() == a.rows(), ErrorCode::kInternal, "mul_col: shape mismatch");
  Tape& t = *a.tape;
  Matrix out = a.value().array().colwise() * col.value().col(0).array();
  Var r = t.push("mul_col", std::move(out), {a, col});
  if (t.requires_grad(r)) {
    t.node(r.id).backward = [&t, a, col, r]() {
      const Matrix& g = t.node(r.id).adjoint;
      if (t.requires_grad(a)) t.accumulate(a, g.array().colwise() * col.value().col(0).array());
      if (t.requires_grad(col)) t.accumulate(col, g.cwiseProduct(a.value()).rowwise().sum());
    };
  }
  return r;
}

Var matmul(Var a, Var b) {
  require(a.cols() == b.rows(), ErrorCode::kInternal, "matmul: inner dimension mismatch");
  Tape& t = *a.tape;
  Var r = t.push("matmul", a.value() * b.value(), {a, b});
  if (t.requires_grad(r)) {
    t.node(r.id).backward = [&t, a, b, r]() {
      const Matrix& g = t.node(r.id).adjoint;
      if (t.requires_grad(a)) t.accumulate(a, g * b.value().transpose());
      if (t.requires_grad(b)) t.accumulate(b, a.value().transpose() * g);
    };
  }
  return r;
}

Var spmm(const SparseMatrix& s, Var b) {
  require(s.cols() == b.rows(), ErrorCode::kInternal, "spmm: inner dimension mismatch");
  Tape& t = *b.tape;
  Matrix out = s * b.value();
  Var r = t.push("spmm", std::move(out), {b});
  if (t.requires_grad(r)) {
    t.node(r.id).backward = [&t, &s, b, r]() { t.accumulate(b, s.transpose() * t.node(r.id).adjoint); };
  }
  return r;
}

Var edge_spmm(Var values, std::span<const int> rows, std::span<const int> cols, Eigen::Index out_rows, Var b) {
  require(values.cols() == 1 && static_cast<std::size_t>(values.rows()) == rows.size() && rows.size() == cols.size(),
          ErrorCode::kInternal, "edge_spmm: pattern mismatch");
  Tape& t = *values.tape;
  const Matrix& v = values.value();
  const Matrix& h = b.value();
  Matrix out = Matrix::Zero(out_rows, h.cols());
  for (std::size_t e = 0; e < rows.size(); ++e) out.row(rows[e]) += v(static_cast<Eigen::Index>(e), 0) * h.row(cols[e]);
  std::vector<int> rcopy(rows.begin(), rows.end());
  std::vector<int> ccopy(cols.begin(), cols.end());
  Var r = t.push("edge_spmm", std::move(out), {values, b});
  if (t.requires_grad(r)) {
    t.node(r.id).backward = [&t, values, b, r, rcopy = std::move(rcopy), ccopy = std::move(ccopy)]() {
      const Matrix& g = t.node(r.id).adjoint;
      const Matrix& vv = values.value();
      const Matrix& hh = b.value();
      if (t.requires_grad(values)) {
        Matrix dv(vv.rows(), 1);
        for (std::size_t e = 0; e < rcopy.size(); ++e) {
          dv(static_cast<Eigen::Index>(e), 0) = g.row(rcopy[e]).dot(hh.row(ccopy[e]));
        }
        t.accumulate(values, dv);
      }
      if (t.requires_grad(b)) {
        Matrix dh = Matrix::Zero(hh.rows(), hh.cols());
        for (std::size_t e = 0; e < rcopy.size(); ++e) {
          dh.row(ccopy[e]) += vv(static_cast<Eigen::Index>(e), 0) * g.row(rcopy[e]);
        }
        t.accumulate(b, dh);
      }
    };
  }
  return r;
}

Var exp(Var a) {
  return unary("exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  return unary("log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var softplus(Var a) {
  return unary(
      "softplus", a, [](double x) { return x > 30.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); },
      [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

Var leaky_relu(Var a, double negative_slope) {
  Tape& t = *a.tape;
  t.note_kink("leaky_relu", a.value().cwiseAbs().minCoeff());
  return unary(
      "leaky_relu", a, [negative_slope](double x) { return x >= 0.0 ? x : negative_slope * x; },
      [negative_slope](double x, double) { return x >= 0.0 ? 1.0 : negative_slope; });
}

Var lgamma(Var a) {
  return unary(
      "lgamma", a, [](double x) { return std::lgamma(x); },
      [](double x, double) { return boost::math::digamma(x); });
}

Var digamma(Var a) {
  return unary(
      "digamma", a, [](double x) { return boost::math::digamma(x); },
      [](double x, double) { return boost::math::trigamma(x); });
}

Var reciprocal(Var a) {
  return unary("reciprocal", a, [](double x) { return 1.0 / x; }, [](double, double y) { return -y * y; });
}

Var log1mexp(Var a) {
  // d/dx log(1 - e^-x) = 1 / (e^x - 1)
  return unary(
      "log1mexp", a,
      [](double x) { return x > 0.693 ? std::log1p(-std::exp(-x)) : std::log(-std::expm1(-x)); },
      [](double x, double) { return 1.0 / std::expm1(x); });
}

Var clamp_min(Var a, double floor) {
  Tape& t = *a.tape;
  t.note_kink("clamp_min", (a.value().array() - floor).abs().minCoeff());
  return unary(
      "clamp_min", a, [floor](double x) { return std::max(x, floor); },
      [floor](double x, double) { return x > floor ? 1.0 : 0.0; });
}

Var sum(Var a) {
  Tape& t = *a.tape;
  Var r = t.push("sum", Matrix::Constant(1, 1, a.value().sum()), {a});
  if (t.requires_grad(r)) {
    t.node(r.id).backward = [&t, a, r]() {
      t.accumulate(a, Matrix::Constant(a.rows(), a.cols(), t.node(r.id).adjoint(0, 0)));
    };
  }
  return r;
}

Var col_sum(Var a) {
  Tape& t = *a.tape;
  Var r = t.push("col_sum", a.value().colwise().sum(), {a});
  if (t.requires_grad(r)) {
    t.node(r.id).backward = [&t, a, r]() {
      t.accumulate(a, t.node(r.id).adjoint.replicate(a.rows(), 1));
    };
  }
  return r;
}

Var row_sum(Var a) {
  Tape& t = *a.tape;
  Var r = t.push("row_sum", a.value().rowwise().sum(), {a});
  if (t.requires_grad(r)) {
    t.node(r.id).backward = [&t, a, r]() {
      t.accumulate(a, t.node(r.id).adjoint.replicate(1, a.cols()));
    };
  }
  return r;
}

Var row_logsumexp(Var a) {
  Tape& t = *a.tape;
  const Matrix& x = a.value();
  Matrix out(x.rows(), 1);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double top = x.row(r).maxCoeff();
    out(r, 0) = top + std::log((x.row(r).array() - top).exp().sum());
  }
  Var r = t.push("row_logsumexp", std::move(out), {a});
  if (t.requires_grad(r)) {
    t.node(r.id).backward = [&t, a, r]() {
      const Matrix& g = t.node(r.id).adjoint;
      Matrix soft = (a.value().colwise() - r.value().col(0)).array().exp().matrix();
      t.accumulate(a, soft.array().colwise() * g.col(0).array());
    };
  }
  return r;
}

Var gather_rows(Var a, std::span<const int> index) {
  Tape& t = *a.tape;
  const Matrix& v = a.value();
  Matrix out(static_cast<Eigen::Index>(index.size()), v.cols());
  for (std::size_t k = 0; k < index.size(); ++k) {
    require(index[k] >= 0 && index[k] < v.rows(), ErrorCode::kInternal, "gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(k)) = v.row(index[k]);
  }
  Var r = t.push("gather_rows", std::move(out), {a});
  if (t.requires_grad(r)) {
    std::vector<int> idx(index.begin(), index.end());
    t.node(r.id).backward = [&t, a, r, idx = std::move(idx)]() {
      const Matrix& g = t.node(r.id).adjoint;
      Matrix d = Matrix::Zero(a.rows(), a.cols());
      for (std::size_t k = 0; k < idx.size(); ++k) d.row(idx[k]) += g.row(static_cast<Eigen::Index>(k));
      t.accumulate(a, d);
    };
  }
  return r;
}

Var segment_softmax(Var a, std::span<const int> offsets) {
  require(a.cols() == 1 && !offsets.empty() && offsets.back() == a.rows(), ErrorCode::kInternal,
          "segment_softmax: bad segments");
  Tape& t = *a.tape;
  const Matrix& x = a.value();
  Matrix y(x.rows(), 1);
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
    const int lo = offsets[s], hi = offsets[s + 1];
    require(hi > lo, ErrorCode::kNumeric, "segment_softmax: empty segment " + std::to_string(s));
    const double top = x.block(lo, 0, hi - lo, 1).maxCoeff();
    double total = 0.0;
    for (int e = lo; e < hi; ++e) {
      y(e, 0) = std::exp(x(e, 0) - top);
      total += y(e, 0);
    }
    for (int e = lo; e < hi; ++e) y(e, 0) /= total;
  }
  Var r = t.push("segment_softmax", std::move(y), {a});
  if (t.requires_grad(r)) {
    std::vector<int> segs(offsets.begin(), offsets.end());
    t.node(r.id).backward = [&t, a, r, segs = std::move(segs)]() {
      const Matrix& g = t.node(r.id).adjoint;
      const Matrix& yv = r.value();
      Matrix d(yv.rows(), 1);
      for (std::size_t s = 0; s + 1 < segs.size(); ++s) {
        double inner = 0.0;
        for (int e = segs[s]; e < segs[s + 1]; ++e) inner += g(e, 0) * yv(e, 0);
        for (int e = segs[s]; e < segs[s + 1]; ++e) d(e, 0) = yv(e, 0) * (g(e, 0) - inner);
      }
      t.accumulate(a, d);
    };
  }
  return r;
}

Var weibull_reparam(Var shape, Var scale_var, const Matrix& eps) {
  same_shape(shape, scale_var, "weibull_reparam");
  require(eps.rows() == shape.rows() && eps.cols() == shape.cols(), ErrorCode::kInternal,
          "weibull_reparam: noise shape mismatch");
  Tape& t = *shape.tape;
  // log_e = ln(-ln(1 - eps)); theta = scale * exp(log_e / shape)
  Matrix log_e = eps.unaryExpr([](double e) { return std::log(-std::log1p(-e)); });
  Matrix out = scale_var.value().cwiseProduct(
      (log_e.array() / shape.value().array()).exp().matrix());
  Var r = t.push("weibull_reparam", std::move(out), {shape, scale_var});
  if (t.requires_grad(r)) {
    t.node(r.id).backward = [&t, shape, scale_var, r, log_e = std::move(log_e)]() {
      const Matrix& g = t.node(r.id).adjoint;
      const Matrix& theta = r.value();
      const Matrix& k = shape.value();
      if (t.requires_grad(scale_var)) {
        t.accumulate(scale_var, g.cwiseProduct((log_e.array() / k.array()).exp().matrix()));
      }
      if (t.requires_grad(shape)) {
        Matrix d = -(g.array() * theta.array() * log_e.array() / (k.array() * k.array())).matrix();
        t.accumulate(shape, d);
      }
    };
  }
  return r;
}

Var poisson_loglik(Var theta, const Matrix& phi, const SparseMatrix& x) {
  const Matrix& th = theta.value();
  require(x.rows() == th.rows() && x.cols() == phi.rows() && phi.cols() == th.cols(), ErrorCode::kInternal,
          "poisson_loglik: dimension mismatch");
  Tape& t = *theta.tape;
  const Eigen::RowVectorXd phi_mass = phi.colwise().sum();
  double value = -(th.array().rowwise() * phi_mass.array()).sum();
  for (Eigen::Index j = 0; j < x.outerSize(); ++j) {
    for (SparseMatrix::InnerIterator it(x, j); it; ++it) {
      const double rate = phi.row(it.col()).dot(th.row(j));
      value += it.value() * std::log(rate);
    }
  }
  Var r = t.push("poisson_loglik", Matrix::Constant(1, 1, value), {theta});
  if (t.requires_grad(r)) {
    t.node(r.id).backward = [&t, theta, r, &phi, &x, phi_mass]() {
      const double g = t.node(r.id).adjoint(0, 0);
      const Matrix& thv = theta.value();
      Matrix d = (-phi_mass).replicate(thv.rows(), 1);
      for (Eigen::Index j = 0; j < x.outerSize(); ++j) {
        for (SparseMatrix::InnerIterator it(x, j); it; ++it) {
          const double rate = phi.row(it.col()).dot(thv.row(j));
          d.row(j) += (it.value() / rate) * phi.row(it.col());
        }
      }
      t.accumulate(theta, d * g);
    };
  }
  return r;
}

Evaluation evaluate_with_gradients(const Objective& f, std::span<const Matrix> parameters) {
  Tape tape;
  std::vector<Var> params;
  for (const auto& p : parameters) params.push_back(tape.parameter(p));
  Var root = f(tape, params);
  tape.backward(root);
  Evaluation out{root.scalar(), {}};
  for (Var p : params) out.gradients.push_back(tape.grad(p));
  return out;
}

GradientCheckReport check_gradients(const Objective& f, std::span<const Matrix> parameters, double tolerance,
                                    double relative_step) {
  GradientCheckReport report;
  std::vector<Matrix> point(parameters.begin(), parameters.end());
  auto value_at = [&](const std::vector<Matrix>& at, double kink_radius, std::string* kink) {
    Tape tape;
    tape.set_kink_radius(kink_radius);
    std::vector<Var> params;
    for (const auto& p : at) params.push_back(tape.constant(p));
    const double v = f(tape, params).scalar();
    if (kink && tape.kink_hit()) *kink = tape.kink_op();
    return v;
  };

  std::string kink;
  {
    // Kink radius covers the largest perturbation applied below.
    double largest = 0.0;
    for (const auto& p : point) largest = std::max(largest, p.cwiseAbs().maxCoeff());
    value_at(point, 4.0 * relative_step * std::max(1.0, largest), &kink);
  }
  if (!kink.empty()) {
    report.non_checkable = true;
    report.kink_op = kink;
    return report;
  }
  const Evaluation analytic = evaluate_with_gradients(f, point);
  report.value = analytic.value;
  const double floor = 1e-6 * std::max(1.0, std::abs(analytic.value));
  for (std::size_t p = 0; p < point.size(); ++p) {
    for (Eigen::Index c = 0; c < point[p].cols(); ++c) {
      for (Eigen::Index r = 0; r < point[p].rows(); ++r) {
        const double x0 = point[p](r, c);
        const double h = relative_step * std::max(1.0, std::abs(x0));
        point[p](r, c) = x0 + h;
        const double up = value_at(point, 0.0, nullptr);
        point[p](r, c) = x0 - h;
        const double down = value_at(point, 0.0, nullptr);
        point[p](r, c) = x0;
        const double numeric = (up - down) / (2.0 * h);
        const double a = analytic.gradients[p](r, c);
        const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
        report.max_rel_error = std::max(report.max_rel_error, err);
        if (err > tolerance) report.failures.push_back({p, r, c, a, numeric, err});
      }
    }
  }
  return report;
}

}  // namespace wgae::ad
