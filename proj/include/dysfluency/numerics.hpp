#pragma once

// Dense primitives for the classification head, a small reverse-mode tape
// over Eigen matrices, and a central-difference gradient checker.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dysfluency/error.hpp"

namespace dysfluency {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;

template <typename Derived>
std::string shape_string(const Eigen::DenseBase<Derived>& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.derived().array().isFinite().all();
}

template <typename Derived>
void require_finite(const Eigen::DenseBase<Derived>& m, std::string_view what) {
  if (!all_finite(m)) {
    throw NonFiniteError(std::string(what) + ": non-finite entry in " + shape_string(m) + " matrix");
  }
}

// --- value-only primitives ---------------------------------------------------

template <typename DerivedA, typename DerivedB>
auto matmul(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions disagree (" + shape_string(a) + " * " + shape_string(b) + ")");
  }
  return MatrixX<Scalar>(a * b);
}

// Row-wise softmax with max subtraction. Every row sums to one.
template <typename Derived>
auto softmax_row(const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  if (v.cols() == 0 || v.rows() == 0) throw InvalidArgument("softmax_row: empty row");
  MatrixX<Scalar> out(v.rows(), v.cols());
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    const Scalar shift = v.row(r).maxCoeff();
    out.row(r) = (v.row(r).array() - shift).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

template <typename Scalar>
  requires std::is_floating_point_v<Scalar>
Scalar sigmoid(Scalar x) {
  if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-x));
  const Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}

template <typename Derived>
auto sigmoid(const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  return MatrixX<Scalar>(v.unaryExpr([](Scalar x) { return sigmoid(x); }));
}

template <typename Derived>
auto mean_over_rows(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  if (m.rows() == 0) throw InvalidArgument("mean_over_rows: empty feature sequence");
  return MatrixX<Scalar>(m.colwise().mean());
}

template <typename Scalar>
struct AttentionResult {
  MatrixX<Scalar> context;  // 1 x d
  MatrixX<Scalar> weights;  // 1 x t
};

// softmax(q k^T / sqrt(d)) v for a single query row.
template <typename DQ, typename DK, typename DV>
auto scaled_dot_product_attention(const Eigen::MatrixBase<DQ>& q, const Eigen::MatrixBase<DK>& k,
                                  const Eigen::MatrixBase<DV>& v) {
  using Scalar = typename DQ::Scalar;
  if (q.rows() != 1 || q.cols() != k.cols() || k.rows() != v.rows() || k.rows() == 0) {
    throw ShapeError("attention: inconsistent shapes q " + shape_string(q) + ", k " + shape_string(k) + ", v " +
                     shape_string(v));
  }
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(q.cols()));
  AttentionResult<Scalar> r;
  r.weights = softmax_row(MatrixX<Scalar>((q * k.transpose()) * scale));
  r.context = r.weights * v;
  return r;
}

// --- reverse-mode tape -------------------------------------------------------

struct Var {
  std::uint32_t id = 0;
};

// Single-owner record of primitive applications. Nodes are appended in
// evaluation order, so walking them backwards is a reverse topological order.
// Parameters may be registered by reference to avoid copying large weights;
// referenced matrices must outlive the tape.
template <typename Scalar>
class Tape {
 public:
  using Mat = MatrixX<Scalar>;
  using BackwardFn = std::function<void(const Mat& out_grad, Tape& tape)>;

  Var constant(Mat value) { return push(std::move(value), nullptr, false, {}); }
  Var constant_ref(const Mat& value) { return push(Mat(), &value, false, {}); }
  Var parameter(Mat value) { return push(std::move(value), nullptr, true, {}); }
  Var parameter_ref(const Mat& value) { return push(Mat(), &value, true, {}); }

  // Appends a derived node. `backward` is only invoked when some input
  // requires a gradient.
  Var record(Mat value, std::initializer_list<Var> inputs, BackwardFn backward) {
    return record(std::move(value), std::vector<Var>(inputs), std::move(backward));
  }

  Var record(Mat value, const std::vector<Var>& inputs, BackwardFn backward) {
    bool needs = false;
    for (Var in : inputs) needs = needs || nodes_.at(in.id).needs_grad;
    return push(std::move(value), nullptr, needs, needs ? std::move(backward) : BackwardFn{});
  }

  const Mat& value(Var v) const {
    const Node& n = nodes_.at(v.id);
    return n.external ? *n.external : n.owned;
  }

  bool requires_grad(Var v) const { return nodes_.at(v.id).needs_grad; }

  // Gradient of the last backward() output w.r.t. `v`; zeros if untouched.
  Mat grad(Var v) const {
    const Node& n = nodes_.at(v.id);
    if (n.grad.size() == 0) return Mat::Zero(value(v).rows(), value(v).cols());
    return n.grad;
  }

  template <typename Derived>
  void accumulate(Var v, const Eigen::MatrixBase<Derived>& g) {
    Node& n = nodes_.at(v.id);
    if (!n.needs_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  // Seeds d(output)/d(output) = 1 for a 1x1 output and propagates.
  void backward(Var output) {
    const Mat& out = value(output);
    if (out.rows() != 1 || out.cols() != 1) {
      throw ShapeError("backward: output must be 1x1, got " + shape_string(out));
    }
    for (Node& n : nodes_) n.grad.resize(0, 0);
    accumulate(output, Mat::Ones(1, 1));
    for (std::size_t i = output.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.backward && n.grad.size() != 0) n.backward(n.grad, *this);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat owned;
    const Mat* external = nullptr;
    Mat grad;
    bool needs_grad = false;
    BackwardFn backward;
  };

  Var push(Mat value, const Mat* external, bool needs_grad, BackwardFn fn) {
    nodes_.push_back(Node{std::move(value), external, Mat(), needs_grad, std::move(fn)});
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  std::vector<Node> nodes_;
};

// --- tape primitives ---------------------------------------------------------

template <typename Scalar>
Var matmul(Tape<Scalar>& t, Var a, Var b) {
  auto out = matmul(t.value(a), t.value(b));
  return t.record(std::move(out), {a, b}, [a, b](const auto& g, Tape<Scalar>& tp) {
    if (tp.requires_grad(a)) tp.accumulate(a, g * tp.value(b).transpose());
    if (tp.requires_grad(b)) tp.accumulate(b, tp.value(a).transpose() * g);
  });
}

// a * b^T
template <typename Scalar>
Var matmul_transposed(Tape<Scalar>& t, Var a, Var b) {
  const auto& av = t.value(a);
  const auto& bv = t.value(b);
  if (av.cols() != bv.cols()) {
    throw ShapeError("matmul_transposed: column counts disagree (" + shape_string(av) + " * " +
                     shape_string(bv) + "^T)");
  }
  MatrixX<Scalar> out = av * bv.transpose();
  return t.record(std::move(out), {a, b}, [a, b](const auto& g, Tape<Scalar>& tp) {
    if (tp.requires_grad(a)) tp.accumulate(a, g * tp.value(b));
    if (tp.requires_grad(b)) tp.accumulate(b, g.transpose() * tp.value(a));
  });
}

// Adds a 1 x n bias to every row of a.
template <typename Scalar>
Var add_row(Tape<Scalar>& t, Var a, Var bias) {
  const auto& av = t.value(a);
  const auto& bv = t.value(bias);
  if (bv.rows() != 1 || bv.cols() != av.cols()) {
    throw ShapeError("add_row: bias " + shape_string(bv) + " does not match " + shape_string(av));
  }
  MatrixX<Scalar> out = av.rowwise() + bv.row(0);
  return t.record(std::move(out), {a, bias}, [a, bias](const auto& g, Tape<Scalar>& tp) {
    tp.accumulate(a, g);
    tp.accumulate(bias, g.colwise().sum());
  });
}

template <typename Scalar>
Var scale(Tape<Scalar>& t, Var a, Scalar s) {
  MatrixX<Scalar> out = t.value(a) * s;
  return t.record(std::move(out), {a}, [a, s](const auto& g, Tape<Scalar>& tp) { tp.accumulate(a, g * s); });
}

// Elementwise product with a constant mask (dropout).
template <typename Scalar>
Var mask(Tape<Scalar>& t, Var a, MatrixX<Scalar> m) {
  if (m.rows() != t.value(a).rows() || m.cols() != t.value(a).cols()) {
    throw ShapeError("mask: shape mismatch");
  }
  MatrixX<Scalar> out = t.value(a).cwiseProduct(m);
  return t.record(std::move(out), {a}, [a, m = std::move(m)](const auto& g, Tape<Scalar>& tp) {
    tp.accumulate(a, g.cwiseProduct(m));
  });
}

template <typename Scalar>
Var tanh(Tape<Scalar>& t, Var a) {
  MatrixX<Scalar> out = t.value(a).array().tanh().matrix();
  const Var self{static_cast<std::uint32_t>(t.size())};
  return t.record(std::move(out), {a}, [a, self](const auto& g, Tape<Scalar>& tp) {
    const auto& y = tp.value(self);
    tp.accumulate(a, (g.array() * (Scalar(1) - y.array().square())).matrix());
  });
}

template <typename Scalar>
Var sigmoid(Tape<Scalar>& t, Var a) {
  MatrixX<Scalar> out = sigmoid(t.value(a));
  const Var self{static_cast<std::uint32_t>(t.size())};
  return t.record(std::move(out), {a}, [a, self](const auto& g, Tape<Scalar>& tp) {
    const auto& y = tp.value(self);
    tp.accumulate(a, (g.array() * y.array() * (Scalar(1) - y.array())).matrix());
  });
}

template <typename Scalar>
Var softmax_row(Tape<Scalar>& t, Var a) {
  MatrixX<Scalar> out = softmax_row(t.value(a));
  const Var self{static_cast<std::uint32_t>(t.size())};
  return t.record(std::move(out), {a}, [a, self](const auto& g, Tape<Scalar>& tp) {
    const auto& y = tp.value(self);
    MatrixX<Scalar> dx(y.rows(), y.cols());
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const Scalar dot = g.row(r).dot(y.row(r));
      dx.row(r) = (y.row(r).array() * (g.row(r).array() - dot)).matrix();
    }
    tp.accumulate(a, dx);
  });
}

template <typename Scalar>
Var mean_over_rows(Tape<Scalar>& t, Var a) {
  MatrixX<Scalar> out = mean_over_rows(t.value(a));
  return t.record(std::move(out), {a}, [a](const auto& g, Tape<Scalar>& tp) {
    const auto rows = tp.value(a).rows();
    MatrixX<Scalar> spread = g.replicate(rows, 1) / static_cast<Scalar>(rows);
    tp.accumulate(a, spread);
  });
}

// Sum of coefficient * term over 1x1 (or equally shaped) nodes.
template <typename Scalar>
Var linear_combination(Tape<Scalar>& t, const std::vector<std::pair<Var, Scalar>>& terms) {
  if (terms.empty()) throw InvalidArgument("linear_combination: no terms");
  MatrixX<Scalar> out = t.value(terms.front().first) * terms.front().second;
  for (std::size_t i = 1; i < terms.size(); ++i) {
    const auto& v = t.value(terms[i].first);
    if (v.rows() != out.rows() || v.cols() != out.cols()) throw ShapeError("linear_combination: shape mismatch");
    out += v * terms[i].second;
  }
  std::vector<Var> inputs;
  inputs.reserve(terms.size());
  for (const auto& term : terms) inputs.push_back(term.first);
  return t.record(std::move(out), inputs, [terms](const auto& g, Tape<Scalar>& tp) {
    for (const auto& [v, c] : terms) tp.accumulate(v, g * c);
  });
}

struct TapeAttention {
  Var context;
  Var weights;
};

template <typename Scalar>
TapeAttention scaled_dot_product_attention(Tape<Scalar>& t, Var q, Var k, Var v) {
  const auto& qv = t.value(q);
  const auto& kv = t.value(k);
  const auto& vv = t.value(v);
  if (qv.rows() != 1 || qv.cols() != kv.cols() || kv.rows() != vv.rows() || kv.rows() == 0) {
    throw ShapeError("attention: inconsistent shapes q " + shape_string(qv) + ", k " + shape_string(kv) + ", v " +
                     shape_string(vv));
  }
  const Scalar s = Scalar(1) / std::sqrt(static_cast<Scalar>(qv.cols()));
  Var scores = scale(t, matmul_transposed(t, q, k), s);
  Var weights = softmax_row(t, scores);
  Var context = matmul(t, weights, v);
  return {context, weights};
}

// --- gradient checking -------------------------------------------------------

template <typename Scalar>
struct GradCheckResult {
  Scalar max_relative_error = Scalar(0);
  Eigen::Index worst_coordinate = -1;
};

// Compares `analytic` against central differences of `f` at `x`. The
// per-coordinate error is |a - n| / max(1, |a|, |n|).
template <typename Scalar, typename F>
GradCheckResult<Scalar> grad_check(F&& f, const VectorX<Scalar>& x, const VectorX<Scalar>& analytic, Scalar eps) {
  if (!(eps > Scalar(0))) throw InvalidArgument("grad_check: eps must be positive");
  if (analytic.size() != x.size()) throw ShapeError("grad_check: gradient length differs from point length");
  GradCheckResult<Scalar> result;
  VectorX<Scalar> probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + eps;
    const Scalar up = f(static_cast<const VectorX<Scalar>&>(probe));
    probe[i] = x[i] - eps;
    const Scalar down = f(static_cast<const VectorX<Scalar>&>(probe));
    probe[i] = x[i];
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NonFiniteError("grad_check: non-finite function value at coordinate " + std::to_string(i));
    }
    const Scalar numeric = (up - down) / (Scalar(2) * eps);
    const Scalar denom = std::max({Scalar(1), std::abs(analytic[i]), std::abs(numeric)});
    const Scalar err = std::abs(analytic[i] - numeric) / denom;
    if (result.worst_coordinate < 0 || err > result.max_relative_error) {
      result.max_relative_error = err;
      result.worst_coordinate = i;
    }
  }
  return result;
}

}  // namespace dysfluency
