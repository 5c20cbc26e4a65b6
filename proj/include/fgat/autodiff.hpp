#pragma once

// Minimal reverse-mode automatic differentiation over dense matrices.
//
// A Tape records operations eagerly: every op computes its value at
// construction and stores a closure that pushes the output gradient back to
// its inputs. Nodes are appended in topological order, so backward() walks
// the tape once in reverse. Only nodes that (transitively) depend on a
// gradient-carrying leaf keep a backward closure.

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <utility>
#include <vector>

#include "fgat/core.hpp"

namespace fgat::ad {

struct Var {
  std::size_t id = std::numeric_limits<std::size_t>::max();
};

/// Row -> segment assignment shared by the segment ops. Segments need not be
/// contiguous; rows with the same id belong to the same group.
struct Segments {
  std::vector<std::size_t> ids;
  std::size_t count = 0;
};

class Tape {
 public:
  Tape() { nodes_.reserve(256); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value) {
    Node n;
    n.owned = std::move(value);
    return push(std::move(n));
  }

  /// Leaf that refers to external storage (not copied). When `sink` is set,
  /// backward() accumulates the leaf's gradient into it.
  Var leaf(const Matrix& value, Matrix* sink) {
    Node n;
    n.ref = &value;
    n.sink = sink;
    n.needs_grad = sink != nullptr;
    return push(std::move(n));
  }

  const Matrix& value(Var v) const { return nodes_[v.id].val(); }

  /// Gradient of the last backward() target w.r.t. `v`; empty if none flowed.
  const Matrix& grad(Var v) const { return nodes_[v.id].grad; }

  double scalar(Var v) const { return value(v)(0, 0); }

  std::size_t size() const { return nodes_.size(); }

  void backward(Var loss) {
    Node& root = nodes_[loss.id];
    root.grad = Matrix::Ones(root.val().rows(), root.val().cols());
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.grad.size() == 0) continue;
      if (n.backprop) n.backprop(*this, n.grad);
      if (n.sink != nullptr) *n.sink += n.grad;
    }
  }

  // --- linear algebra ---------------------------------------------------

  Var matmul(Var a, Var b) {
    Matrix out = value(a) * value(b);
    return op(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
      if (t.wants(a)) t.accumulate(a, g * t.value(b).transpose());
      if (t.wants(b)) t.accumulate(b, t.value(a).transpose() * g);
    });
  }

  /// x * w^T, the affine-map convention (w stored as out x in).
  Var matmul_nt(Var x, Var w) {
    Matrix out = value(x) * value(w).transpose();
    return op(std::move(out), {x, w}, [x, w](Tape& t, const Matrix& g) {
      if (t.wants(x)) t.accumulate(x, g * t.value(w));
      if (t.wants(w)) t.accumulate(w, g.transpose() * t.value(x));
    });
  }

  Var add(Var a, Var b) {
    Matrix out = value(a) + value(b);
    return op(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
      t.accumulate(a, g);
      t.accumulate(b, g);
    });
  }

  Var sub(Var a, Var b) {
    Matrix out = value(a) - value(b);
    return op(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
      t.accumulate(a, g);
      if (t.wants(b)) t.accumulate(b, -g);
    });
  }

  /// Adds a 1 x m bias row to every row of x.
  Var add_bias(Var x, Var bias) {
    Matrix out = value(x).rowwise() + value(bias).row(0);
    return op(std::move(out), {x, bias}, [x, bias](Tape& t, const Matrix& g) {
      t.accumulate(x, g);
      if (t.wants(bias)) t.accumulate(bias, g.colwise().sum());
    });
  }

  Var hadamard(Var a, Var b) {
    Matrix out = value(a).cwiseProduct(value(b));
    return op(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
      if (t.wants(a)) t.accumulate(a, g.cwiseProduct(t.value(b)));
      if (t.wants(b)) t.accumulate(b, g.cwiseProduct(t.value(a)));
    });
  }

  Var scale(Var a, double c) {
    Matrix out = value(a) * c;
    return op(std::move(out), {a}, [a, c](Tape& t, const Matrix& g) { t.accumulate(a, g * c); });
  }

  /// Columns [start, start + len) of x.
  Var cols(Var x, Eigen::Index start, Eigen::Index len) {
    Matrix out = value(x).middleCols(start, len);
    return op(std::move(out), {x}, [x, start, len](Tape& t, const Matrix& g) {
      if (!t.wants(x)) return;
      Matrix full = Matrix::Zero(t.value(x).rows(), t.value(x).cols());
      full.middleCols(start, len) = g;
      t.accumulate(x, full);
    });
  }

  // --- elementwise nonlinearities ----------------------------------------

  Var leaky_relu(Var x, double slope) {
    const Matrix& v = value(x);
    Matrix out = v.unaryExpr([slope](double z) { return z > 0.0 ? z : slope * z; });
    return op(std::move(out), {x}, [x, slope](Tape& t, const Matrix& g) {
      Matrix d = t.value(x).unaryExpr([slope](double z) { return z > 0.0 ? 1.0 : slope; });
      t.accumulate(x, g.cwiseProduct(d));
    });
  }

  Var tanh(Var x) {
    Matrix out = value(x).array().tanh().matrix();
    const std::size_t self = nodes_.size();
    return op(std::move(out), {x}, [x, self](Tape& t, const Matrix& g) {
      const Matrix& y = t.nodes_[self].val();
      t.accumulate(x, g.cwiseProduct((1.0 - y.array().square()).matrix()));
    });
  }

  /// log(1 + exp(x)), stable for large |x|.
  Var softplus(Var x) {
    Matrix out = value(x).unaryExpr([](double z) {
      return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    });
    return op(std::move(out), {x}, [x](Tape& t, const Matrix& g) {
      Matrix d = t.value(x).unaryExpr([](double z) {
        return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
      });
      t.accumulate(x, g.cwiseProduct(d));
    });
  }

  // --- reductions -----------------------------------------------------------

  Var sum(Var x) {
    Matrix out(1, 1);
    out(0, 0) = value(x).sum();
    return op(std::move(out), {x}, [x](Tape& t, const Matrix& g) {
      t.accumulate(x, Matrix::Constant(t.value(x).rows(), t.value(x).cols(), g(0, 0)));
    });
  }

  Var mean(Var x) {
    const auto n = static_cast<double>(value(x).size());
    return scale(sum(x), n > 0 ? 1.0 / n : 0.0);
  }

  Var sum_squares(Var x) {
    Matrix out(1, 1);
    out(0, 0) = value(x).squaredNorm();
    return op(std::move(out), {x}, [x](Tape& t, const Matrix& g) {
      t.accumulate(x, t.value(x) * (2.0 * g(0, 0)));
    });
  }

  /// n x 1 column of per-row sums.
  Var row_sum(Var x) {
    Matrix out = value(x).rowwise().sum();
    return op(std::move(out), {x}, [x](Tape& t, const Matrix& g) {
      t.accumulate(x, g.col(0).replicate(1, t.value(x).cols()));
    });
  }

  /// n x 1 column of per-row inner products.
  Var row_dot(Var a, Var b) {
    Matrix out = value(a).cwiseProduct(value(b)).rowwise().sum();
    return op(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
      if (t.wants(a)) t.accumulate(a, (t.value(b).array().colwise() * g.col(0).array()).matrix());
      if (t.wants(b)) t.accumulate(b, (t.value(a).array().colwise() * g.col(0).array()).matrix());
    });
  }

  // --- row scaling ------------------------------------------------------------

  /// Row r of x scaled by s(r, 0).
  Var scale_rows(Var x, Var s) {
    Matrix out = value(x).array().colwise() * value(s).col(0).array();
    return op(std::move(out), {x, s}, [x, s](Tape& t, const Matrix& g) {
      if (t.wants(x)) t.accumulate(x, (g.array().colwise() * t.value(s).col(0).array()).matrix());
      if (t.wants(s)) t.accumulate(s, g.cwiseProduct(t.value(x)).rowwise().sum());
    });
  }

  /// Row r of x divided by s(r, 0).
  Var divide_rows(Var x, Var s) {
    Matrix out = value(x).array().colwise() / value(s).col(0).array();
    const std::size_t self = nodes_.size();
    return op(std::move(out), {x, s}, [x, s, self](Tape& t, const Matrix& g) {
      const auto& sv = t.value(s).col(0).array();
      if (t.wants(x)) t.accumulate(x, (g.array().colwise() / sv).matrix());
      if (t.wants(s)) {
        const Matrix& y = t.nodes_[self].val();
        Matrix ds = -(g.cwiseProduct(y).rowwise().sum().array() / sv).matrix();
        t.accumulate(s, ds);
      }
    });
  }

  // --- indexing and segments --------------------------------------------------

  Var gather_rows(Var x, std::shared_ptr<const std::vector<std::size_t>> rows) {
    const Matrix& v = value(x);
    Matrix out(static_cast<Eigen::Index>(rows->size()), v.cols());
    for (std::size_t r = 0; r < rows->size(); ++r) out.row(r) = v.row((*rows)[r]);
    return op(std::move(out), {x}, [x, rows](Tape& t, const Matrix& g) {
      if (!t.wants(x)) return;
      Matrix dx = Matrix::Zero(t.value(x).rows(), t.value(x).cols());
      for (std::size_t r = 0; r < rows->size(); ++r) dx.row((*rows)[r]) += g.row(r);
      t.accumulate(x, dx);
    });
  }

  /// out.row(seg.ids[r]) += x.row(r); segments with no rows stay zero.
  Var segment_sum(Var x, std::shared_ptr<const Segments> seg) {
    const Matrix& v = value(x);
    Matrix out = Matrix::Zero(static_cast<Eigen::Index>(seg->count), v.cols());
    for (std::size_t r = 0; r < seg->ids.size(); ++r) out.row(seg->ids[r]) += v.row(r);
    return op(std::move(out), {x}, [x, seg](Tape& t, const Matrix& g) {
      Matrix dx(static_cast<Eigen::Index>(seg->ids.size()), g.cols());
      for (std::size_t r = 0; r < seg->ids.size(); ++r) dx.row(r) = g.row(seg->ids[r]);
      t.accumulate(x, dx);
    });
  }

  /// Softmax over the rows of each segment, independently per column.
  /// Max-subtracted, so large logits do not overflow.
  Var segment_softmax(Var x, std::shared_ptr<const Segments> seg) {
    const Matrix& v = value(x);
    const auto cols = v.cols();
    Matrix peak = Matrix::Constant(static_cast<Eigen::Index>(seg->count), cols,
                                   -std::numeric_limits<double>::infinity());
    for (std::size_t r = 0; r < seg->ids.size(); ++r) {
      peak.row(seg->ids[r]) = peak.row(seg->ids[r]).cwiseMax(v.row(r));
    }
    Matrix out(v.rows(), cols);
    Matrix total = Matrix::Zero(static_cast<Eigen::Index>(seg->count), cols);
    for (std::size_t r = 0; r < seg->ids.size(); ++r) {
      out.row(r) = (v.row(r) - peak.row(seg->ids[r])).array().exp().matrix();
      total.row(seg->ids[r]) += out.row(r);
    }
    for (std::size_t r = 0; r < seg->ids.size(); ++r) {
      out.row(r) = out.row(r).cwiseQuotient(total.row(seg->ids[r]));
    }
    const std::size_t self = nodes_.size();
    return op(std::move(out), {x}, [x, seg, self](Tape& t, const Matrix& g) {
      const Matrix& y = t.nodes_[self].val();
      Matrix inner = Matrix::Zero(static_cast<Eigen::Index>(seg->count), y.cols());
      for (std::size_t r = 0; r < seg->ids.size(); ++r) {
        inner.row(seg->ids[r]) += y.row(r).cwiseProduct(g.row(r));
      }
      Matrix dx(y.rows(), y.cols());
      for (std::size_t r = 0; r < seg->ids.size(); ++r) {
        dx.row(r) = y.row(r).cwiseProduct(g.row(r) - inner.row(seg->ids[r]));
      }
      t.accumulate(x, dx);
    });
  }

  /// base + delta on rows where keep[r] is set; other rows copy base exactly.
  Var masked_add(Var base, Var delta, std::shared_ptr<const std::vector<bool>> keep) {
    Matrix out = value(base);
    const Matrix& d = value(delta);
    for (std::size_t r = 0; r < keep->size(); ++r) {
      if ((*keep)[r]) out.row(r) += d.row(r);
    }
    return op(std::move(out), {base, delta}, [base, delta, keep](Tape& t, const Matrix& g) {
      t.accumulate(base, g);
      if (!t.wants(delta)) return;
      Matrix dd = g;
      for (std::size_t r = 0; r < keep->size(); ++r) {
        if (!(*keep)[r]) dd.row(r).setZero();
      }
      t.accumulate(delta, dd);
    });
  }

 private:
  using Backprop = std::function<void(Tape&, const Matrix&)>;

  struct Node {
    Matrix owned;
    const Matrix* ref = nullptr;
    Matrix grad;
    Matrix* sink = nullptr;
    Backprop backprop;
    bool needs_grad = false;

    const Matrix& val() const { return ref != nullptr ? *ref : owned; }
  };

  Var push(Node n) {
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
  }

  Var op(Matrix out, std::initializer_list<Var> inputs, Backprop backprop) {
    Node n;
    n.owned = std::move(out);
    for (Var in : inputs) n.needs_grad = n.needs_grad || nodes_[in.id].needs_grad;
    if (n.needs_grad) n.backprop = std::move(backprop);
    return push(std::move(n));
  }

  bool wants(Var v) const { return nodes_[v.id].needs_grad; }

  template <typename Expr>
  void accumulate(Var v, const Expr& g) {
    Node& n = nodes_[v.id];
    if (!n.needs_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  std::vector<Node> nodes_;
};

}  // namespace fgat::ad
