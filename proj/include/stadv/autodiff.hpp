#pragma once

// Reverse-mode differentiation over dense tensors.
//
// A Tape records primitives eagerly (define-by-run): every call computes the
// node's value immediately and appends it, so operands always precede their
// consumers. The recorded program can be replayed with new leaf bindings via
// forward(), and backward() walks the record once in reverse.

#include "stadv/tensor.hpp"

#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace stadv::ad {

enum class Op {
  kLeaf,
  kMatmul,
  kAdd,
  kSub,
  kMul,
  kScale,
  kRelu,
  kSigmoid,
  kTanh,
  kAbs,
  kSquare,
  kSqrt,
  kSum,
  kMean,
  kBroadcast,
  kSliceRows,
  kSliceCols,
  kConcatRows,
  kConcatCols,
  kMaskedMul,
  kTranspose,
  kBlockMatmul,
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kMatmul: return "matmul";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kScale: return "scale";
    case Op::kRelu: return "relu";
    case Op::kSigmoid: return "sigmoid";
    case Op::kTanh: return "tanh";
    case Op::kAbs: return "abs";
    case Op::kSquare: return "square";
    case Op::kSqrt: return "sqrt";
    case Op::kSum: return "sum";
    case Op::kMean: return "mean";
    case Op::kBroadcast: return "broadcast";
    case Op::kSliceRows: return "slice_rows";
    case Op::kSliceCols: return "slice_cols";
    case Op::kConcatRows: return "concat_rows";
    case Op::kConcatCols: return "concat_cols";
    case Op::kMaskedMul: return "masked_mul";
    case Op::kTranspose: return "transpose";
    case Op::kBlockMatmul: return "block_matmul";
  }
  return "?";
}

class ShapeError : public std::invalid_argument {
 public:
  ShapeError(Op op, const Shape& a, const Shape& b)
      : std::invalid_argument(std::string(op_name(op)) + ": incompatible shapes " + shape_string(a) +
                              " and " + shape_string(b)) {}
};

struct Var {
  std::size_t id = 0;
  friend bool operator<(Var a, Var b) { return a.id < b.id; }
  friend bool operator==(Var a, Var b) { return a.id == b.id; }
};

template <typename Scalar>
class Gradients {
 public:
  using TensorT = Tensor<Scalar>;

  Gradients(std::vector<std::optional<TensorT>> grads, std::vector<Shape> shapes)
      : grads_(std::move(grads)), shapes_(std::move(shapes)) {}

  // Zero tensor for leaves the loss does not depend on.
  TensorT operator[](Var v) const {
    if (v.id < grads_.size() && grads_[v.id]) return *grads_[v.id];
    return TensorT(shapes_.at(v.id));
  }

  bool reached(Var v) const { return v.id < grads_.size() && grads_[v.id].has_value(); }

 private:
  std::vector<std::optional<TensorT>> grads_;
  std::vector<Shape> shapes_;
};

template <typename Scalar>
class Tape {
 public:
  using TensorT = Tensor<Scalar>;
  using Matrix = RowMatrix<Scalar>;

  Var leaf(TensorT value, bool requires_grad = true) {
    Node n;
    n.op = Op::kLeaf;
    n.requires_grad = requires_grad;
    n.value = std::move(value);
    return push(std::move(n));
  }
  template <typename Derived>
  Var leaf(const Eigen::MatrixBase<Derived>& m, bool requires_grad = true) {
    return leaf(TensorT::from_matrix(m), requires_grad);
  }
  Var constant(TensorT value) { return leaf(std::move(value), false); }
  template <typename Derived>
  Var constant(const Eigen::MatrixBase<Derived>& m) {
    return leaf(TensorT::from_matrix(m), false);
  }

  Var matmul(Var a, Var b) { return record(Op::kMatmul, {a, b}); }
  Var add(Var a, Var b) { return record(Op::kAdd, {a, b}); }
  Var sub(Var a, Var b) { return record(Op::kSub, {a, b}); }
  Var mul(Var a, Var b) { return record(Op::kMul, {a, b}); }
  Var scale(Var a, Scalar s) { return record(Op::kScale, {a}, {}, s); }
  Var relu(Var a) { return record(Op::kRelu, {a}); }
  Var sigmoid(Var a) { return record(Op::kSigmoid, {a}); }
  Var tanh(Var a) { return record(Op::kTanh, {a}); }
  Var abs(Var a) { return record(Op::kAbs, {a}); }
  Var square(Var a) { return record(Op::kSquare, {a}); }
  Var sqrt(Var a) { return record(Op::kSqrt, {a}); }
  Var sum(Var a) { return record(Op::kSum, {a}); }
  Var mean(Var a) { return record(Op::kMean, {a}); }
  Var broadcast(Var a, Shape shape) { return record(Op::kBroadcast, {a}, std::move(shape)); }
  Var slice_rows(Var a, Index begin, Index end) {
    return record(Op::kSliceRows, {a}, Shape{begin, end});
  }
  Var slice_cols(Var a, Index begin, Index end) {
    return record(Op::kSliceCols, {a}, Shape{begin, end});
  }
  Var concat_rows(const std::vector<Var>& parts) { return record(Op::kConcatRows, parts); }
  Var concat_cols(const std::vector<Var>& parts) { return record(Op::kConcatCols, parts); }
  // Elementwise product with a mask; the mask never receives a gradient.
  Var masked_mul(Var a, Var mask) { return record(Op::kMaskedMul, {a, mask}); }
  Var transpose(Var a) { return record(Op::kTranspose, {a}); }
  // Left-multiplies every consecutive a.cols()-row block of z by a
  // (a block-diagonal product without materializing the diagonal).
  Var block_matmul(Var a, Var z) { return record(Op::kBlockMatmul, {a, z}); }

  const TensorT& value(Var v) const { return nodes_.at(v.id).value; }
  std::size_t size() const { return nodes_.size(); }
  Op op(Var v) const { return nodes_.at(v.id).op; }
  const std::vector<Var>& operands(Var v) const { return nodes_.at(v.id).inputs; }

  // Rebinds leaves and recomputes every node in record order.
  std::vector<TensorT> forward(const std::map<Var, TensorT>& leaves) {
    for (const auto& [v, t] : leaves) {
      Node& n = nodes_.at(v.id);
      if (n.op != Op::kLeaf) throw std::invalid_argument("forward: node is not a leaf");
      if (t.shape() != n.value.shape()) throw ShapeError(Op::kLeaf, n.value.shape(), t.shape());
      n.value = t;
    }
    std::vector<TensorT> out;
    out.reserve(nodes_.size());
    for (Node& n : nodes_) {
      if (n.op != Op::kLeaf) n.value = compute(n);
      out.push_back(n.value);
    }
    return out;
  }

  Gradients<Scalar> backward(Var loss) const {
    const Node& root = nodes_.at(loss.id);
    if (root.value.size() != 1) {
      throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                  shape_string(root.value.shape()));
    }
    std::vector<std::optional<Matrix>> adj(loss.id + 1);
    adj[loss.id] = Matrix::Ones(1, 1);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      if (!adj[i]) continue;
      const Node& n = nodes_[i];
      if (n.op == Op::kLeaf || !n.requires_grad) continue;
      propagate(n, *adj[i], adj);
    }
    std::vector<std::optional<TensorT>> grads(nodes_.size());
    std::vector<Shape> shapes(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      shapes[i] = nodes_[i].value.shape();
      if (nodes_[i].op == Op::kLeaf && nodes_[i].requires_grad && i < adj.size() && adj[i]) {
        grads[i] = TensorT(nodes_[i].value.shape(), std::move(*adj[i]));
      }
    }
    return Gradients<Scalar>(std::move(grads), std::move(shapes));
  }

 private:
  struct Node {
    Op op = Op::kLeaf;
    std::vector<Var> inputs;
    Shape attr;
    Scalar scalar{};
    bool requires_grad = false;
    TensorT value;
  };

  Var push(Node n) {
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
  }

  Var record(Op op, std::vector<Var> inputs, Shape attr = {}, Scalar s = Scalar{}) {
    Node n;
    n.op = op;
    n.inputs = std::move(inputs);
    n.attr = std::move(attr);
    n.scalar = s;
    for (Var v : n.inputs) {
      if (v.id >= nodes_.size()) throw std::invalid_argument("operand recorded after consumer");
      if (op == Op::kMaskedMul && v == n.inputs.back()) continue;
      n.requires_grad = n.requires_grad || nodes_[v.id].requires_grad;
    }
    n.value = compute(n);
    return push(std::move(n));
  }

  const TensorT& in(const Node& n, std::size_t k) const { return nodes_[n.inputs[k].id].value; }

  // b broadcasts onto a when b's shape (leading 1s stripped) is a suffix of a's.
  static bool broadcastable(const Shape& a, const Shape& b) {
    std::size_t lead = 0;
    while (lead < b.size() && b[lead] == 1) ++lead;
    const std::size_t k = b.size() - lead;
    if (k > a.size()) return false;
    for (std::size_t i = 0; i < k; ++i) {
      if (a[a.size() - k + i] != b[lead + i]) return false;
    }
    return true;
  }

  // Tiles b's values to a's size (row-major repetition).
  static Matrix tile(const TensorT& b, const Shape& target) {
    const auto [r, c] = TensorT::view_dims(target);
    Matrix out(r, c);
    const Index block = b.size();
    const Index total = out.size();
    for (Index off = 0; off < total; off += block) {
      Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(out.data() + off, block) =
          Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(b.data(), block);
    }
    return out;
  }

  // Inverse of tile: sums the repeated blocks back onto b's shape.
  static Matrix untile(const Matrix& g, const Shape& b_shape) {
    const auto [r, c] = TensorT::view_dims(b_shape);
    Matrix out = Matrix::Zero(r, c);
    const Index block = out.size();
    Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> acc(out.data(), block);
    for (Index off = 0; off < g.size(); off += block) {
      acc += Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(g.data() + off, block);
    }
    return out;
  }

  static void check_finite(Op op, const TensorT& t) {
    if (!t.all_finite()) {
      throw std::domain_error(std::string(op_name(op)) + ": produced a non-finite value");
    }
  }

  TensorT elementwise(const Node& n) const {
    const TensorT& a = in(n, 0);
    const TensorT& b = in(n, 1);
    if (!broadcastable(a.shape(), b.shape())) throw ShapeError(n.op, a.shape(), b.shape());
    const bool same = a.size() == b.size();
    const Matrix bm = same ? Matrix(Eigen::Map<const Matrix>(b.data(), a.rows(), a.cols()))
                           : tile(b, a.shape());
    Matrix out;
    switch (n.op) {
      case Op::kAdd: out = a.matrix() + bm; break;
      case Op::kSub: out = a.matrix() - bm; break;
      case Op::kMul:
      case Op::kMaskedMul: out = a.matrix().cwiseProduct(bm); break;
      default: break;
    }
    return TensorT(a.shape(), std::move(out));
  }

  TensorT compute(const Node& n) const {
    TensorT out;
    switch (n.op) {
      case Op::kLeaf: return n.value;
      case Op::kMatmul: {
        const TensorT& a = in(n, 0);
        const TensorT& b = in(n, 1);
        if (a.rank() > 2 || b.rank() > 2 || a.cols() != b.rows()) {
          throw ShapeError(n.op, a.shape(), b.shape());
        }
        out = TensorT({a.rows(), b.cols()}, a.matrix() * b.matrix());
        break;
      }
      case Op::kAdd:
      case Op::kSub:
      case Op::kMul:
      case Op::kMaskedMul: out = elementwise(n); break;
      case Op::kScale: out = TensorT(in(n, 0).shape(), in(n, 0).matrix() * n.scalar); break;
      case Op::kRelu:
        out = TensorT(in(n, 0).shape(), in(n, 0).matrix().cwiseMax(Scalar(0)));
        break;
      case Op::kSigmoid: {
        const Matrix& x = in(n, 0).matrix();
        out = TensorT(in(n, 0).shape(),
                      x.unaryExpr([](Scalar v) { return Scalar(1) / (Scalar(1) + std::exp(-v)); }));
        break;
      }
      case Op::kTanh:
        out = TensorT(in(n, 0).shape(), in(n, 0).matrix().array().tanh().matrix());
        break;
      case Op::kAbs: out = TensorT(in(n, 0).shape(), in(n, 0).matrix().cwiseAbs()); break;
      case Op::kSquare:
        out = TensorT(in(n, 0).shape(), in(n, 0).matrix().array().square().matrix());
        break;
      case Op::kSqrt: {
        const TensorT& a = in(n, 0);
        if ((a.matrix().array() < Scalar(0)).any()) {
          throw std::domain_error("sqrt: negative operand");
        }
        out = TensorT(a.shape(), a.matrix().cwiseSqrt());
        break;
      }
      case Op::kSum: out = TensorT::scalar(in(n, 0).matrix().sum()); break;
      case Op::kMean: {
        const TensorT& a = in(n, 0);
        if (a.size() == 0) throw std::invalid_argument("mean: empty tensor");
        out = TensorT::scalar(a.matrix().mean());
        break;
      }
      case Op::kBroadcast: {
        const TensorT& a = in(n, 0);
        if (!broadcastable(n.attr, a.shape())) throw ShapeError(n.op, a.shape(), n.attr);
        out = TensorT(n.attr, tile(a, n.attr));
        break;
      }
      case Op::kSliceRows: {
        const TensorT& a = in(n, 0);
        const Index b = n.attr[0], e = n.attr[1];
        if (a.rank() != 2 || b < 0 || e > a.rows() || b > e) {
          throw ShapeError(n.op, a.shape(), Shape{b, e});
        }
        out = TensorT({e - b, a.cols()}, a.matrix().middleRows(b, e - b));
        break;
      }
      case Op::kSliceCols: {
        const TensorT& a = in(n, 0);
        const Index b = n.attr[0], e = n.attr[1];
        if (a.rank() != 2 || b < 0 || e > a.cols() || b > e) {
          throw ShapeError(n.op, a.shape(), Shape{b, e});
        }
        out = TensorT({a.rows(), e - b}, a.matrix().middleCols(b, e - b));
        break;
      }
      case Op::kConcatRows: {
        if (n.inputs.empty()) throw std::invalid_argument("concat_rows: no operands");
        const Index cols = in(n, 0).cols();
        Index rows = 0;
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
          if (in(n, k).rank() != 2 || in(n, k).cols() != cols) {
            throw ShapeError(n.op, in(n, 0).shape(), in(n, k).shape());
          }
          rows += in(n, k).rows();
        }
        Matrix m(rows, cols);
        Index at = 0;
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
          m.middleRows(at, in(n, k).rows()) = in(n, k).matrix();
          at += in(n, k).rows();
        }
        out = TensorT({rows, cols}, std::move(m));
        break;
      }
      case Op::kConcatCols: {
        if (n.inputs.empty()) throw std::invalid_argument("concat_cols: no operands");
        const Index rows = in(n, 0).rows();
        Index cols = 0;
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
          if (in(n, k).rank() != 2 || in(n, k).rows() != rows) {
            throw ShapeError(n.op, in(n, 0).shape(), in(n, k).shape());
          }
          cols += in(n, k).cols();
        }
        Matrix m(rows, cols);
        Index at = 0;
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
          m.middleCols(at, in(n, k).cols()) = in(n, k).matrix();
          at += in(n, k).cols();
        }
        out = TensorT({rows, cols}, std::move(m));
        break;
      }
      case Op::kTranspose: {
        const TensorT& a = in(n, 0);
        if (a.rank() != 2) throw ShapeError(n.op, a.shape(), Shape{});
        out = TensorT({a.cols(), a.rows()}, a.matrix().transpose());
        break;
      }
      case Op::kBlockMatmul: {
        const TensorT& a = in(n, 0);
        const TensorT& z = in(n, 1);
        if (a.rank() != 2 || z.rank() != 2 || a.rows() != a.cols() || a.cols() == 0 ||
            z.rows() % a.cols() != 0) {
          throw ShapeError(n.op, a.shape(), z.shape());
        }
        const Index k = a.cols();
        Matrix m(z.rows(), z.cols());
        for (Index at = 0; at < z.rows(); at += k) {
          m.middleRows(at, k).noalias() = a.matrix() * z.matrix().middleRows(at, k);
        }
        out = TensorT({z.rows(), z.cols()}, std::move(m));
        break;
      }
    }
    check_finite(n.op, out);
    return out;
  }

  static void accumulate(std::vector<std::optional<Matrix>>& adj, Var v, Matrix g) {
    if (adj[v.id]) {
      *adj[v.id] += g;
    } else {
      adj[v.id] = std::move(g);
    }
  }

  bool needs(const Node& n, std::size_t k) const { return nodes_[n.inputs[k].id].requires_grad; }

  void propagate(const Node& n, const Matrix& g, std::vector<std::optional<Matrix>>& adj) const {
    switch (n.op) {
      case Op::kLeaf: break;
      case Op::kMatmul: {
        const TensorT& a = in(n, 0);
        const TensorT& b = in(n, 1);
        if (needs(n, 0)) accumulate(adj, n.inputs[0], g * b.matrix().transpose());
        if (needs(n, 1)) accumulate(adj, n.inputs[1], a.matrix().transpose() * g);
        break;
      }
      case Op::kAdd:
      case Op::kSub: {
        const TensorT& b = in(n, 1);
        if (needs(n, 0)) accumulate(adj, n.inputs[0], g);
        if (needs(n, 1)) {
          Matrix gb = untile(g, b.shape());
          if (n.op == Op::kSub) gb = -gb;
          accumulate(adj, n.inputs[1], std::move(gb));
        }
        break;
      }
      case Op::kMul:
      case Op::kMaskedMul: {
        const TensorT& a = in(n, 0);
        const TensorT& b = in(n, 1);
        const Matrix bm = tile(b, a.shape());
        if (needs(n, 0)) accumulate(adj, n.inputs[0], g.cwiseProduct(bm));
        if (n.op == Op::kMul && needs(n, 1)) {
          accumulate(adj, n.inputs[1], untile(g.cwiseProduct(a.matrix()), b.shape()));
        }
        break;
      }
      case Op::kScale: accumulate(adj, n.inputs[0], g * n.scalar); break;
      case Op::kRelu: {
        // Subgradient at exactly 0 is 0.
        const Matrix& x = in(n, 0).matrix();
        accumulate(adj, n.inputs[0],
                   g.binaryExpr(x, [](Scalar gv, Scalar xv) { return xv > 0 ? gv : Scalar(0); }));
        break;
      }
      case Op::kSigmoid: {
        const Matrix& y = n.value.matrix();
        accumulate(adj, n.inputs[0],
                   g.cwiseProduct(y.cwiseProduct((Matrix::Ones(y.rows(), y.cols()) - y))));
        break;
      }
      case Op::kTanh: {
        const Matrix& y = n.value.matrix();
        accumulate(adj, n.inputs[0], g.array() * (Scalar(1) - y.array().square()));
        break;
      }
      case Op::kAbs: {
        const Matrix& x = in(n, 0).matrix();
        accumulate(adj, n.inputs[0], g.binaryExpr(x, [](Scalar gv, Scalar xv) {
          return xv > 0 ? gv : (xv < 0 ? -gv : Scalar(0));
        }));
        break;
      }
      case Op::kSquare:
        accumulate(adj, n.inputs[0], (g.array() * in(n, 0).matrix().array() * Scalar(2)).matrix());
        break;
      case Op::kSqrt: {
        const Matrix& y = n.value.matrix();
        if ((y.array() == Scalar(0)).any()) {
          throw std::domain_error("sqrt: gradient undefined at 0");
        }
        accumulate(adj, n.inputs[0], (g.array() / (Scalar(2) * y.array())).matrix());
        break;
      }
      case Op::kSum: {
        const TensorT& a = in(n, 0);
        accumulate(adj, n.inputs[0], Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
        break;
      }
      case Op::kMean: {
        const TensorT& a = in(n, 0);
        accumulate(adj, n.inputs[0],
                   Matrix::Constant(a.rows(), a.cols(), g(0, 0) / static_cast<Scalar>(a.size())));
        break;
      }
      case Op::kBroadcast: accumulate(adj, n.inputs[0], untile(g, in(n, 0).shape())); break;
      case Op::kSliceRows: {
        const TensorT& a = in(n, 0);
        Matrix ga = Matrix::Zero(a.rows(), a.cols());
        ga.middleRows(n.attr[0], n.attr[1] - n.attr[0]) = g;
        accumulate(adj, n.inputs[0], std::move(ga));
        break;
      }
      case Op::kSliceCols: {
        const TensorT& a = in(n, 0);
        Matrix ga = Matrix::Zero(a.rows(), a.cols());
        ga.middleCols(n.attr[0], n.attr[1] - n.attr[0]) = g;
        accumulate(adj, n.inputs[0], std::move(ga));
        break;
      }
      case Op::kConcatRows: {
        Index at = 0;
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
          const Index r = in(n, k).rows();
          if (needs(n, k)) accumulate(adj, n.inputs[k], g.middleRows(at, r));
          at += r;
        }
        break;
      }
      case Op::kConcatCols: {
        Index at = 0;
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
          const Index c = in(n, k).cols();
          if (needs(n, k)) accumulate(adj, n.inputs[k], g.middleCols(at, c));
          at += c;
        }
        break;
      }
      case Op::kTranspose: accumulate(adj, n.inputs[0], g.transpose()); break;
      case Op::kBlockMatmul: {
        const TensorT& a = in(n, 0);
        const TensorT& z = in(n, 1);
        const Index k = a.cols();
        if (needs(n, 0)) {
          Matrix ga = Matrix::Zero(k, k);
          for (Index at = 0; at < z.rows(); at += k) {
            ga.noalias() += g.middleRows(at, k) * z.matrix().middleRows(at, k).transpose();
          }
          accumulate(adj, n.inputs[0], std::move(ga));
        }
        if (needs(n, 1)) {
          Matrix gz(z.rows(), z.cols());
          for (Index at = 0; at < z.rows(); at += k) {
            gz.middleRows(at, k).noalias() = a.matrix().transpose() * g.middleRows(at, k);
          }
          accumulate(adj, n.inputs[1], std::move(gz));
        }
        break;
      }
    }
  }

  std::vector<Node> nodes_;
};

}  // namespace stadv::ad
