#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace sdfrecon {

// Reverse-mode autodiff tape over dense matrices (one column per sample).
// Forward values are computed eagerly as nodes are appended; backward() walks
// the recording once in reverse and accumulates gradients into every node
// that (transitively) depends on a differentiable leaf. Nondifferentiable
// kinks (relu/abs at 0) use the zero-subgradient convention.
template <typename T>
class Tape {
 public:
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

  struct Ref {
    int32_t id = -1;
    bool valid() const { return id >= 0; }
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); ran_backward_ = false; }

  const Mat& value(Ref r) const { return node(r).value; }
  // Gradient of the scalar seeded in backward() w.r.t. this node (zeros if
  // the node was never touched).
  Mat gradient(Ref r) const {
    const Node& n = node(r);
    if (!ran_backward_) throw std::logic_error("Tape: gradient() before backward()");
    if (n.grad.size() == 0) return Mat::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  // ---- leaves -------------------------------------------------------------

  Ref leaf(Mat v, bool requires_grad = true) {
    Node n;
    n.op = Op::kLeaf;
    n.value = std::move(v);
    n.requires_grad = requires_grad;
    return push(std::move(n));
  }
  Ref constant(Mat v) { return leaf(std::move(v), false); }
  Ref constant_scalar(T v) {
    Mat m(1, 1);
    m(0, 0) = v;
    return constant(std::move(m));
  }

  // ---- linear algebra -----------------------------------------------------

  // W*X + b (b is a column, broadcast over samples).
  Ref affine(Ref W, Ref X, Ref b) {
    const Mat& w = value(W);
    const Mat& x = value(X);
    const Mat& bias = value(b);
    check(w.cols() == x.rows() && bias.rows() == w.rows() && bias.cols() == 1, "affine shapes");
    Node n = make(Op::kAffine, W, X, b);
    n.value.noalias() = w * x;
    n.value.colwise() += bias.col(0);
    return push(std::move(n));
  }

  Ref matmul(Ref W, Ref X) {
    check(value(W).cols() == value(X).rows(), "matmul shapes");
    Node n = make(Op::kMatmul, W, X);
    n.value.noalias() = value(W) * value(X);
    return push(std::move(n));
  }

  // ---- elementwise --------------------------------------------------------

  Ref add(Ref A, Ref B) { return binary(Op::kAdd, A, B, value(A) + value(B)); }
  Ref sub(Ref A, Ref B) { return binary(Op::kSub, A, B, value(A) - value(B)); }
  Ref cwise_mul(Ref A, Ref B) {
    return binary(Op::kMul, A, B, value(A).cwiseProduct(value(B)));
  }
  Ref cwise_div(Ref A, Ref B) {
    return binary(Op::kDiv, A, B, value(A).cwiseQuotient(value(B)));
  }
  Ref scale(Ref A, T s) {
    Node n = make(Op::kScale, A);
    n.scalar = s;
    n.value = value(A) * s;
    return push(std::move(n));
  }
  Ref add_scalar(Ref A, T c) {
    Node n = make(Op::kAddScalar, A);
    n.scalar = c;
    n.value = value(A).array() + c;
    return push(std::move(n));
  }
  Ref relu(Ref A) { return unary(Op::kRelu, A, value(A).cwiseMax(T(0))); }
  Ref abs(Ref A) { return unary(Op::kAbs, A, value(A).cwiseAbs()); }
  Ref square(Ref A) { return unary(Op::kSquare, A, value(A).array().square().matrix()); }
  Ref sqrt(Ref A) { return unary(Op::kSqrt, A, value(A).array().sqrt().matrix()); }
  Ref sigmoid(Ref A) {
    return unary(Op::kSigmoid, A,
                 (T(1) / (T(1) + (-value(A).array()).exp())).matrix());
  }
  Ref tanh(Ref A) { return unary(Op::kTanh, A, value(A).array().tanh().matrix()); }
  Ref sin(Ref A) { return unary(Op::kSin, A, value(A).array().sin().matrix()); }
  Ref cos(Ref A) { return unary(Op::kCos, A, value(A).array().cos().matrix()); }
  // log(1 + exp(x)) with the usual large-argument shortcut.
  Ref softplus(Ref A) {
    Mat v = value(A);
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      T x = v.data()[i];
      v.data()[i] = x > T(30) ? x : std::log1p(std::exp(x));
    }
    return unary(Op::kSoftplus, A, std::move(v));
  }

  // ---- shape / reduction --------------------------------------------------

  Ref concat_rows(Ref A, Ref B) {
    const Mat& a = value(A);
    const Mat& b = value(B);
    check(a.cols() == b.cols(), "concat_rows columns");
    Node n = make(Op::kConcatRows, A, B);
    n.value.resize(a.rows() + b.rows(), a.cols());
    n.value.topRows(a.rows()) = a;
    n.value.bottomRows(b.rows()) = b;
    return push(std::move(n));
  }

  Ref slice_rows(Ref A, int r0, int nrows) {
    check(r0 >= 0 && nrows >= 0 && r0 + nrows <= value(A).rows(), "slice_rows range");
    Node n = make(Op::kSliceRows, A);
    n.i0 = r0;
    n.i1 = nrows;
    n.value = value(A).middleRows(r0, nrows);
    return push(std::move(n));
  }

  // 1xB row replicated to d rows.
  Ref broadcast_rows(Ref A, int rows) {
    check(value(A).rows() == 1, "broadcast_rows wants a row");
    Node n = make(Op::kBroadcastRows, A);
    n.i0 = rows;
    n.value = value(A).replicate(rows, 1);
    return push(std::move(n));
  }

  // dx1 column replicated to B columns.
  Ref broadcast_cols(Ref A, int cols) {
    check(value(A).cols() == 1, "broadcast_cols wants a column");
    Node n = make(Op::kBroadcastCols, A);
    n.i0 = cols;
    n.value = value(A).replicate(1, cols);
    return push(std::move(n));
  }

  Ref colsum(Ref A) { return unary(Op::kColSum, A, value(A).colwise().sum()); }
  Ref colmean(Ref A) {
    Node n = make(Op::kColMean, A);
    n.value = value(A).colwise().mean();
    return push(std::move(n));
  }
  // Scalar (1x1) sum of all entries.
  Ref sum(Ref A) {
    Node n = make(Op::kSum, A);
    n.value.resize(1, 1);
    n.value(0, 0) = value(A).sum();
    return push(std::move(n));
  }

  Ref gather_cols(Ref A, std::vector<int> idx) {
    const Mat& a = value(A);
    Node n = make(Op::kGatherCols, A);
    n.value.resize(a.rows(), Eigen::Index(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) {
      check(idx[j] >= 0 && idx[j] < a.cols(), "gather_cols index");
      n.value.col(Eigen::Index(j)) = a.col(idx[j]);
    }
    n.indices = std::move(idx);
    return push(std::move(n));
  }

  // ---- fused network ops --------------------------------------------------

  // Per-column layer normalization with learnable gain/bias columns.
  Ref layernorm(Ref X, Ref gain, Ref bias, T eps) {
    const Mat& x = value(X);
    const Mat& g = value(gain);
    const Mat& b = value(bias);
    check(g.rows() == x.rows() && g.cols() == 1 && b.rows() == x.rows() && b.cols() == 1,
          "layernorm affine shapes");
    Node n = make(Op::kLayerNorm, X, gain, bias);
    n.scalar = eps;
    const Eigen::Index d = x.rows();
    n.aux0.resize(d, x.cols());  // xhat
    n.aux1.resize(1, x.cols());  // 1/std
    n.value.resize(d, x.cols());
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      T mu = x.col(c).mean();
      auto centered = (x.col(c).array() - mu).eval();
      T var = centered.square().mean();
      T istd = T(1) / std::sqrt(var + eps);
      n.aux0.col(c) = centered * istd;
      n.aux1(0, c) = istd;
      n.value.col(c) = g.col(0).array() * n.aux0.col(c).array() + b.col(0).array();
    }
    return push(std::move(n));
  }

  // Sinusoidal positional encoding of a 3xB (or dxB) point batch. Each input
  // row p expands to [p, cos(2^0 p), sin(2^0 p), ..., cos(2^{L-1} p),
  // sin(2^{L-1} p)], blocks stacked per input row.
  Ref posenc(Ref X, int levels) {
    check(levels >= 0, "posenc levels");
    const Mat& x = value(X);
    const Eigen::Index d = x.rows(), b = x.cols(), block = 1 + 2 * levels;
    Node n = make(Op::kPosEnc, X);
    n.i0 = levels;
    n.value.resize(d * block, b);
    for (Eigen::Index r = 0; r < d; ++r) {
      n.value.row(r * block) = x.row(r);
      T freq = T(1);
      for (int k = 0; k < levels; ++k, freq *= T(2)) {
        n.value.row(r * block + 1 + 2 * k) = (x.row(r).array() * freq).cos();
        n.value.row(r * block + 2 + 2 * k) = (x.row(r).array() * freq).sin();
      }
    }
    return push(std::move(n));
  }

  // ---- backward -----------------------------------------------------------

  // Seeds d(loss)/d(loss) = 1 on a 1x1 node and propagates through the tape
  // in a single reverse sweep.
  void backward(Ref loss) {
    Node& ln = node(loss);
    check(ln.value.rows() == 1 && ln.value.cols() == 1, "backward seed must be scalar");
    if (!ln.requires_grad)
      throw std::logic_error("Tape: backward on a graph with no differentiable leaf");
    ln.grad = Mat::Ones(1, 1);
    for (int32_t i = loss.id; i >= 0; --i) {
      Node& n = nodes_[std::size_t(i)];
      if (!n.requires_grad || n.grad.size() == 0) continue;
      scatter(n);
    }
    ran_backward_ = true;
  }

 private:
  enum class Op {
    kLeaf, kAffine, kMatmul, kAdd, kSub, kMul, kDiv, kScale, kAddScalar,
    kRelu, kAbs, kSquare, kSqrt, kSigmoid, kTanh, kSin, kCos, kSoftplus,
    kConcatRows, kSliceRows, kBroadcastRows, kBroadcastCols,
    kColSum, kColMean, kSum, kGatherCols, kLayerNorm, kPosEnc,
  };

  struct Node {
    Op op = Op::kLeaf;
    int32_t in[3] = {-1, -1, -1};
    bool requires_grad = false;
    T scalar = T(0);
    int i0 = 0, i1 = 0;
    std::vector<int> indices;
    Mat value, grad, aux0, aux1;
  };

  Node& node(Ref r) {
    check(r.valid() && std::size_t(r.id) < nodes_.size(), "bad node ref");
    return nodes_[std::size_t(r.id)];
  }
  const Node& node(Ref r) const { return const_cast<Tape*>(this)->node(r); }

  static void check(bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("Tape: ") + what);
  }

  Node make(Op op, Ref a, Ref b = {}, Ref c = {}) {
    Node n;
    n.op = op;
    n.in[0] = a.id;
    n.in[1] = b.id;
    n.in[2] = c.id;
    n.requires_grad = node(a).requires_grad || (b.valid() && node(b).requires_grad) ||
                      (c.valid() && node(c).requires_grad);
    return n;
  }

  Ref unary(Op op, Ref A, Mat v) {
    Node n = make(op, A);
    n.value = std::move(v);
    return push(std::move(n));
  }
  Ref binary(Op op, Ref A, Ref B, Mat v) {
    check(value(A).rows() == value(B).rows() && value(A).cols() == value(B).cols(),
          "elementwise shape mismatch");
    Node n = make(op, A, B);
    n.value = std::move(v);
    return push(std::move(n));
  }

  Ref push(Node n) {
    nodes_.push_back(std::move(n));
    return Ref{int32_t(nodes_.size() - 1)};
  }

  Mat& grad_buf(int32_t id) {
    Node& n = nodes_[std::size_t(id)];
    if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }
  // Accumulate into an input only if gradients can flow further from it.
  bool wants(int32_t id) const { return id >= 0 && nodes_[std::size_t(id)].requires_grad; }

  void scatter(Node& n) {
    const Mat& g = n.grad;
    const int32_t a = n.in[0], b = n.in[1], c = n.in[2];
    switch (n.op) {
      case Op::kLeaf:
        break;
      case Op::kAffine: {
        const Mat& x = nodes_[b].value;
        if (wants(a)) grad_buf(a).noalias() += g * x.transpose();
        if (wants(b)) grad_buf(b).noalias() += nodes_[a].value.transpose() * g;
        if (wants(c)) grad_buf(c) += g.rowwise().sum();
        break;
      }
      case Op::kMatmul: {
        if (wants(a)) grad_buf(a).noalias() += g * nodes_[b].value.transpose();
        if (wants(b)) grad_buf(b).noalias() += nodes_[a].value.transpose() * g;
        break;
      }
      case Op::kAdd:
        if (wants(a)) grad_buf(a) += g;
        if (wants(b)) grad_buf(b) += g;
        break;
      case Op::kSub:
        if (wants(a)) grad_buf(a) += g;
        if (wants(b)) grad_buf(b) -= g;
        break;
      case Op::kMul:
        if (wants(a)) grad_buf(a) += g.cwiseProduct(nodes_[b].value);
        if (wants(b)) grad_buf(b) += g.cwiseProduct(nodes_[a].value);
        break;
      case Op::kDiv: {
        const Mat& denom = nodes_[b].value;
        if (wants(a)) grad_buf(a) += g.cwiseQuotient(denom);
        if (wants(b)) grad_buf(b) -= g.cwiseProduct(n.value).cwiseQuotient(denom);
        break;
      }
      case Op::kScale:
        if (wants(a)) grad_buf(a) += g * n.scalar;
        break;
      case Op::kAddScalar:
        if (wants(a)) grad_buf(a) += g;
        break;
      case Op::kRelu:
        if (wants(a))
          grad_buf(a).array() +=
              g.array() * (nodes_[a].value.array() > T(0)).template cast<T>();
        break;
      case Op::kAbs:
        if (wants(a))
          grad_buf(a).array() += g.array() * nodes_[a].value.array().sign();
        break;
      case Op::kSquare:
        if (wants(a)) grad_buf(a).array() += T(2) * g.array() * nodes_[a].value.array();
        break;
      case Op::kSqrt:
        if (wants(a))
          grad_buf(a).array() +=
              g.array() / (T(2) * n.value.array().max(T(1e-30)));
        break;
      case Op::kSigmoid:
        if (wants(a))
          grad_buf(a).array() += g.array() * n.value.array() * (T(1) - n.value.array());
        break;
      case Op::kTanh:
        if (wants(a))
          grad_buf(a).array() += g.array() * (T(1) - n.value.array().square());
        break;
      case Op::kSin:
        if (wants(a)) grad_buf(a).array() += g.array() * nodes_[a].value.array().cos();
        break;
      case Op::kCos:
        if (wants(a)) grad_buf(a).array() -= g.array() * nodes_[a].value.array().sin();
        break;
      case Op::kSoftplus:
        if (wants(a))
          grad_buf(a).array() +=
              g.array() / (T(1) + (-nodes_[a].value.array()).exp());
        break;
      case Op::kConcatRows: {
        const Eigen::Index ra = nodes_[a].value.rows();
        if (wants(a)) grad_buf(a) += g.topRows(ra);
        if (wants(b)) grad_buf(b) += g.bottomRows(g.rows() - ra);
        break;
      }
      case Op::kSliceRows:
        if (wants(a)) grad_buf(a).middleRows(n.i0, n.i1) += g;
        break;
      case Op::kBroadcastRows:
        if (wants(a)) grad_buf(a) += g.colwise().sum();
        break;
      case Op::kBroadcastCols:
        if (wants(a)) grad_buf(a) += g.rowwise().sum();
        break;
      case Op::kColSum:
        if (wants(a)) grad_buf(a) += g.replicate(nodes_[a].value.rows(), 1);
        break;
      case Op::kColMean:
        if (wants(a))
          grad_buf(a) += g.replicate(nodes_[a].value.rows(), 1) / T(nodes_[a].value.rows());
        break;
      case Op::kSum:
        if (wants(a))
          grad_buf(a).array() += g(0, 0);
        break;
      case Op::kGatherCols:
        if (wants(a)) {
          Mat& ga = grad_buf(a);
          for (std::size_t j = 0; j < n.indices.size(); ++j)
            ga.col(n.indices[j]) += g.col(Eigen::Index(j));
        }
        break;
      case Op::kLayerNorm: {
        // y = gain .* xhat + bias with xhat = (x - mu) / std per column.
        const Mat& gain = nodes_[b].value;
        if (wants(c)) grad_buf(c) += g.rowwise().sum();
        if (wants(b)) grad_buf(b) += g.cwiseProduct(n.aux0).rowwise().sum();
        if (wants(a)) {
          Mat& gx = grad_buf(a);
          const Eigen::Index d = n.value.rows();
          for (Eigen::Index col = 0; col < n.value.cols(); ++col) {
            auto gc = (g.col(col).array() * gain.col(0).array()).eval();
            T m1 = gc.mean();
            T m2 = (gc * n.aux0.col(col).array()).mean();
            gx.col(col).array() +=
                n.aux1(0, col) * (gc - m1 - n.aux0.col(col).array() * m2);
          }
        }
        break;
      }
      case Op::kPosEnc: {
        if (wants(a)) {
          Mat& gx = grad_buf(a);
          const int L = n.i0;
          const Eigen::Index block = 1 + 2 * L;
          const Eigen::Index d = nodes_[a].value.rows();
          for (Eigen::Index r = 0; r < d; ++r) {
            gx.row(r) += g.row(r * block);
            T freq = T(1);
            for (int k = 0; k < L; ++k, freq *= T(2)) {
              // d cos(fp) = -f sin(fp) dp ; d sin(fp) = f cos(fp) dp
              gx.row(r).array() +=
                  freq * (g.row(r * block + 2 + 2 * k).array() *
                              n.value.row(r * block + 1 + 2 * k).array() -
                          g.row(r * block + 1 + 2 * k).array() *
                              n.value.row(r * block + 2 + 2 * k).array());
            }
          }
        }
        break;
      }
    }
  }

  std::vector<Node> nodes_;
  bool ran_backward_ = false;
};

}  // namespace sdfrecon
