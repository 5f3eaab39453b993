#pragma once
// Dense tensors with reverse-mode automatic differentiation.
//
// A Tensor<T> is a shared handle to a node holding contiguous values, an
// optional gradient accumulator and a closure that propagates gradients to
// the producing operation's inputs. Forward ops are pure; backward() walks
// the acyclic producer graph in reverse topological order.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include <cblas.h>

namespace aegan {

using Shape = std::vector<int64_t>;

inline int64_t numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

inline void check(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

namespace detail {

inline void gemm(bool ta, bool tb, int m, int n, int k, float alpha,
                 const float* a, int lda, const float* b, int ldb, float beta,
                 float* c, int ldc) {
  cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans,
              tb ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb,
              beta, c, ldc);
}

inline void gemm(bool ta, bool tb, int m, int n, int k, double alpha,
                 const double* a, int lda, const double* b, int ldb,
                 double beta, double* c, int ldc) {
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans,
              tb ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb,
              beta, c, ldc);
}

// Scatters image patches into a [C*k*k, Hout*Wout] matrix.
template <class T>
void im2col(const T* img, int channels, int h, int w, int k, int stride,
            int pad, int hout, int wout, T* col) {
  for (int c = 0; c < channels; ++c) {
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        T* row = col + ((static_cast<int64_t>(c) * k + ki) * k + kj) *
                           (static_cast<int64_t>(hout) * wout);
        for (int oh = 0; oh < hout; ++oh) {
          int ih = oh * stride - pad + ki;
          if (ih < 0 || ih >= h) {
            std::fill(row, row + wout, T(0));
            row += wout;
            continue;
          }
          const T* src = img + (static_cast<int64_t>(c) * h + ih) * w;
          for (int ow = 0; ow < wout; ++ow) {
            int iw = ow * stride - pad + kj;
            *row++ = (iw >= 0 && iw < w) ? src[iw] : T(0);
          }
        }
      }
    }
  }
}

// Adjoint of im2col: accumulates the column matrix back into the image.
template <class T>
void col2im(const T* col, int channels, int h, int w, int k, int stride,
            int pad, int hout, int wout, T* img) {
  for (int c = 0; c < channels; ++c) {
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const T* row = col + ((static_cast<int64_t>(c) * k + ki) * k + kj) *
                                 (static_cast<int64_t>(hout) * wout);
        for (int oh = 0; oh < hout; ++oh) {
          int ih = oh * stride - pad + ki;
          if (ih < 0 || ih >= h) {
            row += wout;
            continue;
          }
          T* dst = img + (static_cast<int64_t>(c) * h + ih) * w;
          for (int ow = 0; ow < wout; ++ow) {
            int iw = ow * stride - pad + kj;
            if (iw >= 0 && iw < w) dst[iw] += *row;
            ++row;
          }
        }
      }
    }
  }
}

}  // namespace detail

template <class T>
class Tensor {
 public:
  struct Node {
    Shape shape;
    std::vector<T> values;
    std::vector<T> grad;  // sized lazily, same extent as values
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;

    void ensure_grad() {
      if (grad.empty()) grad.assign(values.size(), T(0));
    }
  };

  Tensor() = default;

  static Tensor from(Shape shape, std::vector<T> values,
                     bool requires_grad = false) {
    check(numel(shape) == static_cast<int64_t>(values.size()),
          "tensor: value count " + std::to_string(values.size()) +
              " does not match shape " + shape_str(shape));
    Tensor t;
    t.node_ = std::make_shared<Node>();
    t.node_->shape = std::move(shape);
    t.node_->values = std::move(values);
    t.node_->requires_grad = requires_grad;
    return t;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    std::vector<T> v(static_cast<size_t>(numel(shape)), T(0));
    return from(std::move(shape), std::move(v), requires_grad);
  }

  static Tensor full(Shape shape, T value, bool requires_grad = false) {
    std::vector<T> v(static_cast<size_t>(numel(shape)), value);
    return from(std::move(shape), std::move(v), requires_grad);
  }

  static Tensor scalar(T value) { return from({1}, {value}); }

  static Tensor randn(Shape shape, std::mt19937_64& rng, T mean = T(0),
                      T stddev = T(1), bool requires_grad = false) {
    std::normal_distribution<double> dist(static_cast<double>(mean),
                                          static_cast<double>(stddev));
    std::vector<T> v(static_cast<size_t>(numel(shape)));
    for (auto& x : v) x = static_cast<T>(dist(rng));
    return from(std::move(shape), std::move(v), requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int64_t size() const { return static_cast<int64_t>(node_->values.size()); }
  std::vector<T>& values() { return node_->values; }
  const std::vector<T>& values() const { return node_->values; }
  std::vector<T>& grad() { return node_->grad; }
  const std::vector<T>& grad() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool rg) { node_->requires_grad = rg; }
  T item() const {
    check(size() == 1, "item: tensor is not scalar, shape " +
                           shape_str(node_->shape));
    return node_->values[0];
  }

  void zero_grad() { node_->grad.clear(); }

  std::shared_ptr<Node> node() const { return node_; }

  // Reverse-mode pass from a scalar loss. Accumulates into grad slots of
  // every reachable node with requires_grad. Releases the graph edges of the
  // visited nodes afterwards unless retain_graph is set.
  void backward(bool retain_graph = false) const {
    check(size() == 1, "backward: loss must be scalar, got shape " +
                           shape_str(node_->shape));
    // The order vector holds shared ownership so releasing graph edges while
    // propagating cannot free a node that is still pending.
    std::vector<std::shared_ptr<Node>> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<std::shared_ptr<Node>, size_t>> stack;
    stack.push_back({node_, 0});
    seen.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, idx] = stack.back();
      if (idx < n->parents.size()) {
        std::shared_ptr<Node> p = n->parents[idx++];
        if (!seen.count(p.get())) {
          seen.insert(p.get());
          stack.push_back({std::move(p), 0});
        }
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
    node_->ensure_grad();
    node_->grad[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node* n = it->get();
      if (n->backprop && !n->grad.empty()) n->backprop(*n);
      if (!retain_graph) {
        n->backprop = nullptr;
        n->parents.clear();
        if (n != node_.get() && !n->requires_grad) n->grad.clear();
      }
    }
  }

  // -- op construction helper -------------------------------------------

  static Tensor make_op(Shape shape, std::vector<T> values,
                        std::vector<Tensor> inputs,
                        std::function<void(Node&)> backprop) {
    Tensor out = from(std::move(shape), std::move(values));
    bool track = false;
    for (const auto& in : inputs)
      if (in.node_->requires_grad || in.node_->backprop) track = true;
    if (track) {
      out.node_->requires_grad = false;
      for (auto& in : inputs) out.node_->parents.push_back(in.node_);
      out.node_->backprop = std::move(backprop);
    }
    return out;
  }

 private:
  std::shared_ptr<Node> node_;
};

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  check(a.shape() == b.shape(), "add: shape mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
  std::vector<T> out(a.values());
  for (int64_t i = 0; i < a.size(); ++i) out[i] += b.values()[i];
  auto an = a.node();
  auto bn = b.node();
  using Node = typename Tensor<T>::Node;
  return Tensor<T>::make_op(a.shape(), std::move(out), {a, b}, [an, bn](Node& n) {
    an->ensure_grad();
    bn->ensure_grad();
    for (size_t i = 0; i < n.grad.size(); ++i) {
      an->grad[i] += n.grad[i];
      bn->grad[i] += n.grad[i];
    }
  });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  check(a.shape() == b.shape(), "sub: shape mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
  std::vector<T> out(a.values());
  for (int64_t i = 0; i < a.size(); ++i) out[i] -= b.values()[i];
  auto an = a.node();
  auto bn = b.node();
  using Node = typename Tensor<T>::Node;
  return Tensor<T>::make_op(a.shape(), std::move(out), {a, b}, [an, bn](Node& n) {
    an->ensure_grad();
    bn->ensure_grad();
    for (size_t i = 0; i < n.grad.size(); ++i) {
      an->grad[i] += n.grad[i];
      bn->grad[i] -= n.grad[i];
    }
  });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  check(a.shape() == b.shape(), "mul: shape mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
  std::vector<T> out(a.values());
  for (int64_t i = 0; i < a.size(); ++i) out[i] *= b.values()[i];
  auto an = a.node();
  auto bn = b.node();
  using Node = typename Tensor<T>::Node;
  return Tensor<T>::make_op(a.shape(), std::move(out), {a, b}, [an, bn](Node& n) {
    an->ensure_grad();
    bn->ensure_grad();
    for (size_t i = 0; i < n.grad.size(); ++i) {
      an->grad[i] += n.grad[i] * bn->values[i];
      bn->grad[i] += n.grad[i] * an->values[i];
    }
  });
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.values());
  for (auto& x : out) x *= factor;
  auto an = a.node();
  using Node = typename Tensor<T>::Node;
  return Tensor<T>::make_op(a.shape(), std::move(out), {a}, [an, factor](Node& n) {
    an->ensure_grad();
    for (size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += factor * n.grad[i];
  });
}

template <class T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  check(numel(shape) == a.size(), "reshape: cannot view " +
                                      shape_str(a.shape()) + " as " +
                                      shape_str(shape));
  std::vector<T> out(a.values());
  auto an = a.node();
  using Node = typename Tensor<T>::Node;
  return Tensor<T>::make_op(std::move(shape), std::move(out), {a}, [an](Node& n) {
    an->ensure_grad();
    for (size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i];
  });
}

template <class T>
Tensor<T> leaky_relu(const Tensor<T>& a, T slope) {
  std::vector<T> out(a.values());
  for (auto& x : out) x = x > T(0) ? x : slope * x;
  auto an = a.node();
  using Node = typename Tensor<T>::Node;
  return Tensor<T>::make_op(a.shape(), std::move(out), {a}, [an, slope](Node& n) {
    an->ensure_grad();
    for (size_t i = 0; i < n.grad.size(); ++i)
      an->grad[i] += n.grad[i] * (an->values[i] > T(0) ? T(1) : slope);
  });
}

template <class T>
Tensor<T> relu(const Tensor<T>& a) {
  return leaky_relu(a, T(0));
}

template <class T>
Tensor<T> tanh_act(const Tensor<T>& a) {
  std::vector<T> out(a.values());
  for (auto& x : out) x = std::tanh(x);
  auto an = a.node();
  using Node = typename Tensor<T>::Node;
  return Tensor<T>::make_op(a.shape(), std::move(out), {a}, [an](Node& n) {
    an->ensure_grad();
    for (size_t i = 0; i < n.grad.size(); ++i)
      an->grad[i] += n.grad[i] * (T(1) - n.values[i] * n.values[i]);
  });
}

template <class T>
Tensor<T> sum(const Tensor<T>& a) {
  T total = std::accumulate(a.values().begin(), a.values().end(), T(0));
  auto an = a.node();
  using Node = typename Tensor<T>::Node;
  return Tensor<T>::make_op({1}, {total}, {a}, [an](Node& n) {
    an->ensure_grad();
    for (auto& g : an->grad) g += n.grad[0];
  });
}

template <class T>
Tensor<T> mean(const Tensor<T>& a) {
  T total = std::accumulate(a.values().begin(), a.values().end(), T(0));
  T inv = T(1) / static_cast<T>(a.size());
  auto an = a.node();
  using Node = typename Tensor<T>::Node;
  return Tensor<T>::make_op({1}, {total * inv}, {a}, [an, inv](Node& n) {
    an->ensure_grad();
    for (auto& g : an->grad) g += n.grad[0] * inv;
  });
}

// ---------------------------------------------------------------------------
// Linear layer: x[B,In] * w[Out,In]^T + b[Out]
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  check(x.shape().size() == 2 && w.shape().size() == 2,
        "linear: expected 2-d input and weight, got " + shape_str(x.shape()) +
            " and " + shape_str(w.shape()));
  const int batch = static_cast<int>(x.shape()[0]);
  const int in = static_cast<int>(x.shape()[1]);
  const int out_dim = static_cast<int>(w.shape()[0]);
  check(w.shape()[1] == in, "linear: input dim " + std::to_string(in) +
                                " does not match weight " +
                                shape_str(w.shape()));
  check(b.shape() == Shape{out_dim}, "linear: bias shape " +
                                         shape_str(b.shape()) + " vs Out=" +
                                         std::to_string(out_dim));
  std::vector<T> out(static_cast<size_t>(batch) * out_dim);
  detail::gemm(false, true, batch, out_dim, in, T(1), x.values().data(), in,
               w.values().data(), in, T(0), out.data(), out_dim);
  for (int i = 0; i < batch; ++i)
    for (int j = 0; j < out_dim; ++j) out[i * out_dim + j] += b.values()[j];
  auto xn = x.node();
  auto wn = w.node();
  auto bn = b.node();
  using Node = typename Tensor<T>::Node;
  return Tensor<T>::make_op(
      {batch, out_dim}, std::move(out), {x, w, b},
      [xn, wn, bn, batch, in, out_dim](Node& n) {
        xn->ensure_grad();
        wn->ensure_grad();
        bn->ensure_grad();
        // dX += dY * W ; dW += dY^T * X ; db += column sums of dY
        detail::gemm(false, false, batch, in, out_dim, T(1), n.grad.data(),
                     out_dim, wn->values.data(), in, T(1), xn->grad.data(), in);
        detail::gemm(true, false, out_dim, in, batch, T(1), n.grad.data(),
                     out_dim, xn->values.data(), in, T(1), wn->grad.data(), in);
        for (int i = 0; i < batch; ++i)
          for (int j = 0; j < out_dim; ++j)
            bn->grad[j] += n.grad[i * out_dim + j];
      });
}

// ---------------------------------------------------------------------------
// Convolutions
// ---------------------------------------------------------------------------

// input [B,Cin,H,W], weight [Cout,Cin,k,k] -> [B,Cout,H',W'] with
// H' = (H + 2*pad - k)/stride + 1.
template <class T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight,
                 const Tensor<T>& bias, int stride, int pad) {
  check(input.shape().size() == 4 && weight.shape().size() == 4,
        "conv2d: expected 4-d input and weight, got " +
            shape_str(input.shape()) + " and " + shape_str(weight.shape()));
  const int batch = static_cast<int>(input.shape()[0]);
  const int cin = static_cast<int>(input.shape()[1]);
  const int h = static_cast<int>(input.shape()[2]);
  const int w = static_cast<int>(input.shape()[3]);
  const int cout = static_cast<int>(weight.shape()[0]);
  const int k = static_cast<int>(weight.shape()[2]);
  check(weight.shape()[1] == cin,
        "conv2d: input channels " + shape_str(input.shape()) +
            " do not match weight " + shape_str(weight.shape()));
  check(weight.shape()[3] == k, "conv2d: non-square kernel " +
                                    shape_str(weight.shape()));
  check(stride >= 1 && pad >= 0, "conv2d: bad stride/padding");
  check(h + 2 * pad >= k && w + 2 * pad >= k,
        "conv2d: kernel " + std::to_string(k) + " exceeds padded input " +
            shape_str(input.shape()));
  check(bias.shape() == Shape{cout}, "conv2d: bias shape " +
                                         shape_str(bias.shape()) + " vs Cout=" +
                                         std::to_string(cout));
  const int hout = (h + 2 * pad - k) / stride + 1;
  const int wout = (w + 2 * pad - k) / stride + 1;
  const int64_t ckk = static_cast<int64_t>(cin) * k * k;
  const int64_t osp = static_cast<int64_t>(hout) * wout;
  std::vector<T> out(static_cast<size_t>(batch) * cout * osp);
  std::vector<T> col(static_cast<size_t>(ckk) * osp);
  for (int b = 0; b < batch; ++b) {
    detail::im2col(input.values().data() + static_cast<int64_t>(b) * cin * h * w,
                   cin, h, w, k, stride, pad, hout, wout, col.data());
    T* y = out.data() + static_cast<int64_t>(b) * cout * osp;
    detail::gemm(false, false, cout, static_cast<int>(osp),
                 static_cast<int>(ckk), T(1), weight.values().data(),
                 static_cast<int>(ckk), col.data(), static_cast<int>(osp),
                 T(0), y, static_cast<int>(osp));
    for (int c = 0; c < cout; ++c) {
      T bv = bias.values()[c];
      for (int64_t i = 0; i < osp; ++i) y[c * osp + i] += bv;
    }
  }
  auto xn = input.node();
  auto wn = weight.node();
  auto bn = bias.node();
  using Node = typename Tensor<T>::Node;
  return Tensor<T>::make_op(
      {batch, cout, hout, wout}, std::move(out), {input, weight, bias},
      [xn, wn, bn, batch, cin, h, w, cout, k, stride, pad, hout, wout, ckk,
       osp](Node& n) {
        xn->ensure_grad();
        wn->ensure_grad();
        bn->ensure_grad();
        std::vector<T> col(static_cast<size_t>(ckk) * osp);
        std::vector<T> dcol(static_cast<size_t>(ckk) * osp);
        for (int b = 0; b < batch; ++b) {
          const T* dy = n.grad.data() + static_cast<int64_t>(b) * cout * osp;
          // im2col is recomputed here rather than cached in the forward pass
          // to keep the live graph memory proportional to activations.
          detail::im2col(xn->values.data() + static_cast<int64_t>(b) * cin * h * w,
                         cin, h, w, k, stride, pad, hout, wout, col.data());
          detail::gemm(false, true, cout, static_cast<int>(ckk),
                       static_cast<int>(osp), T(1), dy, static_cast<int>(osp),
                       col.data(), static_cast<int>(osp), T(1),
                       wn->grad.data(), static_cast<int>(ckk));
          detail::gemm(true, false, static_cast<int>(ckk),
                       static_cast<int>(osp), cout, T(1), wn->values.data(),
                       static_cast<int>(ckk), dy, static_cast<int>(osp), T(0),
                       dcol.data(), static_cast<int>(osp));
          detail::col2im(dcol.data(), cin, h, w, k, stride, pad, hout, wout,
                         xn->grad.data() + static_cast<int64_t>(b) * cin * h * w);
          for (int c = 0; c < cout; ++c)
            for (int64_t i = 0; i < osp; ++i)
              bn->grad[c] += dy[c * osp + i];
        }
      });
}

// input [B,Cin,H,W], weight [Cin,Cout,k,k] -> [B,Cout,H',W'] with
// H' = (H-1)*stride - 2*pad + k. Forward is the adjoint of the matching
// conv2d's gradient-propagation map.
template <class T>
Tensor<T> conv_transpose2d(const Tensor<T>& input, const Tensor<T>& weight,
                           const Tensor<T>& bias, int stride, int pad) {
  check(input.shape().size() == 4 && weight.shape().size() == 4,
        "conv_transpose2d: expected 4-d input and weight, got " +
            shape_str(input.shape()) + " and " + shape_str(weight.shape()));
  const int batch = static_cast<int>(input.shape()[0]);
  const int cin = static_cast<int>(input.shape()[1]);
  const int h = static_cast<int>(input.shape()[2]);
  const int w = static_cast<int>(input.shape()[3]);
  const int cout = static_cast<int>(weight.shape()[1]);
  const int k = static_cast<int>(weight.shape()[2]);
  check(weight.shape()[0] == cin,
        "conv_transpose2d: input channels " + shape_str(input.shape()) +
            " do not match weight " + shape_str(weight.shape()));
  check(stride >= 1 && pad >= 0, "conv_transpose2d: bad stride/padding");
  check(bias.shape() == Shape{cout},
        "conv_transpose2d: bias shape " + shape_str(bias.shape()) +
            " vs Cout=" + std::to_string(cout));
  const int hout = (h - 1) * stride - 2 * pad + k;
  const int wout = (w - 1) * stride - 2 * pad + k;
  check(hout > 0 && wout > 0, "conv_transpose2d: empty output for input " +
                                  shape_str(input.shape()));
  const int64_t ckk = static_cast<int64_t>(cout) * k * k;
  const int64_t isp = static_cast<int64_t>(h) * w;
  std::vector<T> out(static_cast<size_t>(batch) * cout * hout * wout, T(0));
  std::vector<T> col(static_cast<size_t>(ckk) * isp);
  for (int b = 0; b < batch; ++b) {
    const T* x = input.values().data() + static_cast<int64_t>(b) * cin * isp;
    // col[Cout*k*k, H*W] = W^T[Cout*k*k, Cin] * X[Cin, H*W]
    detail::gemm(true, false, static_cast<int>(ckk), static_cast<int>(isp),
                 cin, T(1), weight.values().data(), static_cast<int>(ckk), x,
                 static_cast<int>(isp), T(0), col.data(),
                 static_cast<int>(isp));
    T* y = out.data() + static_cast<int64_t>(b) * cout * hout * wout;
    detail::col2im(col.data(), cout, hout, wout, k, stride, pad, h, w, y);
    for (int c = 0; c < cout; ++c) {
      T bv = bias.values()[c];
      for (int64_t i = 0; i < static_cast<int64_t>(hout) * wout; ++i)
        y[c * static_cast<int64_t>(hout) * wout + i] += bv;
    }
  }
  auto xn = input.node();
  auto wn = weight.node();
  auto bn = bias.node();
  using Node = typename Tensor<T>::Node;
  return Tensor<T>::make_op(
      {batch, cout, hout, wout}, std::move(out), {input, weight, bias},
      [xn, wn, bn, batch, cin, h, w, cout, k, stride, pad, hout, wout, ckk,
       isp](Node& n) {
        xn->ensure_grad();
        wn->ensure_grad();
        bn->ensure_grad();
        std::vector<T> dcol(static_cast<size_t>(ckk) * isp);
        const int64_t ysp = static_cast<int64_t>(hout) * wout;
        for (int b = 0; b < batch; ++b) {
          const T* dy = n.grad.data() + static_cast<int64_t>(b) * cout * ysp;
          detail::im2col(dy, cout, hout, wout, k, stride, pad, h, w,
                         dcol.data());
          // dX[Cin,H*W] += W[Cin,Cout*k*k] * dcol
          detail::gemm(false, false, cin, static_cast<int>(isp),
                       static_cast<int>(ckk), T(1), wn->values.data(),
                       static_cast<int>(ckk), dcol.data(),
                       static_cast<int>(isp), T(1),
                       xn->grad.data() + static_cast<int64_t>(b) * cin * isp,
                       static_cast<int>(isp));
          // dW[Cin,Cout*k*k] += X[Cin,H*W] * dcol^T
          detail::gemm(false, true, cin, static_cast<int>(ckk),
                       static_cast<int>(isp), T(1),
                       xn->values.data() + static_cast<int64_t>(b) * cin * isp,
                       static_cast<int>(isp), dcol.data(),
                       static_cast<int>(isp), T(1), wn->grad.data(),
                       static_cast<int>(ckk));
          for (int c = 0; c < cout; ++c)
            for (int64_t i = 0; i < ysp; ++i) bn->grad[c] += dy[c * ysp + i];
        }
      });
}

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

// Mutable per-channel running statistics, owned by the layer, outside the
// autodiff graph.
template <class T>
struct RunningStats {
  std::vector<T> mean;
  std::vector<T> var;
  explicit RunningStats(int channels = 0)
      : mean(channels, T(0)), var(channels, T(1)) {}
};

template <class T>
Tensor<T> batch_norm(const Tensor<T>& input, const Tensor<T>& gamma,
                     const Tensor<T>& beta, RunningStats<T>& stats, bool train,
                     T momentum = T(0.1), T eps = T(1e-5)) {
  check(input.shape().size() == 4, "batch_norm: expected 4-d input, got " +
                                       shape_str(input.shape()));
  const int batch = static_cast<int>(input.shape()[0]);
  const int channels = static_cast<int>(input.shape()[1]);
  const int64_t sp = input.shape()[2] * input.shape()[3];
  const int64_t per_ch = static_cast<int64_t>(batch) * sp;
  check(batch >= 1, "batch_norm: empty batch");
  check(gamma.shape() == Shape{channels} && beta.shape() == Shape{channels},
        "batch_norm: gamma/beta shape mismatch for " +
            std::to_string(channels) + " channels");
  check(static_cast<int>(stats.mean.size()) == channels,
        "batch_norm: running stats sized for " +
            std::to_string(stats.mean.size()) + " channels, input has " +
            std::to_string(channels));

  std::vector<T> use_mean(channels), use_invstd(channels);
  if (train) {
    for (int c = 0; c < channels; ++c) {
      double m = 0;
      for (int b = 0; b < batch; ++b) {
        const T* x = input.values().data() +
                     (static_cast<int64_t>(b) * channels + c) * sp;
        for (int64_t i = 0; i < sp; ++i) m += x[i];
      }
      m /= static_cast<double>(per_ch);
      double v = 0;
      for (int b = 0; b < batch; ++b) {
        const T* x = input.values().data() +
                     (static_cast<int64_t>(b) * channels + c) * sp;
        for (int64_t i = 0; i < sp; ++i) {
          double d = x[i] - m;
          v += d * d;
        }
      }
      v /= static_cast<double>(per_ch);
      use_mean[c] = static_cast<T>(m);
      use_invstd[c] = static_cast<T>(1.0 / std::sqrt(v + static_cast<double>(eps)));
      double unbiased = per_ch > 1 ? v * per_ch / (per_ch - 1) : v;
      stats.mean[c] = (T(1) - momentum) * stats.mean[c] + momentum * static_cast<T>(m);
      stats.var[c] = (T(1) - momentum) * stats.var[c] + momentum * static_cast<T>(unbiased);
    }
  } else {
    for (int c = 0; c < channels; ++c) {
      use_mean[c] = stats.mean[c];
      use_invstd[c] = T(1) / std::sqrt(stats.var[c] + eps);
    }
  }

  std::vector<T> out(input.values().size());
  for (int b = 0; b < batch; ++b) {
    for (int c = 0; c < channels; ++c) {
      const T* x = input.values().data() +
                   (static_cast<int64_t>(b) * channels + c) * sp;
      T* y = out.data() + (static_cast<int64_t>(b) * channels + c) * sp;
      const T g = gamma.values()[c], bb = beta.values()[c];
      const T m = use_mean[c], is = use_invstd[c];
      for (int64_t i = 0; i < sp; ++i) y[i] = g * (x[i] - m) * is + bb;
    }
  }
  auto xn = input.node();
  auto gn = gamma.node();
  auto bn = beta.node();
  using Node = typename Tensor<T>::Node;
  return Tensor<T>::make_op(
      input.shape(), std::move(out), {input, gamma, beta},
      [xn, gn, bn, batch, channels, sp, per_ch, train, use_mean,
       use_invstd](Node& n) {
        xn->ensure_grad();
        gn->ensure_grad();
        bn->ensure_grad();
        for (int c = 0; c < channels; ++c) {
          const T m = use_mean[c], is = use_invstd[c];
          const T g = gn->values[c];
          double sum_dy = 0, sum_dy_xhat = 0;
          for (int b = 0; b < batch; ++b) {
            const T* x = xn->values.data() +
                         (static_cast<int64_t>(b) * channels + c) * sp;
            const T* dy = n.grad.data() +
                          (static_cast<int64_t>(b) * channels + c) * sp;
            for (int64_t i = 0; i < sp; ++i) {
              sum_dy += dy[i];
              sum_dy_xhat += dy[i] * (x[i] - m) * is;
            }
          }
          bn->grad[c] += static_cast<T>(sum_dy);
          gn->grad[c] += static_cast<T>(sum_dy_xhat);
          if (train) {
            const T k1 = static_cast<T>(sum_dy / per_ch);
            const T k2 = static_cast<T>(sum_dy_xhat / per_ch);
            for (int b = 0; b < batch; ++b) {
              const T* x = xn->values.data() +
                           (static_cast<int64_t>(b) * channels + c) * sp;
              const T* dy = n.grad.data() +
                            (static_cast<int64_t>(b) * channels + c) * sp;
              T* dx = xn->grad.data() +
                      (static_cast<int64_t>(b) * channels + c) * sp;
              for (int64_t i = 0; i < sp; ++i) {
                T xhat = (x[i] - m) * is;
                dx[i] += g * is * (dy[i] - k1 - xhat * k2);
              }
            }
          } else {
            for (int b = 0; b < batch; ++b) {
              const T* dy = n.grad.data() +
                            (static_cast<int64_t>(b) * channels + c) * sp;
              T* dx = xn->grad.data() +
                      (static_cast<int64_t>(b) * channels + c) * sp;
              for (int64_t i = 0; i < sp; ++i) dx[i] += g * is * dy[i];
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> l1_loss(const Tensor<T>& a, const Tensor<T>& b) {
  check(a.shape() == b.shape(), "l1_loss: shape mismatch " +
                                    shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
  double total = 0;
  for (int64_t i = 0; i < a.size(); ++i)
    total += std::abs(static_cast<double>(a.values()[i]) - b.values()[i]);
  const T inv = T(1) / static_cast<T>(a.size());
  auto an = a.node();
  auto bn = b.node();
  using Node = typename Tensor<T>::Node;
  return Tensor<T>::make_op(
      {1}, {static_cast<T>(total) * inv}, {a, b}, [an, bn, inv](Node& n) {
        an->ensure_grad();
        bn->ensure_grad();
        for (size_t i = 0; i < an->values.size(); ++i) {
          T s = an->values[i] > bn->values[i] ? T(1)
                : an->values[i] < bn->values[i] ? T(-1)
                                                : T(0);
          an->grad[i] += n.grad[0] * inv * s;
          bn->grad[i] -= n.grad[0] * inv * s;
        }
      });
}

// Mean of -[t*log(sigmoid(l)) + (1-t)*log(1-sigmoid(l))] over all elements,
// in the overflow-free form max(l,0) - l*t + log(1+exp(-|l|)).
template <class T>
Tensor<T> bce_with_logits(const Tensor<T>& logits, T target) {
  check(target == T(0) || target == T(1),
        "bce_with_logits: target must be 0 or 1");
  double total = 0;
  for (int64_t i = 0; i < logits.size(); ++i) {
    double l = logits.values()[i];
    total += std::max(l, 0.0) - l * target + std::log1p(std::exp(-std::abs(l)));
  }
  const T inv = T(1) / static_cast<T>(logits.size());
  auto ln = logits.node();
  using Node = typename Tensor<T>::Node;
  return Tensor<T>::make_op(
      {1}, {static_cast<T>(total) * inv}, {logits},
      [ln, target, inv](Node& n) {
        ln->ensure_grad();
        for (size_t i = 0; i < ln->values.size(); ++i) {
          double l = ln->values[i];
          double sig = 1.0 / (1.0 + std::exp(-l));
          ln->grad[i] += n.grad[0] * inv * static_cast<T>(sig - target);
        }
      });
}

// Mean cross-entropy of row-wise softmax(logits[B,K]) against integer labels.
template <class T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits,
                                const std::vector<int>& labels) {
  check(logits.shape().size() == 2, "softmax_cross_entropy: expected 2-d "
                                        "logits, got " +
                                        shape_str(logits.shape()));
  const int batch = static_cast<int>(logits.shape()[0]);
  const int k = static_cast<int>(logits.shape()[1]);
  check(static_cast<int>(labels.size()) == batch,
        "softmax_cross_entropy: label count mismatch");
  std::vector<T> probs(logits.values());
  double total = 0;
  for (int i = 0; i < batch; ++i) {
    T* row = probs.data() + static_cast<int64_t>(i) * k;
    T mx = *std::max_element(row, row + k);
    double z = 0;
    for (int j = 0; j < k; ++j) z += std::exp(static_cast<double>(row[j] - mx));
    double logz = std::log(z) + mx;
    check(labels[i] >= 0 && labels[i] < k,
          "softmax_cross_entropy: label out of range");
    total += logz - row[labels[i]];
    for (int j = 0; j < k; ++j)
      row[j] = static_cast<T>(std::exp(row[j] - logz));
  }
  const T inv = T(1) / static_cast<T>(batch);
  auto ln = logits.node();
  using Node = typename Tensor<T>::Node;
  return Tensor<T>::make_op(
      {1}, {static_cast<T>(total) * inv}, {logits},
      [ln, labels, probs, batch, k, inv](Node& n) {
        ln->ensure_grad();
        for (int i = 0; i < batch; ++i)
          for (int j = 0; j < k; ++j) {
            T p = probs[static_cast<int64_t>(i) * k + j];
            T onehot = labels[i] == j ? T(1) : T(0);
            ln->grad[static_cast<int64_t>(i) * k + j] +=
                n.grad[0] * inv * (p - onehot);
          }
      });
}

// Copy of the values with no producer record; cuts the graph.
template <class T>
Tensor<T> detach(const Tensor<T>& a) {
  return Tensor<T>::from(a.shape(), a.values());
}

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace aegan

