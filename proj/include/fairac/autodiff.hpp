#pragma once

// Reverse-mode automatic differentiation over dense matrices.
//
// A Tape records every operation in evaluation order. Parameters live outside
// the tape (in model structs) and are bound either as tracked leaves, whose
// gradients are accumulated into Parameter::grad by backward(), or as frozen
// constants. Backward walks the tape in reverse with a fixed order, so
// gradients are bit-reproducible.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fairac/error.hpp"
#include "fairac/matrix.hpp"

namespace fairac {

struct Parameter {
  Parameter() = default;
  Parameter(std::string n, Matrix v)
      : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()) {}

  std::string name;
  Matrix value;
  Matrix grad;

  void zero_grad() { grad.fill(0.0); }
};

class Tape;

// Handle to a value recorded on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix m) { return push(std::move(m), false, nullptr, {}); }

  Var param(Parameter& p) { return push(p.value, true, &p, {}); }

  // Binds a parameter as a constant: it contributes values but receives no
  // gradient.
  Var frozen(const Parameter& p) { return constant(p.value); }

  Var bind(Parameter& p, bool trainable) {
    return trainable ? param(p) : frozen(p);
  }

  Var detach(Var v) { return constant(value(v)); }

  const Matrix& value(Var v) const { return nodes_.at(v.id).value; }
  Shape shape(Var v) const { return value(v).shape(); }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  double scalar(Var v) const {
    const auto& m = value(v);
    if (m.size() != 1) throw ShapeError("scalar() on " + to_string(m.shape()));
    return m[0];
  }

  // Gradient of the last backward() pass w.r.t. an interior node.
  const Matrix& grad(Var v) const { return nodes_.at(v.id).grad; }

  std::size_t size() const noexcept { return nodes_.size(); }

  // Records an operation. `fn` is only kept if any input requires grad.
  Var record(Matrix value, std::initializer_list<Var> inputs, BackwardFn fn) {
    bool rg = false;
    for (const auto& in : inputs) {
      check_owner(in);
      rg = rg || nodes_[in.id].requires_grad;
    }
    return push(std::move(value), rg, nullptr, rg ? std::move(fn) : BackwardFn{});
  }

  // Adds `g` into the gradient of `v` if it participates in differentiation.
  void accumulate(Var v, const Matrix& g) {
    auto& node = nodes_[v.id];
    if (!node.requires_grad) return;
    auto dst = node.grad.data();
    auto src = g.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
  Matrix& grad_ref(Var v) { return nodes_[v.id].grad; }

  // Reverse pass from a 1x1 loss. Parameter gradients accumulate across
  // calls until the optimizer clears them.
  void backward(Var loss) {
    check_owner(loss);
    if (value(loss).size() != 1) {
      throw ShapeError("backward() needs a scalar loss, got " +
                       to_string(shape(loss)));
    }
    for (auto& n : nodes_) {
      if (n.requires_grad) n.grad = Matrix(n.value.rows(), n.value.cols());
    }
    if (!nodes_[loss.id].requires_grad) return;
    nodes_[loss.id].grad[0] = 1.0;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (!n.requires_grad) continue;
      if (n.backward) n.backward(*this, i);
      if (n.param != nullptr) {
        auto dst = n.param->grad.data();
        auto src = n.grad.data();
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
      }
    }
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Parameter* param = nullptr;
    BackwardFn backward;
  };

  Var push(Matrix value, bool rg, Parameter* p, BackwardFn fn) {
    nodes_.push_back(Node{std::move(value), Matrix{}, rg, p, std::move(fn)});
    return Var{this, nodes_.size() - 1};
  }

  void check_owner(Var v) const {
    if (v.tape != this || v.id >= nodes_.size()) {
      throw Error("variable does not belong to this tape");
    }
  }

  std::vector<Node> nodes_;
};

namespace ops {

namespace detail {
inline Tape& tape_of(Var a) { return *a.tape; }
inline void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
}
template <typename F, typename D>
Var unary(Var x, F f, D df) {
  Tape& t = detail::tape_of(x);
  const Matrix& xv = t.value(x);
  Matrix out(xv.rows(), xv.cols());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  return t.record(std::move(out), {x}, [x, df](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(Var{&tp, self});
    const Matrix& xv2 = tp.value(x);
    const Matrix& yv = tp.value(Var{&tp, self});
    Matrix gx(xv2.rows(), xv2.cols());
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] = g[i] * df(xv2[i], yv[i]);
    tp.accumulate(x, gx);
  });
}
}  // namespace detail

constexpr double kProbClamp = 1e-7;

inline Var matmul(Var a, Var b) {
  Tape& t = detail::tape_of(a);
  Matrix out = fairac::matmul(t.value(a), t.value(b));
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(Var{&tp, self});
    if (tp.requires_grad(a)) tp.accumulate(a, fairac::matmul(g, transpose(tp.value(b))));
    if (tp.requires_grad(b)) tp.accumulate(b, fairac::matmul(transpose(tp.value(a)), g));
  });
}

inline Var add(Var a, Var b) {
  Tape& t = detail::tape_of(a);
  const Matrix& av = t.value(a);
  const Matrix& bv = t.value(b);
  detail::require_same_shape(av, bv, "add");
  Matrix out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, std::size_t self) {
    const Matrix g = tp.grad(Var{&tp, self});
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

inline Var sub(Var a, Var b) {
  Tape& t = detail::tape_of(a);
  const Matrix& av = t.value(a);
  const Matrix& bv = t.value(b);
  detail::require_same_shape(av, bv, "sub");
  Matrix out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, std::size_t self) {
    Matrix g = tp.grad(Var{&tp, self});
    tp.accumulate(a, g);
    for (auto& v : g.data()) v = -v;
    tp.accumulate(b, g);
  });
}

// Element-wise product.
inline Var mul(Var a, Var b) {
  Tape& t = detail::tape_of(a);
  const Matrix& av = t.value(a);
  const Matrix& bv = t.value(b);
  detail::require_same_shape(av, bv, "mul");
  Matrix out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(Var{&tp, self});
    const Matrix& av2 = tp.value(a);
    const Matrix& bv2 = tp.value(b);
    Matrix ga(g.rows(), g.cols()), gb(g.rows(), g.cols());
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] = g[i] * bv2[i];
      gb[i] = g[i] * av2[i];
    }
    tp.accumulate(a, ga);
    tp.accumulate(b, gb);
  });
}

inline Var scale(Var x, double c) {
  return detail::unary(
      x, [c](double v) { return c * v; }, [c](double, double) { return c; });
}

// x (n x d) + bias (1 x d) broadcast over rows.
inline Var add_bias(Var x, Var bias) {
  Tape& t = detail::tape_of(x);
  const Matrix& xv = t.value(x);
  const Matrix& bv = t.value(bias);
  if (bv.rows() != 1 || bv.cols() != xv.cols()) {
    throw ShapeError("add_bias: " + to_string(xv.shape()) + " + " +
                     to_string(bv.shape()));
  }
  Matrix out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += bv[c];
  return t.record(std::move(out), {x, bias}, [x, bias](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(Var{&tp, self});
    tp.accumulate(x, g);
    if (tp.requires_grad(bias)) {
      Matrix gb(1, g.cols());
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gb[c] += g(r, c);
      tp.accumulate(bias, gb);
    }
  });
}

inline Var tanh(Var x) {
  return detail::unary(
      x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

inline Var sigmoid(Var x) {
  return detail::unary(
      x,
      [](double v) {
        return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
      },
      [](double, double y) { return y * (1.0 - y); });
}

inline Var relu(Var x) {
  return detail::unary(
      x, [](double v) { return v > 0 ? v : 0.0; },
      [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

inline Var leaky_relu(Var x, double slope = 0.01) {
  return detail::unary(
      x, [slope](double v) { return v > 0 ? v : slope * v; },
      [slope](double v, double) { return v > 0 ? 1.0 : slope; });
}

inline Var sum(Var x) {
  Tape& t = detail::tape_of(x);
  double s = 0.0;
  for (double v : t.value(x).data()) s += v;
  return t.record(Matrix::scalar(s), {x}, [x](Tape& tp, std::size_t self) {
    const double g = tp.grad(Var{&tp, self})[0];
    const Matrix& xv = tp.value(x);
    tp.accumulate(x, Matrix(xv.rows(), xv.cols(), g));
  });
}

inline Var mean(Var x) {
  const std::size_t n = x.tape->value(x).size();
  if (n == 0) throw ShapeError("mean of empty matrix");
  return scale(sum(x), 1.0 / static_cast<double>(n));
}

// Row-wise softmax, numerically stabilised by the row max.
inline Var softmax_rows(Var x) {
  Tape& t = detail::tape_of(x);
  const Matrix& xv = t.value(x);
  if (xv.cols() == 0) throw ShapeError("softmax over empty row");
  Matrix out(xv.rows(), xv.cols());
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    const auto in = xv.row(r);
    auto o = out.row(r);
    const double mx = *std::max_element(in.begin(), in.end());
    double z = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) z += (o[c] = std::exp(in[c] - mx));
    for (auto& v : o) v /= z;
  }
  return t.record(std::move(out), {x}, [x](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(Var{&tp, self});
    const Matrix& y = tp.value(Var{&tp, self});
    Matrix gx(y.rows(), y.cols());
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < y.cols(); ++c) dot += y(r, c) * g(r, c);
      for (std::size_t c = 0; c < y.cols(); ++c) gx(r, c) = y(r, c) * (g(r, c) - dot);
    }
    tp.accumulate(x, gx);
  });
}

// Mean over rows of the Euclidean norm of each row. The subgradient at a
// zero row is taken as zero.
inline Var row_l2_mean(Var x) {
  Tape& t = detail::tape_of(x);
  const Matrix& xv = t.value(x);
  if (xv.rows() == 0) throw ShapeError("row_l2_mean of empty matrix");
  std::vector<double> norms(xv.rows());
  double s = 0.0;
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    double q = 0.0;
    for (double v : xv.row(r)) q += v * v;
    norms[r] = std::sqrt(q);
    s += norms[r];
  }
  const double n = static_cast<double>(xv.rows());
  return t.record(Matrix::scalar(s / n), {x},
                  [x, norms = std::move(norms), n](Tape& tp, std::size_t self) {
                    const double g = tp.grad(Var{&tp, self})[0];
                    const Matrix& xv2 = tp.value(x);
                    Matrix gx(xv2.rows(), xv2.cols());
                    for (std::size_t r = 0; r < xv2.rows(); ++r) {
                      if (norms[r] == 0.0) continue;
                      const double k = g / (n * norms[r]);
                      for (std::size_t c = 0; c < xv2.cols(); ++c) gx(r, c) = k * xv2(r, c);
                    }
                    tp.accumulate(x, gx);
                  });
}

// Mean binary cross-entropy between probabilities `p` and constant targets
// of the same shape. Probabilities are clamped to [1e-7, 1 - 1e-7]; the
// gradient is zero where the clamp is active.
inline Var bce_mean(Var p, const Matrix& targets) {
  Tape& t = detail::tape_of(p);
  const Matrix& pv = t.value(p);
  detail::require_same_shape(pv, targets, "bce_mean");
  if (pv.size() == 0) throw ShapeError("bce_mean of empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double q = std::clamp(pv[i], kProbClamp, 1.0 - kProbClamp);
    s -= targets[i] * std::log(q) + (1.0 - targets[i]) * std::log(1.0 - q);
  }
  const double n = static_cast<double>(pv.size());
  return t.record(Matrix::scalar(s / n), {p}, [p, targets, n](Tape& tp, std::size_t self) {
    const double g = tp.grad(Var{&tp, self})[0];
    const Matrix& pv2 = tp.value(p);
    Matrix gp(pv2.rows(), pv2.cols());
    for (std::size_t i = 0; i < pv2.size(); ++i) {
      const double q = pv2[i];
      if (q < kProbClamp || q > 1.0 - kProbClamp) continue;
      gp[i] = -g / n * (targets[i] / q - (1.0 - targets[i]) / (1.0 - q));
    }
    tp.accumulate(p, gp);
  });
}

inline Var gather_rows(Var x, std::vector<std::size_t> ids) {
  Tape& t = detail::tape_of(x);
  const Matrix& xv = t.value(x);
  for (auto id : ids) {
    if (id >= xv.rows()) throw ShapeError("gather_rows index out of range");
  }
  Matrix out = fairac::gather_rows(xv, ids);
  return t.record(std::move(out), {x}, [x, ids = std::move(ids)](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(Var{&tp, self});
    Matrix& gx = tp.grad_ref(x);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      auto dst = gx.row(ids[i]);
      const auto src = g.row(i);
      for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
    }
  });
}

// Stacks `a` on top of `b`.
inline Var concat_rows(Var a, Var b) {
  Tape& t = detail::tape_of(a);
  const Matrix& av = t.value(a);
  const Matrix& bv = t.value(b);
  if (av.cols() != bv.cols()) {
    throw ShapeError("concat_rows: " + to_string(av.shape()) + " / " + to_string(bv.shape()));
  }
  std::vector<double> data(av.data().begin(), av.data().end());
  data.insert(data.end(), bv.data().begin(), bv.data().end());
  const std::size_t split = av.size();
  return t.record(Matrix(av.rows() + bv.rows(), av.cols(), std::move(data)), {a, b},
                  [a, b, split](Tape& tp, std::size_t self) {
                    const Matrix& g = tp.grad(Var{&tp, self});
                    const auto& av2 = tp.value(a);
                    const auto& bv2 = tp.value(b);
                    const auto gd = g.data();
                    tp.accumulate(a, Matrix(av2.rows(), av2.cols(),
                                            std::vector<double>(gd.begin(), gd.begin() + split)));
                    tp.accumulate(b, Matrix(bv2.rows(), bv2.cols(),
                                            std::vector<double>(gd.begin() + split, gd.end())));
                  });
}

// out[i] = <a_i, b_i> for row pairs; result is n x 1.
inline Var rowwise_dot(Var a, Var b) {
  Tape& t = detail::tape_of(a);
  const Matrix& av = t.value(a);
  const Matrix& bv = t.value(b);
  detail::require_same_shape(av, bv, "rowwise_dot");
  Matrix out(av.rows(), 1);
  for (std::size_t r = 0; r < av.rows(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < av.cols(); ++c) s += av(r, c) * bv(r, c);
    out[r] = s;
  }
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(Var{&tp, self});
    const Matrix& av2 = tp.value(a);
    const Matrix& bv2 = tp.value(b);
    Matrix ga(av2.rows(), av2.cols()), gb(av2.rows(), av2.cols());
    for (std::size_t r = 0; r < av2.rows(); ++r)
      for (std::size_t c = 0; c < av2.cols(); ++c) {
        ga(r, c) = g[r] * bv2(r, c);
        gb(r, c) = g[r] * av2(r, c);
      }
    tp.accumulate(a, ga);
    tp.accumulate(b, gb);
  });
}

// Softmax of an E x 1 column within consecutive segments
// [offsets[s], offsets[s+1]). Every segment must be non-empty.
inline Var segment_softmax(Var scores, std::vector<std::size_t> offsets) {
  Tape& t = detail::tape_of(scores);
  const Matrix& sv = t.value(scores);
  if (sv.cols() != 1 || offsets.empty() || offsets.back() != sv.rows()) {
    throw ShapeError("segment_softmax: offsets do not cover scores");
  }
  Matrix out(sv.rows(), 1);
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
    const std::size_t lo = offsets[s], hi = offsets[s + 1];
    if (lo >= hi) throw ShapeError("softmax over empty row");
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t e = lo; e < hi; ++e) mx = std::max(mx, sv[e]);
    double z = 0.0;
    for (std::size_t e = lo; e < hi; ++e) z += (out[e] = std::exp(sv[e] - mx));
    for (std::size_t e = lo; e < hi; ++e) out[e] /= z;
  }
  return t.record(std::move(out), {scores},
                  [scores, offsets = std::move(offsets)](Tape& tp, std::size_t self) {
                    const Matrix& g = tp.grad(Var{&tp, self});
                    const Matrix& y = tp.value(Var{&tp, self});
                    Matrix gx(y.rows(), 1);
                    for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
                      double dot = 0.0;
                      for (std::size_t e = offsets[s]; e < offsets[s + 1]; ++e) dot += y[e] * g[e];
                      for (std::size_t e = offsets[s]; e < offsets[s + 1]; ++e)
                        gx[e] = y[e] * (g[e] - dot);
                    }
                    tp.accumulate(scores, gx);
                  });
}

// out[s] = sum_{e in segment s} weights[e] * values[e]; weights E x 1,
// values E x d, result (#segments) x d.
inline Var segment_weighted_sum(Var weights, Var values, std::vector<std::size_t> offsets) {
  Tape& t = detail::tape_of(weights);
  const Matrix& wv = t.value(weights);
  const Matrix& vv = t.value(values);
  if (wv.cols() != 1 || wv.rows() != vv.rows() || offsets.empty() ||
      offsets.back() != vv.rows()) {
    throw ShapeError("segment_weighted_sum: inconsistent shapes");
  }
  const std::size_t segs = offsets.size() - 1;
  Matrix out(segs, vv.cols());
  for (std::size_t s = 0; s < segs; ++s) {
    auto o = out.row(s);
    for (std::size_t e = offsets[s]; e < offsets[s + 1]; ++e) {
      const auto v = vv.row(e);
      for (std::size_t c = 0; c < o.size(); ++c) o[c] += wv[e] * v[c];
    }
  }
  return t.record(std::move(out), {weights, values},
                  [weights, values, offsets = std::move(offsets)](Tape& tp, std::size_t self) {
                    const Matrix& g = tp.grad(Var{&tp, self});
                    const Matrix& wv2 = tp.value(weights);
                    const Matrix& vv2 = tp.value(values);
                    Matrix gw(wv2.rows(), 1), gv(vv2.rows(), vv2.cols());
                    for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
                      const auto gs = g.row(s);
                      for (std::size_t e = offsets[s]; e < offsets[s + 1]; ++e) {
                        const auto v = vv2.row(e);
                        double dot = 0.0;
                        for (std::size_t c = 0; c < v.size(); ++c) dot += gs[c] * v[c];
                        gw[e] = dot;
                        auto gvr = gv.row(e);
                        for (std::size_t c = 0; c < v.size(); ++c) gvr[c] = wv2[e] * gs[c];
                      }
                    }
                    tp.accumulate(weights, gw);
                    tp.accumulate(values, gv);
                  });
}

// Constant sparse matrix times a tracked dense matrix.
inline Var spmm(const SparseMatrix& a, Var x) {
  Tape& t = detail::tape_of(x);
  Matrix out = fairac::spmm(a, t.value(x));
  return t.record(std::move(out), {x}, [at = a.transposed(), x](Tape& tp, std::size_t self) {
    tp.accumulate(x, fairac::spmm(at, tp.grad(Var{&tp, self})));
  });
}

// Element-wise product with a constant mask (dropout).
inline Var mask(Var x, Matrix m) {
  Tape& t = detail::tape_of(x);
  const Matrix& xv = t.value(x);
  detail::require_same_shape(xv, m, "mask");
  Matrix out = xv;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= m[i];
  return t.record(std::move(out), {x}, [x, m = std::move(m)](Tape& tp, std::size_t self) {
    Matrix g = tp.grad(Var{&tp, self});
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= m[i];
    tp.accumulate(x, g);
  });
}

}  // namespace ops

// Dense affine layer y = x W + b.
struct Linear {
  Parameter weight;
  Parameter bias;

  Linear() = default;
  Linear(std::string name, Matrix w, Matrix b)
      : weight(name + ".weight", std::move(w)), bias(name + ".bias", std::move(b)) {}

  std::size_t in_dim() const { return weight.value.rows(); }
  std::size_t out_dim() const { return weight.value.cols(); }

  Var forward(Tape& t, Var x, bool trainable) {
    if (t.shape(x).cols != in_dim()) {
      throw ShapeError(weight.name + ": input " + to_string(t.shape(x)) +
                       " does not match in_dim " + std::to_string(in_dim()));
    }
    return ops::add_bias(ops::matmul(x, t.bind(weight, trainable)), t.bind(bias, trainable));
  }

  Matrix apply(const Matrix& x) const {
    if (x.cols() != in_dim()) throw ShapeError(weight.name + ": input dimension mismatch");
    Matrix out = fairac::matmul(x, weight.value);
    for (std::size_t r = 0; r < out.rows(); ++r)
      for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += bias.value[c];
    return out;
  }

  std::vector<Parameter*> parameters() { return {&weight, &bias}; }
};

}  // namespace fairac
