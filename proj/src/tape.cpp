#include "trama/tape.hpp"

#include <cmath>
#include <memory>
#include <string>

#include "trama/errors.hpp"

namespace trama::nn {

template <typename T>
Var Tape<T>::constant(Matrix<T> value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
Var Tape<T>::param(ParamStore<T>& store, ParamId id) {
  Node n;
  n.ref = &store.value(id);
  if (!store.frozen()) {
    n.requires_grad = true;
    n.sink_store = &store;
    n.sink_id = id;
  }
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
const Matrix<T>& Tape<T>::value(Var v) const {
  const Node& n = nodes_.at(v.id);
  return n.ref ? *n.ref : n.value;
}

template <typename T>
Var Tape<T>::push(Matrix<T> value, std::span<const Var> inputs, Backward backward) {
  Node n;
  n.value = std::move(value);
  for (Var in : inputs) {
    if (nodes_.at(in.id).requires_grad) {
      n.requires_grad = true;
      break;
    }
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
Var Tape<T>::push(Matrix<T> value, std::initializer_list<Var> inputs, Backward backward) {
  return push(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
}

template <typename T>
void Tape<T>::accumulate(Var v, const Matrix<T>& g) {
  Node& n = nodes_.at(v.id);
  if (!n.requires_grad) return;
  if (n.sink_store) {
    n.sink_store->at(n.sink_id).grad += g;
    n.sink_store->mark_grads_populated();
    return;
  }
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

template <typename T>
void Tape<T>::backward(Var loss) {
  const Matrix<T>& lv = value(loss);
  if (lv.rows() != 1 || lv.cols() != 1) throw PreconditionError("backward: loss must be a 1x1 node");
  if (!nodes_.at(loss.id).requires_grad) return;
  accumulate(loss, Matrix<T>::Ones(1, 1));
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.size() == 0) continue;
    n.backward(*this, Var{i}, n.grad);
  }
}

template <typename T>
std::vector<int> Tape<T>::discrete(std::vector<int> choice) {
  if (!frozen_) return choice;
  if (frozen_->mode == FrozenDecisions<T>::Mode::kRecord) {
    frozen_->choices.push_back(choice);
    return choice;
  }
  if (frozen_->choice_cursor >= frozen_->choices.size()) {
    throw PreconditionError("replay: more discrete choices than were recorded");
  }
  return frozen_->choices[frozen_->choice_cursor++];
}

template <typename T>
Matrix<T> Tape<T>::frozen_value(Matrix<T> computed) {
  if (!frozen_) return computed;
  if (frozen_->mode == FrozenDecisions<T>::Mode::kRecord) {
    frozen_->values.push_back(computed);
    return computed;
  }
  if (frozen_->value_cursor >= frozen_->values.size()) {
    throw PreconditionError("replay: more stop-gradient values than were recorded");
  }
  return frozen_->values[frozen_->value_cursor++];
}

namespace {

void check_same_shape(const auto& a, const auto& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ConfigError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                      std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                      std::to_string(b.cols()));
  }
}

}  // namespace

template <typename T>
Var matmul(Tape<T>& t, Var a, Var b) {
  const auto& av = t.value(a);
  const auto& bv = t.value(b);
  if (av.cols() != bv.rows()) throw ConfigError("matmul: inner dimension mismatch");
  Matrix<T> y = av * bv;
  return t.push(std::move(y), {a, b}, [a, b](Tape<T>& tp, Var, const Matrix<T>& g) {
    if (tp.requires_grad(a)) tp.accumulate(a, g * tp.value(b).transpose());
    if (tp.requires_grad(b)) tp.accumulate(b, tp.value(a).transpose() * g);
  });
}

template <typename T>
Var affine(Tape<T>& t, Var x, Var w, Var b) {
  const auto& xv = t.value(x);
  const auto& wv = t.value(w);
  const auto& bv = t.value(b);
  if (xv.cols() != wv.rows() || bv.rows() != 1 || bv.cols() != wv.cols()) {
    throw ConfigError("affine: expected input width " + std::to_string(wv.rows()) + ", got " +
                      std::to_string(xv.cols()));
  }
  Matrix<T> y = xv * wv;
  y.rowwise() += bv.row(0);
  return t.push(std::move(y), {x, w, b}, [x, w, b](Tape<T>& tp, Var, const Matrix<T>& g) {
    if (tp.requires_grad(x)) tp.accumulate(x, g * tp.value(w).transpose());
    if (tp.requires_grad(w)) tp.accumulate(w, tp.value(x).transpose() * g);
    if (tp.requires_grad(b)) tp.accumulate(b, g.colwise().sum());
  });
}

template <typename T>
Var add(Tape<T>& t, Var a, Var b) {
  check_same_shape(t.value(a), t.value(b), "add");
  Matrix<T> y = t.value(a) + t.value(b);
  return t.push(std::move(y), {a, b}, [a, b](Tape<T>& tp, Var, const Matrix<T>& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

template <typename T>
Var sub(Tape<T>& t, Var a, Var b) {
  check_same_shape(t.value(a), t.value(b), "sub");
  Matrix<T> y = t.value(a) - t.value(b);
  return t.push(std::move(y), {a, b}, [a, b](Tape<T>& tp, Var, const Matrix<T>& g) {
    tp.accumulate(a, g);
    if (tp.requires_grad(b)) tp.accumulate(b, -g);
  });
}

template <typename T>
Var mul(Tape<T>& t, Var a, Var b) {
  check_same_shape(t.value(a), t.value(b), "mul");
  Matrix<T> y = t.value(a).cwiseProduct(t.value(b));
  return t.push(std::move(y), {a, b}, [a, b](Tape<T>& tp, Var, const Matrix<T>& g) {
    if (tp.requires_grad(a)) tp.accumulate(a, g.cwiseProduct(tp.value(b)));
    if (tp.requires_grad(b)) tp.accumulate(b, g.cwiseProduct(tp.value(a)));
  });
}

template <typename T>
Var scale(Tape<T>& t, Var a, T s) {
  Matrix<T> y = t.value(a) * s;
  return t.push(std::move(y), {a}, [a, s](Tape<T>& tp, Var, const Matrix<T>& g) { tp.accumulate(a, g * s); });
}

template <typename T>
Var activate(Tape<T>& t, Var a, Activation act) {
  const auto& x = t.value(a);
  switch (act) {
    case Activation::kIdentity:
      return a;
    case Activation::kRelu: {
      Matrix<T> y = x.cwiseMax(T(0));
      return t.push(std::move(y), {a}, [a](Tape<T>& tp, Var self, const Matrix<T>& g) {
        const auto& yv = tp.value(self);
        tp.accumulate(a, (yv.array() > T(0)).select(g, T(0)));
      });
    }
    case Activation::kTanh: {
      Matrix<T> y = x.array().tanh();
      return t.push(std::move(y), {a}, [a](Tape<T>& tp, Var self, const Matrix<T>& g) {
        const auto& yv = tp.value(self);
        tp.accumulate(a, (g.array() * (T(1) - yv.array().square())).matrix());
      });
    }
    case Activation::kSigmoid: {
      Matrix<T> y = (T(1) + (-x.array()).exp()).inverse();
      return t.push(std::move(y), {a}, [a](Tape<T>& tp, Var self, const Matrix<T>& g) {
        const auto& yv = tp.value(self);
        tp.accumulate(a, (g.array() * yv.array() * (T(1) - yv.array())).matrix());
      });
    }
  }
  throw ConfigError("activate: unknown activation");
}

template <typename T>
Var elu(Tape<T>& t, Var a) {
  const auto& x = t.value(a);
  Matrix<T> y = (x.array() > T(0)).select(x, x.array().exp() - T(1));
  return t.push(std::move(y), {a}, [a](Tape<T>& tp, Var self, const Matrix<T>& g) {
    const auto& xv = tp.value(a);
    const auto& yv = tp.value(self);
    tp.accumulate(a, (xv.array() > T(0)).select(g, (g.array() * (yv.array() + T(1))).matrix()));
  });
}

template <typename T>
Var abs(Tape<T>& t, Var a) {
  Matrix<T> y = t.value(a).cwiseAbs();
  return t.push(std::move(y), {a}, [a](Tape<T>& tp, Var, const Matrix<T>& g) {
    const auto& xv = tp.value(a);
    Matrix<T> s = xv.unaryExpr([](T v) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
    tp.accumulate(a, g.cwiseProduct(s));
  });
}

template <typename T>
Var concat_cols(Tape<T>& t, std::span<const Var> parts) {
  if (parts.empty()) throw ConfigError("concat_cols: no inputs");
  const auto rows = t.value(parts[0]).rows();
  Eigen::Index cols = 0;
  for (Var p : parts) {
    if (t.value(p).rows() != rows) throw ConfigError("concat_cols: row mismatch");
    cols += t.value(p).cols();
  }
  Matrix<T> y(rows, cols);
  Eigen::Index c = 0;
  for (Var p : parts) {
    const auto& v = t.value(p);
    y.middleCols(c, v.cols()) = v;
    c += v.cols();
  }
  std::vector<Var> ins(parts.begin(), parts.end());
  return t.push(std::move(y), parts, [ins](Tape<T>& tp, Var, const Matrix<T>& g) {
    Eigen::Index off = 0;
    for (Var p : ins) {
      const auto w = tp.value(p).cols();
      if (tp.requires_grad(p)) tp.accumulate(p, g.middleCols(off, w));
      off += w;
    }
  });
}

template <typename T>
Var slice_cols(Tape<T>& t, Var a, int start, int count) {
  const auto& x = t.value(a);
  if (start < 0 || count < 0 || start + count > x.cols()) throw ConfigError("slice_cols: out of range");
  Matrix<T> y = x.middleCols(start, count);
  return t.push(std::move(y), {a}, [a, start, count](Tape<T>& tp, Var, const Matrix<T>& g) {
    const auto& xv = tp.value(a);
    Matrix<T> full = Matrix<T>::Zero(xv.rows(), xv.cols());
    full.middleCols(start, count) = g;
    tp.accumulate(a, full);
  });
}

template <typename T>
Var reshape(Tape<T>& t, Var a, int rows, int cols) {
  const auto& x = t.value(a);
  if (static_cast<Eigen::Index>(rows) * cols != x.size()) throw ConfigError("reshape: size mismatch");
  Matrix<T> y = Eigen::Map<const Matrix<T>>(x.data(), rows, cols);
  return t.push(std::move(y), {a}, [a](Tape<T>& tp, Var, const Matrix<T>& g) {
    const auto& xv = tp.value(a);
    tp.accumulate(a, Eigen::Map<const Matrix<T>>(g.data(), xv.rows(), xv.cols()));
  });
}

template <typename T>
Var gather_rows(Tape<T>& t, Var table, std::vector<int> idx) {
  const auto& tv = t.value(table);
  Matrix<T> y(static_cast<Eigen::Index>(idx.size()), tv.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || idx[r] >= tv.rows()) throw PreconditionError("gather_rows: index out of range");
    y.row(static_cast<Eigen::Index>(r)) = tv.row(idx[r]);
  }
  return t.push(std::move(y), {table}, [table, idx = std::move(idx)](Tape<T>& tp, Var, const Matrix<T>& g) {
    const auto& tv2 = tp.value(table);
    Matrix<T> d = Matrix<T>::Zero(tv2.rows(), tv2.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) d.row(idx[r]) += g.row(static_cast<Eigen::Index>(r));
    tp.accumulate(table, d);
  });
}

template <typename T>
Var gather_cols(Tape<T>& t, Var a, std::vector<int> idx) {
  const auto& x = t.value(a);
  if (static_cast<Eigen::Index>(idx.size()) != x.rows()) throw ConfigError("gather_cols: one index per row");
  Matrix<T> y(x.rows(), 1);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    if (idx[r] < 0 || idx[r] >= x.cols()) throw PreconditionError("gather_cols: index out of range");
    y(r, 0) = x(r, idx[r]);
  }
  return t.push(std::move(y), {a}, [a, idx = std::move(idx)](Tape<T>& tp, Var, const Matrix<T>& g) {
    const auto& xv = tp.value(a);
    Matrix<T> d = Matrix<T>::Zero(xv.rows(), xv.cols());
    for (Eigen::Index r = 0; r < xv.rows(); ++r) d(r, idx[r]) = g(r, 0);
    tp.accumulate(a, d);
  });
}

template <typename T>
Var rowwise_bilinear(Tape<T>& t, Var q, Var w) {
  const auto& qv = t.value(q);
  const auto& wv = t.value(w);
  const auto n = qv.cols();
  if (wv.rows() != qv.rows() || n == 0 || wv.cols() % n != 0) throw ConfigError("rowwise_bilinear: shape mismatch");
  const auto h = wv.cols() / n;
  Matrix<T> y = Matrix<T>::Zero(qv.rows(), h);
  for (Eigen::Index r = 0; r < qv.rows(); ++r) {
    for (Eigen::Index i = 0; i < n; ++i) y.row(r) += qv(r, i) * wv.block(r, i * h, 1, h);
  }
  return t.push(std::move(y), {q, w}, [q, w, n, h](Tape<T>& tp, Var, const Matrix<T>& g) {
    const auto& qv2 = tp.value(q);
    const auto& wv2 = tp.value(w);
    if (tp.requires_grad(q)) {
      Matrix<T> dq(qv2.rows(), n);
      for (Eigen::Index r = 0; r < qv2.rows(); ++r) {
        for (Eigen::Index i = 0; i < n; ++i) dq(r, i) = (wv2.block(r, i * h, 1, h).array() * g.row(r).array()).sum();
      }
      tp.accumulate(q, dq);
    }
    if (tp.requires_grad(w)) {
      Matrix<T> dw(wv2.rows(), wv2.cols());
      for (Eigen::Index r = 0; r < qv2.rows(); ++r) {
        for (Eigen::Index i = 0; i < n; ++i) dw.block(r, i * h, 1, h) = qv2(r, i) * g.row(r);
      }
      tp.accumulate(w, dw);
    }
  });
}

template <typename T>
Var row_sum(Tape<T>& t, Var a) {
  Matrix<T> y = t.value(a).rowwise().sum();
  return t.push(std::move(y), {a}, [a](Tape<T>& tp, Var, const Matrix<T>& g) {
    const auto& xv = tp.value(a);
    tp.accumulate(a, g.col(0).replicate(1, xv.cols()));
  });
}

template <typename T>
Var sum(Tape<T>& t, Var a) {
  Matrix<T> y(1, 1);
  y(0, 0) = t.value(a).sum();
  return t.push(std::move(y), {a}, [a](Tape<T>& tp, Var, const Matrix<T>& g) {
    const auto& xv = tp.value(a);
    tp.accumulate(a, Matrix<T>::Constant(xv.rows(), xv.cols(), g(0, 0)));
  });
}

template <typename T>
Var weighted_sum_sq(Tape<T>& t, Var a, std::vector<T> row_weights) {
  const auto& x = t.value(a);
  if (static_cast<Eigen::Index>(row_weights.size()) != x.rows()) throw ConfigError("weighted_sum_sq: one weight per row");
  Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> w(row_weights.data(), x.rows());
  Matrix<T> y(1, 1);
  y(0, 0) = (x.rowwise().squaredNorm().array() * w.array()).sum();
  return t.push(std::move(y), {a}, [a, row_weights = std::move(row_weights)](Tape<T>& tp, Var, const Matrix<T>& g) {
    const auto& xv = tp.value(a);
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> wv(row_weights.data(), xv.rows());
    tp.accumulate(a, (T(2) * g(0, 0)) * (wv.asDiagonal() * xv));
  });
}

template <typename T>
Matrix<T> softmax_rows(const Matrix<T>& logits) {
  Matrix<T> p = logits;
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    const T m = p.row(r).maxCoeff();
    p.row(r) = (p.row(r).array() - m).exp();
    p.row(r) /= p.row(r).sum();
  }
  return p;
}

template <typename T>
Var softmax_cross_entropy(Tape<T>& t, Var logits, std::vector<int> labels, std::vector<T> row_weights) {
  const auto& z = t.value(logits);
  if (static_cast<Eigen::Index>(labels.size()) != z.rows() ||
      static_cast<Eigen::Index>(row_weights.size()) != z.rows()) {
    throw ConfigError("softmax_cross_entropy: one label and weight per row");
  }
  Matrix<T> y = Matrix<T>::Zero(1, 1);
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    if (labels[r] < 0 || labels[r] >= z.cols()) throw PreconditionError("softmax_cross_entropy: label out of range");
    if (row_weights[r] == T(0)) continue;
    const T m = z.row(r).maxCoeff();
    const T lse = m + std::log((z.row(r).array() - m).exp().sum());
    y(0, 0) += row_weights[r] * (lse - z(r, labels[r]));
  }
  return t.push(std::move(y), {logits},
                [logits, labels = std::move(labels), row_weights = std::move(row_weights)](
                    Tape<T>& tp, Var, const Matrix<T>& g) {
                  Matrix<T> d = softmax_rows(tp.value(logits));
                  for (Eigen::Index r = 0; r < d.rows(); ++r) {
                    d(r, labels[r]) -= T(1);
                    d.row(r) *= row_weights[r] * g(0, 0);
                  }
                  tp.accumulate(logits, d);
                });
}

template <typename T>
Var stop_gradient(Tape<T>& t, Var a) {
  return t.constant(t.frozen_value(t.value(a)));
}

template <typename T>
Var gru(Tape<T>& t, Var x, Var h, Var wx, Var wh, Var bx, Var bh) {
  const auto& xv = t.value(x);
  const auto& hv = t.value(h);
  const auto& wxv = t.value(wx);
  const auto& whv = t.value(wh);
  const auto H = hv.cols();
  if (wxv.rows() != xv.cols() || wxv.cols() != 3 * H || whv.rows() != H || whv.cols() != 3 * H ||
      xv.rows() != hv.rows()) {
    throw ConfigError("gru: shape mismatch (input width " + std::to_string(xv.cols()) + ", hidden " +
                      std::to_string(H) + ")");
  }
  Matrix<T> gx = xv * wxv;
  gx.rowwise() += t.value(bx).row(0);
  Matrix<T> gh = hv * whv;
  gh.rowwise() += t.value(bh).row(0);
  // Saved activations: [r | z | n | gh_n].
  auto saved = std::make_shared<Matrix<T>>(xv.rows(), 4 * H);
  auto& s = *saved;
  s.middleCols(0, 2 * H) =
      (T(1) + (-(gx.middleCols(0, 2 * H) + gh.middleCols(0, 2 * H)).array()).exp()).inverse().matrix();
  s.middleCols(3 * H, H) = gh.middleCols(2 * H, H);
  s.middleCols(2 * H, H) =
      (gx.middleCols(2 * H, H).array() + s.middleCols(0, H).array() * gh.middleCols(2 * H, H).array()).tanh().matrix();
  Matrix<T> y = ((T(1) - s.middleCols(H, H).array()) * s.middleCols(2 * H, H).array() +
                 s.middleCols(H, H).array() * hv.array())
                    .matrix();
  return t.push(std::move(y), {x, h, wx, wh, bx, bh},
                [x, h, wx, wh, bx, bh, H, saved](Tape<T>& tp, Var, const Matrix<T>& g) {
                  const auto& sv = *saved;
                  const auto r = sv.middleCols(0, H).array();
                  const auto z = sv.middleCols(H, H).array();
                  const auto n = sv.middleCols(2 * H, H).array();
                  const auto ghn = sv.middleCols(3 * H, H).array();
                  const auto& hv2 = tp.value(h);
                  const auto ga = g.array();
                  Matrix<T> dgx(g.rows(), 3 * H);
                  Matrix<T> dgh(g.rows(), 3 * H);
                  const auto dn_pre = (ga * (T(1) - z) * (T(1) - n.square())).eval();
                  const auto dz_pre = (ga * (hv2.array() - n) * z * (T(1) - z)).eval();
                  const auto dr_pre = (dn_pre * ghn * r * (T(1) - r)).eval();
                  dgx.middleCols(0, H) = dr_pre.matrix();
                  dgx.middleCols(H, H) = dz_pre.matrix();
                  dgx.middleCols(2 * H, H) = dn_pre.matrix();
                  dgh.middleCols(0, 2 * H) = dgx.middleCols(0, 2 * H);
                  dgh.middleCols(2 * H, H) = (dn_pre * r).matrix();
                  if (tp.requires_grad(x)) tp.accumulate(x, dgx * tp.value(wx).transpose());
                  if (tp.requires_grad(h)) {
                    Matrix<T> dh = dgh * tp.value(wh).transpose();
                    dh.array() += ga * z;
                    tp.accumulate(h, dh);
                  }
                  if (tp.requires_grad(wx)) tp.accumulate(wx, tp.value(x).transpose() * dgx);
                  if (tp.requires_grad(wh)) tp.accumulate(wh, hv2.transpose() * dgh);
                  if (tp.requires_grad(bx)) tp.accumulate(bx, dgx.colwise().sum());
                  if (tp.requires_grad(bh)) tp.accumulate(bh, dgh.colwise().sum());
                });
}

template <typename T>
std::vector<int> masked_argmax_rows(const Matrix<T>& values, const Matrix<T>* mask) {
  std::vector<int> out(static_cast<std::size_t>(values.rows()), 0);
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    int best = -1;
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      if (mask && (*mask)(r, c) == T(0)) continue;
      if (best < 0 || values(r, c) > values(r, best)) best = static_cast<int>(c);
    }
    out[static_cast<std::size_t>(r)] = best < 0 ? 0 : best;
  }
  return out;
}

template <typename T>
Matrix<T> one_hot_rows(std::span<const int> idx, int width) {
  Matrix<T> m = Matrix<T>::Zero(static_cast<Eigen::Index>(idx.size()), width);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || idx[r] >= width) throw PreconditionError("one_hot_rows: index out of range");
    m(static_cast<Eigen::Index>(r), idx[r]) = T(1);
  }
  return m;
}

#define TRAMA_INSTANTIATE_OPS(T)                                                                     \
  template class Tape<T>;                                                                            \
  template Var matmul<T>(Tape<T>&, Var, Var);                                                        \
  template Var affine<T>(Tape<T>&, Var, Var, Var);                                                   \
  template Var add<T>(Tape<T>&, Var, Var);                                                           \
  template Var sub<T>(Tape<T>&, Var, Var);                                                           \
  template Var mul<T>(Tape<T>&, Var, Var);                                                           \
  template Var scale<T>(Tape<T>&, Var, T);                                                           \
  template Var activate<T>(Tape<T>&, Var, Activation);                                               \
  template Var elu<T>(Tape<T>&, Var);                                                                \
  template Var abs<T>(Tape<T>&, Var);                                                                \
  template Var concat_cols<T>(Tape<T>&, std::span<const Var>);                                       \
  template Var slice_cols<T>(Tape<T>&, Var, int, int);                                               \
  template Var reshape<T>(Tape<T>&, Var, int, int);                                                  \
  template Var gather_rows<T>(Tape<T>&, Var, std::vector<int>);                                      \
  template Var gather_cols<T>(Tape<T>&, Var, std::vector<int>);                                      \
  template Var rowwise_bilinear<T>(Tape<T>&, Var, Var);                                              \
  template Var row_sum<T>(Tape<T>&, Var);                                                            \
  template Var sum<T>(Tape<T>&, Var);                                                                \
  template Var weighted_sum_sq<T>(Tape<T>&, Var, std::vector<T>);                                    \
  template Var softmax_cross_entropy<T>(Tape<T>&, Var, std::vector<int>, std::vector<T>);            \
  template Var stop_gradient<T>(Tape<T>&, Var);                                                      \
  template Var gru<T>(Tape<T>&, Var, Var, Var, Var, Var, Var);                                       \
  template Matrix<T> softmax_rows<T>(const Matrix<T>&);                                              \
  template std::vector<int> masked_argmax_rows<T>(const Matrix<T>&, const Matrix<T>*);               \
  template Matrix<T> one_hot_rows<T>(std::span<const int>, int);

TRAMA_INSTANTIATE_OPS(float)
TRAMA_INSTANTIATE_OPS(double)

}  // namespace trama::nn
