#pragma once

#include <functional>
#include <span>
#include <vector>

#include "trama/param_store.hpp"

namespace trama::nn {

/// Handle to a node recorded on a Tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Values of stop-gradient nodes and discrete choices (argmin, argmax) taken
/// during one evaluation. Recording them on an analytic pass and replaying
/// them on perturbed passes turns a loss with stop-gradients into the
/// surrogate whose true gradient is the straight-through gradient, which is
/// what finite differences must be compared against.
template <typename T>
struct FrozenDecisions {
  enum class Mode { kRecord, kReplay };
  Mode mode = Mode::kRecord;
  std::vector<Matrix<T>> values;
  std::vector<std::vector<int>> choices;
  std::size_t value_cursor = 0;
  std::size_t choice_cursor = 0;

  void start_replay() {
    mode = Mode::kReplay;
    value_cursor = 0;
    choice_cursor = 0;
  }
};

/// Records primitive ops in topological order during a forward pass and
/// replays them in exact reverse order for gradients.
template <typename T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, Var self, const Matrix<T>& grad_out)>;

  explicit Tape(FrozenDecisions<T>* frozen = nullptr) : frozen_(frozen) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix<T> value);
  /// Leaf bound to a stored parameter. Gradients flow into the store unless it is frozen.
  Var param(ParamStore<T>& store, ParamId id);

  const Matrix<T>& value(Var v) const;
  /// Accumulated gradient; empty when nothing reached the node.
  const Matrix<T>& grad(Var v) const { return nodes_.at(v.id).grad; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Seeds d(loss)/d(loss) = 1 on a 1x1 node and propagates to every input.
  void backward(Var loss);

  /// Passes a discrete choice through, or returns the recorded one when replaying.
  std::vector<int> discrete(std::vector<int> choice);
  /// Value of a stop-gradient node: `computed`, or the recorded value when replaying.
  Matrix<T> frozen_value(Matrix<T> computed);

  // Op-author interface.
  Var push(Matrix<T> value, std::initializer_list<Var> inputs, Backward backward);
  Var push(Matrix<T> value, std::span<const Var> inputs, Backward backward);
  void accumulate(Var v, const Matrix<T>& g);

 private:
  struct Node {
    Matrix<T> value;
    const Matrix<T>* ref = nullptr;
    Matrix<T> grad;
    ParamStore<T>* sink_store = nullptr;
    ParamId sink_id = 0;
    bool requires_grad = false;
    Backward backward;
  };
  std::vector<Node> nodes_;
  FrozenDecisions<T>* frozen_;
};

enum class Activation { kIdentity, kRelu, kTanh, kSigmoid };

// Fixed op set. Shapes are (rows = batch, cols = features).
template <typename T> Var matmul(Tape<T>& t, Var a, Var b);
/// x * W + b, with b a 1 x out row broadcast over rows.
template <typename T> Var affine(Tape<T>& t, Var x, Var w, Var b);
template <typename T> Var add(Tape<T>& t, Var a, Var b);
template <typename T> Var sub(Tape<T>& t, Var a, Var b);
template <typename T> Var mul(Tape<T>& t, Var a, Var b);
template <typename T> Var scale(Tape<T>& t, Var a, T s);
template <typename T> Var activate(Tape<T>& t, Var a, Activation act);
template <typename T> Var relu(Tape<T>& t, Var a) { return activate(t, a, Activation::kRelu); }
template <typename T> Var tanh(Tape<T>& t, Var a) { return activate(t, a, Activation::kTanh); }
template <typename T> Var sigmoid(Tape<T>& t, Var a) { return activate(t, a, Activation::kSigmoid); }
template <typename T> Var elu(Tape<T>& t, Var a);
template <typename T> Var abs(Tape<T>& t, Var a);
template <typename T> Var concat_cols(Tape<T>& t, std::span<const Var> parts);
template <typename T> Var slice_cols(Tape<T>& t, Var a, int start, int count);
/// Row-major reshape (same element order).
template <typename T> Var reshape(Tape<T>& t, Var a, int rows, int cols);
/// out[r] = table[idx[r]]; gradients scatter-add back into the table.
template <typename T> Var gather_rows(Tape<T>& t, Var table, std::vector<int> idx);
/// out[r, 0] = a[r, idx[r]].
template <typename T> Var gather_cols(Tape<T>& t, Var a, std::vector<int> idx);
/// Per-row vector-matrix product: out[r, j] = sum_i q[r, i] * w[r, i * h + j] with h = w.cols / q.cols.
template <typename T> Var rowwise_bilinear(Tape<T>& t, Var q, Var w);
template <typename T> Var row_sum(Tape<T>& t, Var a);
template <typename T> Var sum(Tape<T>& t, Var a);
/// sum_r w[r] * sum_c a[r, c]^2 as a 1x1 node.
template <typename T> Var weighted_sum_sq(Tape<T>& t, Var a, std::vector<T> row_weights);
/// sum_r w[r] * (-log softmax(logits[r])[labels[r]]) as a 1x1 node; labels are 0-based.
template <typename T>
Var softmax_cross_entropy(Tape<T>& t, Var logits, std::vector<int> labels, std::vector<T> row_weights);
/// Identity on values, blocks gradients. Participates in record/replay.
template <typename T> Var stop_gradient(Tape<T>& t, Var a);
/// Fused GRU cell, gate column order [reset | update | candidate]:
///   r = s(x Wx_r + bx_r + h Wh_r + bh_r), z = s(x Wx_z + bx_z + h Wh_z + bh_z)
///   n = tanh(x Wx_n + bx_n + r * (h Wh_n + bh_n)),  h' = (1 - z) * n + z * h
template <typename T> Var gru(Tape<T>& t, Var x, Var h, Var wx, Var wh, Var bx, Var bh);

/// Row-wise softmax of a plain matrix.
template <typename T> Matrix<T> softmax_rows(const Matrix<T>& logits);
/// Row-wise argmax over entries with mask != 0; ties to the smallest index.
/// Rows with no available entry yield 0.
template <typename T> std::vector<int> masked_argmax_rows(const Matrix<T>& values, const Matrix<T>* mask);
template <typename T> Matrix<T> one_hot_rows(std::span<const int> idx, int width);

}  // namespace trama::nn
