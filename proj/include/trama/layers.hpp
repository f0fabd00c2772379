#pragma once

#include <string>
#include <vector>

#include "trama/rng.hpp"
#include "trama/tape.hpp"

namespace trama::nn {

struct LayerSpec {
  int width = 0;
  Activation activation = Activation::kIdentity;
};

enum class Init {
  kUniformFanIn,  // U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases
  kZero,
};

/// Dense stack: every layer is affine followed by its activation.
template <typename T>
class Mlp {
 public:
  Mlp() = default;

  /// Registers "<prefix>.w<i>" (in x out) and "<prefix>.b<i>" (1 x out) in `store`.
  /// `last_init` overrides the initializer of the final layer.
  static Mlp create(ParamStore<T>& store, const std::string& prefix, int input_width,
                    std::vector<LayerSpec> layers, Rng& rng, Init init = Init::kUniformFanIn,
                    Init last_init = Init::kUniformFanIn);

  /// Throws ConfigError naming the first layer whose input width does not match.
  Var forward(Tape<T>& tape, ParamStore<T>& store, Var x) const;

  int input_width() const { return input_width_; }
  int output_width() const { return layers_.empty() ? input_width_ : layers_.back().width; }
  std::size_t depth() const { return layers_.size(); }
  ParamId weight(std::size_t layer) const { return weights_.at(layer); }
  ParamId bias(std::size_t layer) const { return biases_.at(layer); }

 private:
  int input_width_ = 0;
  std::vector<LayerSpec> layers_;
  std::vector<ParamId> weights_;
  std::vector<ParamId> biases_;
};

/// Free-function form of Mlp::forward.
template <typename T>
Var mlp_forward(Tape<T>& tape, ParamStore<T>& store, const Mlp<T>& net, Var x) {
  return net.forward(tape, store, x);
}

template <typename T>
class GruCell {
 public:
  GruCell() = default;
  static GruCell create(ParamStore<T>& store, const std::string& prefix, int input_width, int hidden,
                        Rng& rng, Init init = Init::kUniformFanIn);

  /// One cell update. `step` only labels error messages.
  Var step(Tape<T>& tape, ParamStore<T>& store, Var x, Var h, int step = -1) const;

  int input_width() const { return input_width_; }
  int hidden() const { return hidden_; }

 private:
  int input_width_ = 0;
  int hidden_ = 0;
  ParamId wx_ = 0, wh_ = 0, bx_ = 0, bh_ = 0;
};

template <typename T>
Var gru_step(Tape<T>& tape, ParamStore<T>& store, const GruCell<T>& cell, Var x, Var h, int step = -1) {
  return cell.step(tape, store, x, h, step);
}

template <typename T>
Matrix<T> init_matrix(int rows, int cols, int fan_in, Init init, Rng& rng);

extern template class Mlp<float>;
extern template class Mlp<double>;
extern template class GruCell<float>;
extern template class GruCell<double>;

}  // namespace trama::nn
