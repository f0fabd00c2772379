#include "trama/layers.hpp"

#include <cmath>

#include "trama/errors.hpp"

namespace trama::nn {

template <typename T>
Matrix<T> init_matrix(int rows, int cols, int fan_in, Init init, Rng& rng) {
  Matrix<T> m = Matrix<T>::Zero(rows, cols);
  if (init == Init::kZero) return m;
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(rng.uniform(-bound, bound));
  return m;
}

template <typename T>
Mlp<T> Mlp<T>::create(ParamStore<T>& store, const std::string& prefix, int input_width,
                      std::vector<LayerSpec> layers, Rng& rng, Init init, Init last_init) {
  if (input_width <= 0) throw ConfigError(prefix + ": input width must be positive");
  Mlp net;
  net.input_width_ = input_width;
  int in = input_width;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].width <= 0) throw ConfigError(prefix + ": layer " + std::to_string(i) + " has no units");
    const Init li = (i + 1 == layers.size()) ? last_init : init;
    const std::string idx = std::to_string(i);
    net.weights_.push_back(store.add(prefix + ".w" + idx, init_matrix<T>(in, layers[i].width, in, li, rng)));
    net.biases_.push_back(store.add(prefix + ".b" + idx, init_matrix<T>(1, layers[i].width, in, li, rng)));
    in = layers[i].width;
  }
  net.layers_ = std::move(layers);
  return net;
}

template <typename T>
Var Mlp<T>::forward(Tape<T>& tape, ParamStore<T>& store, Var x) const {
  Var h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& w = store.value(weights_[i]);
    const auto got = tape.value(h).cols();
    if (got != w.rows()) {
      throw ConfigError("mlp layer " + std::to_string(i) + ": expected input width " + std::to_string(w.rows()) +
                        ", got " + std::to_string(got));
    }
    h = affine(tape, h, tape.param(store, weights_[i]), tape.param(store, biases_[i]));
    h = activate(tape, h, layers_[i].activation);
  }
  return h;
}

template <typename T>
GruCell<T> GruCell<T>::create(ParamStore<T>& store, const std::string& prefix, int input_width, int hidden,
                              Rng& rng, Init init) {
  if (input_width <= 0 || hidden <= 0) throw ConfigError(prefix + ": GRU sizes must be positive");
  GruCell cell;
  cell.input_width_ = input_width;
  cell.hidden_ = hidden;
  cell.wx_ = store.add(prefix + ".wx", init_matrix<T>(input_width, 3 * hidden, hidden, init, rng));
  cell.wh_ = store.add(prefix + ".wh", init_matrix<T>(hidden, 3 * hidden, hidden, init, rng));
  cell.bx_ = store.add(prefix + ".bx", init_matrix<T>(1, 3 * hidden, hidden, init, rng));
  cell.bh_ = store.add(prefix + ".bh", init_matrix<T>(1, 3 * hidden, hidden, init, rng));
  return cell;
}

template <typename T>
Var GruCell<T>::step(Tape<T>& tape, ParamStore<T>& store, Var x, Var h, int step) const {
  const auto& xv = tape.value(x);
  const auto& hv = tape.value(h);
  const std::string where = step >= 0 ? " at step " + std::to_string(step) : std::string();
  if (hv.cols() != hidden_) {
    throw ConfigError("gru_step" + where + ": hidden width " + std::to_string(hv.cols()) + " != " +
                      std::to_string(hidden_));
  }
  if (xv.cols() != input_width_) {
    throw ConfigError("gru_step" + where + ": input width " + std::to_string(xv.cols()) + " != " +
                      std::to_string(input_width_));
  }
  if (!xv.allFinite()) throw NumericError("gru_step" + where + ": non-finite input");
  return gru(tape, x, h, tape.param(store, wx_), tape.param(store, wh_), tape.param(store, bx_),
             tape.param(store, bh_));
}

template class Mlp<float>;
template class Mlp<double>;
template class GruCell<float>;
template class GruCell<double>;
template Matrix<float> init_matrix<float>(int, int, int, Init, Rng&);
template Matrix<double> init_matrix<double>(int, int, int, Init, Rng&);

}  // namespace trama::nn
