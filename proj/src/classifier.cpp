#include "trama/classifier.hpp"

#include <cmath>
#include <numeric>

#include "trama/checkpoint.hpp"
#include "trama/errors.hpp"

namespace trama {

using nn::Activation;
using nn::Matrix;

TrajectoryClassifier::TrajectoryClassifier(int d, int n_cl, ClassifierConfig cfg, Rng& rng) : d_(d), n_cl_(n_cl), cfg_(cfg) {
  reset(n_cl, rng);
}

void TrajectoryClassifier::reset(int n_cl, Rng& rng) {
  if (n_cl < 1) throw ConfigError("classifier needs n_cl >= 1");
  n_cl_ = n_cl;
  store_ = nn::ParamStore<float>();
  net_ = nn::Mlp<float>::create(store_, "psi", d_,
                                {{cfg_.hidden, Activation::kRelu}, {cfg_.hidden, Activation::kRelu}, {n_cl, Activation::kIdentity}},
                                rng, nn::Init::kUniformFanIn, nn::Init::kZero);
  trained_ = false;
}

double TrajectoryClassifier::train(const Points& x, std::span<const int> labels, Rng& rng) {
  const auto m = static_cast<std::size_t>(x.rows());
  if (m == 0) throw PreconditionError("train_classifier: no samples");
  if (labels.size() != m) throw PreconditionError("train_classifier: one label per sample");
  for (int l : labels) {
    if (l < 1 || l > n_cl_) throw PreconditionError("train_classifier: label " + std::to_string(l) + " outside [1, n_cl]");
  }
  const Matrix<float> xf = x.cast<float>();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  const auto batch = static_cast<std::size_t>(std::max(1, cfg_.batch));
  double epoch_loss = 0.0, total = 0.0;
  stats_ = {};
  for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
    shuffle(order.begin(), order.end(), rng);
    epoch_loss = 0.0;
    for (std::size_t start = 0; start < m; start += batch) {
      const std::size_t n = std::min(batch, m - start);
      Matrix<float> xb(static_cast<Eigen::Index>(n), d_);
      std::vector<int> yb(n);
      for (std::size_t i = 0; i < n; ++i) {
        xb.row(static_cast<Eigen::Index>(i)) = xf.row(static_cast<Eigen::Index>(order[start + i]));
        yb[i] = labels[order[start + i]] - 1;
      }
      nn::Tape<float> tape;
      auto logits = net_.forward(tape, store_, tape.constant(std::move(xb)));
      auto loss = nn::softmax_cross_entropy(tape, logits, std::move(yb), std::vector<float>(n, 1.0f / static_cast<float>(n)));
      const double l = tape.value(loss)(0, 0);
      if (!std::isfinite(l)) throw NumericError("train_classifier: non-finite loss");
      epoch_loss += l * static_cast<double>(n);
      tape.backward(loss);
      nn::adam_step(store_, cfg_.adam);
    }
    total += epoch_loss;
    epoch_loss /= static_cast<double>(m);
    if (epoch == 0) stats_.first_epoch = epoch_loss;
  }
  trained_ = true;
  stats_.final_epoch = epoch_loss;
  stats_.mean = cfg_.epochs > 0 ? total / (static_cast<double>(m) * cfg_.epochs) : 0.0;
  return epoch_loss;
}

Matrix<double> TrajectoryClassifier::logits(const Points& x) const {
  if (x.cols() != d_) throw PreconditionError("classify: embedding width mismatch");
  nn::Tape<float> tape;
  auto& store = const_cast<nn::ParamStore<float>&>(store_);
  return tape.value(net_.forward(tape, store, tape.constant(x.cast<float>()))).cast<double>();
}

Matrix<double> TrajectoryClassifier::probabilities(const Points& x) const { return nn::softmax_rows<double>(logits(x)); }

std::vector<int> TrajectoryClassifier::classify(const Points& x) const {
  auto idx = nn::masked_argmax_rows<double>(logits(x), nullptr);
  for (auto& i : idx) ++i;
  return idx;
}

int TrajectoryClassifier::classify(const Eigen::RowVectorXd& e) const { return classify(Points(e)).at(0); }

void TrajectoryClassifier::save(Archive& ar, const std::string& prefix) const {
  put_params(ar, prefix, store_);
  ar.put_i64(prefix + "#meta", {2}, {n_cl_, trained_ ? 1 : 0});
}

void TrajectoryClassifier::load(const Archive& ar, const std::string& prefix) {
  const auto& meta = ar.i64(prefix + "#meta");
  if (meta.at(0) != n_cl_) {
    Rng scratch(0);
    reset(static_cast<int>(meta.at(0)), scratch);
  }
  get_params(ar, prefix, store_);
  trained_ = meta.at(1) != 0;
}

}  // namespace trama
