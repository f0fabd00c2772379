#include "trama/vqvae.hpp"

#include <cmath>
#include <ostream>

#include "trama/checkpoint.hpp"
#include "trama/errors.hpp"
#include "trama/replay.hpp"

namespace trama {

using nn::Matrix;
using nn::Tape;
using nn::Var;

std::vector<int> indices_jtk(int n_c, int n_cl, int T, int t, int k) {
  JtkScheduler s(n_c, T);
  s.indices(n_cl, 0, k);
  return s.indices(n_cl, t, k);
}

JtkScheduler::JtkScheduler(int n_c, int T) : n_c_(n_c), T_(T) {
  if (n_c < 1 || T < 1) throw ConfigError("scheduler needs n_c >= 1 and T >= 1");
}

std::vector<int> JtkScheduler::indices(int n_cl, int t, int k) {
  if (n_cl < 1 || n_cl > n_c_) throw ConfigError("n_cl must be in [1, n_c]");
  if (k < 1 || k > n_cl) throw PreconditionError("class " + std::to_string(k) + " outside [1, n_cl]");
  if (t < 0 || t >= T_) throw PreconditionError("timestep " + std::to_string(t) + " outside [0, T)");
  if (t == 0 || !started_) {
    n_k_ = n_c_ / n_cl;
    density_ = static_cast<double>(n_k_) / T_;
    started_ = true;
  }
  const int start = n_k_ * (k - 1);
  // floor(density * t) in exact integer arithmetic.
  const int lo = start + n_k_ * t / T_;
  if (n_k_ < T_) return {lo};
  const int hi = start + n_k_ * (t + 1) / T_;
  std::vector<int> out;
  for (int j = lo; j < hi; ++j) out.push_back(j);
  return out;
}

template <typename T>
Quantized<T> quantize(const Matrix<T>& codebook, const Matrix<T>& x) {
  const auto idx = quantize_rows(codebook, x);
  return {idx.at(0), codebook.row(idx[0])};
}

template <typename T>
std::vector<int> quantize_rows(const Matrix<T>& codebook, const Matrix<T>& x) {
  if (x.cols() != codebook.cols()) throw ConfigError("quantize: dimension mismatch");
  std::vector<int> out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    Eigen::Index best = 0;
    (codebook.rowwise() - x.row(r)).rowwise().squaredNorm().minCoeff(&best);
    out[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return out;
}

template <typename T>
VqNets<T> VqNets<T>::create(nn::ParamStore<T>& store, int state_dim, const VqConfig& cfg, Rng& rng) {
  using nn::Activation;
  VqNets n;
  n.state_dim = state_dim;
  n.encoder = nn::Mlp<T>::create(store, "vq.enc", state_dim,
                                 {{cfg.hidden, Activation::kRelu}, {cfg.hidden, Activation::kRelu}, {cfg.d, Activation::kIdentity}}, rng);
  n.decoder = nn::Mlp<T>::create(store, "vq.dec", cfg.d,
                                 {{cfg.hidden, Activation::kRelu}, {cfg.hidden, Activation::kRelu}, {state_dim, Activation::kIdentity}}, rng);
  Matrix<T> cb(cfg.n_c, cfg.d);
  for (auto& v : cb.reshaped()) v = static_cast<T>(rng.uniform(-0.1, 0.1));
  n.codebook = store.add("vq.codebook", std::move(cb));
  return n;
}

template <typename T>
VqTerms vq_loss(Tape<T>& tape, nn::ParamStore<T>& store, const VqNets<T>& nets, const Matrix<T>& states,
                std::span<const int> steps, std::span<const int> classes, int n_cl, const VqConfig& cfg,
                std::vector<T> row_weights) {
  const auto rows = static_cast<std::size_t>(states.rows());
  if (steps.size() != rows || classes.size() != rows || row_weights.size() != rows) {
    throw PreconditionError("vq_loss: need one step, class and weight per state");
  }
  Var s = tape.constant(states);
  Var ze = nets.encoder.forward(tape, store, s);
  Var book = tape.param(store, nets.codebook);
  auto z = tape.discrete(quantize_rows<T>(tape.value(book), tape.value(ze)));
  Var xq = nn::gather_rows(tape, book, z);
  Var st = nn::add(tape, ze, nn::stop_gradient(tape, nn::sub(tape, xq, ze)));
  Var recon = nn::weighted_sum_sq(tape, nn::sub(tape, nets.decoder.forward(tape, store, st), s), row_weights);
  Var ze_sg = nn::stop_gradient(tape, ze);
  Var vq = nn::scale(tape, nn::weighted_sum_sq(tape, nn::sub(tape, ze_sg, xq), row_weights), static_cast<T>(cfg.lambda_vq));
  Var commit = nn::scale(tape, nn::weighted_sum_sq(tape, nn::sub(tape, ze, nn::stop_gradient(tape, xq)), row_weights),
                         static_cast<T>(cfg.lambda_commit));
  Var total = nn::add(tape, nn::add(tape, recon, vq), commit);

  Var coverage = tape.constant(Matrix<T>::Zero(1, 1));
  if (cfg.coverage != Coverage::kOff && cfg.lambda_cvr != 0.0) {
    const int classes_used = cfg.coverage == Coverage::kTime ? 1 : n_cl;
    std::vector<int> src, entry;
    std::vector<T> w;
    for (std::size_t r = 0; r < rows; ++r) {
      const int k = cfg.coverage == Coverage::kTime ? 1 : classes[r];
      const auto js = indices_jtk(cfg.n_c, classes_used, cfg.t_max, steps[r], k);
      for (int j : js) {
        src.push_back(static_cast<int>(r));
        entry.push_back(j);
        w.push_back(row_weights[r] / static_cast<T>(js.size()));
      }
    }
    Var diff = nn::sub(tape, nn::gather_rows(tape, ze_sg, src), nn::gather_rows(tape, book, entry));
    coverage = nn::scale(tape, nn::weighted_sum_sq(tape, diff, std::move(w)), static_cast<T>(cfg.lambda_cvr));
    total = nn::add(tape, total, coverage);
  }
  return {total, recon, vq, commit, coverage};
}

VqVae::VqVae(int state_dim, VqConfig cfg, Rng& rng) : cfg_(cfg) {
  if (cfg_.n_c < 1 || cfg_.d < 1) throw ConfigError("codebook needs n_c >= 1 and d >= 1");
  nets_ = VqNets<float>::create(store_, state_dim, cfg_, rng);
}

double VqVae::update(std::span<const Trajectory* const> batch, int n_cl, const nn::AdamConfig& adam) {
  if (batch.empty()) throw PreconditionError("vq update: empty batch");
  Eigen::Index rows = 0;
  for (const auto* t : batch) {
    if (!t->label) throw PreconditionError("vq update: trajectory " + std::to_string(t->id) + " has no label");
    rows += t->length;
  }
  Matrix<float> states(rows, nets_.state_dim);
  std::vector<int> steps, classes;
  std::vector<float> w;
  const float inv_b = 1.0f / static_cast<float>(batch.size());
  Eigen::Index r = 0;
  for (const auto* t : batch) {
    states.middleRows(r, t->length) = t->states.topRows(t->length);
    r += t->length;
    for (int s = 0; s < t->length; ++s) {
      steps.push_back(std::min(s, cfg_.t_max - 1));
      classes.push_back(*t->label);
      w.push_back(inv_b);
    }
  }
  Tape<float> tape;
  auto terms = vq_loss<float>(tape, store_, nets_, states, steps, classes, n_cl, cfg_, std::move(w));
  const double loss = tape.value(terms.total)(0, 0);
  if (!std::isfinite(loss)) throw NumericError("vq update: non-finite loss");
  tape.backward(terms.total);
  nn::adam_step(store_, adam);
  ++version_;
  return loss;
}

Matrix<float> VqVae::encode_continuous(const Matrix<float>& states) const {
  Tape<float> tape;
  auto& store = const_cast<nn::ParamStore<float>&>(store_);
  return tape.value(nets_.encoder.forward(tape, store, tape.constant(states)));
}

std::vector<int> VqVae::encode(const Matrix<float>& states) const {
  if (states.rows() == 0) throw PreconditionError("encode: empty state sequence");
  return quantize_rows<float>(codebook(), encode_continuous(states));
}

void VqVae::save(Archive& ar, const std::string& prefix) const {
  put_params(ar, prefix, store_);
  ar.put_scalar(prefix + "#version", version_);
}

void VqVae::load(const Archive& ar, const std::string& prefix) {
  get_params(ar, prefix, store_);
  version_ = ar.scalar(prefix + "#version");
}

double codebook_utilization(std::span<const int> codes, int n_c) {
  std::vector<std::uint8_t> used(static_cast<std::size_t>(n_c), 0);
  for (int c : codes) used.at(static_cast<std::size_t>(c)) = 1;
  int count = 0;
  for (auto u : used) count += u;
  return static_cast<double>(count) / n_c;
}

std::vector<int> entry_classes(std::span<const int> codes, std::span<const int> classes, int n_c, int n_cl) {
  std::vector<int> votes(static_cast<std::size_t>(n_c * n_cl), 0);
  for (std::size_t i = 0; i < codes.size(); ++i) {
    votes[static_cast<std::size_t>(codes[i] * n_cl + classes[i] - 1)]++;
  }
  std::vector<int> out(static_cast<std::size_t>(n_c), 0);
  for (int e = 0; e < n_c; ++e) {
    int best = 0;
    for (int k = 0; k < n_cl; ++k) {
      const int v = votes[static_cast<std::size_t>(e * n_cl + k)];
      if (v > best) {
        best = v;
        out[static_cast<std::size_t>(e)] = k + 1;
      }
    }
  }
  return out;
}

void write_embeddings_csv(std::ostream& out, const std::string& run_id, std::int64_t step, const Matrix<float>& codebook,
                          std::span<const int> classes, bool header) {
  if (header) {
    out << "run_id,step,entry";
    for (Eigen::Index c = 0; c < codebook.cols(); ++c) out << ",e" << c;
    out << ",class\n";
  }
  for (Eigen::Index r = 0; r < codebook.rows(); ++r) {
    out << run_id << ',' << step << ',' << r;
    for (Eigen::Index c = 0; c < codebook.cols(); ++c) out << ',' << codebook(r, c);
    out << ',' << (static_cast<std::size_t>(r) < classes.size() ? classes[static_cast<std::size_t>(r)] : 0) << '\n';
  }
}

template Quantized<float> quantize(const Matrix<float>&, const Matrix<float>&);
template Quantized<double> quantize(const Matrix<double>&, const Matrix<double>&);
template std::vector<int> quantize_rows(const Matrix<float>&, const Matrix<float>&);
template std::vector<int> quantize_rows(const Matrix<double>&, const Matrix<double>&);
template struct VqNets<float>;
template struct VqNets<double>;
template VqTerms vq_loss(Tape<float>&, nn::ParamStore<float>&, const VqNets<float>&, const Matrix<float>&,
                         std::span<const int>, std::span<const int>, int, const VqConfig&, std::vector<float>);
template VqTerms vq_loss(Tape<double>&, nn::ParamStore<double>&, const VqNets<double>&, const Matrix<double>&,
                         std::span<const int>, std::span<const int>, int, const VqConfig&, std::vector<double>);

}  // namespace trama
