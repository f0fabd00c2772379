#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "trama/layers.hpp"
#include "trama/optim.hpp"

namespace trama {

class Archive;
struct Trajectory;

/// Which codebook entries the coverage term pulls toward each state.
enum class Coverage {
  kClassTime,  // J(t, k): a per-class block of the codebook, walked through by timestep
  kTime,       // J(t): the whole codebook walked through by timestep, class ignored
  kOff,        // no coverage term
};

struct VqConfig {
  int n_c = 256;
  int d = 4;
  int hidden = 64;
  int t_max = 50;  // horizon used by the index scheduler
  double lambda_vq = 0.25;
  double lambda_commit = 0.125;
  double lambda_cvr = 0.125;
  Coverage coverage = Coverage::kClassTime;
};

/// Codebook indices assigned to (t, k) for a horizon of T steps; k is 1-based.
/// With n_K = floor(n_c / n_cl) and density n_K / T: the half-open range
/// [i_s + floor(dens t), i_s + floor(dens (t + 1))) when dens >= 1, else the
/// single index i_s + floor(dens t), where i_s = n_K (k - 1).
std::vector<int> indices_jtk(int n_c, int n_cl, int T, int t, int k);

/// Holds n_K and the density fixed from the first step of an episode.
class JtkScheduler {
 public:
  JtkScheduler(int n_c, int T);
  /// Recomputes the cached values when t == 0.
  std::vector<int> indices(int n_cl, int t, int k);
  int n_k() const { return n_k_; }
  double density() const { return density_; }

 private:
  int n_c_;
  int T_;
  int n_k_ = 0;
  double density_ = 0.0;
  bool started_ = false;
};

template <typename T>
struct Quantized {
  int index = 0;
  nn::Matrix<T> vector;  // 1 x d
};

/// Nearest codebook row in Euclidean distance, ties to the smallest index.
template <typename T>
Quantized<T> quantize(const nn::Matrix<T>& codebook, const nn::Matrix<T>& x);
template <typename T>
std::vector<int> quantize_rows(const nn::Matrix<T>& codebook, const nn::Matrix<T>& x);

template <typename T>
struct VqNets {
  nn::Mlp<T> encoder;
  nn::Mlp<T> decoder;
  nn::ParamId codebook = 0;
  int state_dim = 0;

  /// Registers "vq.enc.*", "vq.dec.*" and "vq.codebook" in `store`.
  static VqNets create(nn::ParamStore<T>& store, int state_dim, const VqConfig& cfg, Rng& rng);
};

struct VqTerms {
  nn::Var total;
  nn::Var recon;
  nn::Var vq;
  nn::Var commit;
  nn::Var coverage;
};

/// Per-state VQ loss summed over rows with `row_weights`:
///   recon + l_vq |sg[z_e] - x_q|^2 + l_commit |z_e - sg[x_q]|^2
///   + l_cvr mean_{j in J(t, k)} |sg[z_e] - e_j|^2,
/// where the decoder reads z_e + sg[x_q - z_e] (straight-through).
/// `steps` and `classes` give t and the 1-based pseudo-class of each row.
template <typename T>
VqTerms vq_loss(nn::Tape<T>& tape, nn::ParamStore<T>& store, const VqNets<T>& nets, const nn::Matrix<T>& states,
                std::span<const int> steps, std::span<const int> classes, int n_cl, const VqConfig& cfg,
                std::vector<T> row_weights);

/// Trained state quantizer with a version counter bumped on every update.
class VqVae {
 public:
  VqVae(int state_dim, VqConfig cfg, Rng& rng);

  const VqConfig& config() const { return cfg_; }
  nn::ParamStore<float>& store() { return store_; }
  const nn::ParamStore<float>& store() const { return store_; }
  const VqNets<float>& nets() const { return nets_; }
  const nn::Matrix<float>& codebook() const { return store_.value(nets_.codebook); }
  std::int64_t version() const { return version_; }

  /// (1/B) sum_b sum_{t < T_b} loss(s_{t,b}, t, label_b); one Adam step. Returns the loss.
  double update(std::span<const Trajectory* const> batch, int n_cl, const nn::AdamConfig& adam);
  /// Codebook index of every row of `states`.
  std::vector<int> encode(const nn::Matrix<float>& states) const;
  nn::Matrix<float> encode_continuous(const nn::Matrix<float>& states) const;

  void save(Archive& ar, const std::string& prefix) const;
  void load(const Archive& ar, const std::string& prefix);

 private:
  VqConfig cfg_;
  nn::ParamStore<float> store_;
  VqNets<float> nets_;
  std::int64_t version_ = 0;
};

/// Fraction of codebook entries that occur at least once in `codes`.
double codebook_utilization(std::span<const int> codes, int n_c);

/// Rows: run id, step, entry index, d coordinates, class (0 when no probe state maps to the entry).
void write_embeddings_csv(std::ostream& out, const std::string& run_id, std::int64_t step,
                          const nn::Matrix<float>& codebook, std::span<const int> entry_classes, bool header);

/// Majority pseudo-class among states quantized to each entry (0 if none).
std::vector<int> entry_classes(std::span<const int> codes, std::span<const int> classes, int n_c, int n_cl);

}  // namespace trama
