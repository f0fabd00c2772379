#pragma once

#include <span>
#include <string>
#include <vector>

#include "trama/layers.hpp"
#include "trama/optim.hpp"

namespace trama {

class Archive;
struct Trajectory;

enum class ReprMode {
  kLearned,  // one-hot -> 32 relu -> 16
  kOneHot,   // the one-hot class vector itself
  kZeros,    // conditioning removed: g = 0
};

enum class MixerMode { kQmix, kVdn };

struct PolicyConfig {
  int n_agents = 4;
  int obs_len = 0;
  int state_len = 0;
  int n_actions = 0;
  int n_cl = 2;
  int pred_hidden = 64;
  int q_hidden = 64;
  int repr_hidden = 32;
  int repr_dim = 16;
  int mixer_embed = 32;
  ReprMode repr = ReprMode::kLearned;
  MixerMode mixer = MixerMode::kQmix;
  double gamma = 0.99;
  bool teacher_forcing = false;  // condition on the pseudo-label instead of the prediction
  bool include_dead = false;     // count dead agents in the predictor loss

  int g_dim() const { return repr == ReprMode::kOneHot ? n_cl : repr_dim; }
  int agent_input() const { return obs_len + g_dim() + n_actions + n_agents; }
  void validate() const;
};

/// Parameter ids of every network. Prefixes: "pred." (predictor), "repr."
/// (class representation), "agent." (per-agent Q), "mixer.".
template <typename T>
struct PolicyNets {
  nn::Mlp<T> pred_in;
  nn::GruCell<T> pred_gru;
  nn::Mlp<T> pred_out;
  nn::Mlp<T> repr;  // empty unless ReprMode::kLearned
  nn::Mlp<T> agent_in;
  nn::GruCell<T> agent_gru;
  nn::Mlp<T> agent_out;
  nn::Mlp<T> hyper_w1, hyper_b1, hyper_wf, hyper_v;

  static PolicyNets create(nn::ParamStore<T>& store, const PolicyConfig& cfg, Rng& rng);
};

/// Forward pieces; rows are (episode, agent) pairs unless stated otherwise.
template <typename T>
struct StepVars {
  nn::Var out;     // logits or Q values
  nn::Var hidden;  // next GRU state
};

template <typename T>
StepVars<T> predictor_step(nn::Tape<T>& tape, nn::ParamStore<T>& store, const PolicyNets<T>& nets, nn::Var obs,
                           nn::Var hidden, int step = -1);
/// Representation of every class, n_cl x g_dim.
template <typename T>
nn::Var class_table(nn::Tape<T>& tape, nn::ParamStore<T>& store, const PolicyNets<T>& nets, const PolicyConfig& cfg);
/// g for 1-based classes.
template <typename T>
nn::Var class_repr(nn::Tape<T>& tape, nn::ParamStore<T>& store, const PolicyNets<T>& nets, const PolicyConfig& cfg,
                   std::span<const int> classes);
template <typename T>
StepVars<T> agent_step(nn::Tape<T>& tape, nn::ParamStore<T>& store, const PolicyNets<T>& nets, nn::Var inputs,
                       nn::Var hidden, int step = -1);
/// Q_tot for chosen (rows x n) and states (rows x state_len).
template <typename T>
nn::Var mix(nn::Tape<T>& tape, nn::ParamStore<T>& store, const PolicyNets<T>& nets, const PolicyConfig& cfg,
            nn::Var chosen, nn::Var state);

/// Greedy actions under an availability mask; ties to the lowest index.
/// Throws PreconditionError for a row with no available action.
std::vector<int> greedy_actions(const nn::Matrix<float>& q, const nn::Matrix<float>& avail);

/// Padded, time-major view of a batch of trajectories.
template <typename T>
struct EpisodeBatch {
  int B = 0;
  int n = 0;
  int L = 0;  // longest episode in the batch
  std::vector<int> lengths;
  std::vector<int> labels;              // 1-based, one per episode
  std::vector<nn::Matrix<T>> obs;       // t in [0, L]: (B n) x obs_len
  std::vector<nn::Matrix<T>> avail;     // t in [0, L]: (B n) x n_actions
  std::vector<nn::Matrix<T>> last_act;  // t in [0, L]: one-hot of the action at t - 1
  std::vector<nn::Matrix<T>> state;     // t in [0, L]: B x state_len
  std::vector<std::vector<int>> actions;  // t < L: B n
  std::vector<std::vector<int>> classes;  // t in [0, L]: pseudo-label per row
  nn::Matrix<T> rewards;   // B x L
  nn::Matrix<T> mask;      // B x L, t < length
  nn::Matrix<T> terminal;  // B x L, 1 at the last step of a terminated episode
  std::vector<std::vector<T>> alive;  // t < L: B n, 1 when the agent is alive and t < length

  /// Throws PreconditionError when a trajectory has no label.
  static EpisodeBatch build(std::span<const Trajectory* const> batch, const PolicyConfig& cfg);
};

template <typename T>
struct PolicyLosses {
  nn::Var td;
  nn::Var pred;
  nn::Var total;
  double pred_accuracy = 0.0;  // greedy k-hat == label over counted rows
  nn::Matrix<double> q_tot;    // B x L, online Q_tot of the taken joint actions
};

/// TD loss with double-Q targets from the target store, the predictor
/// cross-entropy, and their sum td + lambda_zeta * pred. The class index
/// fed to the representation is a discrete boundary: no gradient reaches
/// the predictor from the TD loss.
template <typename T>
PolicyLosses<T> policy_losses(nn::Tape<T>& tape, nn::ParamStore<T>& online, nn::ParamStore<T>& target,
                              const PolicyNets<T>& nets, const PolicyConfig& cfg, const EpisodeBatch<T>& batch,
                              double lambda_zeta);

struct UpdateStats {
  double td = 0.0;
  double pred = 0.0;
  double pred_accuracy = 0.0;
  double grad_norm_theta = 0.0;
  double grad_norm_zeta = 0.0;
};

/// Online and target parameters plus per-episode recurrent state for acting.
class PolicyModel {
 public:
  PolicyModel(PolicyConfig cfg, Rng& rng);

  const PolicyConfig& config() const { return cfg_; }
  nn::ParamStore<float>& online() { return online_; }
  nn::ParamStore<float>& target() { return target_; }
  const PolicyNets<float>& nets() const { return nets_; }

  /// One combined Adam step. Gradients of the theta and zeta groups are clipped separately.
  UpdateStats update(std::span<const Trajectory* const> batch, double lambda_zeta, const nn::AdamConfig& adam,
                     double clip_norm);
  void refresh_target();

  void save(Archive& ar, const std::string& prefix) const;
  void load(const Archive& ar, const std::string& prefix);

 private:
  PolicyConfig cfg_;
  nn::ParamStore<float> online_;
  nn::ParamStore<float> target_;
  PolicyNets<float> nets_;
};

struct ActOutput {
  std::vector<int> actions;
  std::vector<int> classes;    // predicted k-hat per agent, 1-based
  nn::Matrix<float> q;         // n x n_actions, unmasked
  nn::Matrix<float> class_probs;  // n x n_cl
};

/// Decentralized execution for one episode.
class PolicyRunner {
 public:
  explicit PolicyRunner(const PolicyModel& model);
  void reset();
  /// epsilon-greedy over available actions; `sample_class` draws k-hat from the predictor instead of argmax.
  ActOutput act(const nn::Matrix<float>& obs, const nn::Matrix<float>& avail, double epsilon, Rng& rng,
                bool sample_class = false, const std::vector<int>* forced_classes = nullptr);

 private:
  const PolicyModel& model_;
  nn::Matrix<float> h_pred_;
  nn::Matrix<float> h_q_;
  std::vector<int> last_actions_;
  int t_ = 0;
};

}  // namespace trama
