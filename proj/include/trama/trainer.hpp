#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "trama/classifier.hpp"
#include "trama/clustering.hpp"
#include "trama/config.hpp"
#include "trama/huntgrid.hpp"
#include "trama/metrics.hpp"
#include "trama/policy.hpp"
#include "trama/replay.hpp"
#include "trama/vqvae.hpp"

namespace trama {

inline constexpr std::array<int, 4> kAccuracySteps{0, 10, 20, 30};

struct PredictionRecord {
  std::int64_t episode = 0;
  int t = 0;
  int agent = 0;
  int k_hat = 0;
  int k_bar = 0;
};

struct EvalResult {
  int episodes = 0;
  double mean_return = 0.0;
  double win_rate = 0.0;
  std::array<double, 4> accuracy{};  // rows of kAccuracySteps; NaN when no episode reached the step
  std::array<int, 4> counts{};       // agent-steps behind each row
  std::vector<PredictionRecord> predictions;
  std::vector<int> task_index;  // ground-truth task per episode
  std::vector<int> k_bar;       // classifier label per episode
};

struct ClusterRoundStats {
  int round = 0;
  int n_cl = 0;
  int samples = 0;
  double preserved_ratio = 0.0;
  double silhouette = 0.0;  // NaN when n_cl == 1
  double inertia = 0.0;
  double classifier_loss = 0.0;        // mean over every update of the round
  double classifier_loss_first = 0.0;  // first epoch, before the classifier has adapted
  double classifier_loss_final = 0.0;  // last epoch
  std::size_t relabeled = 0;
};

/// Per-episode bookkeeping for the acting loop.
struct EpisodeLog {
  std::vector<std::vector<int>> k_hat;  // per t, one class per agent
};

/// Runs the full loop: rollouts, buffer, VQ-VAE, policy updates, periodic
/// clustering and classifier training, evaluation, metrics and checkpoints.
class Trainer {
 public:
  /// `out_dir` empty: no files are written.
  explicit Trainer(TrainConfig cfg, std::string out_dir = "");

  /// Restores a run from a checkpoint file. Files in `out_dir` continue where the checkpoint left them.
  static std::unique_ptr<Trainer> resume(const std::string& checkpoint, std::string out_dir = "");
  /// Loads the models of a checkpoint for evaluation; no files, empty buffer unless stored.
  static std::unique_ptr<Trainer> from_checkpoint(const std::string& checkpoint);

  const TrainConfig& config() const { return cfg_; }
  /// Swaps the task set for evaluation; team and enemy counts must match.
  void set_tasks(std::vector<TaskSpec> tasks);

  /// One episode with the current policy. Training mode appends the
  /// labeled, encoded trajectory to the buffer and advances counters.
  Trajectory run_episode(double epsilon, bool eval_mode, Rng& rng, EpisodeLog* log = nullptr);

  /// One loop body: rollout, label fill, VQ update every vq_interval
  /// episodes, policy update, clustering every cluster_interval episodes.
  void train_iteration();
  /// Runs until t_env environment steps (or `max_steps` more when given).
  void run(std::optional<std::int64_t> max_steps = std::nullopt);

  ClusterRoundStats clustering_round();
  EvalResult evaluate(int episodes, std::uint64_t stream = 0);

  double epsilon() const;
  int current_ncl() const { return n_cl_; }
  std::int64_t env_steps() const { return env_steps_; }
  std::int64_t episodes() const { return episodes_; }
  std::int64_t updates() const { return updates_; }
  int rounds() const { return rounds_; }

  ReplayBuffer& buffer() { return buffer_; }
  VqVae& vq() { return *vq_; }
  PolicyModel& policy() { return *policy_; }
  TrajectoryClassifier& classifier() { return *classifier_; }
  HuntGrid& env() { return env_; }
  const std::optional<ClusterModel>& cluster_model() const { return cluster_; }
  MetricStream& metrics() { return metrics_; }
  const std::vector<ClusterRoundStats>& round_log() const { return round_log_; }

  /// Embedding of a trajectory under the current codebook, refreshing stale codes when configured.
  Eigen::RowVectorXd embedding(Trajectory& traj) const;
  /// Classifier label, or 1 before the first clustering round.
  int label_for(Trajectory& traj) const;

  void save_checkpoint(const std::string& path) const;
  void write_eval_report(const EvalResult& r, std::ostream& out) const;

 private:
  void load_state(const class Archive& ar);
  void open_outputs();
  void log_training(const Trajectory& traj, const UpdateStats* stats);
  void maybe_evaluate();
  void write_embeddings();

  TrainConfig cfg_;
  std::string out_dir_;
  HuntGrid env_;
  PolicyConfig pcfg_;
  VqConfig vcfg_;
  Rng root_;
  Rng act_rng_;
  Rng sample_rng_;
  Rng cluster_rng_;
  std::unique_ptr<VqVae> vq_;
  std::unique_ptr<PolicyModel> policy_;
  std::unique_ptr<TrajectoryClassifier> classifier_;
  std::optional<ClusterModel> cluster_;
  ReplayBuffer buffer_;
  MetricStream metrics_;
  std::vector<ClusterRoundStats> round_log_;
  nn::AdamConfig adam_;

  int n_cl_ = 1;
  std::int64_t env_steps_ = 0;
  std::int64_t episodes_ = 0;
  std::int64_t updates_ = 0;
  int rounds_ = 0;
  std::int64_t evals_ = 0;
  std::int64_t next_eval_ = 0;
  std::int64_t next_checkpoint_ = 0;
  std::int64_t eval_episode_counter_ = 0;
  std::int64_t resume_rows_ = 0;

  // Running sums for the averaged training rows.
  std::array<double, 7> log_sums_{};
  int log_count_ = 0;
  int log_updates_ = 0;
};

}  // namespace trama
