#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "trama/param_store.hpp"
#include "trama/rng.hpp"

namespace trama {

class Archive;

/// One stored episode. Per-agent tensors are stacked time-major: row t * n + i.
struct Trajectory {
  std::int64_t id = -1;  // assigned by the buffer
  int length = 0;        // T_e transitions
  int n_agents = 0;
  nn::Matrix<float> states;  // (T_e + 1) x state_len
  nn::Matrix<float> obs;     // (T_e + 1) * n x obs_len
  nn::Matrix<float> avail;   // (T_e + 1) * n x n_actions
  std::vector<int> actions;  // T_e * n
  std::vector<float> rewards;  // T_e
  std::vector<std::uint8_t> alive;  // (T_e + 1) * n
  bool terminated = false;  // ended by win or wipe, not by the time limit
  std::vector<int> codes;   // quantized index per state (0-based), T_e + 1
  std::int64_t code_version = -1;
  std::optional<int> label;  // pseudo-class, 1-based
  double episode_return = 0.0;
  int task_index = -1;  // ground truth for diagnostics only
  bool won = false;

  /// Throws InvariantError when shapes disagree.
  void check() const;
};

/// FIFO episode buffer.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 5000);

  /// Returns the id given to the trajectory. Evicts the oldest when full.
  std::int64_t append(Trajectory traj);

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return items_.empty(); }
  std::int64_t inserted() const { return next_id_; }

  /// Position 0 is the oldest stored episode.
  Trajectory& at(std::size_t pos) { return items_.at(pos); }
  const Trajectory& at(std::size_t pos) const { return items_.at(pos); }
  const Trajectory* find(std::int64_t id) const;

  /// Uniform positions: distinct when size >= n, with replacement otherwise.
  std::vector<std::size_t> sample_positions(std::size_t n, Rng& rng) const;
  std::vector<const Trajectory*> sample_batch(std::size_t n, Rng& rng) const;

  /// Labels every unlabeled trajectory; returns how many were labeled.
  /// Throws InvariantError when the labeler leaves [1, n_cl].
  std::size_t assign_labels(const std::function<int(const Trajectory&)>& labeler, int n_cl);
  /// Overwrites labels of all trajectories (used after a clustering round).
  void relabel_all(const std::function<int(const Trajectory&)>& labeler, int n_cl);
  void set_label(std::size_t pos, int label, int n_cl);
  std::size_t labeled_count() const;

  /// Recomputes codes of the trajectory at `pos` when they were produced by
  /// another codebook version.
  void ensure_codes(std::size_t pos, std::int64_t version,
                    const std::function<std::vector<int>(const nn::Matrix<float>&)>& encode);

  void save(Archive& ar, const std::string& prefix) const;
  void load(const Archive& ar, const std::string& prefix);

 private:
  std::size_t capacity_;
  std::deque<Trajectory> items_;
  std::int64_t next_id_ = 0;
};

}  // namespace trama
