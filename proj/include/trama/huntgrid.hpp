#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "trama/param_store.hpp"
#include "trama/rng.hpp"

namespace trama {

enum class UnitType { kStriker = 0, kRanger = 1, kTank = 2 };
inline constexpr int kUnitTypeCount = 3;

struct UnitStats {
  int hp;
  int damage;
  int range;  // Chebyshev
};

UnitStats unit_stats(UnitType t);
char unit_letter(UnitType t);

enum class SpawnPattern { kSurround, kReflected };

/// One task of the family. The id is never exposed to agents.
struct TaskSpec {
  int id = 0;
  std::vector<UnitType> combination;  // agent i gets combination[i]
  SpawnPattern spawn = SpawnPattern::kSurround;

  std::string combination_string() const;
  /// Parses "SSRT"-style strings (S = Striker, R = Ranger, T = Tank).
  static TaskSpec parse(int id, const std::string& combination, SpawnPattern spawn);
};

SpawnPattern parse_spawn(const std::string& s);
std::string spawn_name(SpawnPattern p);

struct EnvConfig {
  int n_agents = 4;
  int n_enemies = 4;
  int grid_size = 8;
  int sight_radius = 2;
  int t_max = 50;
  int enemy_hp = 3;
  int enemy_damage = 1;
  int enemy_range = 1;
  bool observe_unit_type = true;
  std::vector<TaskSpec> tasks;
};

struct EnvSpec {
  int n_agents = 0;
  int n_enemies = 0;
  int obs_len = 0;
  int state_len = 0;
  int n_actions = 0;
  int t_max = 0;
};

/// Dimensions implied by a config. Observation: 5 own features (unit type
/// one-hot, hp fraction, time fraction) plus 8 per other entity (visible,
/// dx/4, dy/4, hp fraction, unit type one-hot, ally flag).
EnvSpec env_spec(const EnvConfig& cfg);

/// Throws ConfigError on an unusable config or task set.
void validate(const EnvConfig& cfg);

enum Action : int { kStay = 0, kUp = 1, kDown = 2, kLeft = 3, kRight = 4, kAttackBase = 5 };

struct Entity {
  int x = 0;
  int y = 0;
  int hp = 0;
  int max_hp = 0;
  int damage = 0;
  int range = 0;
  UnitType type = UnitType::kStriker;
  bool alive = false;
};

struct EnvState {
  int task_index = 0;
  bool flipped = false;
  int t = 0;
  bool done = false;
  bool won = false;
  std::vector<Entity> agents;
  std::vector<Entity> enemies;
};

struct StepResult {
  double reward = 0.0;  // normalized so the best possible episode return is 20
  double raw_reward = 0.0;
  bool done = false;
  int kills = 0;
  int deaths = 0;
};

/// Cooperative multi-task gridworld. Tasks differ in the agents' unit
/// combination and spawn pattern; agents see only egocentric local features.
class HuntGrid {
 public:
  explicit HuntGrid(EnvConfig cfg);

  const EnvConfig& config() const { return cfg_; }
  const EnvSpec& spec() const { return spec_; }

  /// Draws a task uniformly, a ring offset and (Reflected only) a flip with probability 1/2.
  void reset(Rng& rng);
  /// Deterministic placement used by reset; `enemy_order` permutes the center cells.
  void reset_to(int task_index, int ring_offset, bool flip, std::span<const int> enemy_order = {});

  StepResult step(std::span<const int> actions);

  const EnvState& state() const { return state_; }
  /// Replaces the state wholesale (tests construct scenarios this way).
  void set_state(EnvState s) { state_ = std::move(s); }

  nn::Matrix<float> observations() const;  // n x obs_len
  std::vector<float> global_state() const;  // state_len
  nn::Matrix<float> avail_actions() const;  // n x n_actions, 1 = available
  std::vector<float> observation(int agent) const;

  /// Boundary ring cells in clockwise order starting at (0, 0).
  std::vector<std::pair<int, int>> ring_cells() const;
  double reward_scale() const;

 private:
  bool occupied(int x, int y) const;

  EnvConfig cfg_;
  EnvSpec spec_;
  EnvState state_;
};

int chebyshev(const Entity& a, const Entity& b);

/// One JSON object per line describing a step (for debugging episodes).
void write_step_json(std::ostream& out, const EnvState& s, std::span<const int> actions, const StepResult& r);

}  // namespace trama
