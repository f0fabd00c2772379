#include "trama/huntgrid.hpp"

#include <algorithm>
#include <cstdlib>
#include <json.hpp>
#include <ostream>

#include "trama/errors.hpp"

namespace trama {

UnitStats unit_stats(UnitType t) {
  switch (t) {
    case UnitType::kStriker:
      return {3, 2, 1};
    case UnitType::kRanger:
      return {2, 1, 2};
    case UnitType::kTank:
      return {5, 1, 1};
  }
  throw ConfigError("unknown unit type");
}

char unit_letter(UnitType t) {
  switch (t) {
    case UnitType::kStriker:
      return 'S';
    case UnitType::kRanger:
      return 'R';
    case UnitType::kTank:
      return 'T';
  }
  return '?';
}

std::string TaskSpec::combination_string() const {
  std::string s;
  for (auto u : combination) s.push_back(unit_letter(u));
  return s;
}

TaskSpec TaskSpec::parse(int id, const std::string& combination, SpawnPattern spawn) {
  TaskSpec t;
  t.id = id;
  t.spawn = spawn;
  for (char c : combination) {
    switch (c) {
      case 'S':
        t.combination.push_back(UnitType::kStriker);
        break;
      case 'R':
        t.combination.push_back(UnitType::kRanger);
        break;
      case 'T':
        t.combination.push_back(UnitType::kTank);
        break;
      default:
        throw ConfigError("unit combination '" + combination + "': unknown unit letter '" + std::string(1, c) + "'");
    }
  }
  return t;
}

SpawnPattern parse_spawn(const std::string& s) {
  if (s == "surround") return SpawnPattern::kSurround;
  if (s == "reflected") return SpawnPattern::kReflected;
  throw ConfigError("unknown spawn pattern '" + s + "' (expected surround or reflected)");
}

std::string spawn_name(SpawnPattern p) { return p == SpawnPattern::kSurround ? "surround" : "reflected"; }

EnvSpec env_spec(const EnvConfig& cfg) {
  EnvSpec s;
  s.n_agents = cfg.n_agents;
  s.n_enemies = cfg.n_enemies;
  s.obs_len = kUnitTypeCount + 2 + (cfg.n_agents + cfg.n_enemies - 1) * (4 + kUnitTypeCount + 1);
  s.state_len = cfg.n_agents * (4 + kUnitTypeCount) + cfg.n_enemies * 4 + 1;
  s.n_actions = kAttackBase + cfg.n_enemies;
  s.t_max = cfg.t_max;
  return s;
}

void validate(const EnvConfig& cfg) {
  if (cfg.n_agents < 1) throw ConfigError("n_agents must be >= 1");
  if (cfg.n_enemies < 0 || cfg.n_enemies > 4) throw ConfigError("n_enemies must be in [0, 4] (center 2x2 block)");
  if (cfg.grid_size < 4 || cfg.grid_size % 2 != 0) throw ConfigError("grid_size must be even and >= 4");
  if (cfg.n_agents > 4 * (cfg.grid_size - 1)) throw ConfigError("n_agents exceeds boundary ring cells");
  if (cfg.sight_radius < 1) throw ConfigError("sight_radius must be >= 1");
  if (cfg.t_max < 1) throw ConfigError("t_max must be >= 1");
  if (cfg.enemy_hp < 1 || cfg.enemy_damage < 1 || cfg.enemy_range < 1) throw ConfigError("enemy stats must be positive");
  if (cfg.tasks.empty()) throw ConfigError("task set must be nonempty");
  for (const auto& t : cfg.tasks) {
    if (static_cast<int>(t.combination.size()) != cfg.n_agents) {
      throw ConfigError("task " + std::to_string(t.id) + ": combination '" + t.combination_string() + "' has " +
                        std::to_string(t.combination.size()) + " units, expected " + std::to_string(cfg.n_agents));
    }
  }
}

int chebyshev(const Entity& a, const Entity& b) { return std::max(std::abs(a.x - b.x), std::abs(a.y - b.y)); }

HuntGrid::HuntGrid(EnvConfig cfg) : cfg_(std::move(cfg)) {
  validate(cfg_);
  spec_ = env_spec(cfg_);
}

double HuntGrid::reward_scale() const { return (200.0 + 10.0 * cfg_.n_enemies) / 20.0; }

std::vector<std::pair<int, int>> HuntGrid::ring_cells() const {
  const int g = cfg_.grid_size;
  std::vector<std::pair<int, int>> ring;
  for (int x = 0; x < g; ++x) ring.emplace_back(x, 0);
  for (int y = 1; y < g; ++y) ring.emplace_back(g - 1, y);
  for (int x = g - 2; x >= 0; --x) ring.emplace_back(x, g - 1);
  for (int y = g - 2; y >= 1; --y) ring.emplace_back(0, y);
  return ring;
}

void HuntGrid::reset(Rng& rng) {
  const int task = static_cast<int>(rng.uniform_int(cfg_.tasks.size()));
  const int offset = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(4 * (cfg_.grid_size - 1))));
  std::vector<int> order{0, 1, 2, 3};
  shuffle(order.begin(), order.end(), rng);
  bool flip = false;
  if (cfg_.tasks[task].spawn == SpawnPattern::kReflected) flip = rng.uniform() < 0.5;
  reset_to(task, offset, flip, order);
}

void HuntGrid::reset_to(int task_index, int ring_offset, bool flip, std::span<const int> enemy_order) {
  if (task_index < 0 || task_index >= static_cast<int>(cfg_.tasks.size())) {
    throw PreconditionError("reset_to: task index out of range");
  }
  const auto& task = cfg_.tasks[task_index];
  const int g = cfg_.grid_size;
  const auto ring = ring_cells();
  const int L = static_cast<int>(ring.size());
  const int spacing = L / cfg_.n_agents;

  EnvState s;
  s.task_index = task_index;
  s.flipped = flip;
  auto place_x = [&](int x) { return flip ? g - 1 - x : x; };

  for (int i = 0; i < cfg_.n_agents; ++i) {
    const auto [x, y] = ring[static_cast<std::size_t>(((ring_offset % L + L) % L + i * spacing) % L)];
    const auto stats = unit_stats(task.combination[static_cast<std::size_t>(i)]);
    Entity e;
    e.x = place_x(x);
    e.y = y;
    e.hp = e.max_hp = stats.hp;
    e.damage = stats.damage;
    e.range = stats.range;
    e.type = task.combination[static_cast<std::size_t>(i)];
    e.alive = true;
    s.agents.push_back(e);
  }
  const int c = g / 2 - 1;
  const std::pair<int, int> center[4] = {{c, c}, {c + 1, c}, {c, c + 1}, {c + 1, c + 1}};
  for (int j = 0; j < cfg_.n_enemies; ++j) {
    const int slot = enemy_order.empty() ? j : enemy_order[static_cast<std::size_t>(j)];
    Entity e;
    e.x = place_x(center[slot].first);
    e.y = center[slot].second;
    e.hp = e.max_hp = cfg_.enemy_hp;
    e.damage = cfg_.enemy_damage;
    e.range = cfg_.enemy_range;
    e.alive = true;
    s.enemies.push_back(e);
  }
  state_ = std::move(s);
}

bool HuntGrid::occupied(int x, int y) const {
  for (const auto& a : state_.agents) {
    if (a.alive && a.x == x && a.y == y) return true;
  }
  for (const auto& e : state_.enemies) {
    if (e.alive && e.x == x && e.y == y) return true;
  }
  return false;
}

StepResult HuntGrid::step(std::span<const int> actions) {
  if (state_.done) throw PreconditionError("step: episode is over");
  if (static_cast<int>(actions.size()) != cfg_.n_agents) throw PreconditionError("step: need one action per agent");
  for (int a : actions) {
    if (a < 0 || a >= spec_.n_actions) throw PreconditionError("step: malformed action index " + std::to_string(a));
  }
  const int g = cfg_.grid_size;
  auto in_bounds = [g](int x, int y) { return x >= 0 && y >= 0 && x < g && y < g; };
  static constexpr int kDx[5] = {0, 0, 0, -1, 1};
  static constexpr int kDy[5] = {0, -1, 1, 0, 0};

  StepResult res;
  // Agents move in index order; a blocked move is a stay.
  for (int i = 0; i < cfg_.n_agents; ++i) {
    auto& ag = state_.agents[static_cast<std::size_t>(i)];
    const int a = actions[static_cast<std::size_t>(i)];
    if (!ag.alive || a < kUp || a > kRight) continue;
    const int nx = ag.x + kDx[a];
    const int ny = ag.y + kDy[a];
    if (in_bounds(nx, ny) && !occupied(nx, ny)) {
      ag.x = nx;
      ag.y = ny;
    }
  }
  // Attacks land simultaneously.
  for (int i = 0; i < cfg_.n_agents; ++i) {
    const auto& ag = state_.agents[static_cast<std::size_t>(i)];
    const int a = actions[static_cast<std::size_t>(i)];
    if (!ag.alive || a < kAttackBase) continue;
    auto& en = state_.enemies[static_cast<std::size_t>(a - kAttackBase)];
    if (en.alive && chebyshev(ag, en) <= ag.range) en.hp -= ag.damage;
  }
  for (auto& en : state_.enemies) {
    if (en.alive && en.hp <= 0) {
      en.alive = false;
      en.hp = 0;
      ++res.kills;
    }
  }
  // Scripted enemies: hit the nearest living agent in range, otherwise step toward it.
  for (auto& en : state_.enemies) {
    if (!en.alive) continue;
    int target = -1;
    int best = 0;
    for (int i = 0; i < cfg_.n_agents; ++i) {
      const auto& ag = state_.agents[static_cast<std::size_t>(i)];
      if (!ag.alive) continue;
      const int d = chebyshev(ag, en);
      if (target < 0 || d < best) {
        target = i;
        best = d;
      }
    }
    if (target < 0) break;
    auto& ag = state_.agents[static_cast<std::size_t>(target)];
    if (best <= en.range) {
      ag.hp -= en.damage;
      if (ag.hp <= 0) {
        ag.hp = 0;
        ag.alive = false;
        ++res.deaths;
      }
      continue;
    }
    const int dx = (ag.x > en.x) - (ag.x < en.x);
    const int dy = (ag.y > en.y) - (ag.y < en.y);
    const bool x_first = std::abs(ag.x - en.x) >= std::abs(ag.y - en.y);
    const std::pair<int, int> tries[2] = {x_first ? std::pair{dx, 0} : std::pair{0, dy},
                                          x_first ? std::pair{0, dy} : std::pair{dx, 0}};
    for (const auto& [mx, my] : tries) {
      if (mx == 0 && my == 0) continue;
      if (in_bounds(en.x + mx, en.y + my) && !occupied(en.x + mx, en.y + my)) {
        en.x += mx;
        en.y += my;
        break;
      }
    }
  }

  ++state_.t;
  const bool enemies_dead = std::none_of(state_.enemies.begin(), state_.enemies.end(), [](const Entity& e) { return e.alive; });
  const bool agents_dead = std::none_of(state_.agents.begin(), state_.agents.end(), [](const Entity& e) { return e.alive; });
  res.raw_reward = 10.0 * res.kills - 5.0 * res.deaths + (enemies_dead ? 200.0 : 0.0);
  res.reward = res.raw_reward / reward_scale();
  state_.won = enemies_dead;
  state_.done = enemies_dead || agents_dead || state_.t >= cfg_.t_max;
  res.done = state_.done;
  return res;
}

std::vector<float> HuntGrid::observation(int agent) const {
  std::vector<float> o(static_cast<std::size_t>(spec_.obs_len), 0.0f);
  const auto& me = state_.agents.at(static_cast<std::size_t>(agent));
  if (!me.alive) return o;
  const bool types = cfg_.observe_unit_type;
  std::size_t k = 0;
  if (types) o[k + static_cast<std::size_t>(me.type)] = 1.0f;
  k += kUnitTypeCount;
  o[k++] = static_cast<float>(me.hp) / static_cast<float>(me.max_hp);
  o[k++] = static_cast<float>(state_.t) / static_cast<float>(cfg_.t_max);
  auto write = [&](const Entity& e, bool ally) {
    if (e.alive && chebyshev(me, e) <= cfg_.sight_radius) {
      o[k] = 1.0f;
      o[k + 1] = static_cast<float>(e.x - me.x) / 4.0f;
      o[k + 2] = static_cast<float>(e.y - me.y) / 4.0f;
      o[k + 3] = static_cast<float>(e.hp) / static_cast<float>(e.max_hp);
      if (ally && types) o[k + 4 + static_cast<std::size_t>(e.type)] = 1.0f;
      o[k + 4 + kUnitTypeCount] = ally ? 1.0f : 0.0f;
    }
    k += 4 + kUnitTypeCount + 1;
  };
  for (int i = 0; i < cfg_.n_agents; ++i) {
    if (i != agent) write(state_.agents[static_cast<std::size_t>(i)], true);
  }
  for (const auto& e : state_.enemies) write(e, false);
  return o;
}

nn::Matrix<float> HuntGrid::observations() const {
  nn::Matrix<float> m(cfg_.n_agents, spec_.obs_len);
  for (int i = 0; i < cfg_.n_agents; ++i) {
    const auto o = observation(i);
    m.row(i) = Eigen::Map<const Eigen::RowVectorXf>(o.data(), static_cast<Eigen::Index>(o.size()));
  }
  return m;
}

std::vector<float> HuntGrid::global_state() const {
  std::vector<float> s;
  s.reserve(static_cast<std::size_t>(spec_.state_len));
  const float span = static_cast<float>(cfg_.grid_size - 1);
  for (const auto& a : state_.agents) {
    s.push_back(a.alive ? 1.0f : 0.0f);
    s.push_back(static_cast<float>(a.x) / span);
    s.push_back(static_cast<float>(a.y) / span);
    s.push_back(static_cast<float>(a.hp) / static_cast<float>(a.max_hp));
    for (int u = 0; u < kUnitTypeCount; ++u) s.push_back(static_cast<int>(a.type) == u ? 1.0f : 0.0f);
  }
  for (const auto& e : state_.enemies) {
    s.push_back(e.alive ? 1.0f : 0.0f);
    s.push_back(static_cast<float>(e.x) / span);
    s.push_back(static_cast<float>(e.y) / span);
    s.push_back(static_cast<float>(e.hp) / static_cast<float>(e.max_hp));
  }
  s.push_back(static_cast<float>(state_.t) / static_cast<float>(cfg_.t_max));
  return s;
}

nn::Matrix<float> HuntGrid::avail_actions() const {
  nn::Matrix<float> m = nn::Matrix<float>::Zero(cfg_.n_agents, spec_.n_actions);
  const int g = cfg_.grid_size;
  for (int i = 0; i < cfg_.n_agents; ++i) {
    const auto& ag = state_.agents[static_cast<std::size_t>(i)];
    m(i, kStay) = 1.0f;
    if (!ag.alive) continue;
    if (ag.y > 0) m(i, kUp) = 1.0f;
    if (ag.y < g - 1) m(i, kDown) = 1.0f;
    if (ag.x > 0) m(i, kLeft) = 1.0f;
    if (ag.x < g - 1) m(i, kRight) = 1.0f;
    for (int j = 0; j < cfg_.n_enemies; ++j) {
      const auto& en = state_.enemies[static_cast<std::size_t>(j)];
      if (en.alive && chebyshev(ag, en) <= ag.range) m(i, kAttackBase + j) = 1.0f;
    }
  }
  return m;
}

void write_step_json(std::ostream& out, const EnvState& s, std::span<const int> actions, const StepResult& r) {
  nlohmann::json j;
  j["t"] = s.t;
  j["task_index"] = s.task_index;
  j["actions"] = std::vector<int>(actions.begin(), actions.end());
  j["reward"] = r.reward;
  j["raw_reward"] = r.raw_reward;
  j["done"] = r.done;
  auto entity = [](const Entity& e) { return nlohmann::json{{"x", e.x}, {"y", e.y}, {"hp", e.hp}, {"alive", e.alive}}; };
  for (const auto& a : s.agents) j["agents"].push_back(entity(a));
  for (const auto& e : s.enemies) j["enemies"].push_back(entity(e));
  out << j.dump() << '\n';
}

}  // namespace trama
