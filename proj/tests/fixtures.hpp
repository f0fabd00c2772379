#pragma once

#include "trama/replay.hpp"
#include "trama/rng.hpp"

namespace trama::testing {

/// Random but shape-valid trajectory.
inline Trajectory make_trajectory(int length, int n_agents, Rng& rng, int state_len = 6, int obs_len = 5, int n_actions = 3) {
  Trajectory t;
  t.length = length;
  t.n_agents = n_agents;
  t.states = nn::Matrix<float>(length + 1, state_len);
  for (auto& v : t.states.reshaped()) v = static_cast<float>(rng.uniform(-1, 1));
  t.obs = nn::Matrix<float>((length + 1) * n_agents, obs_len);
  for (auto& v : t.obs.reshaped()) v = static_cast<float>(rng.uniform(-1, 1));
  t.avail = nn::Matrix<float>::Ones((length + 1) * n_agents, n_actions);
  for (int i = 0; i < length * n_agents; ++i) t.actions.push_back(static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n_actions))));
  for (int i = 0; i < length; ++i) t.rewards.push_back(static_cast<float>(rng.uniform()));
  t.alive.assign(static_cast<std::size_t>((length + 1) * n_agents), 1);
  t.codes.assign(static_cast<std::size_t>(length + 1), 0);
  return t;
}

}  // namespace trama::testing
