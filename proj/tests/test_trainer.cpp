#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "trama/checkpoint.hpp"
#include "trama/config.hpp"
#include "trama/errors.hpp"
#include "trama/metrics.hpp"
#include "trama/trainer.hpp"

using namespace trama;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json tiny_json() {
  return json{{"n_cl", 2},
              {"tasks", json::array({"SSSS", "TTRR:reflected"})},
              {"t_env", 600},
              {"env", {{"t_max", 20}}},
              {"batch_size", 8},
              {"buffer_capacity", 200},
              {"cluster_samples", 32},
              {"cluster_interval", 10},
              {"vq_interval", 3},
              {"eval_every", 200},
              {"eval_episodes", 4},
              {"log_interval", 5},
              {"vq", {{"n_c", 32}, {"hidden", 16}, {"batch", 8}}},
              {"policy", {{"pred_hidden", 16}, {"q_hidden", 16}, {"repr_hidden", 8}, {"repr_dim", 4}, {"mixer_embed", 8}}},
              {"classifier", {{"hidden", 16}, {"epochs", 5}}},
              {"clustering", {{"restarts", 3}}}};
}

TrainConfig tiny(json patch = json::object()) {
  json j = tiny_json();
  j.merge_patch(patch);
  return parse_config(j);
}

std::string read_file(const std::string& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("trama_test_" + name);
  fs::remove_all(p);
  return p.string();
}

}  // namespace

TEST(Config, MissingRequiredFieldNamesIt) {
  json j = tiny_json();
  j.erase("n_cl");
  try {
    parse_config(j);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("n_cl"), std::string::npos);
  }
  j = tiny_json();
  j.erase("tasks");
  EXPECT_THROW(parse_config(j), ConfigError);
}

TEST(Config, RejectsUnknownFieldsWrongTypesAndBadValues) {
  auto expect_field = [](json patch, const std::string& field) {
    try {
      tiny(patch);
      ADD_FAILURE() << "accepted " << patch.dump();
    } catch (const ConfigError& e) {
      EXPECT_NE(std::string(e.what()).find(field), std::string::npos) << e.what();
    }
  };
  expect_field({{"bogus", 1}}, "bogus");
  expect_field({{"vq", {{"n_cc", 3}}}}, "vq.n_cc");
  expect_field({{"batch_size", "big"}}, "batch_size");
  expect_field({{"batch_size", 0}}, "batch_size");
  expect_field({{"gamma", 1.5}}, "gamma");
  expect_field({{"flags", {"no_such"}}}, "flags");
  expect_field({{"tasks", {"SSS"}}}, "tasks[0]");
  expect_field({{"vq", {{"coverage", "sometimes"}}}}, "vq.coverage");
  EXPECT_THROW(parse_config_text("{\"n_cl\": 2,\n  \"tasks\": [\"SSSS\"],,}"), ConfigError);
}

TEST(Config, DefaultsAndEchoRoundTrip) {
  auto c = parse_config(json{{"n_cl", 2}, {"tasks", {"SSRT"}}});
  EXPECT_EQ(c.batch_size, 32);
  EXPECT_EQ(c.cluster_samples, 512);
  EXPECT_EQ(c.cluster_interval, 500);
  EXPECT_EQ(c.vq_interval, 10);
  EXPECT_EQ(c.target_interval, 200);
  EXPECT_EQ(c.epsilon_anneal, 50000);
  EXPECT_DOUBLE_EQ(c.lr, 5e-4);
  EXPECT_EQ(c.vq.n_c, 256);
  EXPECT_EQ(c.vq.d, 4);
  EXPECT_EQ(c.env.t_max, 50);
  const json echo = to_json(tiny({{"flags", {"vdn", "no_init"}}, {"seed", 7}}));
  EXPECT_EQ(to_json(parse_config(echo)), echo);
}

TEST(Config, FlagsTouchOnlyTheirComponent) {
  const auto base = tiny();
  const auto vq0 = base.effective_vq();
  const auto p0 = base.effective_policy();
  auto same_policy = [&](const PolicyConfig& p) {
    return p.repr == p0.repr && p.mixer == p0.mixer && p.n_cl == p0.n_cl && p.agent_input() == p0.agent_input();
  };
  const auto no_init = tiny({{"flags", {"no_init"}}});
  EXPECT_EQ(no_init.effective_vq().coverage, vq0.coverage);
  EXPECT_TRUE(same_policy(no_init.effective_policy()));

  const auto jt = tiny({{"flags", {"jt_only"}}});
  EXPECT_EQ(jt.effective_vq().coverage, Coverage::kTime);
  EXPECT_TRUE(same_policy(jt.effective_policy()));

  const auto oh = tiny({{"flags", {"one_hot"}}});
  EXPECT_EQ(oh.effective_vq().coverage, vq0.coverage);
  EXPECT_EQ(oh.effective_policy().repr, ReprMode::kOneHot);
  EXPECT_EQ(oh.effective_policy().mixer, p0.mixer);

  const auto vdn = tiny({{"flags", {"vdn"}}});
  EXPECT_EQ(vdn.effective_policy().mixer, MixerMode::kVdn);
  EXPECT_EQ(vdn.effective_policy().repr, p0.repr);
  EXPECT_EQ(vdn.effective_vq().coverage, vq0.coverage);
}

TEST(Metrics, CumulativeReturnExamples) {
  std::vector<std::pair<std::int64_t, double>> s{{0, 20}, {500, 20}, {1000, 20}};
  EXPECT_DOUBLE_EQ(cumulative_return(s), 1.0);
  for (auto& p : s) p.second = 0;
  EXPECT_DOUBLE_EQ(cumulative_return(s), 0.0);
  s = {{0, 0}, {250, 5}, {1000, 20}};
  EXPECT_DOUBLE_EQ(cumulative_return(s), 0.5);
  EXPECT_THROW(cumulative_return({{0, 1}}), PreconditionError);
}

TEST(Metrics, MonotoneStepsAndCsvRoundTrip) {
  MetricStream m;
  m.append(10, 1, "a", 0.1);
  m.append(10, 1, "b", 1.0 / 3.0);
  m.append(20, 2, "a", -2.5e-7);
  EXPECT_THROW(m.append(15, 3, "a", 0.0), InvariantError);
  std::stringstream ss;
  ss << MetricStream::header() << '\n';
  for (const auto& r : m.rows()) ss << MetricStream::format(r) << '\n';
  auto back = MetricStream::read_csv(ss);
  ASSERT_EQ(back.size(), 3u);
  EXPECT_EQ(back[1].value, 1.0 / 3.0);
  EXPECT_EQ(back[2].value, -2.5e-7);
}

TEST(Trainer, EpsilonSchedule) {
  Trainer t(tiny({{"epsilon", {{"anneal_steps", 1000}}}}));
  EXPECT_DOUBLE_EQ(t.epsilon(), 1.0);
  while (t.env_steps() < 500) t.train_iteration();
  EXPECT_NEAR(t.epsilon(), 1.0 - 0.95 * t.env_steps() / 1000.0, 1e-12);
  while (t.env_steps() < 1000) t.train_iteration();
  EXPECT_DOUBLE_EQ(t.epsilon(), 0.05);
}

TEST(Trainer, EpsilonOneIsUniformOverAvailableActions) {
  Trainer t(tiny());
  Rng rng(3);
  std::vector<double> expected(9, 0.0), observed(9, 0.0);
  for (int e = 0; e < 40; ++e) {
    auto traj = t.run_episode(1.0, true, rng);
    for (int s = 0; s < traj.length; ++s) {
      for (int i = 0; i < traj.n_agents; ++i) {
        const auto row = traj.avail.row(s * traj.n_agents + i);
        const double k = row.sum();
        for (int a = 0; a < 9; ++a) expected[static_cast<std::size_t>(a)] += row(a) / k;
        observed[static_cast<std::size_t>(traj.actions[static_cast<std::size_t>(s * traj.n_agents + i)])] += 1;
        ASSERT_GT(row(traj.actions[static_cast<std::size_t>(s * traj.n_agents + i)]), 0.0f);
      }
    }
  }
  double chi = 0;
  int dof = -1;
  for (int a = 0; a < 9; ++a) {
    if (expected[static_cast<std::size_t>(a)] < 5) continue;
    chi += std::pow(observed[static_cast<std::size_t>(a)] - expected[static_cast<std::size_t>(a)], 2) / expected[static_cast<std::size_t>(a)];
    ++dof;
  }
  ASSERT_GE(dof, 3);
  EXPECT_LT(chi, 20.09);  // 99th percentile for 8 dof bounds every smaller dof too
}

TEST(Trainer, GreedyEpisodesRepeatAndEvalLeavesBufferAlone) {
  Trainer t(tiny());
  Rng a(5), b(5);
  auto x = t.run_episode(0.0, true, a);
  auto y = t.run_episode(0.0, true, b);
  EXPECT_EQ(x.actions, y.actions);
  EXPECT_EQ(x.states, y.states);
  EXPECT_EQ(x.rewards, y.rewards);
  EXPECT_EQ(t.buffer().size(), 0u);
  t.evaluate(3);
  EXPECT_EQ(t.buffer().size(), 0u);
  EXPECT_EQ(t.episodes(), 0);
}

TEST(Trainer, LoopCadenceAndLabelCompleteness) {
  Trainer t(tiny());
  std::int64_t vq_updates = 0;
  while (t.episodes() < 37) {
    const auto before = t.vq().version();
    t.train_iteration();
    vq_updates += t.vq().version() - before;
    if (t.episodes() % 10 == 0) {
      EXPECT_EQ(t.rounds(), t.episodes() / 10);
      EXPECT_EQ(t.buffer().labeled_count(), t.buffer().size());
      for (std::size_t p = 0; p < t.buffer().size(); ++p) {
        const int k = *t.buffer().at(p).label;
        EXPECT_TRUE(k >= 1 && k <= 2);
      }
    }
  }
  EXPECT_EQ(t.rounds(), 3);
  // VQ updates on episodes divisible by 3 once the buffer holds a batch (episode 8 onwards).
  EXPECT_EQ(vq_updates, 10);
  EXPECT_EQ(t.updates(), 37 - 7);
}

TEST(Trainer, NoEnemiesMeansImmediateWin) {
  Trainer t(tiny({{"env", {{"n_enemies", 0}}}}));
  auto r = t.evaluate(2);
  EXPECT_DOUBLE_EQ(r.mean_return, 20.0);
  EXPECT_DOUBLE_EQ(r.win_rate, 1.0);
}

TEST(Trainer, AccuracyTableMatchesUntrainedPredictor) {
  Trainer t(tiny());
  while (t.episodes() < 10) t.train_iteration();  // one clustering round trains the classifier
  ASSERT_TRUE(t.classifier().trained());
  // Restore an untrained predictor head so every agent predicts class 1.
  auto& ps = t.policy().online();
  ps.value(ps.id("pred.out.w0")).setZero();
  ps.value(ps.id("pred.out.b0")).setZero();
  auto r = t.evaluate(24);
  EXPECT_EQ(r.accuracy.size(), 4u);
  double ones = 0;
  for (int k : r.k_bar) ones += k == 1;
  EXPECT_DOUBLE_EQ(r.accuracy[0], ones / 24.0);
  EXPECT_EQ(r.counts[0], 24 * 4);
}

TEST(Trainer, RunIsReproducibleAndResumable) {
  const auto a = temp_dir("run_a");
  const auto b = temp_dir("run_b");
  const auto c = temp_dir("run_c");
  const auto cfg = tiny();
  {
    Trainer t(cfg, a);
    t.run();
  }
  {
    Trainer t(cfg, b);
    t.run();
  }
  EXPECT_EQ(read_file(a + "/metrics.csv"), read_file(b + "/metrics.csv"));
  EXPECT_GT(read_file(a + "/metrics.csv").size(), 100u);
  {
    Trainer t(parse_config_text(read_file(a + "/config_echo.json")), c);
    t.run(250);
  }
  auto resumed = Trainer::resume(c + "/checkpoint.bin", c);
  EXPECT_GE(resumed->env_steps(), 250);
  resumed->run();
  EXPECT_EQ(read_file(a + "/metrics.csv"), read_file(c + "/metrics.csv"));
}

TEST(Trainer, CheckpointVersionMismatchIsReported) {
  const auto dir = temp_dir("version");
  {
    Trainer t(tiny({{"t_env", 40}, {"eval_every", 0}}), dir);
    t.run();
  }
  std::string raw = read_file(dir + "/checkpoint.bin");
  ASSERT_EQ(static_cast<std::uint8_t>(raw[0]), Archive::kVersion);
  raw[0] = static_cast<char>(Archive::kVersion + 1);
  std::ofstream(dir + "/bad.bin", std::ios::binary) << raw;
  EXPECT_THROW(Trainer::from_checkpoint(dir + "/bad.bin"), VersionError);
}
