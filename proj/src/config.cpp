#include "trama/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "trama/errors.hpp"

namespace trama {

using nlohmann::json;

const std::vector<std::string>& known_flags() {
  static const std::vector<std::string> flags{"no_init", "jt_only", "one_hot", "vdn", "adaptive_ncl", "zero_repr"};
  return flags;
}

bool is_known_flag(const std::string& flag) {
  const auto& f = known_flags();
  return std::find(f.begin(), f.end(), flag) != f.end();
}

bool TrainConfig::has_flag(const std::string& f) const { return std::find(flags.begin(), flags.end(), f) != flags.end(); }

VqConfig TrainConfig::effective_vq() const {
  VqConfig v = vq;
  v.t_max = env.t_max;
  if (has_flag("jt_only") && v.coverage == Coverage::kClassTime) v.coverage = Coverage::kTime;
  return v;
}

int TrainConfig::max_ncl() const {
  if (!has_flag("adaptive_ncl")) return n_cl;
  int m = n_cl;
  for (int c : ncl_candidates) m = std::max(m, c);
  return m;
}

PolicyConfig TrainConfig::effective_policy() const {
  PolicyConfig p = policy;
  const auto spec = env_spec(env);
  p.n_agents = spec.n_agents;
  p.obs_len = spec.obs_len;
  p.state_len = spec.state_len;
  p.n_actions = spec.n_actions;
  p.n_cl = max_ncl();
  p.gamma = gamma;
  if (has_flag("one_hot")) p.repr = ReprMode::kOneHot;
  if (has_flag("zero_repr")) p.repr = ReprMode::kZeros;
  if (has_flag("vdn")) p.mixer = MixerMode::kVdn;
  return p;
}

namespace {

[[noreturn]] void fail(const std::string& field, const std::string& what) { throw ConfigError(field + ": " + what); }

void check_positive(const std::string& field, double v) {
  if (!(v > 0)) fail(field, "must be positive");
}

std::string coverage_name(Coverage c) {
  switch (c) {
    case Coverage::kClassTime: return "class_time";
    case Coverage::kTime: return "time";
    case Coverage::kOff: return "off";
  }
  return "class_time";
}

std::string repr_name(ReprMode r) {
  switch (r) {
    case ReprMode::kLearned: return "learned";
    case ReprMode::kOneHot: return "one_hot";
    case ReprMode::kZeros: return "zeros";
  }
  return "learned";
}

// Rejects unknown keys and type changes relative to the defaults table.
void check_schema(const json& user, const json& defaults, const std::string& path) {
  if (!user.is_object()) fail(path.empty() ? "config" : path, "expected an object");
  for (const auto& [key, value] : user.items()) {
    const std::string field = path.empty() ? key : path + "." + key;
    if (!defaults.contains(key)) fail(field, "unknown field");
    const auto& d = defaults.at(key);
    if (d.is_null()) continue;  // required, checked when read
    if (d.is_object()) {
      check_schema(value, d, field);
    } else if (d.is_boolean() && !value.is_boolean()) {
      fail(field, "expected a boolean");
    } else if (d.is_number_integer() && !value.is_number_integer()) {
      fail(field, "expected an integer");
    } else if (d.is_number_float() && !value.is_number()) {
      fail(field, "expected a number");
    } else if (d.is_string() && !value.is_string()) {
      fail(field, "expected a string");
    } else if (d.is_array() && !value.is_array()) {
      fail(field, "expected a list");
    }
  }
}

template <typename T>
T read(const json& j, const std::string& field) {
  const json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = field.find('.', start);
    const auto key = field.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->contains(key) || node->at(key).is_null()) fail(field, "missing required field");
    node = &node->at(key);
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  try {
    return node->get<T>();
  } catch (const json::exception&) {
    fail(field, "wrong type");
  }
}

}  // namespace

json default_config_json() {
  return json{
      {"seed", 0},
      {"t_env", 300000},
      {"n_cl", nullptr},
      {"tasks", nullptr},
      {"env",
       {{"n_agents", 4},
        {"n_enemies", 4},
        {"grid_size", 8},
        {"sight_radius", 2},
        {"t_max", 50},
        {"enemy_hp", 3},
        {"enemy_damage", 1},
        {"enemy_range", 1},
        {"observe_unit_type", true}}},
      {"epsilon", {{"start", 1.0}, {"finish", 0.05}, {"anneal_steps", 50000}}},
      {"batch_size", 32},
      {"buffer_capacity", 5000},
      {"cluster_samples", 512},
      {"cluster_interval", 500},
      {"vq_interval", 10},
      {"target_interval", 200},
      {"gamma", 0.99},
      {"lr", 5e-4},
      {"clip_norm", 10.0},
      {"lambda_zeta", 0.1},
      {"vq",
       {{"n_c", 256},
        {"d", 4},
        {"hidden", 64},
        {"lambda_vq", 0.25},
        {"lambda_commit", 0.125},
        {"lambda_cvr", 0.125},
        {"coverage", "class_time"},
        {"batch", 32}}},
      {"policy",
       {{"pred_hidden", 64},
        {"q_hidden", 64},
        {"repr_hidden", 32},
        {"repr_dim", 16},
        {"mixer_embed", 32},
        {"repr", "learned"},
        {"mixer", "qmix"},
        {"teacher_forcing", false},
        {"include_dead", false},
        {"sample_class", false}}},
      {"classifier", {{"hidden", 64}, {"epochs", 50}, {"batch", 64}, {"lr", 5e-4}}},
      {"clustering",
       {{"restarts", 10},
        {"mean_embedding", false},
        {"ncl_candidates", json::array({2, 3, 4})},
        {"refresh_indices", "on_codebook_update"}}},
      {"eval_every", 10000},
      {"eval_episodes", 32},
      {"log_interval", 10},
      {"checkpoint_every", 0},
      {"checkpoint_buffer", true},
      {"write_predictions", true},
      {"write_embeddings", true},
      {"flags", json::array()},
  };
}

TrainConfig parse_config(const json& user) {
  const json defaults = default_config_json();
  check_schema(user, defaults, "");
  json j = defaults;
  j.merge_patch(user);

  TrainConfig c;
  c.seed = read<std::uint64_t>(j, "seed");
  c.t_env = read<std::int64_t>(j, "t_env");
  c.n_cl = read<int>(j, "n_cl");

  c.env.n_agents = read<int>(j, "env.n_agents");
  c.env.n_enemies = read<int>(j, "env.n_enemies");
  c.env.grid_size = read<int>(j, "env.grid_size");
  c.env.sight_radius = read<int>(j, "env.sight_radius");
  c.env.t_max = read<int>(j, "env.t_max");
  c.env.enemy_hp = read<int>(j, "env.enemy_hp");
  c.env.enemy_damage = read<int>(j, "env.enemy_damage");
  c.env.enemy_range = read<int>(j, "env.enemy_range");
  c.env.observe_unit_type = read<bool>(j, "env.observe_unit_type");

  const auto& tasks = j.at("tasks");
  if (tasks.is_null()) fail("tasks", "missing required field");
  if (!tasks.is_array() || tasks.empty()) fail("tasks", "expected a nonempty list");
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const std::string field = "tasks[" + std::to_string(i) + "]";
    const auto& t = tasks[i];
    std::string combo;
    std::string spawn = "surround";
    if (t.is_string()) {
      combo = t.get<std::string>();
      if (const auto colon = combo.find(':'); colon != std::string::npos) {
        spawn = combo.substr(colon + 1);
        combo.resize(colon);
      }
    } else if (t.is_object()) {
      for (const auto& [key, value] : t.items()) {
        if (key != "combination" && key != "spawn") fail(field + "." + key, "unknown field");
        if (!value.is_string()) fail(field + "." + key, "expected a string");
      }
      if (!t.contains("combination")) fail(field + ".combination", "missing required field");
      combo = t.at("combination").get<std::string>();
      if (t.contains("spawn")) spawn = t.at("spawn").get<std::string>();
    } else {
      fail(field, "expected a combination string or an object");
    }
    try {
      c.env.tasks.push_back(TaskSpec::parse(static_cast<int>(i), combo, parse_spawn(spawn)));
    } catch (const ConfigError& e) {
      fail(field, e.what());
    }
    if (static_cast<int>(c.env.tasks.back().combination.size()) != c.env.n_agents) {
      fail(field, "combination '" + combo + "' has " + std::to_string(combo.size()) + " units, env.n_agents is " +
                      std::to_string(c.env.n_agents));
    }
  }

  c.epsilon_start = read<double>(j, "epsilon.start");
  c.epsilon_finish = read<double>(j, "epsilon.finish");
  c.epsilon_anneal = read<std::int64_t>(j, "epsilon.anneal_steps");
  c.batch_size = read<int>(j, "batch_size");
  c.buffer_capacity = read<int>(j, "buffer_capacity");
  c.cluster_samples = read<int>(j, "cluster_samples");
  c.cluster_interval = read<int>(j, "cluster_interval");
  c.vq_interval = read<int>(j, "vq_interval");
  c.target_interval = read<int>(j, "target_interval");
  c.gamma = read<double>(j, "gamma");
  c.lr = read<double>(j, "lr");
  c.clip_norm = read<double>(j, "clip_norm");
  c.lambda_zeta = read<double>(j, "lambda_zeta");

  c.vq.n_c = read<int>(j, "vq.n_c");
  c.vq.d = read<int>(j, "vq.d");
  c.vq.hidden = read<int>(j, "vq.hidden");
  c.vq.lambda_vq = read<double>(j, "vq.lambda_vq");
  c.vq.lambda_commit = read<double>(j, "vq.lambda_commit");
  c.vq.lambda_cvr = read<double>(j, "vq.lambda_cvr");
  const auto coverage = read<std::string>(j, "vq.coverage");
  if (coverage == "class_time") c.vq.coverage = Coverage::kClassTime;
  else if (coverage == "time") c.vq.coverage = Coverage::kTime;
  else if (coverage == "off") c.vq.coverage = Coverage::kOff;
  else fail("vq.coverage", "expected class_time, time or off");
  c.vq_batch = read<int>(j, "vq.batch");

  c.policy.pred_hidden = read<int>(j, "policy.pred_hidden");
  c.policy.q_hidden = read<int>(j, "policy.q_hidden");
  c.policy.repr_hidden = read<int>(j, "policy.repr_hidden");
  c.policy.repr_dim = read<int>(j, "policy.repr_dim");
  c.policy.mixer_embed = read<int>(j, "policy.mixer_embed");
  const auto repr = read<std::string>(j, "policy.repr");
  if (repr == "learned") c.policy.repr = ReprMode::kLearned;
  else if (repr == "one_hot") c.policy.repr = ReprMode::kOneHot;
  else if (repr == "zeros") c.policy.repr = ReprMode::kZeros;
  else fail("policy.repr", "expected learned, one_hot or zeros");
  const auto mixer = read<std::string>(j, "policy.mixer");
  if (mixer == "qmix") c.policy.mixer = MixerMode::kQmix;
  else if (mixer == "vdn") c.policy.mixer = MixerMode::kVdn;
  else fail("policy.mixer", "expected qmix or vdn");
  c.policy.teacher_forcing = read<bool>(j, "policy.teacher_forcing");
  c.policy.include_dead = read<bool>(j, "policy.include_dead");
  c.sample_class = read<bool>(j, "policy.sample_class");

  c.classifier.hidden = read<int>(j, "classifier.hidden");
  c.classifier.epochs = read<int>(j, "classifier.epochs");
  c.classifier.batch = read<int>(j, "classifier.batch");
  c.classifier.adam.lr = read<double>(j, "classifier.lr");

  c.kmeans_restarts = read<int>(j, "clustering.restarts");
  c.mean_embedding = read<bool>(j, "clustering.mean_embedding");
  c.ncl_candidates = read<std::vector<int>>(j, "clustering.ncl_candidates");
  const auto refresh = read<std::string>(j, "clustering.refresh_indices");
  if (refresh == "never") c.refresh_indices = RefreshIndices::kNever;
  else if (refresh == "on_codebook_update") c.refresh_indices = RefreshIndices::kOnCodebookUpdate;
  else fail("clustering.refresh_indices", "expected never or on_codebook_update");

  c.eval_every = read<std::int64_t>(j, "eval_every");
  c.eval_episodes = read<int>(j, "eval_episodes");
  c.log_interval = read<int>(j, "log_interval");
  c.checkpoint_every = read<std::int64_t>(j, "checkpoint_every");
  c.checkpoint_buffer = read<bool>(j, "checkpoint_buffer");
  c.write_predictions = read<bool>(j, "write_predictions");
  c.write_embeddings = read<bool>(j, "write_embeddings");
  c.flags = read<std::vector<std::string>>(j, "flags");

  c.validate();
  return c;
}

void TrainConfig::validate() const {
  if (n_cl < 1) fail("n_cl", "must be at least 1");
  if (t_env < 0) fail("t_env", "must be nonnegative");
  try {
    trama::validate(env);
  } catch (const ConfigError& e) {
    fail("env", e.what());
  }
  if (epsilon_finish < 0.0 || epsilon_start > 1.0 || epsilon_finish > epsilon_start) {
    fail("epsilon", "need 0 <= finish <= start <= 1");
  }
  if (epsilon_anneal < 0) fail("epsilon.anneal_steps", "must be nonnegative");
  check_positive("batch_size", batch_size);
  check_positive("buffer_capacity", buffer_capacity);
  check_positive("cluster_samples", cluster_samples);
  check_positive("cluster_interval", cluster_interval);
  check_positive("vq_interval", vq_interval);
  check_positive("target_interval", target_interval);
  if (gamma < 0.0 || gamma > 1.0) fail("gamma", "must lie in [0, 1]");
  check_positive("lr", lr);
  check_positive("clip_norm", clip_norm);
  if (lambda_zeta < 0.0) fail("lambda_zeta", "must be nonnegative");
  check_positive("vq.n_c", vq.n_c);
  check_positive("vq.d", vq.d);
  check_positive("vq.hidden", vq.hidden);
  check_positive("vq.batch", vq_batch);
  if (vq.lambda_vq < 0 || vq.lambda_commit < 0 || vq.lambda_cvr < 0) fail("vq", "loss weights must be nonnegative");
  if (max_ncl() > vq.n_c) fail("n_cl", "exceeds vq.n_c");
  check_positive("policy.pred_hidden", policy.pred_hidden);
  check_positive("policy.q_hidden", policy.q_hidden);
  check_positive("policy.repr_hidden", policy.repr_hidden);
  check_positive("policy.repr_dim", policy.repr_dim);
  check_positive("policy.mixer_embed", policy.mixer_embed);
  check_positive("classifier.hidden", classifier.hidden);
  check_positive("classifier.epochs", classifier.epochs);
  check_positive("classifier.batch", classifier.batch);
  check_positive("classifier.lr", classifier.adam.lr);
  check_positive("clustering.restarts", kmeans_restarts);
  if (has_flag("adaptive_ncl")) {
    if (ncl_candidates.empty()) fail("clustering.ncl_candidates", "must be nonempty with adaptive_ncl");
    for (int k : ncl_candidates) {
      if (k < 2) fail("clustering.ncl_candidates", "candidates must be at least 2");
    }
  }
  if (eval_every < 0) fail("eval_every", "must be nonnegative");
  if (eval_episodes < 0) fail("eval_episodes", "must be nonnegative");
  check_positive("log_interval", log_interval);
  if (checkpoint_every < 0) fail("checkpoint_every", "must be nonnegative");
  for (const auto& f : flags) {
    if (!is_known_flag(f)) fail("flags", "unknown flag '" + f + "'");
  }
  if (has_flag("one_hot") && has_flag("zero_repr")) fail("flags", "one_hot and zero_repr are exclusive");
}

TrainConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return parse_config(j);
}

TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

json to_json(const TrainConfig& c) {
  json j = default_config_json();
  j["seed"] = c.seed;
  j["t_env"] = c.t_env;
  j["n_cl"] = c.n_cl;
  json tasks = json::array();
  for (const auto& t : c.env.tasks) tasks.push_back({{"combination", t.combination_string()}, {"spawn", spawn_name(t.spawn)}});
  j["tasks"] = tasks;
  j["env"] = {{"n_agents", c.env.n_agents},       {"n_enemies", c.env.n_enemies},     {"grid_size", c.env.grid_size},
              {"sight_radius", c.env.sight_radius}, {"t_max", c.env.t_max},             {"enemy_hp", c.env.enemy_hp},
              {"enemy_damage", c.env.enemy_damage}, {"enemy_range", c.env.enemy_range}, {"observe_unit_type", c.env.observe_unit_type}};
  j["epsilon"] = {{"start", c.epsilon_start}, {"finish", c.epsilon_finish}, {"anneal_steps", c.epsilon_anneal}};
  j["batch_size"] = c.batch_size;
  j["buffer_capacity"] = c.buffer_capacity;
  j["cluster_samples"] = c.cluster_samples;
  j["cluster_interval"] = c.cluster_interval;
  j["vq_interval"] = c.vq_interval;
  j["target_interval"] = c.target_interval;
  j["gamma"] = c.gamma;
  j["lr"] = c.lr;
  j["clip_norm"] = c.clip_norm;
  j["lambda_zeta"] = c.lambda_zeta;
  j["vq"] = {{"n_c", c.vq.n_c},
             {"d", c.vq.d},
             {"hidden", c.vq.hidden},
             {"lambda_vq", c.vq.lambda_vq},
             {"lambda_commit", c.vq.lambda_commit},
             {"lambda_cvr", c.vq.lambda_cvr},
             {"coverage", coverage_name(c.vq.coverage)},
             {"batch", c.vq_batch}};
  j["policy"] = {{"pred_hidden", c.policy.pred_hidden},
                 {"q_hidden", c.policy.q_hidden},
                 {"repr_hidden", c.policy.repr_hidden},
                 {"repr_dim", c.policy.repr_dim},
                 {"mixer_embed", c.policy.mixer_embed},
                 {"repr", repr_name(c.policy.repr)},
                 {"mixer", c.policy.mixer == MixerMode::kVdn ? "vdn" : "qmix"},
                 {"teacher_forcing", c.policy.teacher_forcing},
                 {"include_dead", c.policy.include_dead},
                 {"sample_class", c.sample_class}};
  j["classifier"] = {{"hidden", c.classifier.hidden},
                     {"epochs", c.classifier.epochs},
                     {"batch", c.classifier.batch},
                     {"lr", c.classifier.adam.lr}};
  j["clustering"] = {{"restarts", c.kmeans_restarts},
                     {"mean_embedding", c.mean_embedding},
                     {"ncl_candidates", c.ncl_candidates},
                     {"refresh_indices", c.refresh_indices == RefreshIndices::kNever ? "never" : "on_codebook_update"}};
  j["eval_every"] = c.eval_every;
  j["eval_episodes"] = c.eval_episodes;
  j["log_interval"] = c.log_interval;
  j["checkpoint_every"] = c.checkpoint_every;
  j["checkpoint_buffer"] = c.checkpoint_buffer;
  j["write_predictions"] = c.write_predictions;
  j["write_embeddings"] = c.write_embeddings;
  j["flags"] = c.flags;
  return j;
}

}  // namespace trama
