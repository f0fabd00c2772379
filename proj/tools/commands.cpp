#include "commands.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "trama/errors.hpp"
#include "trama/trainer.hpp"

namespace trama::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::string task_set_json(const std::string& arg) {
  if (fs::exists(arg)) {
    std::ifstream in(arg);
    std::stringstream ss;
    ss << in.rdbuf();
    json j;
    try {
      j = json::parse(ss.str());
    } catch (const json::parse_error& e) {
      throw ConfigError(std::string("task set: ") + e.what());
    }
    if (j.is_object() && j.contains("tasks")) j = j.at("tasks");
    return j.dump();
  }
  json tasks = json::array();
  std::stringstream ss(arg);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto colon = item.find(':');
    if (colon == std::string::npos) {
      tasks.push_back({{"combination", item}, {"spawn", "surround"}});
    } else {
      tasks.push_back({{"combination", item.substr(0, colon)}, {"spawn", item.substr(colon + 1)}});
    }
  }
  return tasks.dump();
}

namespace {

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return json::parse(ss.str());
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
}

TrainConfig build_config(const std::string& path, const TrainOptions& opt) {
  json j = read_json_file(path);
  if (!j.is_object()) throw ConfigError("config: expected an object");
  if (opt.seed) j["seed"] = *opt.seed;
  if (opt.steps) j["t_env"] = *opt.steps;
  if (opt.eval_every) j["eval_every"] = *opt.eval_every;
  if (opt.flags) j["flags"] = *opt.flags;
  if (!opt.task_set.empty()) j["tasks"] = json::parse(task_set_json(opt.task_set));
  return parse_config(j);
}

template <typename F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const VersionError& e) {
    err << "checkpoint error: " << e.what() << '\n';
    return kExitVersion;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

double mu_r(Trainer& t) {
  const auto s = t.metrics().series("eval/return");
  return s.size() >= 2 ? cumulative_return(s) : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

int cmd_train(const TrainOptions& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    std::unique_ptr<Trainer> t;
    if (!opt.resume.empty()) {
      t = Trainer::resume(opt.resume, opt.out);
    } else {
      if (opt.config.empty()) throw ConfigError("--config is required");
      t = std::make_unique<Trainer>(build_config(opt.config, opt), opt.out);
    }
    t->run();
    out << "steps " << t->env_steps() << " episodes " << t->episodes() << " updates " << t->updates() << " rounds "
        << t->rounds() << '\n';
    const auto s = t->metrics().series("eval/return");
    if (s.size() >= 2) out << "mu_r " << cumulative_return(s) << '\n';
    return kExitOk;
  });
}

int cmd_eval(const EvalOptions& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (opt.episodes < 0) throw ConfigError("--episodes must be nonnegative");
    auto t = Trainer::from_checkpoint(opt.checkpoint);
    if (!opt.task_set.empty()) {
      auto tasks = json::parse(task_set_json(opt.task_set));
      json cfg = to_json(t->config());
      cfg["tasks"] = tasks;
      t->set_tasks(parse_config(cfg).env.tasks);
    }
    auto r = t->evaluate(opt.episodes, opt.stream);
    t->write_eval_report(r, out);
    if (!opt.csv.empty()) {
      std::ofstream csv(opt.csv);
      csv << "episode,task,k_bar\n";
      for (std::size_t e = 0; e < r.task_index.size(); ++e) csv << e << ',' << r.task_index[e] << ',' << r.k_bar[e] << '\n';
    }
    return kExitOk;
  });
}

int cmd_ablate(const AblateOptions& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    for (const auto& f : opt.flags) {
      if (!is_known_flag(f)) throw ConfigError("unknown ablation flag '" + f + "'");
    }
    if (opt.seeds.empty()) throw ConfigError("--seeds must name at least one seed");
    std::vector<std::pair<std::string, std::vector<std::string>>> variants{{"trama", {}}};
    for (const auto& f : opt.flags) variants.push_back({f, {f}});
    fs::create_directories(opt.out);
    std::ofstream summary(opt.out + "/summary.csv");
    summary << "variant,seed,mu_r,final_return,final_win_rate,acc_t0,acc_t10,acc_t20,acc_t30\n";
    for (const auto& [name, flags] : variants) {
      for (auto seed : opt.seeds) {
        TrainOptions to;
        to.config = opt.config;
        to.seed = seed;
        to.steps = opt.steps;
        to.eval_every = opt.eval_every;
        json base = read_json_file(opt.config);
        std::vector<std::string> all = base.value("flags", std::vector<std::string>{});
        all.insert(all.end(), flags.begin(), flags.end());
        to.flags = all;
        const std::string dir = opt.out + "/" + name + "/seed" + std::to_string(seed);
        Trainer t(build_config(opt.config, to), dir);
        t.run();
        auto last = [&](const std::string& metric) {
          const auto s = t.metrics().series(metric);
          return s.empty() ? std::numeric_limits<double>::quiet_NaN() : s.back().second;
        };
        summary << name << ',' << seed << ',' << mu_r(t) << ',' << last("eval/return") << ',' << last("eval/win_rate");
        for (int step : kAccuracySteps) summary << ',' << last("eval/accuracy_t" + std::to_string(step));
        summary << '\n';
        out << name << " seed " << seed << " done\n";
      }
    }
    return kExitOk;
  });
}

void print_defaults(std::ostream& out) { out << default_config_json().dump(2) << '\n'; }

}  // namespace trama::cli
