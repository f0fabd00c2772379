#include <CLI11.hpp>
#include <iostream>

#include "commands.hpp"

namespace cli = trama::cli;

namespace {

template <typename T>
void optional_option(CLI::App* app, const std::string& name, std::optional<T>& slot, const std::string& help) {
  app->add_option_function<T>(name, [&slot](const T& v) { slot = v; }, help);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-agent Q-learning with trajectory-class prediction on HuntGrid"};
  app.require_subcommand(0, 1);
  bool defaults = false;
  app.add_flag("--print-defaults", defaults, "Print the config defaults table and exit");

  cli::TrainOptions train;
  auto* t = app.add_subcommand("train", "Train one run");
  t->add_option("--config", train.config, "JSON config file");
  optional_option(t, "--seed", train.seed, "Override the seed");
  t->add_option("--out", train.out, "Output directory");
  optional_option(t, "--steps", train.steps, "Override the environment step budget");
  optional_option(t, "--eval-every", train.eval_every, "Override the evaluation interval");
  t->add_option_function<std::vector<std::string>>("--flags", [&](const std::vector<std::string>& f) { train.flags = f; },
                                                   "Ablation flags")->delimiter(',');
  t->add_option("--task-set", train.task_set, "Task list file or inline SSRT,TTRS:reflected");
  t->add_option("--resume", train.resume, "Continue from a checkpoint");
  t->add_flag("--print-defaults", defaults, "Print the config defaults table and exit");

  cli::EvalOptions eval;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint");
  e->add_option("--checkpoint", eval.checkpoint, "Checkpoint file")->required();
  e->add_option("--episodes", eval.episodes, "Evaluation episodes");
  e->add_option("--task-set", eval.task_set, "Task list override");
  e->add_option("--stream", eval.stream, "Evaluation random stream");
  e->add_option("--csv", eval.csv, "Per-episode CSV output");

  cli::AblateOptions ablate;
  auto* a = app.add_subcommand("ablate", "Run flag variants across seeds");
  a->add_option("--config", ablate.config, "JSON config file")->required();
  a->add_option("--flags", ablate.flags, "Flags to ablate one at a time")->delimiter(',');
  a->add_option("--seeds", ablate.seeds, "Seeds")->delimiter(',');
  a->add_option("--out", ablate.out, "Output directory");
  optional_option(a, "--steps", ablate.steps, "Override the environment step budget");
  optional_option(a, "--eval-every", ablate.eval_every, "Override the evaluation interval");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex);
    return cli::kExitConfig;
  }
  if (defaults) {
    cli::print_defaults(std::cout);
    return cli::kExitOk;
  }
  if (*t) return cli::cmd_train(train, std::cout, std::cerr);
  if (*e) return cli::cmd_eval(eval, std::cout, std::cerr);
  if (*a) return cli::cmd_ablate(ablate, std::cout, std::cerr);
  std::cout << app.help();
  return cli::kExitConfig;
}
