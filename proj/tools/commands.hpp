#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace trama::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitVersion = 3;

struct TrainOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "run";
  std::optional<std::int64_t> steps;
  std::optional<std::int64_t> eval_every;
  std::optional<std::vector<std::string>> flags;
  std::string task_set;
  std::string resume;  // checkpoint to continue from
};

struct EvalOptions {
  std::string checkpoint;
  int episodes = 32;
  std::string task_set;
  std::uint64_t stream = 0;
  std::string csv;  // optional per-episode CSV
};

struct AblateOptions {
  std::string config;
  std::vector<std::string> flags;
  std::vector<std::uint64_t> seeds{0};
  std::string out = "ablate";
  std::optional<std::int64_t> steps;
  std::optional<std::int64_t> eval_every;
};

int cmd_train(const TrainOptions& opt, std::ostream& out, std::ostream& err);
int cmd_eval(const EvalOptions& opt, std::ostream& out, std::ostream& err);
int cmd_ablate(const AblateOptions& opt, std::ostream& out, std::ostream& err);
void print_defaults(std::ostream& out);

/// Task list from a JSON file (a list, or an object with "tasks") or from
/// inline "SSRT,TTRS:reflected" text.
std::string task_set_json(const std::string& arg);

}  // namespace trama::cli
