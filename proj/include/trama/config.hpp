#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "trama/classifier.hpp"
#include "trama/huntgrid.hpp"
#include "trama/policy.hpp"
#include "trama/vqvae.hpp"

namespace trama {

/// Recognized ablation flags.
///   no_init       cold-start every clustering round
///   jt_only       coverage term uses J(t) instead of J(t, k)
///   one_hot       class representation is the one-hot class vector
///   vdn           additive mixer instead of the monotonic hypernetwork mixer
///   adaptive_ncl  pick the cluster count per round by silhouette
///   zero_repr     class representation suppressed to zeros (no conditioning)
const std::vector<std::string>& known_flags();
bool is_known_flag(const std::string& flag);

enum class RefreshIndices { kNever, kOnCodebookUpdate };

struct TrainConfig {
  std::uint64_t seed = 0;
  std::int64_t t_env = 300000;
  int n_cl = 0;  // required
  EnvConfig env;  // env.tasks required

  double epsilon_start = 1.0;
  double epsilon_finish = 0.05;
  std::int64_t epsilon_anneal = 50000;
  int batch_size = 32;
  int buffer_capacity = 5000;
  int cluster_samples = 512;
  int cluster_interval = 500;  // episodes
  int vq_interval = 10;        // episodes
  int target_interval = 200;   // updates
  double gamma = 0.99;
  double lr = 5e-4;
  double clip_norm = 10.0;
  double lambda_zeta = 0.1;

  VqConfig vq;
  int vq_batch = 32;
  PolicyConfig policy;  // dimension fields are filled from the environment
  bool sample_class = false;
  ClassifierConfig classifier;
  int kmeans_restarts = 10;
  bool mean_embedding = false;
  std::vector<int> ncl_candidates{2, 3, 4};
  RefreshIndices refresh_indices = RefreshIndices::kOnCodebookUpdate;

  std::int64_t eval_every = 10000;
  int eval_episodes = 32;
  int log_interval = 10;  // episodes per averaged training row
  std::int64_t checkpoint_every = 0;  // env steps; 0 keeps only the final checkpoint
  bool checkpoint_buffer = true;
  bool write_predictions = true;
  bool write_embeddings = true;

  std::vector<std::string> flags;

  bool has_flag(const std::string& f) const;
  /// Effective component configs after flags and environment dimensions.
  VqConfig effective_vq() const;
  PolicyConfig effective_policy() const;
  int max_ncl() const;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// Defaults table; required fields appear as null.
nlohmann::json default_config_json();
/// Parses over the defaults. Unknown fields, wrong types, missing required
/// fields and invalid values raise ConfigError naming the field.
TrainConfig parse_config(const nlohmann::json& j);
TrainConfig parse_config_text(const std::string& text);
TrainConfig load_config(const std::string& path);
/// Full config, sufficient to reproduce a run.
nlohmann::json to_json(const TrainConfig& cfg);

}  // namespace trama
