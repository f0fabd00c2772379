#pragma once

#include <span>
#include <string>
#include <vector>

#include "trama/clustering.hpp"
#include "trama/layers.hpp"
#include "trama/optim.hpp"

namespace trama {

class Archive;

struct ClassifierConfig {
  int hidden = 64;
  int epochs = 50;
  int batch = 64;
  nn::AdamConfig adam{};
};

/// Loss summary of the most recent train() call.
struct ClassifierTrainStats {
  double first_epoch = 0.0;  // mean loss of the first epoch
  double mean = 0.0;         // mean over every minibatch update of the call
  double final_epoch = 0.0;  // mean loss of the last epoch (the train() return value)
};

/// MLP from a trajectory embedding to pseudo-class logits. The output layer
/// starts at zero, so an untrained net is uniform and classifies as class 1.
class TrajectoryClassifier {
 public:
  TrajectoryClassifier(int d, int n_cl, ClassifierConfig cfg, Rng& rng);

  /// Minibatch cross-entropy against 1-based labels; returns the mean loss of the last epoch.
  double train(const Points& x, std::span<const int> labels, Rng& rng);
  nn::Matrix<double> probabilities(const Points& x) const;
  nn::Matrix<double> logits(const Points& x) const;
  /// Argmax class (1-based), ties to the smaller class.
  std::vector<int> classify(const Points& x) const;
  int classify(const Eigen::RowVectorXd& e) const;

  int n_cl() const { return n_cl_; }
  int d() const { return d_; }
  bool trained() const { return trained_; }
  const ClassifierTrainStats& last_stats() const { return stats_; }
  /// Fresh parameters for a new class count.
  void reset(int n_cl, Rng& rng);

  nn::ParamStore<float>& store() { return store_; }
  void save(Archive& ar, const std::string& prefix) const;
  void load(const Archive& ar, const std::string& prefix);

 private:
  int d_;
  int n_cl_;
  ClassifierConfig cfg_;
  nn::ParamStore<float> store_;
  nn::Mlp<float> net_;
  bool trained_ = false;
  ClassifierTrainStats stats_;
};

}  // namespace trama
