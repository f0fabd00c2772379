#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "trama/param_store.hpp"
#include "trama/rng.hpp"

namespace trama {

class VqVae;
struct Trajectory;

using Points = nn::Matrix<double>;  // one embedding per row

/// Sum of codebook rows along the code sequence (divided by its length when `mean`).
Eigen::RowVectorXd embed_trajectory(const nn::Matrix<float>& codebook, std::span<const int> codes, bool mean = false);
/// Same, but refuses codes produced by an older codebook version (StalenessError).
Eigen::RowVectorXd embed_trajectory(const VqVae& vq, const Trajectory& traj, bool mean = false);

struct ClusterModel {
  Points centroids;  // n_cl x d
  int round = 0;
};

struct KmeansOptions {
  int restarts = 10;
  double tolerance = 1e-6;
  int max_iterations = 300;
};

struct KmeansResult {
  ClusterModel model;
  std::vector<int> labels;  // 1-based centroid index per point
  double inertia = 0.0;
  int iterations = 0;
  int reassignments = 0;  // label changes made by Lloyd after the initial assignment
  bool warm = false;
  std::vector<double> inertia_trace;  // after each iteration of the kept run
};

/// Cold start (no `prev`, or a different cluster count): K-means++ seeding,
/// best of `restarts` Lloyd runs by inertia. Warm start: one Lloyd run from
/// the previous centroids.
KmeansResult kmeans_fit(const Points& points, int n_cl, const ClusterModel* prev, Rng& rng,
                        const KmeansOptions& opts = {});

double inertia(const Points& points, const Points& centroids, std::span<const int> labels);

/// Mean silhouette with Euclidean distance; points alone in their cluster score 0.
double silhouette(const Points& points, std::span<const int> labels);

/// Candidate with the highest silhouette after a cold-start fit; ties go to the smaller count.
int adapt_ncl(const Points& points, std::span<const int> candidates, Rng& rng, const KmeansOptions& opts = {});

/// Fraction of ids whose label is unchanged. Both maps must cover the same ids.
double preserved_ratio(const std::map<std::int64_t, int>& old_labels, const std::map<std::int64_t, int>& new_labels);

}  // namespace trama
