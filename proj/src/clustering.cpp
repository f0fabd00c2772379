#include "trama/clustering.hpp"

#include <cmath>
#include <limits>

#include "trama/errors.hpp"
#include "trama/replay.hpp"
#include "trama/vqvae.hpp"

namespace trama {

Eigen::RowVectorXd embed_trajectory(const nn::Matrix<float>& codebook, std::span<const int> codes, bool mean) {
  if (codes.empty()) throw PreconditionError("embed_trajectory: empty code sequence");
  Eigen::RowVectorXd e = Eigen::RowVectorXd::Zero(codebook.cols());
  for (int z : codes) {
    if (z < 0 || z >= codebook.rows()) throw PreconditionError("embed_trajectory: code " + std::to_string(z) + " out of range");
    e += codebook.row(z).cast<double>();
  }
  if (mean) e /= static_cast<double>(codes.size());
  return e;
}

Eigen::RowVectorXd embed_trajectory(const VqVae& vq, const Trajectory& traj, bool mean) {
  if (traj.code_version != vq.version()) {
    throw StalenessError("trajectory " + std::to_string(traj.id) + " was encoded with codebook version " +
                         std::to_string(traj.code_version) + ", current is " + std::to_string(vq.version()) + "; re-encode it");
  }
  return embed_trajectory(vq.codebook(), traj.codes, mean);
}

namespace {

int nearest(const Points& centroids, const Eigen::RowVectorXd& p) {
  Eigen::Index best = 0;
  (centroids.rowwise() - p).rowwise().squaredNorm().minCoeff(&best);
  return static_cast<int>(best);
}

struct Run {
  Points centroids;
  std::vector<int> labels;  // 0-based
  double inertia = 0.0;
  int iterations = 0;
  int reassignments = 0;
  std::vector<double> trace;
};

double inertia0(const Points& points, const Points& centroids, const std::vector<int>& labels) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    s += (points.row(i) - centroids.row(labels[static_cast<std::size_t>(i)])).squaredNorm();
  }
  return s;
}

Run lloyd(const Points& points, Points centroids, const KmeansOptions& opts) {
  const auto m = points.rows();
  const auto k = centroids.rows();
  Run run;
  run.labels.resize(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) run.labels[static_cast<std::size_t>(i)] = nearest(centroids, points.row(i));

  for (run.iterations = 1; run.iterations <= opts.max_iterations; ++run.iterations) {
    // An empty cluster takes the point farthest from its current centroid.
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (int l : run.labels) counts[static_cast<std::size_t>(l)]++;
    for (Eigen::Index c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) continue;
      Eigen::Index far = -1;
      double far_d = -1.0;
      for (Eigen::Index i = 0; i < m; ++i) {
        const int l = run.labels[static_cast<std::size_t>(i)];
        if (counts[static_cast<std::size_t>(l)] < 2) continue;
        const double d = (points.row(i) - centroids.row(l)).squaredNorm();
        if (d > far_d) far_d = d, far = i;
      }
      if (far < 0) break;
      counts[static_cast<std::size_t>(run.labels[static_cast<std::size_t>(far)])]--;
      run.labels[static_cast<std::size_t>(far)] = static_cast<int>(c);
      counts[static_cast<std::size_t>(c)] = 1;
      ++run.reassignments;
    }
    Points next = Points::Zero(k, points.cols());
    for (Eigen::Index i = 0; i < m; ++i) next.row(run.labels[static_cast<std::size_t>(i)]) += points.row(i);
    for (Eigen::Index c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) next.row(c) /= counts[static_cast<std::size_t>(c)];
      else next.row(c) = centroids.row(c);
    }
    const double shift = (next - centroids).rowwise().norm().maxCoeff();
    centroids = std::move(next);
    for (Eigen::Index i = 0; i < m; ++i) {
      const int l = nearest(centroids, points.row(i));
      if (l != run.labels[static_cast<std::size_t>(i)]) {
        run.labels[static_cast<std::size_t>(i)] = l;
        ++run.reassignments;
      }
    }
    run.trace.push_back(inertia0(points, centroids, run.labels));
    if (shift < opts.tolerance) break;
  }
  run.iterations = std::min(run.iterations, opts.max_iterations);
  run.centroids = std::move(centroids);
  run.inertia = inertia0(points, run.centroids, run.labels);
  return run;
}

Points kmeanspp_seed(const Points& points, int k, Rng& rng) {
  const auto m = points.rows();
  Points c(k, points.cols());
  c.row(0) = points.row(static_cast<Eigen::Index>(rng.uniform_int(static_cast<std::uint64_t>(m))));
  std::vector<double> d2(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) d2[static_cast<std::size_t>(i)] = (points.row(i) - c.row(0)).squaredNorm();
  for (int j = 1; j < k; ++j) {
    c.row(j) = points.row(static_cast<Eigen::Index>(rng.categorical(d2)));
    for (Eigen::Index i = 0; i < m; ++i) {
      d2[static_cast<std::size_t>(i)] = std::min(d2[static_cast<std::size_t>(i)], (points.row(i) - c.row(j)).squaredNorm());
    }
  }
  return c;
}

}  // namespace

KmeansResult kmeans_fit(const Points& points, int n_cl, const ClusterModel* prev, Rng& rng, const KmeansOptions& opts) {
  if (n_cl < 1) throw ConfigError("n_cl must be >= 1");
  if (points.rows() < n_cl) {
    throw PreconditionError("kmeans_fit: " + std::to_string(points.rows()) + " points for " + std::to_string(n_cl) + " clusters");
  }
  if (!points.allFinite()) throw NumericError("kmeans_fit: non-finite embedding");
  KmeansResult out;
  Run best;
  const bool warm = prev != nullptr && prev->centroids.rows() == n_cl && prev->centroids.cols() == points.cols();
  if (warm) {
    best = lloyd(points, prev->centroids, opts);
  } else {
    best.inertia = std::numeric_limits<double>::infinity();
    for (int r = 0; r < std::max(1, opts.restarts); ++r) {
      auto run = lloyd(points, kmeanspp_seed(points, n_cl, rng), opts);
      if (run.inertia < best.inertia) best = std::move(run);
    }
  }
  out.warm = warm;
  out.model.centroids = std::move(best.centroids);
  out.model.round = prev ? prev->round + 1 : 1;
  out.labels.reserve(best.labels.size());
  for (int l : best.labels) out.labels.push_back(l + 1);
  out.inertia = best.inertia;
  out.iterations = best.iterations;
  out.reassignments = best.reassignments;
  out.inertia_trace = std::move(best.trace);
  return out;
}

double inertia(const Points& points, const Points& centroids, std::span<const int> labels) {
  std::vector<int> zero_based;
  for (int l : labels) zero_based.push_back(l - 1);
  return inertia0(points, centroids, zero_based);
}

double silhouette(const Points& points, std::span<const int> labels) {
  const auto m = points.rows();
  if (static_cast<Eigen::Index>(labels.size()) != m) throw PreconditionError("silhouette: one label per point");
  int max_label = 0;
  for (int l : labels) {
    if (l < 1) throw PreconditionError("silhouette: labels are 1-based");
    max_label = std::max(max_label, l);
  }
  std::vector<int> counts(static_cast<std::size_t>(max_label + 1), 0);
  for (int l : labels) counts[static_cast<std::size_t>(l)]++;
  int clusters = 0;
  for (int c : counts) clusters += c > 0;
  if (clusters < 2) throw PreconditionError("silhouette: undefined for a single cluster");

  double total = 0.0;
  std::vector<double> dist_sum(static_cast<std::size_t>(max_label + 1));
  for (Eigen::Index i = 0; i < m; ++i) {
    const int own = labels[static_cast<std::size_t>(i)];
    if (counts[static_cast<std::size_t>(own)] == 1) continue;
    std::fill(dist_sum.begin(), dist_sum.end(), 0.0);
    for (Eigen::Index j = 0; j < m; ++j) {
      if (j != i) dist_sum[static_cast<std::size_t>(labels[static_cast<std::size_t>(j)])] += (points.row(i) - points.row(j)).norm();
    }
    const double a = dist_sum[static_cast<std::size_t>(own)] / (counts[static_cast<std::size_t>(own)] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (int c = 1; c <= max_label; ++c) {
      if (c != own && counts[static_cast<std::size_t>(c)] > 0) b = std::min(b, dist_sum[static_cast<std::size_t>(c)] / counts[static_cast<std::size_t>(c)]);
    }
    const double denom = std::max(a, b);
    if (denom > 0.0) total += (b - a) / denom;
  }
  return total / static_cast<double>(m);
}

int adapt_ncl(const Points& points, std::span<const int> candidates, Rng& rng, const KmeansOptions& opts) {
  if (candidates.empty()) throw ConfigError("adapt_ncl: no candidates");
  if (candidates.size() == 1) return candidates[0];
  int best = -1;
  double best_score = -std::numeric_limits<double>::infinity();
  for (int c : candidates) {
    if (c < 2) throw ConfigError("adapt_ncl: candidates must be >= 2");
    if (c > points.rows()) continue;
    const auto fit = kmeans_fit(points, c, nullptr, rng, opts);
    const double s = silhouette(points, fit.labels);
    if (s > best_score || (s == best_score && c < best)) best_score = s, best = c;
  }
  if (best < 0) throw PreconditionError("adapt_ncl: fewer points than every candidate");
  return best;
}

double preserved_ratio(const std::map<std::int64_t, int>& old_labels, const std::map<std::int64_t, int>& new_labels) {
  if (old_labels.size() != new_labels.size()) throw PreconditionError("preserved_ratio: id sets differ");
  if (old_labels.empty()) return 1.0;
  std::size_t same = 0;
  auto it = new_labels.begin();
  for (const auto& [id, label] : old_labels) {
    if (it->first != id) throw PreconditionError("preserved_ratio: id sets differ");
    same += it->second == label;
    ++it;
  }
  return static_cast<double>(same) / static_cast<double>(old_labels.size());
}

}  // namespace trama
