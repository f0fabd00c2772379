#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "trama/clustering.hpp"
#include "trama/errors.hpp"
#include "trama/vqvae.hpp"

using namespace trama;

namespace {

Points blobs(const std::vector<std::pair<double, double>>& centers, int per_blob, double spread, Rng& rng,
             std::vector<int>* truth = nullptr) {
  Points p(static_cast<Eigen::Index>(centers.size()) * per_blob, 2);
  Eigen::Index r = 0;
  for (std::size_t c = 0; c < centers.size(); ++c) {
    for (int i = 0; i < per_blob; ++i, ++r) {
      p(r, 0) = centers[c].first + spread * rng.normal();
      p(r, 1) = centers[c].second + spread * rng.normal();
      if (truth) truth->push_back(static_cast<int>(c));
    }
  }
  return p;
}

// Minimum 2-cluster inertia over all bipartitions.
double exhaustive_two_cluster_inertia(const Points& p) {
  const int m = static_cast<int>(p.rows());
  double best = 1e300;
  for (int mask = 1; mask < (1 << (m - 1)); ++mask) {
    double sx[2] = {0, 0}, sy[2] = {0, 0}, sq[2] = {0, 0};
    int n[2] = {0, 0};
    for (int i = 0; i < m; ++i) {
      const int g = (mask >> i) & 1;
      sx[g] += p(i, 0);
      sy[g] += p(i, 1);
      sq[g] += p(i, 0) * p(i, 0) + p(i, 1) * p(i, 1);
      n[g]++;
    }
    double total = 0;
    for (int g = 0; g < 2; ++g) total += sq[g] - (sx[g] * sx[g] + sy[g] * sy[g]) / n[g];
    best = std::min(best, total);
  }
  return best;
}

double brute_silhouette(const Points& p, const std::vector<int>& labels) {
  const std::size_t m = labels.size();
  auto dist = [&](std::size_t i, std::size_t j) {
    double s = 0;
    for (Eigen::Index c = 0; c < p.cols(); ++c) s += (p(i, c) - p(j, c)) * (p(i, c) - p(j, c));
    return std::sqrt(s);
  };
  int k = 0;
  for (int l : labels) k = std::max(k, l);
  double total = 0;
  for (std::size_t i = 0; i < m; ++i) {
    std::vector<double> sum(static_cast<std::size_t>(k + 1), 0.0);
    std::vector<int> cnt(static_cast<std::size_t>(k + 1), 0);
    for (std::size_t j = 0; j < m; ++j) {
      cnt[static_cast<std::size_t>(labels[j])]++;
      if (j != i) sum[static_cast<std::size_t>(labels[j])] += dist(i, j);
    }
    const int own = labels[i];
    if (cnt[static_cast<std::size_t>(own)] == 1) continue;
    const double a = sum[static_cast<std::size_t>(own)] / (cnt[static_cast<std::size_t>(own)] - 1);
    double b = 1e300;
    for (int c = 1; c <= k; ++c) {
      if (c != own && cnt[static_cast<std::size_t>(c)] > 0) b = std::min(b, sum[static_cast<std::size_t>(c)] / cnt[static_cast<std::size_t>(c)]);
    }
    total += (b - a) / std::max(a, b);
  }
  return total / static_cast<double>(m);
}

}  // namespace

TEST(Embed, SumOfCodebookRows) {
  nn::Matrix<float> cb(3, 2);
  cb << 1, 2, -1, 0.5, 0.25, 4;
  const std::vector<int> constant(5, 2);
  auto e = embed_trajectory(cb, constant);
  EXPECT_DOUBLE_EQ(e(0), 5 * 0.25);
  EXPECT_DOUBLE_EQ(e(1), 20.0);
  EXPECT_THROW(embed_trajectory(cb, std::vector<int>{}), PreconditionError);

  const std::vector<int> a{0, 1, 1}, b{2, 0};
  std::vector<int> ab = a;
  ab.insert(ab.end(), b.begin(), b.end());
  Eigen::RowVectorXd manual = Eigen::RowVectorXd::Zero(2);
  for (int z : ab) manual += cb.row(z).cast<double>();
  EXPECT_TRUE(embed_trajectory(cb, ab).isApprox(manual));
  EXPECT_TRUE(embed_trajectory(cb, ab).isApprox(embed_trajectory(cb, a) + embed_trajectory(cb, b)));
  EXPECT_TRUE(embed_trajectory(cb, ab, true).isApprox(manual / 5.0));
}

TEST(Embed, StaleCodesAreRejected) {
  Rng rng(1);
  VqConfig cfg;
  cfg.n_c = 8;
  VqVae vq(6, cfg, rng);
  auto t = trama::testing::make_trajectory(3, 1, rng);
  t.code_version = vq.version();
  EXPECT_NO_THROW(embed_trajectory(vq, t));
  t.code_version = vq.version() - 1;
  EXPECT_THROW(embed_trajectory(vq, t), StalenessError);
}

TEST(Kmeans, SeparatedBlobsRecoverTruth) {
  Rng rng(2);
  std::vector<int> truth;
  auto p = blobs({{0, 0}, {10, 10}}, 6, 0.5, rng, &truth);
  auto fit = kmeans_fit(p, 2, nullptr, rng);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    EXPECT_EQ(fit.labels[i] == fit.labels[0], truth[i] == truth[0]);
  }
  EXPECT_NEAR(fit.inertia, exhaustive_two_cluster_inertia(p), 1e-9);
}

TEST(Kmeans, SingleClusterIsMean) {
  Rng rng(3);
  auto p = blobs({{1, 2}}, 9, 1.0, rng);
  auto fit = kmeans_fit(p, 1, nullptr, rng);
  EXPECT_TRUE(fit.model.centroids.row(0).isApprox(p.colwise().mean(), 1e-12));
  for (int l : fit.labels) EXPECT_EQ(l, 1);
}

TEST(Kmeans, TooFewPoints) {
  Rng rng(4);
  EXPECT_THROW(kmeans_fit(Points::Zero(2, 2), 3, nullptr, rng), PreconditionError);
}

TEST(Kmeans, WarmStartAtFixedPointChangesNothing) {
  Rng rng(5);
  auto p = blobs({{0, 0}, {5, 1}, {2, 7}}, 20, 1.0, rng);
  auto cold = kmeans_fit(p, 3, nullptr, rng);
  auto warm = kmeans_fit(p, 3, &cold.model, rng);
  EXPECT_TRUE(warm.warm);
  EXPECT_EQ(warm.labels, cold.labels);
  EXPECT_EQ(warm.reassignments, 0);
  std::map<std::int64_t, int> a, b;
  for (std::size_t i = 0; i < cold.labels.size(); ++i) {
    a[static_cast<std::int64_t>(i)] = cold.labels[i];
    b[static_cast<std::int64_t>(i)] = warm.labels[i];
  }
  EXPECT_EQ(preserved_ratio(a, b), 1.0);
  EXPECT_EQ(warm.model.round, cold.model.round + 1);
}

TEST(Kmeans, ChangedClusterCountFallsBackToColdStart) {
  Rng rng(6);
  auto p = blobs({{0, 0}, {5, 1}, {2, 7}}, 10, 1.0, rng);
  auto two = kmeans_fit(p, 2, nullptr, rng);
  auto three = kmeans_fit(p, 3, &two.model, rng);
  EXPECT_FALSE(three.warm);
}

TEST(Kmeans, LloydInertiaNeverIncreases) {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    auto p = blobs({{0, 0}, {3, 0}, {0, 3}, {3, 3}}, 15, 1.5, rng);
    ClusterModel bad;
    bad.centroids = Points::Zero(4, 2);
    for (auto& v : bad.centroids.reshaped()) v = rng.uniform(-1, 4);
    auto fit = kmeans_fit(p, 4, &bad, rng);
    for (std::size_t i = 1; i < fit.inertia_trace.size(); ++i) {
      EXPECT_LE(fit.inertia_trace[i], fit.inertia_trace[i - 1] + 1e-9);
    }
  }
}

TEST(Kmeans, EmptyClusterIsRepaired) {
  Points p(6, 1);
  p << 0, 0.1, 0.2, 10, 10.1, 10.2;
  ClusterModel init;
  init.centroids = Points(3, 1);
  init.centroids << 0.1, 10.1, 100.0;  // third centroid attracts nobody
  Rng rng(8);
  auto fit = kmeans_fit(p, 3, &init, rng);
  std::vector<int> counts(4, 0);
  for (int l : fit.labels) counts[static_cast<std::size_t>(l)]++;
  for (int c = 1; c <= 3; ++c) EXPECT_GT(counts[static_cast<std::size_t>(c)], 0);
}

TEST(Kmeans, ExhaustiveOptimumInMostSeeds) {
  int hits = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(100 + seed);
    Points p(12, 2);
    for (auto& v : p.reshaped()) v = rng.normal();
    auto fit = kmeans_fit(p, 2, nullptr, rng);
    hits += std::abs(fit.inertia - exhaustive_two_cluster_inertia(p)) < 1e-9;
  }
  EXPECT_GE(hits, 9);
}

TEST(Silhouette, SeparatedBlobsScoreHigh) {
  Rng rng(9);
  std::vector<int> truth;
  auto p = blobs({{0, 0}, {50, 0}}, 10, 0.5, rng, &truth);
  for (auto& t : truth) t += 1;
  EXPECT_GT(silhouette(p, truth), 0.9);
}

TEST(Silhouette, DegenerateAndSingletonConventions) {
  Points same = Points::Ones(4, 2);
  EXPECT_EQ(silhouette(same, std::vector<int>{1, 1, 2, 2}), 0.0);
  EXPECT_THROW(silhouette(same, std::vector<int>{1, 1, 1, 1}), PreconditionError);
  Points p(3, 1);
  p << 0, 1, 10;
  // The point alone in cluster 2 scores 0.
  EXPECT_NEAR(silhouette(p, std::vector<int>{1, 1, 2}), (0.9 + 8.0 / 9.0) / 3.0, 1e-12);
}

TEST(Silhouette, MatchesBruteForceOracle) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    Points p(20, 3);
    for (auto& v : p.reshaped()) v = rng.normal();
    std::vector<int> labels;
    for (int i = 0; i < 20; ++i) labels.push_back(1 + static_cast<int>(rng.uniform_int(3)));
    labels[0] = 1, labels[1] = 2;
    EXPECT_NEAR(silhouette(p, labels), brute_silhouette(p, labels), 1e-10);
  }
}

TEST(AdaptNcl, PicksTrueBlobCount) {
  Rng rng(10);
  auto three = blobs({{0, 0}, {20, 0}, {0, 20}}, 15, 1.0, rng);
  EXPECT_EQ(adapt_ncl(three, std::vector<int>{2, 3, 4}, rng), 3);
  auto two = blobs({{0, 0}, {20, 0}}, 15, 0.5, rng);
  EXPECT_EQ(adapt_ncl(two, std::vector<int>{2, 3}, rng), 2);
  EXPECT_EQ(adapt_ncl(two, std::vector<int>{4}, rng), 4);
}

TEST(PreservedRatio, Counting) {
  std::map<std::int64_t, int> a{{1, 1}, {2, 2}, {3, 1}, {4, 2}};
  EXPECT_EQ(preserved_ratio(a, a), 1.0);
  std::map<std::int64_t, int> flipped{{1, 2}, {2, 1}, {3, 2}, {4, 1}};
  EXPECT_EQ(preserved_ratio(a, flipped), 0.0);
  auto one = a;
  one[4] = 1;
  EXPECT_EQ(preserved_ratio(a, one), 0.75);
  std::map<std::int64_t, int> other{{1, 1}, {2, 2}, {3, 1}, {5, 2}};
  EXPECT_THROW(preserved_ratio(a, other), PreconditionError);
}
