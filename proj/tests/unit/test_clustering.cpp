#include <gtest/gtest.h>

#include <algorithm>
#include <limits>
#include <random>
#include <sstream>

#include "privprof/clustering.hpp"
#include "privprof/error.hpp"
#include "privprof/similarity.hpp"
#include "support.hpp"

namespace privprof {
namespace {

using Index = Eigen::Index;

double recomputed_cost(const Clustering& c, const Eigen::MatrixXd& d) {
  double total = 0.0;
  for (std::size_t u = 0; u < c.assignment.size(); ++u) {
    total += d(static_cast<Index>(u), static_cast<Index>(c.medoid_ids[c.assignment[u]]));
  }
  return total;
}

// Nearest-medoid assignment with lowest-index ties; medoids keep their own cluster.
void expect_valid_assignment(const Clustering& c, const Eigen::MatrixXd& d) {
  for (std::size_t k = 0; k < c.kappa; ++k) EXPECT_EQ(c.assignment[c.medoid_ids[k]], k);
  for (std::size_t u = 0; u < c.assignment.size(); ++u) {
    if (std::find(c.medoid_ids.begin(), c.medoid_ids.end(), u) != c.medoid_ids.end()) continue;
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_k = 0;
    for (std::size_t k = 0; k < c.kappa; ++k) {
      const double v = d(static_cast<Index>(u), static_cast<Index>(c.medoid_ids[k]));
      if (v < best) {
        best = v;
        best_k = k;
      }
    }
    EXPECT_EQ(c.assignment[u], best_k) << "user " << u;
  }
}

// Independent enumeration: every kappa-subset via bitmasks.
double oracle_min_cost(const Eigen::MatrixXd& d, std::size_t kappa) {
  const auto n = static_cast<std::size_t>(d.rows());
  double best = std::numeric_limits<double>::infinity();
  for (unsigned mask = 0; mask < (1u << n); ++mask) {
    if (static_cast<std::size_t>(__builtin_popcount(mask)) != kappa) continue;
    double cost = 0.0;
    for (std::size_t u = 0; u < n; ++u) {
      double nearest = std::numeric_limits<double>::infinity();
      for (std::size_t m = 0; m < n; ++m) {
        if ((mask >> m) & 1u) nearest = std::min(nearest, d(static_cast<Index>(u), static_cast<Index>(m)));
      }
      cost += nearest;
    }
    best = std::min(best, cost);
  }
  return best;
}

TEST(KMedoids, KappaEqualsNGivesZeroCost) {
  std::mt19937_64 gen(1);
  const auto d = testing::random_distances(7, gen);
  const auto c = kmedoids(d, 7, 3);
  EXPECT_EQ(c.total_cost, 0.0);
  for (std::size_t u = 0; u < 7; ++u) EXPECT_EQ(c.medoid_ids[c.assignment[u]], u);
}

TEST(KMedoids, SeparatedIdenticalPairsAreRecovered) {
  const auto data = testing::make_dataset({{1, 1, 0, 0}, {0, 0, 1, 1}, {1, 1, 0, 0}, {0, 0, 1, 1}});
  const auto d = distance_matrix(similarity_matrix(data));
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto c = kmedoids_best_of(d, 2, seed);
    EXPECT_EQ(c.assignment[0], c.assignment[2]);
    EXPECT_EQ(c.assignment[1], c.assignment[3]);
    EXPECT_NE(c.assignment[0], c.assignment[1]);
    EXPECT_EQ(c.total_cost, 0.0);
  }
}

TEST(KMedoids, ParameterAndValidationErrors) {
  std::mt19937_64 gen(2);
  const auto d = testing::random_distances(4, gen);
  EXPECT_THROW(kmedoids(d, 5, 0), ParameterError);
  EXPECT_THROW(kmedoids(d, 0, 0), ParameterError);
  Eigen::MatrixXd asym = d;
  asym(0, 1) += 0.1;
  EXPECT_THROW(kmedoids(asym, 2, 0), ValidationError);
}

TEST(KMedoids, CostTraceNeverIncreasesAndMatchesAssignment) {
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 3 + gen() % 40;
    const std::size_t kappa = 1 + gen() % std::min<std::size_t>(n, 6);
    const auto d = testing::random_distances(n, gen);
    const auto c = kmedoids(d, kappa, trial);
    for (std::size_t i = 1; i < c.cost_trace.size(); ++i) EXPECT_LE(c.cost_trace[i], c.cost_trace[i - 1] + 1e-12);
    EXPECT_NEAR(c.total_cost, recomputed_cost(c, d), 1e-12);
    EXPECT_EQ(compactness(c, d), c.total_cost);
    expect_valid_assignment(c, d);
  }
}

TEST(KMedoids, DeterministicForSeed) {
  std::mt19937_64 gen(6);
  const auto d = testing::random_distances(30, gen);
  const auto a = kmedoids_best_of(d, 3, 42);
  const auto b = kmedoids_best_of(d, 3, 42);
  EXPECT_EQ(a.assignment, b.assignment);
  EXPECT_EQ(a.medoid_ids, b.medoid_ids);
  EXPECT_EQ(a.total_cost, b.total_cost);
}

TEST(KMedoids, BestOfRestartsIsNoWorseThanAnySingleRestart) {
  std::mt19937_64 gen(7);
  const auto d = testing::random_distances(25, gen);
  const auto best = kmedoids_best_of(d, 3, 100, 20);
  for (std::uint64_t s = 100; s < 120; ++s) EXPECT_LE(best.total_cost, kmedoids(d, 3, s).total_cost);
}

TEST(BruteForce, MatchesIndependentEnumeration) {
  std::mt19937_64 gen(8);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + gen() % 9;
    const std::size_t kappa = 1 + gen() % n;
    const auto d = testing::random_distances(n, gen);
    const auto c = brute_force_kmedoids(d, kappa);
    EXPECT_NEAR(c.total_cost, oracle_min_cost(d, kappa), 1e-12);
    EXPECT_NEAR(c.total_cost, recomputed_cost(c, d), 1e-12);
  }
}

TEST(BruteForce, ToyFourUserPairsAndDegenerateCases) {
  const auto d = distance_matrix(similarity_matrix(testing::toy_dataset()));
  const auto c = brute_force_kmedoids(d, 2);
  double best = std::numeric_limits<double>::infinity();
  for (Index a = 0; a < 4; ++a) {
    for (Index b = a + 1; b < 4; ++b) {
      double cost = 0.0;
      for (Index u = 0; u < 4; ++u) cost += std::min(d(u, a), d(u, b));
      best = std::min(best, cost);
    }
  }
  EXPECT_NEAR(c.total_cost, best, 1e-15);
  EXPECT_NEAR(compactness(c, d), recomputed_cost(c, d), 1e-15);
  EXPECT_EQ(brute_force_kmedoids(d, 4).total_cost, 0.0);

  // kappa = 1: the 1-median.
  const auto one = brute_force_kmedoids(d, 1);
  for (Index m = 0; m < 4; ++m) EXPECT_LE(one.total_cost, d.col(m).sum() + 1e-15);
}

TEST(BruteForce, GuardRefusesHugeInstances) {
  const Eigen::MatrixXd d = Eigen::MatrixXd::Zero(60, 60);
  EXPECT_THROW(brute_force_kmedoids(d, 5), GuardError);
}

TEST(BruteForce, SmallInstancesAgreeWithRestartedKMedoids) {
  std::mt19937_64 gen(9);
  int mismatches = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 3 + gen() % 6;
    const std::size_t kappa = 2 + gen() % 2;
    const auto d = testing::random_distances(n, gen);
    const auto restarted = kmedoids_best_of(d, kappa, static_cast<std::uint64_t>(trial) * 20);
    if (restarted.total_cost != brute_force_kmedoids(d, kappa).total_cost) ++mismatches;
  }
  EXPECT_EQ(mismatches, 0);
}

TEST(Compactness, IdenticalUsersAndSingletons) {
  const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(5, 5);
  EXPECT_EQ(compactness(kmedoids(zero, 2, 0), zero), 0.0);
  std::mt19937_64 gen(10);
  const auto d = testing::random_distances(5, gen);
  EXPECT_EQ(compactness(kmedoids(d, 5, 0), d), 0.0);
}

Clustering two_cluster(std::vector<std::size_t> assignment, std::vector<std::size_t> medoids) {
  Clustering c;
  c.kappa = medoids.size();
  c.medoid_ids = std::move(medoids);
  c.assignment = std::move(assignment);
  return c;
}

TEST(Silhouette, IdenticalPointClustersAtDistanceOne) {
  Eigen::MatrixXd d(4, 4);
  d << 0, 0, 1, 1, 0, 0, 1, 1, 1, 1, 0, 0, 1, 1, 0, 0;
  const auto s = silhouette(two_cluster({0, 0, 1, 1}, {0, 2}), d);
  for (double v : s.per_user) EXPECT_EQ(v, 1.0);
  EXPECT_EQ(s.mean, 1.0);
}

TEST(Silhouette, AllIdenticalPointsScoreZero) {
  const Eigen::MatrixXd d = Eigen::MatrixXd::Zero(4, 4);
  const auto s = silhouette(two_cluster({0, 0, 1, 1}, {0, 2}), d);
  for (double v : s.per_user) EXPECT_EQ(v, 0.0);
}

TEST(Silhouette, SingletonScoresExactlyZero) {
  std::mt19937_64 gen(11);
  const auto d = testing::random_distances(4, gen);
  const auto s = silhouette(two_cluster({0, 1, 1, 1}, {0, 1}), d);
  EXPECT_EQ(s.per_user[0], 0.0);
}

TEST(Silhouette, KappaOneIsParameterError) {
  const Eigen::MatrixXd d = Eigen::MatrixXd::Zero(3, 3);
  EXPECT_THROW(silhouette(two_cluster({0, 0, 0}, {0}), d), ParameterError);
}

TEST(Silhouette, MatchesDirectFormulaAndStaysInRange) {
  std::mt19937_64 gen(12);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 3 + gen() % 25;
    const std::size_t kappa = 2 + gen() % std::min<std::size_t>(n - 1, 4);
    const auto d = testing::random_distances(n, gen);
    const auto c = kmedoids(d, kappa, trial);
    const auto s = silhouette(c, d);
    double sum = 0.0;
    for (std::size_t u = 0; u < n; ++u) {
      EXPECT_GE(s.per_user[u], -1.0);
      EXPECT_LE(s.per_user[u], 1.0);
      const auto own = c.members(c.assignment[u]);
      double expected = 0.0;
      if (own.size() > 1) {
        double a = 0.0;
        for (std::size_t v : own) a += d(static_cast<Index>(u), static_cast<Index>(v));
        a /= static_cast<double>(own.size() - 1);
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < kappa; ++k) {
          const auto other = c.members(k);
          if (k == c.assignment[u] || other.empty()) continue;
          double t = 0.0;
          for (std::size_t v : other) t += d(static_cast<Index>(u), static_cast<Index>(v));
          b = std::min(b, t / static_cast<double>(other.size()));
        }
        expected = (b - a) / std::max(a, b);
      }
      EXPECT_NEAR(s.per_user[u], expected, 1e-12);
      sum += expected;
    }
    EXPECT_NEAR(s.mean, sum / static_cast<double>(n), 1e-12);
  }
}

TEST(Relabel, LeavesCompactnessAndSilhouetteUnchanged) {
  std::mt19937_64 gen(13);
  const auto d = testing::random_distances(20, gen);
  const auto c = kmedoids_best_of(d, 3, 4);
  const std::vector<std::size_t> perm{2, 0, 1};
  const auto r = relabel(c, perm);
  EXPECT_EQ(compactness(r, d), compactness(c, d));
  EXPECT_EQ(silhouette(r, d).per_user, silhouette(c, d).per_user);
  for (std::size_t u = 0; u < 20; ++u) EXPECT_EQ(r.assignment[u], perm[c.assignment[u]]);
}

TEST(Relabel, RejectsNonPermutation) {
  Clustering c = two_cluster({0, 1}, {0, 1});
  const std::vector<std::size_t> bad{1, 1};
  EXPECT_THROW(relabel(c, bad), ParameterError);
}

TEST(AdjustedRand, KnownValues) {
  const std::vector<std::size_t> a{0, 0, 1, 1, 2, 2};
  const std::vector<std::size_t> permuted{2, 2, 0, 0, 1, 1};
  EXPECT_DOUBLE_EQ(adjusted_rand_index(a, permuted), 1.0);
  // Classic example: contingency [[1,1,0],[0,1,1]] has ARI -0.125... computed by hand below.
  const std::vector<std::size_t> x{0, 0, 0, 1, 1, 1};
  const std::vector<std::size_t> y{0, 0, 1, 1, 2, 2};
  // index = C(2,2)+C(1,2)+C(1,2)+C(2,2) = 2; rows 3+3 = 6; cols 1+1+1 = 3; total 15.
  const double expected = (2.0 - 6.0 * 3.0 / 15.0) / (0.5 * (6.0 + 3.0) - 6.0 * 3.0 / 15.0);
  EXPECT_NEAR(adjusted_rand_index(x, y), expected, 1e-15);
}

TEST(Permissiveness, MostAllowingClusterComesFirst) {
  const auto data = testing::make_dataset({{0, 0, 0, 1}, {0, 0, 0, 1}, {1, 1, 1, 1}, {1, 1, 1, 0}});
  const auto d = distance_matrix(similarity_matrix(data));
  const auto c = order_by_permissiveness(two_cluster({0, 0, 1, 1}, {0, 2}), data.answer_matrix());
  EXPECT_EQ(c.assignment, (std::vector<std::size_t>{1, 1, 0, 0}));
  EXPECT_EQ(c.medoid_ids, (std::vector<std::size_t>{2, 0}));
  EXPECT_EQ(profile_name(0, 3), "Inattentive");
  EXPECT_EQ(profile_name(1, 3), "Attentive");
  EXPECT_EQ(profile_name(2, 3), "Solicitous");
  EXPECT_EQ(profile_name(1, 4), "Profile 1");
}

TEST(ClusteringCsv, RoundTripsAndSummarizes) {
  std::mt19937_64 gen(14);
  const auto d = testing::random_distances(6, gen);
  const auto c = kmedoids_best_of(d, 2, 1);
  const std::vector<std::string> ids{"a", "b", "c", "d", "e", "f"};
  std::stringstream io;
  write_clustering_csv(c, ids, io);
  EXPECT_EQ(read_clustering_csv(io, ids), c.assignment);
  const auto summary = clustering_summary(c, ids, d);
  EXPECT_EQ(summary["kappa"], 2);
  EXPECT_EQ(summary["medoids"][0], ids[c.medoid_ids[0]]);
  EXPECT_DOUBLE_EQ(summary["cost"].get<double>(), c.total_cost);
  EXPECT_DOUBLE_EQ(summary["mean_silhouette"].get<double>(), silhouette(c, d).mean);
  std::stringstream bad("user_id,cluster\na,0\n");
  EXPECT_THROW(read_clustering_csv(bad, ids), LookupError);
}

}  // namespace
}  // namespace privprof
