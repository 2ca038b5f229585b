#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "privprof/corpus.hpp"
#include "privprof/error.hpp"
#include "privprof/recommender.hpp"
#include "support.hpp"

namespace privprof {
namespace {

constexpr Cell U = Cell::kUnknown;
constexpr Cell D = Cell::kDeny;
constexpr Cell A = Cell::kAllow;

RatingsMatrix toy_matrix(std::vector<std::size_t> users = {0, 1, 2, 3}) {
  return build_ratings_matrix(testing::toy_dataset(), users);
}

double cell_value(Cell c) { return c == A ? 1.0 : 0.0; }

// Cosine on the target's known columns, written independently of the library.
double oracle_similarity(const RatingsMatrix& m, std::size_t row, const PartialRow& target) {
  double dot = 0.0, nt = 0.0, nr = 0.0;
  for (std::size_t c = 0; c < target.size(); ++c) {
    if (target[c] == U) continue;
    const double t = cell_value(target[c]);
    const double r = cell_value(m.at(row, c));
    dot += t * r;
    nt += t * t;
    nr += r * r;
  }
  return (nt == 0.0 || nr == 0.0) ? 0.0 : dot / std::sqrt(nt * nr);
}

double oracle_mean(const std::vector<Cell>& row) {
  double s = 0.0, n = 0.0;
  for (Cell c : row) {
    if (c == U) continue;
    s += cell_value(c);
    n += 1.0;
  }
  return n > 0 ? s / n : 0.0;
}

double oracle_predict(const RatingsMatrix& m, const PartialRow& target, std::size_t setting,
                      const std::vector<std::size_t>& rows) {
  double num = 0.0, den = 0.0;
  for (std::size_t r : rows) {
    const auto row = m.row(r);
    const double sim = oracle_similarity(m, r, target);
    num += (cell_value(m.at(r, setting)) - oracle_mean({row.begin(), row.end()})) * sim;
    den += sim;
  }
  const double base = oracle_mean(target);
  return den == 0.0 ? base : base + num / den;
}

TEST(RatingsMatrix, ToyRowsAndMeans) {
  const auto m = toy_matrix();
  EXPECT_EQ(m.rows(), 4u);
  EXPECT_EQ(m.cols(), 5u);
  EXPECT_EQ(m.at(2, 3), A);
  EXPECT_EQ(m.at(0, 2), D);
  EXPECT_DOUBLE_EQ(m.row_mean(0), 0.4);
  EXPECT_DOUBLE_EQ(m.row_mean(2), 0.8);
}

TEST(RatingsMatrix, RejectsBadShapeAndCells) {
  EXPECT_THROW(RatingsMatrix({"a"}, {"x", "y"}, {A}), ParameterError);
  EXPECT_THROW(RatingsMatrix({"a"}, {"x"}, {static_cast<Cell>(5)}), ParameterError);
}

TEST(RatingsMatrix, NumericAnswersThresholdAtHalf) {
  EXPECT_EQ(to_cell(0.5), A);
  EXPECT_EQ(to_cell(0.49), D);
  EXPECT_DOUBLE_EQ(known_mean(std::vector<Cell>{U, A, D, U}), 0.5);
  EXPECT_EQ(known_mean(std::vector<Cell>{U, U}), 0.0);
}

TEST(Neighbors, ToyFourUserTargetMatchesOracle) {
  // u4 with s3 and s5 hidden, compared against u1..u3.
  const auto m = toy_matrix({0, 1, 2});
  const PartialRow target{A, A, U, A, U};
  const auto search = top_similar_users(m, target, 3);
  ASSERT_EQ(search.neighbors.size(), 3u);
  for (const auto& n : search.neighbors) EXPECT_NEAR(n.similarity, oracle_similarity(m, n.row, target), 1e-12);
  EXPECT_EQ(search.neighbors[0].row, 0u);  // u1 shares s1 and s2
  EXPECT_GE(search.neighbors[0].similarity, search.neighbors[1].similarity);
  EXPECT_GE(search.neighbors[1].similarity, search.neighbors[2].similarity);
}

TEST(Neighbors, TiesBreakByRowAndKTruncates) {
  const RatingsMatrix m({"a", "b", "c"}, {"x", "y"}, {A, D, A, D, A, A});
  const auto search = top_similar_users(m, PartialRow{A, U}, 2);
  ASSERT_EQ(search.neighbors.size(), 2u);
  EXPECT_EQ(search.neighbors[0].row, 0u);
  EXPECT_EQ(search.neighbors[1].row, 1u);
}

TEST(Neighbors, ExcludedRowNeverReturned) {
  const auto m = toy_matrix();
  const auto search = top_similar_users(m, PartialRow{A, A, D, A, A}, 4, std::size_t{3});
  EXPECT_EQ(search.neighbors.size(), 3u);
  for (const auto& n : search.neighbors) EXPECT_NE(n.row, 3u);
}

TEST(Neighbors, TwinIsTheTopNeighbor) {
  const auto m = toy_matrix();
  const auto search = top_similar_users(m, PartialRow{A, D, A, A, U}, 1);
  ASSERT_EQ(search.neighbors.size(), 1u);
  EXPECT_EQ(search.neighbors[0].row, 2u);
  EXPECT_DOUBLE_EQ(search.neighbors[0].similarity, 1.0);
}

TEST(Neighbors, NoKnownCellMeansNoEvidence) {
  const auto search = top_similar_users(toy_matrix(), PartialRow{U, U, U, U, U}, 2);
  EXPECT_TRUE(search.no_evidence);
  EXPECT_TRUE(search.neighbors.empty());
  EXPECT_THROW(top_similar_users(toy_matrix(), PartialRow{A, U, U, U, U}, 0), ParameterError);
  EXPECT_THROW(top_similar_users(toy_matrix(), PartialRow{A, U}, 1), ParameterError);
}

TEST(Neighbors, TfIdfMetricWeightsRareColumns) {
  // s1 is allowed by every row, so it carries no weight under TF-IDF.
  const auto m = toy_matrix({0, 1, 2});
  const PartialRow target{A, U, A, U, U};
  const auto raw = top_similar_users(m, target, 3, std::nullopt, NeighborMetric::kRawRatings);
  const auto tfidf = top_similar_users(m, target, 3, std::nullopt, NeighborMetric::kTfIdf);
  auto sim_of = [](const NeighborSearch& s, std::size_t row) {
    for (const auto& n : s.neighbors)
      if (n.row == row) return n.similarity;
    return -1.0;
  };
  EXPECT_NEAR(sim_of(raw, 0), 1.0 / std::sqrt(2.0), 1e-12);
  EXPECT_EQ(sim_of(tfidf, 0), 0.0);
  EXPECT_NEAR(sim_of(tfidf, 1), 1.0, 1e-12);
  EXPECT_NEAR(sim_of(tfidf, 2), 1.0, 1e-12);
}

TEST(Predict, ThreeNeighborFormulaMatchesOracle) {
  const auto m = toy_matrix({0, 1, 2});
  const PartialRow target{A, A, U, A, U};
  const auto search = top_similar_users(m, target, 3);
  for (std::size_t s : {2u, 4u}) {
    const auto p = predict_rating(m, target, s, search.neighbors);
    EXPECT_FALSE(p.fallback);
    EXPECT_NEAR(p.score, oracle_predict(m, target, s, {0, 1, 2}), 1e-12);
  }
}

TEST(Predict, RandomInstancesMatchOracle) {
  std::mt19937_64 gen(31);
  std::bernoulli_distribution bit(0.45);
  std::bernoulli_distribution hide(0.4);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t rows = 3 + static_cast<std::size_t>(gen() % 10);
    const std::size_t cols = 4 + static_cast<std::size_t>(gen() % 8);
    std::vector<Cell> cells(rows * cols);
    for (auto& c : cells) c = bit(gen) ? A : D;
    std::vector<std::string> ids(rows), aliases(cols);
    for (std::size_t i = 0; i < rows; ++i) ids[i] = "u" + std::to_string(i);
    for (std::size_t i = 0; i < cols; ++i) aliases[i] = "s" + std::to_string(i);
    const RatingsMatrix m(ids, aliases, cells);
    PartialRow target(cols);
    for (auto& c : target) c = hide(gen) ? U : (bit(gen) ? A : D);
    target[0] = A;
    target[cols - 1] = U;
    const auto search = top_similar_users(m, target, rows);
    std::vector<std::size_t> all(rows);
    std::iota(all.begin(), all.end(), std::size_t{0});
    for (std::size_t s = 0; s < cols; ++s) {
      if (target[s] != U) continue;
      EXPECT_NEAR(predict_rating(m, target, s, search.neighbors).score, oracle_predict(m, target, s, all), 1e-12);
    }
  }
}

TEST(Predict, NeighborOrderDoesNotMatter) {
  const auto m = toy_matrix({0, 1, 2});
  const PartialRow target{A, A, U, A, U};
  auto neighbors = top_similar_users(m, target, 3).neighbors;
  const auto a = predict_rating(m, target, 4, neighbors);
  std::reverse(neighbors.begin(), neighbors.end());
  const auto b = predict_rating(m, target, 4, neighbors);
  EXPECT_EQ(a.score, b.score);

  const auto permuted = toy_matrix({2, 0, 1});
  const auto c = predict_rating(permuted, target, 4, top_similar_users(permuted, target, 3).neighbors);
  EXPECT_NEAR(a.score, c.score, 1e-12);
}

TEST(Predict, ConstantNeighborsLeaveTheTargetMean) {
  const RatingsMatrix m({"a", "b"}, {"x", "y", "z"}, {A, A, A, A, A, A});
  const PartialRow target{A, D, U};
  const auto p = predict_rating(m, target, 2, top_similar_users(m, target, 2).neighbors);
  EXPECT_FALSE(p.fallback);
  EXPECT_DOUBLE_EQ(p.score, 0.5);
}

TEST(Predict, ZeroSimilarityMassFallsBack) {
  const RatingsMatrix m({"a", "b"}, {"x", "y"}, {D, A, D, D});
  const PartialRow target{A, U};
  const auto p = predict_rating(m, target, 1, top_similar_users(m, target, 2).neighbors);
  EXPECT_TRUE(p.fallback);
  EXPECT_DOUBLE_EQ(p.score, 1.0);
}

TEST(Predict, KnownSettingRejected) {
  const auto m = toy_matrix();
  EXPECT_THROW(predict_rating(m, PartialRow{A, U, U, U, U}, 0, {}), ParameterError);
}

TEST(Recommend, RanksUnknownSettingsAndTruncates) {
  const auto m = toy_matrix({0, 1, 2});
  const PartialRow target{A, U, U, U, U};
  const auto all = recommend_top_n(m, target, 3, 10);
  EXPECT_EQ(all.entries.size(), 4u);
  for (std::size_t i = 1; i < all.entries.size(); ++i) {
    const auto& prev = all.entries[i - 1];
    const auto& cur = all.entries[i];
    EXPECT_TRUE(prev.score > cur.score || (prev.score == cur.score && prev.setting < cur.setting));
  }
  for (const auto& e : all.entries) EXPECT_EQ(e.value, e.score >= 0.5 ? 1 : 0);

  const auto two = recommend_top_n(m, target, 3, 2);
  ASSERT_EQ(two.entries.size(), 2u);
  EXPECT_EQ(two.entries[0].setting, all.entries[0].setting);
  EXPECT_EQ(two.cutoff, 2u);
  EXPECT_TRUE(recommend_top_n(m, target, 3, 0).entries.empty());
}

TEST(Recommend, EqualScoresOrderedByAlias) {
  const RatingsMatrix m({"a"}, {"k", "b", "x", "c"}, {A, A, A, A});
  const auto list = recommend_top_n(m, PartialRow{A, U, U, U}, 1, 5);
  ASSERT_EQ(list.entries.size(), 3u);
  EXPECT_EQ(list.entries[0].setting, "b");
  EXPECT_EQ(list.entries[1].setting, "c");
  EXPECT_EQ(list.entries[2].setting, "x");
}

TEST(Recommend, NeedsAKnownSetting) {
  EXPECT_THROW(recommend_top_n(toy_matrix(), PartialRow{U, U, U, U, U}, 2, 3), ParameterError);
}

TEST(Recommend, JsonCarriesEntriesAndFlags) {
  const auto list = recommend_top_n(toy_matrix({0, 1, 2}), PartialRow{A, A, U, A, U}, 3, 5);
  const auto j = to_json(list);
  EXPECT_EQ(j["entries"].size(), 2u);
  EXPECT_EQ(j["cutoff"], 5);
  EXPECT_FALSE(j["no_evidence"].get<bool>());
}

TEST(Recommend, ClusterMatrixNeedsMembers) {
  const auto d = testing::toy_dataset();
  Clustering c;
  c.kappa = 2;
  c.medoid_ids = {0, 1};
  c.assignment = {0, 0, 0, 0};
  EXPECT_EQ(build_cluster_matrix(d, c, 0).rows(), 4u);
  EXPECT_THROW(build_cluster_matrix(d, c, 1), ParameterError);
  c.assignment = {0, 0};
  EXPECT_THROW(build_cluster_matrix(d, c, 0), ParameterError);
}

// Hidden settings of planted-profile users: top-10 precision of the
// collaborative filter against the precision of a random pick.
TEST(Recommend, BeatsRandomPicksOnPlantedProfiles) {
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    SyntheticSpec spec;
    spec.n_users = 60;
    spec.catalog_width = 40;
    spec.n_planted = 3;
    spec.noise = 0.1;
    spec.seed = seed;
    const auto data = generate_synthetic(spec);
    std::mt19937_64 gen(seed);
    double cf_hits = 0.0, cf_total = 0.0, random_hits = 0.0, random_total = 0.0;
    for (std::size_t u = 0; u < 6; ++u) {
      std::vector<std::size_t> others;
      for (std::size_t v = 0; v < spec.n_users; ++v)
        if (v != u && data.planted_labels[v] == data.planted_labels[u]) others.push_back(v);
      const auto m = build_ratings_matrix(data.dataset, others);
      PartialRow target;
      for (double a : data.dataset.users[u].answers) target.push_back(to_cell(a));
      std::vector<std::size_t> hidden;
      for (std::size_t c = 0; c < target.size(); ++c) {
        if (std::bernoulli_distribution(0.5)(gen)) {
          hidden.push_back(c);
          target[c] = U;
        }
      }
      const auto list = recommend_top_n(m, target, 10, 10);
      for (const auto& e : list.entries) {
        cf_hits += data.dataset.users[u].answers[e.column] >= 0.5 ? 1.0 : 0.0;
        cf_total += 1.0;
      }
      for (std::size_t c : hidden) {
        random_hits += data.dataset.users[u].answers[c] >= 0.5 ? 1.0 : 0.0;
        random_total += 1.0;
      }
    }
    if (cf_hits / cf_total > random_hits / random_total) ++wins;
  }
  EXPECT_GE(wins, 27);
}

}  // namespace
}  // namespace privprof
