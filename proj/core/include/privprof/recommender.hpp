#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "privprof/clustering.hpp"
#include "privprof/corpus.hpp"

namespace privprof {

enum class Cell : std::int8_t { kUnknown = -1, kDeny = 0, kAllow = 1 };

using PartialRow = std::vector<Cell>;

// Numeric answers in [0, 1] are read as allow from 0.5 upward.
Cell to_cell(double value);

// Deny/allow/unknown ratings of one cluster's users over the settings.
class RatingsMatrix {
 public:
  RatingsMatrix(std::vector<std::string> user_ids, std::vector<std::string> aliases, std::vector<Cell> cells);

  std::size_t rows() const noexcept { return user_ids_.size(); }
  std::size_t cols() const noexcept { return aliases_.size(); }
  Cell at(std::size_t row, std::size_t col) const { return cells_[row * cols() + col]; }
  std::span<const Cell> row(std::size_t r) const { return {cells_.data() + r * cols(), cols()}; }
  const std::string& user_id(std::size_t r) const { return user_ids_[r]; }
  const std::string& alias(std::size_t c) const { return aliases_[c]; }
  const std::vector<std::string>& aliases() const noexcept { return aliases_; }

  // Mean over known entries; 0 for a row without any.
  double row_mean(std::size_t r) const { return row_means_[r]; }

 private:
  std::vector<std::string> user_ids_;
  std::vector<std::string> aliases_;
  std::vector<Cell> cells_;
  std::vector<double> row_means_;
};

double known_mean(std::span<const Cell> row);

// Fully known rows for the given users, in the given order.
RatingsMatrix build_ratings_matrix(const Dataset& dataset, std::span<const std::size_t> user_indices);
// Members of `cluster_id`; throws ParameterError when the cluster is empty.
RatingsMatrix build_cluster_matrix(const Dataset& dataset, const Clustering& clustering, std::size_t cluster_id);

// How target and candidate rows are weighted before the cosine.
enum class NeighborMetric {
  kRawRatings,  // plain 0/1 cells
  kTfIdf,       // cells scaled by ln(rows / allow count) of the column within the matrix
};

struct Neighbor {
  std::size_t row = 0;
  double similarity = 0.0;
};

struct NeighborSearch {
  std::vector<Neighbor> neighbors;
  // Set when the target has no known entry to compare on.
  bool no_evidence = false;
};

// Cosine between the target's known values and each row restricted to the
// target's known columns (unknown row cells count as 0). Highest similarity
// first, lowest row index on ties.
NeighborSearch top_similar_users(const RatingsMatrix& matrix, std::span<const Cell> target, std::size_t k,
                                 std::optional<std::size_t> exclude_row = std::nullopt,
                                 NeighborMetric metric = NeighborMetric::kRawRatings);

struct Prediction {
  double score = 0.0;
  // True when no neighbor rated the setting or the similarity mass is zero;
  // the score is then the target's own mean.
  bool fallback = false;
};

// r = mean_u + sum_v (r_v,s - mean_v) * sim(u, v) / sum_v sim(u, v), over the
// neighbors that rated s. Neighbors are summed in row order.
Prediction predict_rating(const RatingsMatrix& matrix, std::span<const Cell> target, std::size_t setting,
                          std::span<const Neighbor> neighbors);

struct Recommendation {
  std::string setting;
  std::size_t column = 0;
  double score = 0.0;
  int value = 0;
  bool fallback = false;
};

struct RecommendationList {
  std::vector<Recommendation> entries;
  std::size_t cutoff = 0;
  bool no_evidence = false;
};

// Scores every unknown setting of the target, ranks by score descending then
// alias ascending, and keeps the first `n`. Predicted value is score >= 0.5.
RecommendationList recommend_top_n(const RatingsMatrix& matrix, std::span<const Cell> target, std::size_t k,
                                   std::size_t n, std::optional<std::size_t> exclude_row = std::nullopt,
                                   NeighborMetric metric = NeighborMetric::kRawRatings);

nlohmann::json to_json(const RecommendationList& list);

}  // namespace privprof
