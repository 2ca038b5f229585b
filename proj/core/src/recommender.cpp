#include "privprof/recommender.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "privprof/error.hpp"

namespace privprof {
namespace {

bool known(Cell c) { return c != Cell::kUnknown; }

double value_of(Cell c) { return c == Cell::kAllow ? 1.0 : 0.0; }

}  // namespace

Cell to_cell(double value) { return value >= 0.5 ? Cell::kAllow : Cell::kDeny; }

double known_mean(std::span<const Cell> row) {
  double sum = 0.0;
  std::size_t count = 0;
  for (Cell c : row) {
    if (known(c)) {
      sum += value_of(c);
      ++count;
    }
  }
  return count > 0 ? sum / static_cast<double>(count) : 0.0;
}

RatingsMatrix::RatingsMatrix(std::vector<std::string> user_ids, std::vector<std::string> aliases,
                             std::vector<Cell> cells)
    : user_ids_(std::move(user_ids)), aliases_(std::move(aliases)), cells_(std::move(cells)) {
  if (cells_.size() != user_ids_.size() * aliases_.size()) {
    throw ParameterError("ratings matrix needs rows * cols cells");
  }
  for (Cell c : cells_) {
    if (c != Cell::kUnknown && c != Cell::kDeny && c != Cell::kAllow) {
      throw ParameterError("ratings cells must be deny, allow or unknown");
    }
  }
  row_means_.reserve(user_ids_.size());
  for (std::size_t r = 0; r < user_ids_.size(); ++r) {
    row_means_.push_back(known_mean(row(r)));
  }
}

RatingsMatrix build_ratings_matrix(const Dataset& dataset, std::span<const std::size_t> user_indices) {
  std::vector<std::string> ids;
  std::vector<std::string> aliases;
  std::vector<Cell> cells;
  ids.reserve(user_indices.size());
  cells.reserve(user_indices.size() * dataset.width());
  for (const auto& q : dataset.catalog.questions()) aliases.push_back(q.alias);
  for (std::size_t u : user_indices) {
    const auto& user = dataset.users.at(u);
    ids.push_back(user.user_id);
    for (double v : user.answers) cells.push_back(to_cell(v));
  }
  return RatingsMatrix(std::move(ids), std::move(aliases), std::move(cells));
}

RatingsMatrix build_cluster_matrix(const Dataset& dataset, const Clustering& clustering, std::size_t cluster_id) {
  if (clustering.assignment.size() != dataset.n_users()) {
    throw ParameterError("clustering does not cover the dataset's users");
  }
  const auto members = clustering.members(cluster_id);
  if (members.empty()) {
    throw ParameterError("cluster " + std::to_string(cluster_id) + " is empty");
  }
  return build_ratings_matrix(dataset, members);
}

NeighborSearch top_similar_users(const RatingsMatrix& matrix, std::span<const Cell> target, std::size_t k,
                                 std::optional<std::size_t> exclude_row, NeighborMetric metric) {
  if (k == 0) {
    throw ParameterError("k must be at least 1");
  }
  if (target.size() != matrix.cols()) {
    throw ParameterError("target row width does not match the ratings matrix");
  }
  std::vector<std::size_t> known_columns;
  for (std::size_t c = 0; c < target.size(); ++c) {
    if (known(target[c])) known_columns.push_back(c);
  }
  NeighborSearch search;
  if (known_columns.empty()) {
    search.no_evidence = true;
    return search;
  }

  std::vector<double> weight(target.size(), 1.0);
  if (metric == NeighborMetric::kTfIdf) {
    const auto rows = static_cast<double>(matrix.rows());
    for (std::size_t c : known_columns) {
      double allow = 0.0;
      for (std::size_t r = 0; r < matrix.rows(); ++r) allow += matrix.at(r, c) == Cell::kAllow ? 1.0 : 0.0;
      weight[c] = allow > 0.0 ? std::log(rows / allow) : 0.0;
    }
  }

  double target_norm = 0.0;
  for (std::size_t c : known_columns) target_norm += std::pow(value_of(target[c]) * weight[c], 2);
  for (std::size_t r = 0; r < matrix.rows(); ++r) {
    if (exclude_row && *exclude_row == r) continue;
    double dot = 0.0;
    double row_norm = 0.0;
    for (std::size_t c : known_columns) {
      const double v = value_of(matrix.at(r, c)) * weight[c];
      dot += value_of(target[c]) * weight[c] * v;
      row_norm += v * v;
    }
    const double sim = (target_norm == 0.0 || row_norm == 0.0)
                           ? 0.0
                           : std::min(1.0, dot / (std::sqrt(target_norm) * std::sqrt(row_norm)));
    search.neighbors.push_back({r, sim});
  }
  std::sort(search.neighbors.begin(), search.neighbors.end(), [](const Neighbor& a, const Neighbor& b) {
    return a.similarity != b.similarity ? a.similarity > b.similarity : a.row < b.row;
  });
  if (search.neighbors.size() > k) search.neighbors.resize(k);
  return search;
}

Prediction predict_rating(const RatingsMatrix& matrix, std::span<const Cell> target, std::size_t setting,
                          std::span<const Neighbor> neighbors) {
  if (target.size() != matrix.cols() || setting >= matrix.cols()) {
    throw ParameterError("setting or target row outside the ratings matrix");
  }
  if (known(target[setting])) {
    throw ParameterError("setting " + matrix.alias(setting) + " is already known for the target");
  }
  const double target_mean = known_mean(target);

  std::vector<Neighbor> ordered(neighbors.begin(), neighbors.end());
  std::sort(ordered.begin(), ordered.end(), [](const Neighbor& a, const Neighbor& b) { return a.row < b.row; });

  double numerator = 0.0;
  double mass = 0.0;
  bool any_rated = false;
  for (const auto& v : ordered) {
    const Cell rating = matrix.at(v.row, setting);
    if (!known(rating)) continue;
    any_rated = true;
    numerator += (value_of(rating) - matrix.row_mean(v.row)) * v.similarity;
    mass += v.similarity;
  }
  if (!any_rated || mass == 0.0) {
    return {target_mean, true};
  }
  return {target_mean + numerator / mass, false};
}

RecommendationList recommend_top_n(const RatingsMatrix& matrix, std::span<const Cell> target, std::size_t k,
                                   std::size_t n, std::optional<std::size_t> exclude_row, NeighborMetric metric) {
  if (std::none_of(target.begin(), target.end(), known)) {
    throw ParameterError("recommendation needs at least one known setting");
  }
  const auto search = top_similar_users(matrix, target, k, exclude_row, metric);
  RecommendationList list;
  list.cutoff = n;
  list.no_evidence = search.no_evidence;
  for (std::size_t c = 0; c < target.size(); ++c) {
    if (known(target[c])) continue;
    const auto p = predict_rating(matrix, target, c, search.neighbors);
    list.entries.push_back({matrix.alias(c), c, p.score, p.score >= 0.5 ? 1 : 0, p.fallback});
  }
  std::sort(list.entries.begin(), list.entries.end(), [](const Recommendation& a, const Recommendation& b) {
    return a.score != b.score ? a.score > b.score : a.setting < b.setting;
  });
  if (list.entries.size() > n) list.entries.resize(n);
  return list;
}

nlohmann::json to_json(const RecommendationList& list) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : list.entries) {
    entries.push_back({{"setting", e.setting}, {"score", e.score}, {"value", e.value}, {"fallback", e.fallback}});
  }
  return {{"entries", entries}, {"cutoff", list.cutoff}, {"no_evidence", list.no_evidence}};
}

}  // namespace privprof
