#include "privprof/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <ostream>
#include <unordered_map>

#include "csv.hpp"
#include "privprof/error.hpp"
#include "privprof/rng.hpp"

namespace privprof {
namespace {

using Index = Eigen::Index;

double dist(const Eigen::MatrixXd& d, std::size_t a, std::size_t b) {
  return d(static_cast<Index>(a), static_cast<Index>(b));
}

struct Assignment {
  std::vector<std::size_t> cluster_of;
  double cost = 0.0;
};

// Medoids keep their own cluster; everybody else goes to the nearest medoid,
// lowest cluster index on ties.
Assignment assign(const Eigen::MatrixXd& d, const std::vector<std::size_t>& medoids) {
  const auto n = static_cast<std::size_t>(d.rows());
  Assignment out{std::vector<std::size_t>(n, 0), 0.0};
  std::vector<std::ptrdiff_t> medoid_cluster(n, -1);
  for (std::size_t c = 0; c < medoids.size(); ++c) {
    if (medoid_cluster[medoids[c]] < 0) medoid_cluster[medoids[c]] = static_cast<std::ptrdiff_t>(c);
  }
  for (std::size_t u = 0; u < n; ++u) {
    std::size_t best = 0;
    double best_distance = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < medoids.size(); ++c) {
      const double candidate = dist(d, u, medoids[c]);
      if (candidate < best_distance) {
        best_distance = candidate;
        best = c;
      }
    }
    if (medoid_cluster[u] >= 0) {
      best = static_cast<std::size_t>(medoid_cluster[u]);
    }
    out.cluster_of[u] = best;
    out.cost += dist(d, u, medoids[best]);
  }
  return out;
}

std::vector<std::size_t> update_medoids(const Eigen::MatrixXd& d, const std::vector<std::size_t>& medoids,
                                        const std::vector<std::size_t>& cluster_of) {
  std::vector<std::vector<std::size_t>> members(medoids.size());
  for (std::size_t u = 0; u < cluster_of.size(); ++u) {
    members[cluster_of[u]].push_back(u);
  }
  std::vector<std::size_t> updated = medoids;
  for (std::size_t c = 0; c < medoids.size(); ++c) {
    double best_sum = std::numeric_limits<double>::infinity();
    for (std::size_t candidate : members[c]) {
      double sum = 0.0;
      for (std::size_t v : members[c]) sum += dist(d, candidate, v);
      if (sum < best_sum) {
        best_sum = sum;
        updated[c] = candidate;
      }
    }
  }
  return updated;
}

void check_kappa(const Eigen::MatrixXd& d, std::size_t kappa) {
  if (kappa == 0 || kappa > static_cast<std::size_t>(d.rows())) {
    throw ParameterError("kappa must lie in 1..n (n = " + std::to_string(d.rows()) + ", kappa = " +
                         std::to_string(kappa) + ")");
  }
}

}  // namespace

std::vector<std::size_t> Clustering::members(std::size_t cluster) const {
  std::vector<std::size_t> out;
  for (std::size_t u = 0; u < assignment.size(); ++u) {
    if (assignment[u] == cluster) out.push_back(u);
  }
  return out;
}

std::vector<std::size_t> Clustering::cluster_sizes() const {
  std::vector<std::size_t> sizes(kappa, 0);
  for (std::size_t c : assignment) ++sizes[c];
  return sizes;
}

void validate_distance_matrix(const Eigen::MatrixXd& d) {
  if (d.rows() != d.cols()) {
    throw ValidationError("distance matrix must be square");
  }
  for (Index i = 0; i < d.rows(); ++i) {
    if (d(i, i) != 0.0) {
      throw ValidationError("distance matrix diagonal must be zero (row " + std::to_string(i) + ")");
    }
    for (Index j = i + 1; j < d.cols(); ++j) {
      if (!std::isfinite(d(i, j)) || d(i, j) != d(j, i)) {
        throw ValidationError("distance matrix is not symmetric at (" + std::to_string(i) + ", " +
                              std::to_string(j) + ")");
      }
    }
  }
}

std::vector<std::size_t> initial_medoids(std::size_t n, std::size_t kappa, std::uint64_t seed) {
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = 0; i < kappa; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.uniform_index(n - i));
    std::swap(pool[i], pool[j]);
  }
  std::vector<std::size_t> medoids(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(kappa));
  std::sort(medoids.begin(), medoids.end());
  return medoids;
}

Clustering kmedoids(const Eigen::MatrixXd& distances, std::size_t kappa, std::uint64_t seed,
                    std::size_t max_iter, Refinement refinement) {
  validate_distance_matrix(distances);
  check_kappa(distances, kappa);
  const auto n = static_cast<std::size_t>(distances.rows());
  auto medoids = initial_medoids(n, kappa, seed);

  Clustering result;
  result.kappa = kappa;
  result.seed = seed;
  auto current = assign(distances, medoids);
  result.cost_trace.push_back(current.cost);
  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    auto updated = update_medoids(distances, medoids, current.cluster_of);
    if (updated == medoids) break;
    medoids = std::move(updated);
    current = assign(distances, medoids);
    result.cost_trace.push_back(current.cost);
  }

  if (refinement == Refinement::kSwap) {
    std::vector<bool> is_medoid(n, false);
    for (std::size_t m : medoids) is_medoid[m] = true;
    while (true) {
      Assignment best = current;
      std::size_t best_slot = 0;
      std::size_t best_user = 0;
      for (std::size_t slot = 0; slot < kappa; ++slot) {
        for (std::size_t h = 0; h < n; ++h) {
          if (is_medoid[h]) continue;
          auto trial = medoids;
          trial[slot] = h;
          auto candidate = assign(distances, trial);
          if (candidate.cost < best.cost) {
            best = std::move(candidate);
            best_slot = slot;
            best_user = h;
          }
        }
      }
      if (!(best.cost < current.cost)) break;
      is_medoid[medoids[best_slot]] = false;
      is_medoid[best_user] = true;
      medoids[best_slot] = best_user;
      current = std::move(best);
      result.cost_trace.push_back(current.cost);
    }
  }

  result.medoid_ids = std::move(medoids);
  result.assignment = std::move(current.cluster_of);
  result.total_cost = current.cost;
  return result;
}

Clustering kmedoids_best_of(const Eigen::MatrixXd& distances, std::size_t kappa, std::uint64_t seed,
                            std::size_t restarts, std::size_t max_iter, Refinement refinement) {
  if (restarts == 0) {
    throw ParameterError("restarts must be positive");
  }
  validate_distance_matrix(distances);
  check_kappa(distances, kappa);
  const auto n = static_cast<std::size_t>(distances.rows());
  double subsets = 1.0;
  for (std::size_t i = 0; i < kappa; ++i) subsets = subsets * static_cast<double>(n - i) / static_cast<double>(i + 1);
  const auto wanted = static_cast<std::size_t>(std::min(static_cast<double>(restarts), std::round(subsets)));

  std::set<std::vector<std::size_t>> starts;
  std::optional<Clustering> best;
  for (std::uint64_t s = seed; starts.size() < wanted && s - seed < 100 * restarts; ++s) {
    if (!starts.insert(initial_medoids(n, kappa, s)).second) continue;
    auto candidate = kmedoids(distances, kappa, s, max_iter, refinement);
    if (!best || candidate.total_cost < best->total_cost) {
      best = std::move(candidate);
    }
  }
  return std::move(*best);
}

Clustering brute_force_kmedoids(const Eigen::MatrixXd& distances, std::size_t kappa) {
  validate_distance_matrix(distances);
  check_kappa(distances, kappa);
  const auto n = static_cast<std::size_t>(distances.rows());

  constexpr double kLimit = 1e6;
  double subsets = 1.0;
  for (std::size_t i = 0; i < kappa; ++i) {
    subsets = subsets * static_cast<double>(n - i) / static_cast<double>(i + 1);
  }
  if (subsets > kLimit + 0.5) {
    throw GuardError("brute-force k-medoids would enumerate " + std::to_string(std::llround(subsets)) +
                     " subsets (limit 1000000)");
  }

  std::vector<std::size_t> combo(kappa);
  std::iota(combo.begin(), combo.end(), std::size_t{0});
  Clustering best;
  best.kappa = kappa;
  best.total_cost = std::numeric_limits<double>::infinity();
  while (true) {
    auto candidate = assign(distances, combo);
    if (candidate.cost < best.total_cost) {
      best.total_cost = candidate.cost;
      best.medoid_ids = combo;
      best.assignment = std::move(candidate.cluster_of);
    }
    // Next combination in lexicographic order.
    std::size_t i = kappa;
    while (i > 0 && combo[i - 1] == n - kappa + (i - 1)) --i;
    if (i == 0) break;
    ++combo[i - 1];
    for (std::size_t j = i; j < kappa; ++j) combo[j] = combo[j - 1] + 1;
  }
  best.cost_trace.push_back(best.total_cost);
  return best;
}

double compactness(const Clustering& clustering, const Eigen::MatrixXd& distances) {
  double total = 0.0;
  for (std::size_t u = 0; u < clustering.assignment.size(); ++u) {
    total += dist(distances, u, clustering.medoid_ids[clustering.assignment[u]]);
  }
  return total;
}

SilhouetteScores silhouette(const Clustering& clustering, const Eigen::MatrixXd& distances) {
  if (clustering.kappa < 2) {
    throw ParameterError("silhouette needs at least two clusters");
  }
  const std::size_t n = clustering.assignment.size();
  std::vector<std::vector<std::size_t>> members(clustering.kappa);
  for (std::size_t u = 0; u < n; ++u) members[clustering.assignment[u]].push_back(u);

  SilhouetteScores scores{std::vector<double>(n, 0.0), 0.0};
  for (std::size_t u = 0; u < n; ++u) {
    const auto own = clustering.assignment[u];
    if (members[own].size() < 2) continue;
    double a = 0.0;
    for (std::size_t v : members[own]) {
      if (v != u) a += dist(distances, u, v);
    }
    a /= static_cast<double>(members[own].size() - 1);

    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < clustering.kappa; ++c) {
      if (c == own || members[c].empty()) continue;
      double sum = 0.0;
      for (std::size_t v : members[c]) sum += dist(distances, u, v);
      b = std::min(b, sum / static_cast<double>(members[c].size()));
    }
    if (!std::isfinite(b)) continue;
    const double denom = std::max(a, b);
    scores.per_user[u] = denom > 0.0 ? (b - a) / denom : 0.0;
  }
  if (n > 0) {
    scores.mean = std::accumulate(scores.per_user.begin(), scores.per_user.end(), 0.0) / static_cast<double>(n);
  }
  return scores;
}

double adjusted_rand_index(std::span<const std::size_t> labels_a, std::span<const std::size_t> labels_b) {
  if (labels_a.size() != labels_b.size()) {
    throw ParameterError("label vectors differ in length");
  }
  const double n = static_cast<double>(labels_a.size());
  std::map<std::pair<std::size_t, std::size_t>, double> table;
  std::map<std::size_t, double> rows;
  std::map<std::size_t, double> cols;
  for (std::size_t i = 0; i < labels_a.size(); ++i) {
    table[{labels_a[i], labels_b[i]}] += 1.0;
    rows[labels_a[i]] += 1.0;
    cols[labels_b[i]] += 1.0;
  }
  auto pairs = [](double k) { return k * (k - 1.0) / 2.0; };
  double index = 0.0;
  for (const auto& [key, count] : table) index += pairs(count);
  double sum_rows = 0.0;
  for (const auto& [key, count] : rows) sum_rows += pairs(count);
  double sum_cols = 0.0;
  for (const auto& [key, count] : cols) sum_cols += pairs(count);
  const double total = pairs(n);
  if (total == 0.0) return 1.0;
  const double expected = sum_rows * sum_cols / total;
  const double max_index = 0.5 * (sum_rows + sum_cols);
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

Clustering relabel(const Clustering& clustering, std::span<const std::size_t> new_index) {
  if (new_index.size() != clustering.kappa) {
    throw ParameterError("relabel map must cover every cluster");
  }
  std::vector<bool> used(clustering.kappa, false);
  for (std::size_t target : new_index) {
    if (target >= clustering.kappa || used[target]) {
      throw ParameterError("relabel map is not a permutation");
    }
    used[target] = true;
  }
  Clustering out = clustering;
  for (std::size_t c = 0; c < clustering.kappa; ++c) {
    out.medoid_ids[new_index[c]] = clustering.medoid_ids[c];
  }
  for (auto& c : out.assignment) c = new_index[c];
  return out;
}

Clustering order_by_permissiveness(const Clustering& clustering, const Eigen::MatrixXd& answers) {
  std::vector<double> mean(clustering.kappa, 0.0);
  const auto sizes = clustering.cluster_sizes();
  for (std::size_t u = 0; u < clustering.assignment.size(); ++u) {
    mean[clustering.assignment[u]] += answers.row(static_cast<Index>(u)).mean();
  }
  for (std::size_t c = 0; c < clustering.kappa; ++c) {
    if (sizes[c] > 0) mean[c] /= static_cast<double>(sizes[c]);
  }
  std::vector<std::size_t> order(clustering.kappa);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return mean[a] > mean[b]; });
  std::vector<std::size_t> new_index(clustering.kappa);
  for (std::size_t rank = 0; rank < order.size(); ++rank) new_index[order[rank]] = rank;
  return relabel(clustering, new_index);
}

std::string profile_name(std::size_t profile_id, std::size_t kappa) {
  static const char* kNames[] = {"Inattentive", "Attentive", "Solicitous"};
  if (kappa == 3 && profile_id < 3) return kNames[profile_id];
  return "Profile " + std::to_string(profile_id);
}

void write_clustering_csv(const Clustering& clustering, const std::vector<std::string>& user_ids,
                          std::ostream& out) {
  out << "user_id,cluster\n";
  for (std::size_t u = 0; u < clustering.assignment.size(); ++u) {
    out << csv::escape(user_ids.at(u)) << ',' << clustering.assignment[u] << '\n';
  }
}

std::vector<std::size_t> read_clustering_csv(std::istream& in, const std::vector<std::string>& user_ids) {
  std::string line;
  if (!csv::read_line(in, line) || csv::split_record(line) != std::vector<std::string>{"user_id", "cluster"}) {
    throw SchemaError("clustering CSV must have the header user_id,cluster");
  }
  std::unordered_map<std::string, std::size_t> cluster_of;
  while (csv::read_line(in, line)) {
    const auto fields = csv::split_record(line);
    if (fields.size() != 2) {
      throw SchemaError("clustering CSV rows need exactly two fields");
    }
    try {
      cluster_of[csv::trim(fields[0])] = static_cast<std::size_t>(std::stoul(fields[1]));
    } catch (const std::exception&) {
      throw SchemaError("invalid cluster index '" + fields[1] + "'");
    }
  }
  std::vector<std::size_t> assignment;
  assignment.reserve(user_ids.size());
  for (const auto& id : user_ids) {
    const auto it = cluster_of.find(id);
    if (it == cluster_of.end()) {
      throw LookupError("user " + id + " has no cluster assignment");
    }
    assignment.push_back(it->second);
  }
  return assignment;
}

nlohmann::json clustering_summary(const Clustering& clustering, const std::vector<std::string>& user_ids,
                                  const Eigen::MatrixXd& distances) {
  nlohmann::json medoids = nlohmann::json::array();
  for (std::size_t m : clustering.medoid_ids) medoids.push_back(user_ids.at(m));
  nlohmann::json summary = {
      {"kappa", clustering.kappa},
      {"medoids", medoids},
      {"cluster_sizes", clustering.cluster_sizes()},
      {"cost", clustering.total_cost},
      {"seed", clustering.seed},
  };
  if (clustering.kappa >= 2) {
    summary["mean_silhouette"] = silhouette(clustering, distances).mean;
  } else {
    summary["mean_silhouette"] = nullptr;
  }
  return summary;
}

}  // namespace privprof
