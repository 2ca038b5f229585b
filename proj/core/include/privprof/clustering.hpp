#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "privprof/corpus.hpp"

namespace privprof {

struct Clustering {
  std::size_t kappa = 0;
  // medoid_ids[c] is the user index representing cluster c.
  std::vector<std::size_t> medoid_ids;
  std::vector<std::size_t> assignment;
  double total_cost = 0.0;
  std::uint64_t seed = 0;
  // Cost after every assignment step and every accepted swap; the first entry
  // is the initial assignment.
  std::vector<double> cost_trace;

  std::size_t n_users() const noexcept { return assignment.size(); }
  std::vector<std::size_t> members(std::size_t cluster) const;
  std::vector<std::size_t> cluster_sizes() const;
};

// Square, symmetric, zero diagonal. Throws ValidationError otherwise.
void validate_distance_matrix(const Eigen::MatrixXd& distances);

enum class Refinement {
  kNone,  // alternating assignment / medoid update only
  kSwap,  // then single medoid swaps while any swap lowers the cost
};

// Alternating k-medoids: assign every user to its nearest medoid, then move
// each medoid to the member with the smallest summed distance to its
// co-members; stop when the medoids no longer move or after max_iter updates.
// Initial medoids are drawn uniformly without replacement from `seed`.
// With Refinement::kSwap the best improving (medoid, non-medoid) exchange is
// applied repeatedly afterwards.
Clustering kmedoids(const Eigen::MatrixXd& distances, std::size_t kappa, std::uint64_t seed,
                    std::size_t max_iter = 100, Refinement refinement = Refinement::kSwap);

// The initial medoids kmedoids draws for `seed`, sorted.
std::vector<std::size_t> initial_medoids(std::size_t n, std::size_t kappa, std::uint64_t seed);

// kmedoids from `restarts` distinct initial medoid sets, trying seeds seed,
// seed+1, ... and skipping seeds that repeat an earlier start (fewer restarts
// when fewer subsets exist). The lowest cost wins, the earliest seed on ties.
Clustering kmedoids_best_of(const Eigen::MatrixXd& distances, std::size_t kappa, std::uint64_t seed,
                            std::size_t restarts = 20, std::size_t max_iter = 100,
                            Refinement refinement = Refinement::kSwap);

// Exhaustive search over all medoid subsets in lexicographic order; the first
// minimal subset wins. Refuses instances with more than 10^6 subsets.
Clustering brute_force_kmedoids(const Eigen::MatrixXd& distances, std::size_t kappa);

// Sum of member-to-medoid distances; lower is better.
double compactness(const Clustering& clustering, const Eigen::MatrixXd& distances);

struct SilhouetteScores {
  std::vector<double> per_user;
  double mean = 0.0;
};

// Members of singleton clusters score 0.
SilhouetteScores silhouette(const Clustering& clustering, const Eigen::MatrixXd& distances);

double adjusted_rand_index(std::span<const std::size_t> labels_a, std::span<const std::size_t> labels_b);

// Renumbers clusters: cluster c becomes new_index[c].
Clustering relabel(const Clustering& clustering, std::span<const std::size_t> new_index);

// Orders clusters from most to least permissive (mean answer value of the
// members, descending), so profile 0 is the most permissive group.
Clustering order_by_permissiveness(const Clustering& clustering, const Eigen::MatrixXd& answers);

// Inattentive / Attentive / Solicitous for three profiles, "Profile <i>" otherwise.
std::string profile_name(std::size_t profile_id, std::size_t kappa);

void write_clustering_csv(const Clustering& clustering, const std::vector<std::string>& user_ids,
                          std::ostream& out);
// Reads user_id,cluster rows back into an assignment aligned with `user_ids`.
std::vector<std::size_t> read_clustering_csv(std::istream& in, const std::vector<std::string>& user_ids);

nlohmann::json clustering_summary(const Clustering& clustering, const std::vector<std::string>& user_ids,
                                  const Eigen::MatrixXd& distances);

}  // namespace privprof
