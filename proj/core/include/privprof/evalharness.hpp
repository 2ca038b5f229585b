#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "privprof/classifier.hpp"
#include "privprof/clustering.hpp"
#include "privprof/corpus.hpp"
#include "privprof/recommender.hpp"

namespace privprof {

// ---------------------------------------------------------------------------
// Metrics

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;

  std::size_t total() const noexcept { return tp + fp + fn + tn; }
  ConfusionCounts& operator+=(const ConfusionCounts& other) noexcept;
  bool operator==(const ConfusionCounts&) const = default;
};

struct PrecisionRecall {
  double precision = 0.0;
  double recall = 0.0;
  // Set when the denominator is zero; the value is then reported as 0.
  bool precision_undefined = false;
  bool recall_undefined = false;
};

PrecisionRecall precision_recall(const ConfusionCounts& counts);

struct Rate {
  double value = 0.0;
  bool undefined = false;
};

// FP / (TN + FP).
Rate fpr(const ConfusionCounts& counts);

// Confusion counts of the first `n` entries of a ranked list against held-out
// ground truth: positives are held-out settings the user allows.
ConfusionCounts score_top_n(const RecommendationList& list, std::size_t n, std::span<const std::size_t> held_out,
                            std::span<const double> answers);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;
  double auc = 0.0;
  int class_id = 0;
};

// One-vs-rest sweep over every distinct score, highest first. The curve runs
// from (0,0) to (1,1); AUC is the trapezoidal area. Throws ParameterError when
// the class has no positive or no negative example.
RocCurve roc_curve(std::span<const double> scores, std::span<const int> labels, int class_id);
// Uses column `class_id` of a per-example score matrix.
RocCurve roc_curve(const Eigen::MatrixXd& class_scores, std::span<const int> labels, int class_id);

double trapezoid_area(std::span<const RocPoint> points);

struct PrPoint {
  std::size_t n = 0;
  double precision = 0.0;
  double recall = 0.0;
};

struct PrCurve {
  double alpha = 0.0;
  std::size_t k = 0;
  std::vector<PrPoint> points;
};

// ---------------------------------------------------------------------------
// Experiment reports

struct ExperimentReport {
  std::string experiment_id;
  nlohmann::json configuration = nlohmann::json::object();
  nlohmann::json per_fold = nlohmann::json::array();
  nlohmann::json aggregate = nlohmann::json::object();
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> warnings;
  // Published figures for orientation; never used as pass/fail thresholds.
  nlohmann::json reference_annotations = nlohmann::json::object();
  // File name -> contents, written next to the JSON report.
  std::map<std::string, std::string> artifacts;

  nlohmann::json to_json() const;
  // Writes <experiment_id>.json plus every artifact; returns the written paths.
  std::vector<std::filesystem::path> write(const std::filesystem::path& out_dir) const;
};

// SHA-256 of the dataset's canonical CSV form.
std::string dataset_digest(const Dataset& dataset);

std::string roc_csv(const RocCurve& curve);
std::string pr_csv(const PrCurve& curve);
// "pr_a0.3_k15.csv"
std::string pr_file_name(double alpha, std::size_t k);

// ---------------------------------------------------------------------------
// Self-assessment consistency

struct SelfLabelConfig {
  std::size_t n_folds = 10;
  std::uint64_t seed = 0;
  TrainConfig train{};
  // Unset: compare each user with its single nearest neighbor. Set: count a
  // user when any other user at or above this similarity has another label.
  std::optional<double> similarity_threshold;
};

struct SelfLabelResult {
  std::vector<RocCurve> roc;
  double cross_class_rate = 0.0;
  ExperimentReport report;
};

// Ten-fold classifier cross-validation against self labels, pooled ROC per
// class, plus the rate of users whose most similar peer (TF-IDF cosine)
// carries a different self label.
SelfLabelResult run_selflabel_consistency(const Dataset& dataset, const SelfLabelConfig& config);

// Fraction of users whose nearest neighbor by `similarity` has a different label.
double cross_class_rate(const Eigen::MatrixXd& similarity, std::span<const int> labels,
                        std::optional<double> threshold = std::nullopt);

// ---------------------------------------------------------------------------
// Question-subset clustering study

struct SubsetEntry {
  std::string label;
  std::vector<std::string> subsets;
};

struct SubsetSuite {
  std::string name;
  std::vector<SubsetEntry> entries;
};

// QS1: D, A, G, COM. (D+A+G), G+AP2.  QS2: DP1, AP1, GP1, COM.
// QS3: G1..G5, COM. (G1+...+G5). Throws LookupError for other names.
SubsetSuite builtin_suite(std::string_view name);
std::vector<std::string> builtin_suite_names();

struct SubsetClusteringConfig {
  std::vector<std::size_t> kappas{3};
  std::uint64_t seed = 0;
  std::size_t restarts = 20;
  std::size_t max_iter = 100;
};

struct SubsetClusteringRow {
  std::string suite;
  std::string entry;
  std::size_t width = 0;
  std::size_t kappa = 0;
  double compactness = 0.0;
  std::optional<double> silhouette;
};

struct SubsetClusteringResult {
  std::vector<SubsetClusteringRow> rows;
  ExperimentReport report;
};

SubsetClusteringResult run_subset_clustering(const Dataset& dataset, std::span<const SubsetSuite> suites,
                                             const SubsetClusteringConfig& config);

// ---------------------------------------------------------------------------
// Recommendation sweep

// Which answers the classifier sees when routing a test user to a cluster.
enum class QueryRouting {
  kQueryOnly,    // revealed settings only, hidden ones as 0
  kFullProfile,  // the complete answer vector
};

struct RecommendationSweepConfig {
  std::vector<double> alphas{0.1, 0.3, 0.5};
  std::vector<std::size_t> ks{3, 5, 10, 15};
  std::size_t n_max = 50;
  std::size_t n_folds = 10;
  std::uint64_t seed = 0;
  TrainConfig train{};
  QueryRouting routing = QueryRouting::kQueryOnly;
  NeighborMetric neighbor_metric = NeighborMetric::kRawRatings;
};

struct RecommendationSweepResult {
  std::vector<PrCurve> curves;
  ExperimentReport report;

  const PrCurve& curve(double alpha, std::size_t k) const;
};

// Per fold: train the classifier on the other folds' cluster labels; for each
// test user and alpha, mask the settings, route the query to a cluster,
// recommend from that cluster's training members and score every cutoff
// N = 1..n_max. Counts are summed per fold, turned into precision/recall and
// averaged over folds.
RecommendationSweepResult run_recommendation_sweep(const Dataset& dataset, const Clustering& clustering,
                                                   const RecommendationSweepConfig& config);

}  // namespace privprof
