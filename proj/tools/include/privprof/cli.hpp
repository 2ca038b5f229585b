#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "privprof/classifier.hpp"
#include "privprof/clustering.hpp"
#include "privprof/evalharness.hpp"

namespace privprof::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitRuntime = 3;

struct IngestOptions {
  std::filesystem::path input;
  std::optional<std::filesystem::path> taxonomy;
  std::filesystem::path out_dir;
  std::uint64_t seed = 0;
};

// Writes dataset.csv, taxonomy.csv and validation.json into out_dir.
nlohmann::json run_ingest(const IngestOptions& options);

enum class SelfLabels { kNone, kPlanted, kPermuted };

struct GenerateOptions {
  SyntheticSpec spec{};
  SelfLabels self_labels = SelfLabels::kPlanted;
  std::filesystem::path out_dir;
};

// Writes taxonomy.csv, dataset.csv, planted_labels.csv and generate.json.
nlohmann::json run_generate(const GenerateOptions& options);

struct PipelineOptions {
  std::filesystem::path dataset;
  std::optional<std::filesystem::path> taxonomy;
  std::string subset = "G+AP2";
  std::size_t kappa = 3;
  std::uint64_t seed = 0;
  std::size_t restarts = 20;
  TrainConfig train{};
  std::filesystem::path out_dir;
};

struct PipelineResult {
  Clustering clustering;
  // Absent for kappa = 1, where there is nothing to classify.
  std::optional<NetworkModel> model;
  nlohmann::json manifest;
};

// Subset projection, TF-IDF, k-medoids, classifier training. Writes
// model.json (kappa >= 2), clustering.csv, clustering.json and pipeline.json.
PipelineResult run_pipeline(const PipelineOptions& options);

struct ExperimentOptions {
  std::string suite;  // rq1 | rq2 | rq3
  std::filesystem::path dataset;
  std::optional<std::filesystem::path> taxonomy;
  std::optional<std::filesystem::path> clustering;  // rq3; clustered here when unset
  std::string subset = "G+AP2";
  std::uint64_t seed = 0;
  std::vector<std::size_t> kappas{3};
  std::vector<std::string> suites;  // rq2; all built-in suites when empty
  std::vector<double> alphas{0.1, 0.3, 0.5};
  std::vector<std::size_t> ks{3, 5, 10, 15};
  std::size_t n_max = 50;
  std::size_t folds = 10;
  std::size_t restarts = 20;
  std::optional<double> similarity_threshold;
  NeighborMetric neighbor_metric = NeighborMetric::kRawRatings;
  TrainConfig train{};
  std::filesystem::path out_dir;
};

ExperimentReport run_experiment(const ExperimentOptions& options);

// Full command line entry point; returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace privprof::cli
