#include "privprof/evalharness.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "csv.hpp"
#include "privprof/digest.hpp"
#include "privprof/error.hpp"
#include "privprof/rng.hpp"
#include "privprof/similarity.hpp"

namespace privprof {
namespace {

using Index = Eigen::Index;

double ratio(std::size_t num, std::size_t den) {
  return static_cast<double>(num) / static_cast<double>(den);
}

std::vector<int> labels_from_assignment(std::span<const std::size_t> assignment) {
  return {assignment.begin(), assignment.end()};
}

Eigen::MatrixXd rows_of(const Eigen::MatrixXd& m, std::span<const std::size_t> rows) {
  Eigen::MatrixXd out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = m.row(static_cast<Index>(rows[i]));
  return out;
}

nlohmann::json train_config_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"hidden_width", c.hidden_width}};
}

}  // namespace

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& other) noexcept {
  tp += other.tp;
  fp += other.fp;
  fn += other.fn;
  tn += other.tn;
  return *this;
}

PrecisionRecall precision_recall(const ConfusionCounts& c) {
  PrecisionRecall pr;
  if (c.tp + c.fp > 0) {
    pr.precision = ratio(c.tp, c.tp + c.fp);
  } else {
    pr.precision_undefined = true;
  }
  if (c.tp + c.fn > 0) {
    pr.recall = ratio(c.tp, c.tp + c.fn);
  } else {
    pr.recall_undefined = true;
  }
  return pr;
}

Rate fpr(const ConfusionCounts& c) {
  if (c.tn + c.fp == 0) return {0.0, true};
  return {ratio(c.fp, c.tn + c.fp), false};
}

ConfusionCounts score_top_n(const RecommendationList& list, std::size_t n, std::span<const std::size_t> held_out,
                            std::span<const double> answers) {
  std::set<std::size_t> recommended;
  for (std::size_t i = 0; i < std::min(n, list.entries.size()); ++i) {
    recommended.insert(list.entries[i].column);
  }
  ConfusionCounts c;
  std::size_t held_out_recommended = 0;
  for (std::size_t s : held_out) {
    const bool positive = answers[s] >= 0.5;
    const bool hit = recommended.contains(s);
    held_out_recommended += hit ? 1 : 0;
    if (positive && hit) ++c.tp;
    else if (positive) ++c.fn;
    else if (hit) ++c.fp;
    else ++c.tn;
  }
  // Recommended columns outside the held-out set match nothing in the truth.
  c.fp += recommended.size() - held_out_recommended;
  return c;
}

double trapezoid_area(std::span<const RocPoint> points) {
  double area = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    area += (points[i].fpr - points[i - 1].fpr) * (points[i].tpr + points[i - 1].tpr) / 2.0;
  }
  return area;
}

RocCurve roc_curve(std::span<const double> scores, std::span<const int> labels, int class_id) {
  if (scores.size() != labels.size()) {
    throw ParameterError("one score per label is required");
  }
  const auto positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), class_id));
  const auto negatives = labels.size() - positives;
  if (positives == 0 || negatives == 0) {
    throw ParameterError("AUC is undefined for class " + std::to_string(class_id) +
                         ": it needs both positive and negative examples");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocCurve curve;
  curve.class_id = class_id;
  curve.points.push_back({0.0, 0.0});
  std::size_t tp = 0;
  std::size_t fp = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (labels[order[i]] == class_id) ++tp;
    else ++fp;
    const bool last_of_threshold = i + 1 == order.size() || scores[order[i + 1]] != scores[order[i]];
    if (last_of_threshold) {
      curve.points.push_back({ratio(fp, negatives), ratio(tp, positives)});
    }
  }
  curve.auc = trapezoid_area(curve.points);
  return curve;
}

RocCurve roc_curve(const Eigen::MatrixXd& class_scores, std::span<const int> labels, int class_id) {
  if (class_id < 0 || class_id >= class_scores.cols()) {
    throw ParameterError("class id outside the score matrix");
  }
  std::vector<double> column(static_cast<std::size_t>(class_scores.rows()));
  for (Index r = 0; r < class_scores.rows(); ++r) column[static_cast<std::size_t>(r)] = class_scores(r, class_id);
  return roc_curve(column, labels, class_id);
}

nlohmann::json ExperimentReport::to_json() const {
  std::vector<std::string> files;
  for (const auto& [name, contents] : artifacts) files.push_back(name);
  return {
      {"experiment_id", experiment_id},
      {"configuration", configuration},
      {"per_fold", per_fold},
      {"aggregate", aggregate},
      {"seeds", seeds},
      {"warnings", warnings},
      {"reference_annotations", reference_annotations},
      {"artifacts", files},
  };
}

std::vector<std::filesystem::path> ExperimentReport::write(const std::filesystem::path& out_dir) const {
  std::vector<std::filesystem::path> written;
  const auto report_path = out_dir / (experiment_id + ".json");
  write_file(report_path, to_json().dump(2) + "\n");
  written.push_back(report_path);
  for (const auto& [name, contents] : artifacts) {
    write_file(out_dir / name, contents);
    written.push_back(out_dir / name);
  }
  return written;
}

std::string dataset_digest(const Dataset& dataset) {
  std::ostringstream out;
  write_dataset(dataset, out);
  return sha256_hex(out.str());
}

std::string roc_csv(const RocCurve& curve) {
  std::string out = "fpr,tpr\n";
  for (const auto& p : curve.points) out += csv::number(p.fpr) + "," + csv::number(p.tpr) + "\n";
  return out;
}

std::string pr_csv(const PrCurve& curve) {
  std::string out = "n,precision,recall\n";
  for (const auto& p : curve.points) {
    out += std::to_string(p.n) + "," + csv::number(p.precision) + "," + csv::number(p.recall) + "\n";
  }
  return out;
}

std::string pr_file_name(double alpha, std::size_t k) {
  return "pr_a" + csv::number(alpha) + "_k" + std::to_string(k) + ".csv";
}

// ---------------------------------------------------------------------------

double cross_class_rate(const Eigen::MatrixXd& similarity, std::span<const int> labels,
                        std::optional<double> threshold) {
  const auto n = static_cast<std::size_t>(similarity.rows());
  if (labels.size() != n) {
    throw ParameterError("one label per user is required");
  }
  if (n < 2) return 0.0;
  std::size_t crossing = 0;
  for (std::size_t u = 0; u < n; ++u) {
    bool counted = false;
    if (threshold) {
      for (std::size_t v = 0; v < n && !counted; ++v) {
        counted = v != u && labels[v] != labels[u] &&
                  similarity(static_cast<Index>(u), static_cast<Index>(v)) >= *threshold;
      }
    } else {
      std::size_t nearest = u == 0 ? 1 : 0;
      for (std::size_t v = 0; v < n; ++v) {
        if (v == u) continue;
        if (similarity(static_cast<Index>(u), static_cast<Index>(v)) >
            similarity(static_cast<Index>(u), static_cast<Index>(nearest))) {
          nearest = v;
        }
      }
      counted = labels[nearest] != labels[u];
    }
    crossing += counted ? 1 : 0;
  }
  return ratio(crossing, n);
}

SelfLabelResult run_selflabel_consistency(const Dataset& dataset, const SelfLabelConfig& config) {
  std::vector<int> labels;
  labels.reserve(dataset.n_users());
  for (const auto& user : dataset.users) {
    if (!user.self_label) {
      throw ParameterError("user " + user.user_id + " has no self-assessed label");
    }
    labels.push_back(*user.self_label);
  }
  if (labels.empty()) {
    throw ParameterError("self-label consistency needs at least one user");
  }
  const auto n_classes = static_cast<std::size_t>(*std::max_element(labels.begin(), labels.end()) + 1);
  if (n_classes < 2) {
    throw ParameterError("self-label consistency needs at least two label classes");
  }

  SelfLabelResult result;
  auto& report = result.report;
  report.experiment_id = "rq1";
  report.seeds = {config.seed};
  report.configuration = {{"n_folds", config.n_folds},
                          {"seed", config.seed},
                          {"train", train_config_json(config.train)},
                          {"n_users", dataset.n_users()},
                          {"width", dataset.width()},
                          {"dataset_digest", dataset_digest(dataset)}};
  report.configuration["similarity_threshold"] =
      config.similarity_threshold ? nlohmann::json(*config.similarity_threshold) : nlohmann::json(nullptr);
  report.reference_annotations = {{"auc_upper_bound_self_labels", 0.65}, {"cross_class_rate", 0.962}};

  const auto x = dataset.answer_matrix();
  const auto folds = kfold_split(dataset.n_users(), config.n_folds, config.seed, labels);
  Eigen::MatrixXd pooled = Eigen::MatrixXd::Constant(x.rows(), static_cast<Index>(n_classes),
                                                     1.0 / static_cast<double>(n_classes));
  for (std::size_t f = 0; f < config.n_folds; ++f) {
    const auto train_rows = folds.complement(f);
    const auto test_rows = folds.members(f);
    std::vector<int> train_labels;
    for (std::size_t r : train_rows) train_labels.push_back(labels[r]);
    TrainConfig train_config = config.train;
    train_config.seed = mix_seed(config.seed, f);
    std::size_t correct = 0;
    try {
      const auto model = train(rows_of(x, train_rows), train_labels, n_classes, train_config);
      const auto scores = predict_scores(model, rows_of(x, test_rows));
      for (std::size_t i = 0; i < test_rows.size(); ++i) {
        pooled.row(static_cast<Index>(test_rows[i])) = scores.row(static_cast<Index>(i));
        Index best = 0;
        scores.row(static_cast<Index>(i)).maxCoeff(&best);
        correct += static_cast<int>(best) == labels[test_rows[i]] ? 1 : 0;
      }
    } catch (const TrainingError& e) {
      report.warnings.push_back("fold " + std::to_string(f) + ": " + e.what() + "; uniform scores used");
    }
    report.per_fold.push_back({{"fold", f},
                               {"n_test", test_rows.size()},
                               {"accuracy", test_rows.empty() ? 0.0 : ratio(correct, test_rows.size())}});
  }

  nlohmann::json aucs = nlohmann::json::object();
  for (std::size_t c = 0; c < n_classes; ++c) {
    try {
      auto curve = roc_curve(pooled, labels, static_cast<int>(c));
      aucs["class" + std::to_string(c)] = curve.auc;
      report.artifacts["roc_class" + std::to_string(c) + ".csv"] = roc_csv(curve);
      result.roc.push_back(std::move(curve));
    } catch (const ParameterError& e) {
      report.warnings.push_back(e.what());
    }
  }

  const auto sims = similarity_matrix(dataset);
  result.cross_class_rate = cross_class_rate(sims.values, labels, config.similarity_threshold);
  report.aggregate = {{"auc", aucs}, {"cross_class_rate", result.cross_class_rate}};
  return result;
}

// ---------------------------------------------------------------------------

SubsetSuite builtin_suite(std::string_view name) {
  if (name == "QS1") {
    return {"QS1", {{"D", {"D"}}, {"A", {"A"}}, {"G", {"G"}}, {"COM.", {"D", "A", "G"}}, {"G+AP2", {"G", "AP2"}}}};
  }
  if (name == "QS2") {
    return {"QS2", {{"DP1", {"DP1"}}, {"AP1", {"AP1"}}, {"GP1", {"GP1"}}, {"COM.", {"DP1", "AP1", "GP1"}}}};
  }
  if (name == "QS3") {
    return {"QS3",
            {{"G1", {"G1"}},
             {"G2", {"G2"}},
             {"G3", {"G3"}},
             {"G4", {"G4"}},
             {"G5", {"G5"}},
             {"COM.", {"G1", "G2", "G3", "G4", "G5"}}}};
  }
  throw LookupError("unknown subset suite: " + std::string(name));
}

std::vector<std::string> builtin_suite_names() { return {"QS1", "QS2", "QS3"}; }

SubsetClusteringResult run_subset_clustering(const Dataset& dataset, std::span<const SubsetSuite> suites,
                                             const SubsetClusteringConfig& config) {
  SubsetClusteringResult result;
  auto& report = result.report;
  report.experiment_id = "rq2";
  for (std::size_t r = 0; r < config.restarts; ++r) report.seeds.push_back(config.seed + r);
  report.configuration = {{"kappas", config.kappas},
                          {"seed", config.seed},
                          {"restarts", config.restarts},
                          {"max_iter", config.max_iter},
                          {"n_users", dataset.n_users()},
                          {"dataset_digest", dataset_digest(dataset)}};
  report.reference_annotations = {{"best_subset", "G+AP2"}};

  nlohmann::json suites_json = nlohmann::json::array();
  for (const auto& suite : suites) {
    std::set<std::string> seen;
    std::string table = "subset,width,kappa,compactness,silhouette\n";
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& entry : suite.entries) {
      if (!seen.insert(entry.label).second) {
        report.warnings.push_back("suite " + suite.name + ": duplicate entry '" + entry.label + "' ignored");
        continue;
      }
      entries.push_back({{"label", entry.label}, {"subsets", entry.subsets}});
      const auto projected = select_subset(dataset, entry.subsets);
      if (projected.width() == 0) {
        report.warnings.push_back("suite " + suite.name + ": entry '" + entry.label + "' selects no columns");
        continue;
      }
      const auto distances = distance_matrix(similarity_matrix(projected));
      for (std::size_t kappa : config.kappas) {
        if (kappa == 0 || kappa > projected.n_users()) {
          report.warnings.push_back("kappa " + std::to_string(kappa) + " skipped: outside 1..n_users");
          continue;
        }
        const auto clustering = kmedoids_best_of(distances, kappa, config.seed, config.restarts, config.max_iter);
        SubsetClusteringRow row{suite.name, entry.label, projected.width(), kappa,
                                compactness(clustering, distances), std::nullopt};
        if (kappa >= 2) row.silhouette = silhouette(clustering, distances).mean;
        table += csv::escape(row.entry) + "," + std::to_string(row.width) + "," + std::to_string(kappa) + "," +
                 csv::number(row.compactness) + "," + (row.silhouette ? csv::number(*row.silhouette) : "") + "\n";
        result.rows.push_back(std::move(row));
      }
    }
    suites_json.push_back({{"name", suite.name}, {"entries", entries}});
    report.artifacts["rq2_" + suite.name + ".csv"] = table;
  }
  report.configuration["suites"] = suites_json;

  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : result.rows) {
    rows.push_back({{"suite", row.suite},
                    {"subset", row.entry},
                    {"width", row.width},
                    {"kappa", row.kappa},
                    {"compactness", row.compactness},
                    {"silhouette", row.silhouette ? nlohmann::json(*row.silhouette) : nlohmann::json(nullptr)}});
  }
  report.aggregate = {{"rows", rows}};
  return result;
}

// ---------------------------------------------------------------------------

const PrCurve& RecommendationSweepResult::curve(double alpha, std::size_t k) const {
  for (const auto& c : curves) {
    if (c.alpha == alpha && c.k == k) return c;
  }
  throw LookupError("no curve for alpha " + csv::number(alpha) + ", k " + std::to_string(k));
}

RecommendationSweepResult run_recommendation_sweep(const Dataset& dataset, const Clustering& clustering,
                                                   const RecommendationSweepConfig& config) {
  if (clustering.assignment.size() != dataset.n_users()) {
    throw ParameterError("clustering does not cover the dataset's users");
  }
  if (config.n_max == 0 || config.alphas.empty() || config.ks.empty()) {
    throw ParameterError("recommendation sweep needs n_max >= 1 and non-empty alpha and k sets");
  }
  for (double alpha : config.alphas) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ParameterError("alpha must lie in (0, 1)");
  }
  const std::size_t n_alpha = config.alphas.size();
  const std::size_t n_k = config.ks.size();
  const std::size_t kappa = clustering.kappa;

  RecommendationSweepResult result;
  auto& report = result.report;
  report.experiment_id = "rq3";
  report.seeds = {config.seed};
  report.configuration = {{"alphas", config.alphas},
                          {"ks", config.ks},
                          {"n_max", config.n_max},
                          {"n_folds", config.n_folds},
                          {"seed", config.seed},
                          {"routing", config.routing == QueryRouting::kQueryOnly ? "query_only" : "full_profile"},
                          {"neighbor_metric",
                           config.neighbor_metric == NeighborMetric::kRawRatings ? "raw" : "tfidf"},
                          {"train", train_config_json(config.train)},
                          {"kappa", kappa},
                          {"n_users", dataset.n_users()},
                          {"width", dataset.width()},
                          {"dataset_digest", dataset_digest(dataset)}};
  report.reference_annotations = {{"max_precision_alpha0.1_k3", 0.52},
                                  {"max_precision_alpha0.1_k15", 0.7},
                                  {"max_precision_alpha0.3", 0.80},
                                  {"max_precision_alpha0.5", 0.85},
                                  {"recall_alpha0.5_k10_k15", 0.73}};

  const auto x = dataset.answer_matrix();
  const auto cluster_labels = labels_from_assignment(clustering.assignment);
  const auto folds = kfold_split(dataset.n_users(), config.n_folds, config.seed, cluster_labels);

  // sums[a][k][n-1] accumulate precision and recall over scored folds.
  std::vector<std::vector<std::vector<PrPoint>>> sums(
      n_alpha, std::vector<std::vector<PrPoint>>(n_k, std::vector<PrPoint>(config.n_max)));
  std::size_t scored_folds = 0;

  for (std::size_t f = 0; f < config.n_folds; ++f) {
    const auto train_rows = folds.complement(f);
    const auto test_rows = folds.members(f);
    std::vector<int> train_labels;
    for (std::size_t r : train_rows) train_labels.push_back(cluster_labels[r]);

    std::optional<NetworkModel> model;
    if (kappa >= 2) {
      TrainConfig train_config = config.train;
      train_config.seed = mix_seed(config.seed, f);
      try {
        model = train(rows_of(x, train_rows), train_labels, kappa, train_config);
      } catch (const TrainingError& e) {
        report.warnings.push_back("fold " + std::to_string(f) + ": " + e.what() + "; fold skipped");
        continue;
      }
    }

    std::vector<std::optional<RatingsMatrix>> matrices(kappa);
    for (std::size_t c = 0; c < kappa; ++c) {
      std::vector<std::size_t> members;
      for (std::size_t r : train_rows) {
        if (clustering.assignment[r] == c) members.push_back(r);
      }
      if (!members.empty()) matrices[c] = build_ratings_matrix(dataset, members);
    }

    std::vector<std::vector<std::vector<ConfusionCounts>>> counts(
        n_alpha, std::vector<std::vector<ConfusionCounts>>(n_k, std::vector<ConfusionCounts>(config.n_max)));
    std::size_t scored_users = 0;
    std::size_t skipped_users = 0;
    for (std::size_t u : test_rows) {
      const auto& answers = dataset.users[u].answers;
      bool scored = false;
      for (std::size_t a = 0; a < n_alpha; ++a) {
        const auto mask = mask_settings(dataset.users[u], config.alphas[a], mix_seed(mix_seed(config.seed, u), a));
        PartialRow target(answers.size(), Cell::kUnknown);
        std::vector<double> routed(answers.size(), 0.0);
        for (std::size_t s : mask.query) {
          target[s] = to_cell(answers[s]);
          routed[s] = answers[s];
        }
        if (config.routing == QueryRouting::kFullProfile) routed = answers;
        const std::size_t cluster = model ? static_cast<std::size_t>(predict_label(*model, routed)) : 0;
        if (!matrices[cluster]) {
          ++skipped_users;
          continue;
        }
        scored = true;
        for (std::size_t ki = 0; ki < n_k; ++ki) {
          const auto list = recommend_top_n(*matrices[cluster], target, config.ks[ki], config.n_max, std::nullopt,
                                            config.neighbor_metric);
          for (std::size_t n = 1; n <= config.n_max; ++n) {
            counts[a][ki][n - 1] += score_top_n(list, n, mask.held_out, answers);
          }
        }
      }
      scored_users += scored ? 1 : 0;
    }
    if (skipped_users > 0) {
      report.warnings.push_back("fold " + std::to_string(f) + ": " + std::to_string(skipped_users) +
                                " test queries routed to a cluster without training members were skipped");
    }
    if (scored_users == 0) continue;
    ++scored_folds;

    nlohmann::json fold_json = {{"fold", f}, {"n_test", test_rows.size()}, {"curves", nlohmann::json::array()}};
    for (std::size_t a = 0; a < n_alpha; ++a) {
      for (std::size_t ki = 0; ki < n_k; ++ki) {
        const auto at_max = precision_recall(counts[a][ki][config.n_max - 1]);
        for (std::size_t n = 0; n < config.n_max; ++n) {
          const auto pr = precision_recall(counts[a][ki][n]);
          sums[a][ki][n].precision += pr.precision;
          sums[a][ki][n].recall += pr.recall;
        }
        fold_json["curves"].push_back({{"alpha", config.alphas[a]},
                                       {"k", config.ks[ki]},
                                       {"precision_at_n_max", at_max.precision},
                                       {"recall_at_n_max", at_max.recall}});
      }
    }
    report.per_fold.push_back(std::move(fold_json));
  }

  if (scored_folds == 0) {
    report.warnings.push_back("no fold produced a scored test user");
  }
  nlohmann::json aggregate = nlohmann::json::array();
  for (std::size_t a = 0; a < n_alpha; ++a) {
    for (std::size_t ki = 0; ki < n_k; ++ki) {
      PrCurve curve{config.alphas[a], config.ks[ki], {}};
      double best_precision = 0.0;
      for (std::size_t n = 0; n < config.n_max; ++n) {
        const double denom = scored_folds > 0 ? static_cast<double>(scored_folds) : 1.0;
        curve.points.push_back({n + 1, sums[a][ki][n].precision / denom, sums[a][ki][n].recall / denom});
        best_precision = std::max(best_precision, curve.points.back().precision);
      }
      aggregate.push_back({{"alpha", curve.alpha},
                           {"k", curve.k},
                           {"max_precision", best_precision},
                           {"precision_at_n_max", curve.points.back().precision},
                           {"recall_at_n_max", curve.points.back().recall}});
      report.artifacts[pr_file_name(curve.alpha, curve.k)] = pr_csv(curve);
      result.curves.push_back(std::move(curve));
    }
  }
  report.aggregate = {{"scored_folds", scored_folds}, {"curves", aggregate}};
  return result;
}

}  // namespace privprof
