#include "privprof/cli.hpp"

#include <algorithm>
#include <csignal>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "privprof/corpus.hpp"
#include "privprof/digest.hpp"
#include "privprof/error.hpp"
#include "privprof/rng.hpp"
#include "privprof/service.hpp"
#include "privprof/similarity.hpp"

namespace privprof::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

QuestionCatalog catalog_from(const std::optional<fs::path>& taxonomy) {
  return taxonomy ? load_taxonomy(*taxonomy) : reference_catalog();
}

std::string taxonomy_digest(const std::optional<fs::path>& taxonomy) {
  return sha256_file(taxonomy ? *taxonomy : reference_taxonomy_path());
}

json inputs_json(const fs::path& dataset, const std::optional<fs::path>& taxonomy) {
  return {{"dataset_sha256", sha256_file(dataset)}, {"taxonomy_sha256", taxonomy_digest(taxonomy)}};
}

std::string to_text(const std::function<void(std::ostream&)>& writer) {
  std::ostringstream out;
  writer(out);
  return out.str();
}

std::vector<int> int_labels(std::span<const std::size_t> assignment) {
  return {assignment.begin(), assignment.end()};
}

// Clusters the projected dataset and numbers the clusters by permissiveness.
Clustering cluster_profiles(const Dataset& projected, std::size_t kappa, std::uint64_t seed, std::size_t restarts,
                            Eigen::MatrixXd* distances_out = nullptr) {
  const auto distances = distance_matrix(similarity_matrix(projected));
  const auto best = kmedoids_best_of(distances, kappa, seed, restarts);
  if (distances_out != nullptr) *distances_out = distances;
  return order_by_permissiveness(best, projected.answer_matrix());
}

json train_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"hidden_width", c.hidden_width}};
}

}  // namespace

json run_ingest(const IngestOptions& o) {
  const auto catalog = catalog_from(o.taxonomy);
  const auto dataset = load_dataset(o.input, catalog);

  std::map<std::string, std::size_t> groups;
  std::size_t numeric = 0;
  for (const auto& q : catalog.questions()) {
    ++groups[std::string(to_string(q.group))];
    numeric += q.value_kind == ValueKind::kNumeric ? 1 : 0;
  }
  std::map<std::string, std::size_t> subsets;
  for (const auto& [name, ids] : catalog.named_subsets()) subsets[name] = ids.size();
  const auto self_labelled = std::count_if(dataset.users.begin(), dataset.users.end(),
                                           [](const UserProfile& u) { return u.self_label.has_value(); });

  const auto dataset_text = to_text([&](std::ostream& out) { write_dataset(dataset, out); });
  const auto taxonomy_text = to_text([&](std::ostream& out) { write_taxonomy(catalog, out); });
  write_file(o.out_dir / "dataset.csv", dataset_text);
  write_file(o.out_dir / "taxonomy.csv", taxonomy_text);

  json report = {{"seed", o.seed},
                 {"inputs", {{"dataset_sha256", sha256_file(o.input)}, {"taxonomy_sha256", taxonomy_digest(o.taxonomy)}}},
                 {"n_users", dataset.n_users()},
                 {"n_questions", catalog.size()},
                 {"numeric_questions", numeric},
                 {"groups", groups},
                 {"subsets", subsets},
                 {"self_labelled_users", self_labelled},
                 {"outputs",
                  {{"dataset.csv", sha256_hex(dataset_text)}, {"taxonomy.csv", sha256_hex(taxonomy_text)}}}};
  write_file(o.out_dir / "validation.json", report.dump(2) + "\n");
  return report;
}

json run_generate(const GenerateOptions& o) {
  auto data = generate_synthetic(o.spec);
  if (o.self_labels != SelfLabels::kNone) {
    if (o.spec.n_planted > 4) {
      throw ParameterError("self labels take values 0..3, so at most 4 planted groups can carry them");
    }
    std::vector<int> labels = data.planted_labels;
    if (o.self_labels == SelfLabels::kPermuted) {
      Rng rng(mix_seed(o.spec.seed, 0x5e1f));
      rng.shuffle(std::span<int>(labels));
    }
    for (std::size_t i = 0; i < labels.size(); ++i) data.dataset.users[i].self_label = labels[i];
  }
  const auto taxonomy_text = to_text([&](std::ostream& out) { write_taxonomy(data.dataset.catalog, out); });
  const auto dataset_text = to_text([&](std::ostream& out) { write_dataset(data.dataset, out); });
  const auto labels_text = to_text([&](std::ostream& out) { write_planted_labels(data, out); });
  write_file(o.out_dir / "taxonomy.csv", taxonomy_text);
  write_file(o.out_dir / "dataset.csv", dataset_text);
  write_file(o.out_dir / "planted_labels.csv", labels_text);
  const char* mode = o.self_labels == SelfLabels::kNone      ? "none"
                     : o.self_labels == SelfLabels::kPlanted ? "planted"
                                                             : "permuted";
  json report = {{"seed", o.spec.seed},
                 {"n_users", o.spec.n_users},
                 {"catalog_width", o.spec.catalog_width},
                 {"n_planted", o.spec.n_planted},
                 {"noise", o.spec.noise},
                 {"self_labels", mode},
                 {"outputs",
                  {{"taxonomy.csv", sha256_hex(taxonomy_text)},
                   {"dataset.csv", sha256_hex(dataset_text)},
                   {"planted_labels.csv", sha256_hex(labels_text)}}}};
  write_file(o.out_dir / "generate.json", report.dump(2) + "\n");
  return report;
}

PipelineResult run_pipeline(const PipelineOptions& o) {
  if (o.kappa == 0) throw ParameterError("kappa must be at least 1");
  const auto catalog = catalog_from(o.taxonomy);
  const auto projected = select_subset(load_dataset(o.dataset, catalog), o.subset);
  if (projected.width() == 0) throw ParameterError("subset " + o.subset + " selects no questions");

  std::vector<std::string> warnings;
  if (o.kappa == 1) {
    warnings.push_back("kappa = 1 is degenerate: every user falls into one profile and no classifier is trained");
  }

  Eigen::MatrixXd distances;
  PipelineResult result;
  result.clustering = cluster_profiles(projected, o.kappa, o.seed, o.restarts, &distances);
  for (std::size_t c = 0; c < o.kappa; ++c) {
    if (result.clustering.members(c).empty()) warnings.push_back("cluster " + std::to_string(c) + " is empty");
  }

  TrainConfig train = o.train;
  train.seed = o.seed;
  if (o.kappa >= 2) {
    const auto labels = int_labels(result.clustering.assignment);
    result.model = privprof::train(projected.answer_matrix(), labels, o.kappa, train);
  }

  std::vector<std::string> ids;
  for (const auto& u : projected.users) ids.push_back(u.user_id);
  const auto model_text = result.model ? serialize_model(*result.model) : std::string();
  const auto clustering_text = to_text([&](std::ostream& out) { write_clustering_csv(result.clustering, ids, out); });
  json summary = clustering_summary(result.clustering, ids, distances);
  summary["subset"] = o.subset;
  std::vector<std::string> names;
  for (std::size_t c = 0; c < o.kappa; ++c) names.push_back(profile_name(c, o.kappa));
  summary["profile_names"] = names;
  const auto summary_text = summary.dump(2) + "\n";

  json outputs = {{"clustering.csv", sha256_hex(clustering_text)}, {"clustering.json", sha256_hex(summary_text)}};
  if (result.model) {
    write_file(o.out_dir / "model.json", model_text);
    outputs["model.json"] = sha256_hex(model_text);
  }
  write_file(o.out_dir / "clustering.csv", clustering_text);
  write_file(o.out_dir / "clustering.json", summary_text);

  result.manifest = {{"seed", o.seed},
                     {"subset", o.subset},
                     {"kappa", o.kappa},
                     {"restarts", o.restarts},
                     {"n_users", projected.n_users()},
                     {"n_questions", projected.width()},
                     {"train", train_json(train)},
                     {"final_loss", result.model && !result.model->loss_history.empty()
                                        ? json(result.model->loss_history.back())
                                        : json(nullptr)},
                     {"inputs", inputs_json(o.dataset, o.taxonomy)},
                     {"outputs", outputs},
                     {"warnings", warnings}};
  write_file(o.out_dir / "pipeline.json", result.manifest.dump(2) + "\n");
  return result;
}

ExperimentReport run_experiment(const ExperimentOptions& o) {
  const auto catalog = catalog_from(o.taxonomy);
  const auto dataset = load_dataset(o.dataset, catalog);
  ExperimentReport report;

  if (o.suite == "rq1") {
    SelfLabelConfig config;
    config.n_folds = o.folds;
    config.seed = o.seed;
    config.train = o.train;
    config.similarity_threshold = o.similarity_threshold;
    report = run_selflabel_consistency(select_subset(dataset, o.subset), config).report;
    report.configuration["subset"] = o.subset;
  } else if (o.suite == "rq2") {
    std::vector<SubsetSuite> suites;
    const auto names = o.suites.empty() ? builtin_suite_names() : o.suites;
    for (const auto& name : names) suites.push_back(builtin_suite(name));
    SubsetClusteringConfig config;
    config.kappas = o.kappas;
    config.seed = o.seed;
    config.restarts = o.restarts;
    report = run_subset_clustering(dataset, suites, config).report;
  } else if (o.suite == "rq3") {
    if (o.kappas.size() != 1) throw ParameterError("rq3 takes a single kappa");
    const auto projected = select_subset(dataset, o.subset);
    Clustering clustering;
    std::string clustering_source;
    if (o.clustering) {
      std::vector<std::string> ids;
      for (const auto& u : projected.users) ids.push_back(u.user_id);
      std::ifstream in(*o.clustering);
      if (!in) throw ParameterError("cannot open " + o.clustering->string());
      clustering.assignment = read_clustering_csv(in, ids);
      clustering.kappa = o.kappas.front();
      for (std::size_t a : clustering.assignment) {
        if (a >= clustering.kappa) throw ValidationError("clustering has more clusters than kappa");
      }
      clustering_source = sha256_file(*o.clustering);
    } else {
      clustering = cluster_profiles(projected, o.kappas.front(), o.seed, o.restarts);
      clustering_source = "computed";
    }
    RecommendationSweepConfig config;
    config.alphas = o.alphas;
    config.ks = o.ks;
    config.n_max = o.n_max;
    config.n_folds = o.folds;
    config.seed = o.seed;
    config.train = o.train;
    config.neighbor_metric = o.neighbor_metric;
    report = run_recommendation_sweep(projected, clustering, config).report;
    report.configuration["subset"] = o.subset;
    report.configuration["kappa"] = clustering.kappa;
    report.configuration["clustering"] = clustering_source;
    report.configuration["cluster_sizes"] = clustering.cluster_sizes();
  } else {
    throw ParameterError("unknown experiment suite '" + o.suite + "'");
  }
  report.configuration["inputs"] = inputs_json(o.dataset, o.taxonomy);
  report.configuration["seed"] = o.seed;
  report.write(o.out_dir);
  return report;
}

// ---------------------------------------------------------------------------

namespace {

int serve(const SnapshotPaths& paths, const std::string& host, int port, const std::string& origin,
          std::ostream& out) {
  std::shared_ptr<const ServiceSnapshot> snapshot = load_snapshot(paths);
  PrivacyService service(snapshot);
  HttpServer server(service, origin);

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    server.stop();
  });

  out << "serving " << (snapshot->recommender ? "classify and recommend" : "classify-only") << " on " << host << ":"
      << port << " (subset " << snapshot->subset << ", " << snapshot->catalog.size() << " questions)" << std::endl;
  const bool ok = server.listen(host, port);
  if (!ok) {
    pthread_kill(waiter.native_handle(), SIGTERM);
  }
  waiter.join();
  if (!ok) throw Error("cannot listen on " + host + ":" + std::to_string(port));
  return kExitOk;
}

void add_train_flags(CLI::App* cmd, TrainConfig& train) {
  cmd->add_option("--epochs", train.epochs, "Training epochs")->check(CLI::PositiveNumber);
  cmd->add_option("--learning-rate", train.learning_rate, "Gradient descent step size")->check(CLI::PositiveNumber);
  cmd->add_option("--batch-size", train.batch_size, "Mini-batch size")->check(CLI::PositiveNumber);
  cmd->add_option("--hidden", train.hidden_width, "Hidden layer width")->check(CLI::PositiveNumber);
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Privacy profile clustering, classification and settings recommendation"};
  app.name("privprof");
  app.set_config("--config", "", "TOML file with flag values; command line flags take precedence");
  app.require_subcommand(1);

  IngestOptions ingest;
  std::string ingest_taxonomy;
  auto* c_ingest = app.add_subcommand("ingest", "Validate a questionnaire CSV and write a normalized bundle");
  c_ingest->add_option("input", ingest.input, "Answer CSV")->required()->check(CLI::ExistingFile);
  c_ingest->add_option("--taxonomy", ingest_taxonomy, "Taxonomy CSV (reference taxonomy by default)")
      ->check(CLI::ExistingFile);
  c_ingest->add_option("--out-dir", ingest.out_dir, "Bundle directory")->required();
  c_ingest->add_option("--seed", ingest.seed, "Recorded in the report");

  GenerateOptions generate;
  std::string self_labels = "planted";
  auto* c_generate = app.add_subcommand("generate", "Write a planted-profile synthetic dataset");
  c_generate->add_option("--users", generate.spec.n_users, "Number of users")->check(CLI::PositiveNumber);
  c_generate->add_option("--width", generate.spec.catalog_width, "Number of settings")->check(CLI::PositiveNumber);
  c_generate->add_option("--planted", generate.spec.n_planted, "Number of planted profiles")
      ->check(CLI::PositiveNumber);
  c_generate->add_option("--noise", generate.spec.noise, "Bit flip probability")->check(CLI::Range(0.0, 1.0));
  c_generate->add_option("--seed", generate.spec.seed, "Random seed");
  c_generate->add_option("--self-labels", self_labels, "Self label column: planted, permuted or none")
      ->check(CLI::IsMember({"planted", "permuted", "none"}));
  c_generate->add_option("--out-dir", generate.out_dir, "Output directory")->required();

  PipelineOptions pipeline;
  std::string pipeline_taxonomy;
  auto* c_pipeline = app.add_subcommand("pipeline", "Cluster profiles and train the profile classifier");
  c_pipeline->add_option("dataset", pipeline.dataset, "Answer CSV")->required()->check(CLI::ExistingFile);
  c_pipeline->add_option("--taxonomy", pipeline_taxonomy, "Taxonomy CSV")->check(CLI::ExistingFile);
  c_pipeline->add_option("--subset", pipeline.subset, "Question subset expression, e.g. G+AP2");
  c_pipeline->add_option("--kappa", pipeline.kappa, "Number of profiles")->check(CLI::PositiveNumber);
  c_pipeline->add_option("--seed", pipeline.seed, "Random seed");
  c_pipeline->add_option("--restarts", pipeline.restarts, "k-medoids restarts")->check(CLI::PositiveNumber);
  c_pipeline->add_option("--out-dir", pipeline.out_dir, "Snapshot directory")->required();
  add_train_flags(c_pipeline, pipeline.train);

  ExperimentOptions experiment;
  std::string experiment_taxonomy;
  std::string experiment_clustering;
  double threshold = 0.0;
  auto* c_experiment = app.add_subcommand("experiment", "Run an evaluation suite: rq1, rq2 or rq3");
  c_experiment->add_option("suite", experiment.suite, "rq1 | rq2 | rq3")
      ->required()
      ->check(CLI::IsMember({"rq1", "rq2", "rq3"}));
  c_experiment->add_option("--dataset", experiment.dataset, "Answer CSV")->required()->check(CLI::ExistingFile);
  c_experiment->add_option("--taxonomy", experiment_taxonomy, "Taxonomy CSV")->check(CLI::ExistingFile);
  c_experiment->add_option("--clustering", experiment_clustering, "rq3: user_id,cluster CSV from pipeline")
      ->check(CLI::ExistingFile);
  c_experiment->add_option("--subset", experiment.subset, "Question subset for rq1 and rq3");
  c_experiment->add_option("--seed", experiment.seed, "Random seed");
  c_experiment->add_option("--kappa", experiment.kappas, "Profile counts (rq2 accepts several)")
      ->delimiter(',')
      ->check(CLI::PositiveNumber);
  c_experiment->add_option("--suites", experiment.suites, "rq2 subset suites: QS1, QS2, QS3")
      ->delimiter(',')
      ->check(CLI::IsMember(builtin_suite_names()));
  c_experiment->add_option("--alpha", experiment.alphas, "rq3 query fractions")
      ->delimiter(',')
      ->check(CLI::Range(0.0, 1.0));
  c_experiment->add_option("--k", experiment.ks, "rq3 neighbor counts")->delimiter(',')->check(CLI::PositiveNumber);
  c_experiment->add_option("--n-max", experiment.n_max, "rq3 largest cutoff N")->check(CLI::PositiveNumber);
  c_experiment->add_option("--folds", experiment.folds, "Cross-validation folds")->check(CLI::Range(2, 1000));
  c_experiment->add_option("--restarts", experiment.restarts, "k-medoids restarts")->check(CLI::PositiveNumber);
  std::string neighbor_metric = "raw";
  c_experiment->add_option("--neighbor-metric", neighbor_metric, "rq3 neighbor weighting: raw or tfidf")
      ->check(CLI::IsMember({"raw", "tfidf"}));
  auto* threshold_opt = c_experiment->add_option(
      "--similarity-threshold", threshold, "rq1: count any other-label user at or above this similarity");
  c_experiment->add_option("--out-dir", experiment.out_dir, "Report directory")->required();
  add_train_flags(c_experiment, experiment.train);

  SnapshotPaths snapshot;
  std::string snapshot_dir;
  std::string model_path;
  std::string serve_taxonomy;
  std::string serve_dataset;
  std::string serve_clustering;
  std::string host = "127.0.0.1";
  std::string origin = "*";
  int port = 8080;
  auto* c_serve = app.add_subcommand("serve", "Serve classification and recommendation over HTTP");
  c_serve->add_option("--snapshot-dir", snapshot_dir, "Pipeline output directory (model, clustering, subset)");
  c_serve->add_option("--model", model_path, "Model snapshot (model.json)");
  c_serve->add_option("--dataset", serve_dataset, "Answer CSV of the clustered users; classify-only without it");
  c_serve->add_option("--clustering", serve_clustering, "user_id,cluster CSV");
  c_serve->add_option("--taxonomy", serve_taxonomy, "Taxonomy CSV");
  c_serve->add_option("--subset", snapshot.subset, "Active question subset");
  c_serve->add_option("--host", host, "Bind address");
  c_serve->add_option("--port", port, "Port")->check(CLI::Range(1, 65535));
  c_serve->add_option("--origin", origin, "Allowed CORS origin");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "privprof: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (c_ingest->parsed()) {
      if (!ingest_taxonomy.empty()) ingest.taxonomy = ingest_taxonomy;
      const auto report = run_ingest(ingest);
      out << "ingested " << report["n_users"] << " users over " << report["n_questions"] << " questions into "
          << ingest.out_dir.string() << "\n";
    } else if (c_generate->parsed()) {
      generate.self_labels = self_labels == "planted"    ? SelfLabels::kPlanted
                             : self_labels == "permuted" ? SelfLabels::kPermuted
                                                         : SelfLabels::kNone;
      run_generate(generate);
      out << "wrote " << generate.spec.n_users << " synthetic users to " << generate.out_dir.string() << "\n";
    } else if (c_pipeline->parsed()) {
      if (!pipeline_taxonomy.empty()) pipeline.taxonomy = pipeline_taxonomy;
      const auto result = run_pipeline(pipeline);
      for (const auto& w : result.manifest["warnings"]) err << "warning: " << w.get<std::string>() << "\n";
      out << "profiles:";
      for (std::size_t s : result.clustering.cluster_sizes()) out << " " << s;
      out << "\nsnapshots written to " << pipeline.out_dir.string() << "\n";
    } else if (c_experiment->parsed()) {
      if (!experiment_taxonomy.empty()) experiment.taxonomy = experiment_taxonomy;
      if (!experiment_clustering.empty()) experiment.clustering = experiment_clustering;
      if (threshold_opt->count() > 0) experiment.similarity_threshold = threshold;
      experiment.neighbor_metric = neighbor_metric == "tfidf" ? NeighborMetric::kTfIdf : NeighborMetric::kRawRatings;
      const auto report = run_experiment(experiment);
      for (const auto& w : report.warnings) err << "warning: " << w << "\n";
      out << report.experiment_id << ": wrote " << report.artifacts.size() + 1 << " files to "
          << experiment.out_dir.string() << "\n";
    } else if (c_serve->parsed()) {
      if (!snapshot_dir.empty()) {
        const fs::path dir = snapshot_dir;
        if (!fs::exists(dir / "model.json")) {
          err << "privprof: no model snapshot in " << dir.string() << "\n";
          return kExitUsage;
        }
        snapshot.model = dir / "model.json";
        if (serve_clustering.empty() && fs::exists(dir / "clustering.csv")) snapshot.clustering = dir / "clustering.csv";
        if (c_serve->get_option("--subset")->count() == 0 && fs::exists(dir / "pipeline.json")) {
          snapshot.subset = json::parse(read_file(dir / "pipeline.json")).at("subset").get<std::string>();
        }
      }
      if (!model_path.empty()) snapshot.model = model_path;
      if (snapshot.model.empty() || !fs::exists(snapshot.model)) {
        err << "privprof: model snapshot not found" << (snapshot.model.empty() ? "" : ": " + snapshot.model.string())
            << "\n";
        return kExitUsage;
      }
      if (!serve_taxonomy.empty()) snapshot.taxonomy = serve_taxonomy;
      if (!serve_clustering.empty()) snapshot.clustering = serve_clustering;
      if (!serve_dataset.empty()) {
        snapshot.dataset = serve_dataset;
        if (!snapshot.clustering) {
          err << "privprof: --dataset needs --clustering or a snapshot directory with clustering.csv\n";
          return kExitUsage;
        }
      } else {
        snapshot.clustering.reset();
      }
      for (const auto& p : {snapshot.taxonomy, snapshot.dataset, snapshot.clustering}) {
        if (p && !fs::exists(*p)) {
          err << "privprof: snapshot file not found: " << p->string() << "\n";
          return kExitUsage;
        }
      }
      return serve(snapshot, host, port, origin, out);
    }
  } catch (const TrainingError& e) {
    err << "privprof: training failed: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const SchemaError& e) {
    err << "privprof: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ValueError& e) {
    err << "privprof: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConflictError& e) {
    err << "privprof: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ParameterError& e) {
    err << "privprof: " << e.what() << "\n";
    return kExitUsage;
  } catch (const LookupError& e) {
    err << "privprof: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ValidationError& e) {
    err << "privprof: " << e.what() << "\n";
    return kExitUsage;
  } catch (const GuardError& e) {
    err << "privprof: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "privprof: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace privprof::cli
