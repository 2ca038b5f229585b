#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "privprof/classifier.hpp"
#include "privprof/corpus.hpp"
#include "privprof/recommender.hpp"

namespace privprof {

inline constexpr std::string_view kDefaultSubset = "G+AP2";
inline constexpr std::size_t kDefaultNeighbors = 15;
inline constexpr std::size_t kDefaultCutoff = 50;

// Cluster members and their ratings, needed for /api/recommend.
struct RecommenderSnapshot {
  Dataset dataset;  // projected onto the active subset
  std::vector<std::size_t> assignment;
  // One matrix per cluster; empty clusters hold nullopt.
  std::vector<std::optional<RatingsMatrix>> cluster_matrices;
  std::string dataset_digest;
  std::string clustering_digest;
};

// Everything a running service reads. Never mutated once published.
struct ServiceSnapshot {
  QuestionCatalog catalog;  // active subset, catalog order
  std::string subset = std::string(kDefaultSubset);
  NetworkModel model;
  std::string model_digest;
  std::optional<RecommenderSnapshot> recommender;

  std::size_t kappa() const { return model.kappa(); }
};

// Active catalog = `subset` of `full_catalog`. The recommender part is built
// when `dataset` and `assignment` are given; the dataset must already cover
// the full catalog and is projected here.
std::shared_ptr<const ServiceSnapshot> make_snapshot(const QuestionCatalog& full_catalog, std::string_view subset,
                                                     NetworkModel model, std::string model_digest);
std::shared_ptr<const ServiceSnapshot> make_snapshot(const QuestionCatalog& full_catalog, std::string_view subset,
                                                     NetworkModel model, std::string model_digest,
                                                     const Dataset& dataset, std::vector<std::size_t> assignment,
                                                     std::string dataset_digest, std::string clustering_digest);

struct SnapshotPaths {
  std::filesystem::path model;
  std::optional<std::filesystem::path> taxonomy;    // reference taxonomy when unset
  std::optional<std::filesystem::path> dataset;     // recommender bundle; classify-only when unset
  std::optional<std::filesystem::path> clustering;  // required with `dataset`
  std::string subset = std::string(kDefaultSubset);
};

// Reads the files and checks them against each other. Throws privprof errors.
std::shared_ptr<const ServiceSnapshot> load_snapshot(const SnapshotPaths& paths);

struct Response {
  int status = 200;
  std::string body;
  std::map<std::string, std::string> headers;
};

// Request handlers, independent of the transport.
class PrivacyService {
 public:
  PrivacyService() = default;
  explicit PrivacyService(std::shared_ptr<const ServiceSnapshot> snapshot);

  void publish(std::shared_ptr<const ServiceSnapshot> snapshot);
  std::shared_ptr<const ServiceSnapshot> snapshot() const;

  Response classify(std::string_view body) const;
  Response recommend(std::string_view body) const;
  Response questions() const;
  Response health() const;

 private:
  mutable std::mutex mutex_;
  std::shared_ptr<const ServiceSnapshot> snapshot_;
};

// {"code": status, "message": ..., "detail": ...}
Response error_response(int status, std::string_view message, std::string_view detail = {});

class HttpServer {
 public:
  explicit HttpServer(const PrivacyService& service, std::string allowed_origin = "*");
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Binds and serves until stop(); returns false when the port cannot be bound.
  bool listen(const std::string& host, int port);
  // Binds an ephemeral port, returns it; serve with listen_after_bind().
  int bind_any_port(const std::string& host);
  bool listen_after_bind();
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace privprof
