#include "privprof/service.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "privprof/clustering.hpp"
#include "privprof/digest.hpp"
#include "privprof/error.hpp"

namespace privprof {
namespace {

using nlohmann::json;

constexpr std::string_view kJson = "application/json";

Response ok(const json& body) { return {200, body.dump() + "\n", {}}; }

// Thrown inside handlers and turned into an error response.
struct RequestError {
  int status;
  std::string message;
  std::string detail;
};

json parse_body(std::string_view body) {
  json parsed = json::parse(body.begin(), body.end(), nullptr, false);
  if (parsed.is_discarded()) throw RequestError{400, "malformed request body", "body is not valid JSON"};
  if (!parsed.is_object()) throw RequestError{400, "malformed request body", "body must be a JSON object"};
  return parsed;
}

const json* field(const json& object, const char* name) {
  const auto it = object.find(name);
  return it == object.end() || it->is_null() ? nullptr : &*it;
}

std::size_t alias_position(const QuestionCatalog& catalog, const std::string& alias) {
  const auto pos = catalog.position_of_alias(alias);
  if (!pos) throw RequestError{400, "unknown alias", alias};
  return *pos;
}

std::optional<double> number_of(const json& value) {
  if (value.is_boolean()) return value.get<bool>() ? 1.0 : 0.0;
  if (value.is_number()) return value.get<double>();
  return std::nullopt;
}

std::size_t count_field(const json& body, const char* name, std::size_t fallback, std::size_t minimum) {
  const json* v = field(body, name);
  if (v == nullptr) return fallback;
  if (!v->is_number_integer() || v->get<std::int64_t>() < static_cast<std::int64_t>(minimum)) {
    throw RequestError{400, std::string("invalid ") + name,
                       std::string(name) + " must be an integer >= " + std::to_string(minimum)};
  }
  return v->get<std::size_t>();
}

json digests_of(const ServiceSnapshot& s) {
  json d = {{"model", s.model_digest}};
  if (s.recommender) {
    d["dataset"] = s.recommender->dataset_digest;
    d["clustering"] = s.recommender->clustering_digest;
  }
  return d;
}

template <typename Handler>
Response guarded(const std::shared_ptr<const ServiceSnapshot>& snapshot, Handler&& handler) {
  if (!snapshot) return error_response(503, "model not loaded", "the service has no snapshot yet");
  try {
    return handler(*snapshot);
  } catch (const RequestError& e) {
    return error_response(e.status, e.message, e.detail);
  } catch (const Error& e) {
    return error_response(500, "internal error", e.what());
  }
}

std::vector<std::optional<RatingsMatrix>> cluster_matrices(const Dataset& dataset,
                                                           std::span<const std::size_t> assignment,
                                                           std::size_t kappa) {
  std::vector<std::vector<std::size_t>> members(kappa);
  for (std::size_t u = 0; u < assignment.size(); ++u) {
    if (assignment[u] >= kappa) {
      throw ValidationError("clustering label " + std::to_string(assignment[u]) + " exceeds the model's " +
                            std::to_string(kappa) + " classes");
    }
    members[assignment[u]].push_back(u);
  }
  std::vector<std::optional<RatingsMatrix>> out;
  for (const auto& m : members) {
    if (m.empty()) out.emplace_back(std::nullopt);
    else out.emplace_back(build_ratings_matrix(dataset, m));
  }
  return out;
}

QuestionCatalog project_catalog(const QuestionCatalog& full, std::string_view subset) {
  return select_subset(Dataset{full, {}}, subset).catalog;
}

void check_width(const QuestionCatalog& catalog, const NetworkModel& model, std::string_view subset) {
  if (model.input_width() != catalog.size()) {
    throw ValidationError("model expects " + std::to_string(model.input_width()) + " inputs but subset " +
                          std::string(subset) + " has " + std::to_string(catalog.size()) + " questions");
  }
}

}  // namespace

Response error_response(int status, std::string_view message, std::string_view detail) {
  const json body = {{"code", status}, {"message", message}, {"detail", detail}};
  return {status, body.dump() + "\n", {}};
}

std::shared_ptr<const ServiceSnapshot> make_snapshot(const QuestionCatalog& full_catalog, std::string_view subset,
                                                     NetworkModel model, std::string model_digest) {
  model.validate();
  auto s = std::make_shared<ServiceSnapshot>();
  s->catalog = project_catalog(full_catalog, subset);
  check_width(s->catalog, model, subset);
  s->subset = std::string(subset);
  s->model = std::move(model);
  s->model_digest = std::move(model_digest);
  return s;
}

std::shared_ptr<const ServiceSnapshot> make_snapshot(const QuestionCatalog& full_catalog, std::string_view subset,
                                                     NetworkModel model, std::string model_digest,
                                                     const Dataset& dataset, std::vector<std::size_t> assignment,
                                                     std::string dataset_digest, std::string clustering_digest) {
  auto base = make_snapshot(full_catalog, subset, std::move(model), std::move(model_digest));
  auto s = std::make_shared<ServiceSnapshot>(*base);
  if (assignment.size() != dataset.n_users()) {
    throw ValidationError("clustering covers " + std::to_string(assignment.size()) + " users, dataset has " +
                          std::to_string(dataset.n_users()));
  }
  RecommenderSnapshot r;
  r.dataset = select_subset(dataset, subset);
  r.cluster_matrices = cluster_matrices(r.dataset, assignment, s->kappa());
  r.assignment = std::move(assignment);
  r.dataset_digest = std::move(dataset_digest);
  r.clustering_digest = std::move(clustering_digest);
  s->recommender = std::move(r);
  return s;
}

std::shared_ptr<const ServiceSnapshot> load_snapshot(const SnapshotPaths& paths) {
  const QuestionCatalog full = paths.taxonomy ? load_taxonomy(*paths.taxonomy) : reference_catalog();
  NetworkModel model = load_model(paths.model);
  std::string model_digest = sha256_file(paths.model);
  if (!paths.dataset) {
    return make_snapshot(full, paths.subset, std::move(model), std::move(model_digest));
  }
  if (!paths.clustering) {
    throw ParameterError("a dataset bundle needs its clustering file");
  }
  const Dataset dataset = load_dataset(*paths.dataset, full);
  std::vector<std::string> ids;
  for (const auto& u : dataset.users) ids.push_back(u.user_id);
  std::ifstream in(*paths.clustering);
  if (!in) throw Error("cannot open " + paths.clustering->string());
  auto assignment = read_clustering_csv(in, ids);
  return make_snapshot(full, paths.subset, std::move(model), std::move(model_digest), dataset,
                       std::move(assignment), sha256_file(*paths.dataset), sha256_file(*paths.clustering));
}

PrivacyService::PrivacyService(std::shared_ptr<const ServiceSnapshot> snapshot) : snapshot_(std::move(snapshot)) {}

void PrivacyService::publish(std::shared_ptr<const ServiceSnapshot> snapshot) {
  std::lock_guard lock(mutex_);
  snapshot_ = std::move(snapshot);
}

std::shared_ptr<const ServiceSnapshot> PrivacyService::snapshot() const {
  std::lock_guard lock(mutex_);
  return snapshot_;
}

Response PrivacyService::classify(std::string_view body) const {
  return guarded(snapshot(), [&](const ServiceSnapshot& s) {
    const json request = parse_body(body);
    const json* answers = field(request, "answers");
    if (answers != nullptr && !answers->is_object()) {
      throw RequestError{400, "malformed request body", "answers must map aliases to values"};
    }
    std::vector<double> features(s.catalog.size(), 0.0);
    std::vector<bool> given(s.catalog.size(), false);
    if (answers != nullptr) {
      for (const auto& [alias, value] : answers->items()) {
        const std::size_t pos = alias_position(s.catalog, alias);
        if (value.is_null()) continue;
        const auto v = number_of(value);
        const bool binary = s.catalog[pos].value_kind == ValueKind::kBinary;
        if (!v || (binary && *v != 0.0 && *v != 1.0) || (!binary && !(*v >= 0.0 && *v <= 1.0))) {
          throw RequestError{400, "invalid answer value",
                             alias + (binary ? " takes 0 or 1" : " takes a normalized value in [0, 1]")};
        }
        features[pos] = *v;
        given[pos] = true;
      }
    }
    json assumed = json::array();
    for (std::size_t i = 0; i < given.size(); ++i) {
      if (!given[i]) assumed.push_back(s.catalog[i].alias);
    }
    const auto scores = predict_scores(s.model, features);
    const auto label = static_cast<std::size_t>(predict_label(s.model, features));
    return ok({{"profile_id", label},
               {"profile_name", profile_name(label, s.kappa())},
               {"class_scores", scores},
               {"assumed", assumed},
               {"subset", s.subset},
               {"model_digest", s.model_digest}});
  });
}

Response PrivacyService::recommend(std::string_view body) const {
  return guarded(snapshot(), [&](const ServiceSnapshot& s) {
    const json request = parse_body(body);
    const json* known = field(request, "known");
    if (known != nullptr && !known->is_object()) {
      throw RequestError{400, "malformed request body", "known must map aliases to 0 or 1"};
    }
    PartialRow target(s.catalog.size(), Cell::kUnknown);
    std::vector<double> features(s.catalog.size(), 0.0);
    std::size_t n_known = 0;
    if (known != nullptr) {
      for (const auto& [alias, value] : known->items()) {
        const std::size_t pos = alias_position(s.catalog, alias);
        const auto v = number_of(value);
        if (!v || (*v != 0.0 && *v != 1.0)) {
          throw RequestError{400, "invalid setting value", alias + " takes 0 or 1"};
        }
        target[pos] = *v == 1.0 ? Cell::kAllow : Cell::kDeny;
        features[pos] = *v;
        ++n_known;
      }
    }
    std::optional<std::size_t> profile;
    if (const json* p = field(request, "profile_id")) {
      if (!p->is_number_integer() || p->get<std::int64_t>() < 0 ||
          p->get<std::int64_t>() >= static_cast<std::int64_t>(s.kappa())) {
        throw RequestError{400, "unknown profile_id",
                           "profile_id must be an integer in 0.." + std::to_string(s.kappa() - 1)};
      }
      profile = p->get<std::size_t>();
    }
    const std::size_t k = count_field(request, "k", kDefaultNeighbors, 1);
    const std::size_t n = count_field(request, "N", kDefaultCutoff, 0);
    if (n_known == 0 && !profile) {
      throw RequestError{422, "nothing to recommend from", "give at least one known setting or a profile_id"};
    }
    if (!s.recommender) {
      throw RequestError{503, "recommender not loaded", "the service runs in classify-only mode"};
    }
    const bool classified = !profile;
    if (!profile) profile = static_cast<std::size_t>(predict_label(s.model, features));
    const auto& matrix = s.recommender->cluster_matrices[*profile];
    if (!matrix) {
      throw RequestError{422, "profile has no members", "cluster " + std::to_string(*profile) + " is empty"};
    }

    RecommendationList list;
    if (n_known > 0) {
      list = recommend_top_n(*matrix, target, k, n);
    } else {
      // Without any known setting there is no neighbor evidence; rank by the
      // cluster's own allow rate.
      list.cutoff = n;
      list.no_evidence = true;
      for (std::size_t c = 0; c < matrix->cols(); ++c) {
        double sum = 0.0;
        for (std::size_t r = 0; r < matrix->rows(); ++r) sum += matrix->at(r, c) == Cell::kAllow ? 1.0 : 0.0;
        const double score = sum / static_cast<double>(matrix->rows());
        list.entries.push_back({matrix->alias(c), c, score, score >= 0.5 ? 1 : 0, true});
      }
      std::sort(list.entries.begin(), list.entries.end(), [](const Recommendation& a, const Recommendation& b) {
        return a.score != b.score ? a.score > b.score : a.setting < b.setting;
      });
      if (list.entries.size() > n) list.entries.resize(n);
    }

    json entries = json::array();
    for (const auto& e : list.entries) {
      entries.push_back({{"setting", e.setting}, {"score", e.score}, {"value", e.value}, {"fallback_flag", e.fallback}});
    }
    return ok({{"profile_id", *profile},
               {"profile_name", profile_name(*profile, s.kappa())},
               {"classified", classified},
               {"k", k},
               {"N", n},
               {"no_evidence", list.no_evidence},
               {"entries", entries},
               {"digests", digests_of(s)}});
  });
}

Response PrivacyService::questions() const {
  return guarded(snapshot(), [&](const ServiceSnapshot& s) {
    json items = json::array();
    for (std::size_t i = 0; i < s.catalog.size(); ++i) {
      const auto& q = s.catalog[i];
      items.push_back({{"position", i},
                       {"id", q.id},
                       {"alias", q.alias},
                       {"text", q.text},
                       {"group", to_string(q.group)},
                       {"kind", to_string(q.value_kind)}});
    }
    Response r = ok({{"subset", s.subset}, {"count", s.catalog.size()}, {"questions", items}});
    r.headers["ETag"] = "\"" + sha256_hex(r.body).substr(0, 32) + "\"";
    return r;
  });
}

Response PrivacyService::health() const {
  const auto s = snapshot();
  if (!s) {
    return {503, json{{"status", "unavailable"}, {"detail", "model not loaded"}}.dump() + "\n", {}};
  }
  return ok({{"status", "ok"},
             {"mode", s->recommender ? "full" : "classify-only"},
             {"subset", s->subset},
             {"kappa", s->kappa()},
             {"questions", s->catalog.size()},
             {"digests", digests_of(*s)}});
}

// ---------------------------------------------------------------------------

struct HttpServer::Impl {
  const PrivacyService& service;
  httplib::Server server;

  static void send(httplib::Response& out, const Response& r) {
    out.status = r.status;
    for (const auto& [name, value] : r.headers) out.set_header(name, value);
    out.set_content(r.body, std::string(kJson));
  }

  Impl(const PrivacyService& s, const std::string& origin) : service(s) {
    server.set_default_headers({{"Access-Control-Allow-Origin", origin},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                                {"Access-Control-Allow-Headers", "Content-Type, If-None-Match"},
                                {"Access-Control-Expose-Headers", "ETag"}});
    server.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    server.Post("/api/classify", [this](const httplib::Request& req, httplib::Response& res) {
      send(res, service.classify(req.body));
    });
    server.Post("/api/recommend", [this](const httplib::Request& req, httplib::Response& res) {
      send(res, service.recommend(req.body));
    });
    server.Get("/api/questions", [this](const httplib::Request& req, httplib::Response& res) {
      Response r = service.questions();
      const auto etag = r.headers.find("ETag");
      if (etag != r.headers.end() && req.get_header_value("If-None-Match") == etag->second) {
        res.status = 304;
        res.set_header("ETag", etag->second);
        return;
      }
      send(res, r);
    });
    server.Get("/api/health", [this](const httplib::Request&, httplib::Response& res) { send(res, service.health()); });
    server.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
      if (res.body.empty() && res.status >= 400) {
        send(res, error_response(res.status, httplib::status_message(res.status), req.path));
      }
    });
  }
};

HttpServer::HttpServer(const PrivacyService& service, std::string allowed_origin)
    : impl_(std::make_unique<Impl>(service, allowed_origin)) {}

HttpServer::~HttpServer() { stop(); }

bool HttpServer::listen(const std::string& host, int port) { return impl_->server.listen(host, port); }

int HttpServer::bind_any_port(const std::string& host) { return impl_->server.bind_to_any_port(host); }

bool HttpServer::listen_after_bind() { return impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_) impl_->server.stop();
}

void HttpServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace privprof
