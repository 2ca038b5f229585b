#include "privprof/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "csv.hpp"
#include "privprof/error.hpp"

namespace privprof {

std::vector<FeatureVector> tfidf_weights(const Eigen::MatrixXd& values) {
  const auto n_users = values.rows();
  const auto n_settings = values.cols();
  if (n_users == 0) {
    throw ParameterError("tf-idf weights need at least one user");
  }

  std::vector<double> idf(static_cast<std::size_t>(n_settings), 0.0);
  for (Eigen::Index c = 0; c < n_settings; ++c) {
    Eigen::Index holders = 0;
    for (Eigen::Index r = 0; r < n_users; ++r) {
      if (values(r, c) > 0.0) ++holders;
    }
    if (holders > 0) {
      idf[static_cast<std::size_t>(c)] =
          std::log(static_cast<double>(n_users) / static_cast<double>(holders));
    }
  }

  std::vector<FeatureVector> out(static_cast<std::size_t>(n_users));
  for (Eigen::Index r = 0; r < n_users; ++r) {
    auto& weights = out[static_cast<std::size_t>(r)].weights;
    weights.resize(static_cast<std::size_t>(n_settings));
    for (Eigen::Index c = 0; c < n_settings; ++c) {
      weights[static_cast<std::size_t>(c)] = values(r, c) * idf[static_cast<std::size_t>(c)];
    }
  }
  return out;
}

std::vector<FeatureVector> tfidf_weights(const Dataset& dataset) {
  return tfidf_weights(dataset.answer_matrix());
}

double cosine(std::span<const double> phi, std::span<const double> omega) {
  if (phi.size() != omega.size()) {
    throw ParameterError("cosine of vectors with different dimensions (" + std::to_string(phi.size()) +
                         " vs " + std::to_string(omega.size()) + ")");
  }
  double dot = 0.0;
  double norm_phi = 0.0;
  double norm_omega = 0.0;
  for (std::size_t t = 0; t < phi.size(); ++t) {
    dot += phi[t] * omega[t];
    norm_phi += phi[t] * phi[t];
    norm_omega += omega[t] * omega[t];
  }
  if (norm_phi == 0.0 || norm_omega == 0.0) {
    return 0.0;
  }
  return std::clamp(dot / (std::sqrt(norm_phi) * std::sqrt(norm_omega)), -1.0, 1.0);
}

double cosine(const FeatureVector& phi, const FeatureVector& omega) {
  return cosine(std::span<const double>(phi.weights), std::span<const double>(omega.weights));
}

SimilarityMatrix similarity_matrix(const std::vector<FeatureVector>& vectors,
                                   std::vector<std::string> user_order) {
  const auto n = static_cast<Eigen::Index>(vectors.size());
  if (!user_order.empty() && user_order.size() != vectors.size()) {
    throw ParameterError("user_order must name every vector");
  }
  SimilarityMatrix sims{Eigen::MatrixXd::Zero(n, n), std::move(user_order)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& u = vectors[static_cast<std::size_t>(i)];
    const bool nonzero = std::any_of(u.weights.begin(), u.weights.end(), [](double w) { return w != 0.0; });
    sims.values(i, i) = nonzero ? 1.0 : 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double s = cosine(u, vectors[static_cast<std::size_t>(j)]);
      sims.values(i, j) = s;
      sims.values(j, i) = s;
    }
  }
  return sims;
}

SimilarityMatrix similarity_matrix(const Dataset& dataset) {
  std::vector<std::string> order;
  order.reserve(dataset.n_users());
  for (const auto& user : dataset.users) {
    order.push_back(user.user_id);
  }
  return similarity_matrix(tfidf_weights(dataset), std::move(order));
}

Eigen::MatrixXd distance_matrix(const SimilarityMatrix& sims) {
  const auto& s = sims.values;
  if (s.rows() != s.cols()) {
    throw ValidationError("similarity matrix must be square");
  }
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < s.cols(); ++j) {
      if (s(i, j) != s(j, i)) {
        throw ValidationError("similarity matrix is not symmetric at (" + std::to_string(i) + ", " +
                              std::to_string(j) + ")");
      }
    }
  }
  Eigen::MatrixXd d = Eigen::MatrixXd::Ones(s.rows(), s.cols()) - s;
  d.diagonal().setZero();
  return d;
}

void write_matrix_csv(const Eigen::MatrixXd& matrix, const std::vector<std::string>& labels,
                      std::ostream& out) {
  const auto old_precision = out.precision(17);
  out << "user_id";
  for (const auto& label : labels) out << ',' << csv::escape(label);
  out << '\n';
  for (Eigen::Index i = 0; i < matrix.rows(); ++i) {
    out << (static_cast<std::size_t>(i) < labels.size() ? csv::escape(labels[static_cast<std::size_t>(i)])
                                                        : std::to_string(i));
    for (Eigen::Index j = 0; j < matrix.cols(); ++j) out << ',' << matrix(i, j);
    out << '\n';
  }
  out.precision(old_precision);
}

}  // namespace privprof
