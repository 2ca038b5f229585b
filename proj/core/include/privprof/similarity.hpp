#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "privprof/corpus.hpp"

namespace privprof {

// Per-user weight vector over F settings.
struct FeatureVector {
  std::vector<double> weights;

  std::size_t dimension() const noexcept { return weights.size(); }
};

struct SimilarityMatrix {
  Eigen::MatrixXd values;
  std::vector<std::string> user_order;
};

// phi_i = f_i * ln(|P| / a_i), with a_i the number of users whose value for
// setting i is positive. Settings nobody has, or everybody has, weigh zero.
std::vector<FeatureVector> tfidf_weights(const Eigen::MatrixXd& values);
std::vector<FeatureVector> tfidf_weights(const Dataset& dataset);

// Cosine over the full dimension. Zero vectors have similarity 0 with everything.
double cosine(std::span<const double> phi, std::span<const double> omega);
double cosine(const FeatureVector& phi, const FeatureVector& omega);

SimilarityMatrix similarity_matrix(const std::vector<FeatureVector>& vectors,
                                   std::vector<std::string> user_order);
// TF-IDF vectors of the dataset, compared pairwise.
SimilarityMatrix similarity_matrix(const Dataset& dataset);

// d = 1 - sim, with an exact zero diagonal.
Eigen::MatrixXd distance_matrix(const SimilarityMatrix& sims);

void write_matrix_csv(const Eigen::MatrixXd& matrix, const std::vector<std::string>& labels,
                      std::ostream& out);

}  // namespace privprof
