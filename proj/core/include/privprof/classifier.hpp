#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace privprof {

struct TrainConfig {
  double learning_rate = 0.5;
  std::size_t epochs = 200;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  std::size_t hidden_width = 32;

  void validate() const;
};

// Three-layer network: L inputs -> M sigmoid units -> kappa softmax outputs.
// Weight matrices are stored input-major: w1 is L x M and w2 is M x kappa.
struct NetworkModel {
  Eigen::MatrixXd w1;
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;
  Eigen::VectorXd b2;
  TrainConfig config;
  std::vector<double> loss_history;

  std::size_t input_width() const noexcept { return static_cast<std::size_t>(w1.rows()); }
  std::size_t hidden_width() const noexcept { return static_cast<std::size_t>(w1.cols()); }
  std::size_t kappa() const noexcept { return static_cast<std::size_t>(w2.cols()); }

  void validate() const;
};

// Weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] drawn from config.seed;
// biases start at zero.
NetworkModel init_model(std::size_t input_width, std::size_t kappa, const TrainConfig& config);

// All parameters zero, so every input maps to the uniform distribution.
NetworkModel symmetric_model(std::size_t input_width, std::size_t hidden_width, std::size_t kappa);

// Mean cross-entropy of the softmax outputs against integer labels.
double cross_entropy(const NetworkModel& model, const Eigen::MatrixXd& features, std::span<const int> labels);

struct Gradients {
  Eigen::MatrixXd w1;
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;
  Eigen::VectorXd b2;
};

// Back-propagated gradient of cross_entropy over the given rows.
Gradients loss_gradients(const NetworkModel& model, const Eigen::MatrixXd& features,
                         std::span<const int> labels);

void gradient_step(NetworkModel& model, const Eigen::MatrixXd& features, std::span<const int> labels,
                   double learning_rate);

// Mini-batch gradient descent over rows of `features` (one example per row).
// Every class 0..kappa-1 must occur in `labels`.
NetworkModel train(const Eigen::MatrixXd& features, std::span<const int> labels, std::size_t kappa,
                   const TrainConfig& config);

std::vector<double> predict_scores(const NetworkModel& model, std::span<const double> features);
// Row-wise scores for many examples.
Eigen::MatrixXd predict_scores(const NetworkModel& model, const Eigen::MatrixXd& features);

// Argmax of predict_scores; the lowest class index wins ties.
int predict_label(const NetworkModel& model, std::span<const double> features);

struct GradientCheck {
  double max_relative_error = 0.0;
  double max_absolute_error = 0.0;
};

// Compares back-propagation against central differences for every parameter.
// Relative error is |a - n| / max(|a|, |n|, 1e-8).
GradientCheck gradient_check(const NetworkModel& model, std::span<const double> features, int label,
                             double epsilon = 1e-5);

// JSON snapshot with dimensions, flattened row-major weights and the training
// configuration. Doubles are written in shortest round-trip form.
std::string serialize_model(const NetworkModel& model);
NetworkModel deserialize_model(const std::string& text);
void save_model(const NetworkModel& model, const std::filesystem::path& path);
NetworkModel load_model(const std::filesystem::path& path);

}  // namespace privprof
