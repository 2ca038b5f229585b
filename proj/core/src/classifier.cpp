#include "privprof/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "privprof/digest.hpp"
#include "privprof/error.hpp"
#include "privprof/rng.hpp"

namespace privprof {
namespace {

using Index = Eigen::Index;

struct Forward {
  Eigen::MatrixXd hidden;
  Eigen::MatrixXd log_probs;
};

Forward forward(const NetworkModel& model, const Eigen::MatrixXd& x) {
  Forward f;
  Eigen::MatrixXd pre = x * model.w1;
  pre.rowwise() += model.b1.transpose();
  f.hidden = pre.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
  Eigen::MatrixXd logits = f.hidden * model.w2;
  logits.rowwise() += model.b2.transpose();
  f.log_probs.resize(logits.rows(), logits.cols());
  for (Index r = 0; r < logits.rows(); ++r) {
    const double max = logits.row(r).maxCoeff();
    const double log_sum = std::log((logits.row(r).array() - max).exp().sum());
    f.log_probs.row(r) = logits.row(r).array() - max - log_sum;
  }
  return f;
}

void check_examples(const NetworkModel& model, const Eigen::MatrixXd& x, std::span<const int> labels) {
  if (static_cast<std::size_t>(x.cols()) != model.input_width()) {
    throw ParameterError("feature width " + std::to_string(x.cols()) + " does not match model input width " +
                         std::to_string(model.input_width()));
  }
  if (static_cast<std::size_t>(x.rows()) != labels.size()) {
    throw ParameterError("one label per example row is required");
  }
  for (int label : labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= model.kappa()) {
      throw ParameterError("label " + std::to_string(label) + " outside 0.." + std::to_string(model.kappa() - 1));
    }
  }
}

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& x, std::span<const std::size_t> rows) {
  Eigen::MatrixXd out(static_cast<Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Index>(i)) = x.row(static_cast<Index>(rows[i]));
  }
  return out;
}

// Visits every parameter of the model as a mutable double.
template <typename Model, typename Fn>
void for_each_parameter(Model& model, Fn&& fn) {
  for (Index i = 0; i < model.w1.size(); ++i) fn(model.w1.data()[i], 0, i);
  for (Index i = 0; i < model.b1.size(); ++i) fn(model.b1.data()[i], 1, i);
  for (Index i = 0; i < model.w2.size(); ++i) fn(model.w2.data()[i], 2, i);
  for (Index i = 0; i < model.b2.size(); ++i) fn(model.b2.data()[i], 3, i);
}

std::vector<double> row_major(const Eigen::MatrixXd& m) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(m.size()));
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
  }
  return out;
}

Eigen::MatrixXd from_row_major(const std::vector<double>& values, Index rows, Index cols) {
  if (values.size() != static_cast<std::size_t>(rows * cols)) {
    throw SchemaError("model snapshot has a weight array of the wrong length");
  }
  Eigen::MatrixXd m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) m(r, c) = values[static_cast<std::size_t>(r * cols + c)];
  }
  return m;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ParameterError("learning_rate must be positive");
  }
  if (epochs == 0 || batch_size == 0 || hidden_width == 0) {
    throw ParameterError("epochs, batch_size and hidden_width must be positive");
  }
}

void NetworkModel::validate() const {
  if (kappa() < 2) {
    throw ParameterError("a classifier needs at least two output classes");
  }
  if (b1.size() != w1.cols() || w2.rows() != w1.cols() || b2.size() != w2.cols()) {
    throw ParameterError("inconsistent network dimensions");
  }
  if (!w1.allFinite() || !b1.allFinite() || !w2.allFinite() || !b2.allFinite()) {
    throw ParameterError("network parameters must be finite");
  }
}

NetworkModel init_model(std::size_t input_width, std::size_t kappa, const TrainConfig& config) {
  config.validate();
  if (input_width == 0 || kappa < 2) {
    throw ParameterError("network needs input_width >= 1 and kappa >= 2");
  }
  const auto l = static_cast<Index>(input_width);
  const auto m = static_cast<Index>(config.hidden_width);
  const auto k = static_cast<Index>(kappa);
  NetworkModel model{Eigen::MatrixXd(l, m), Eigen::VectorXd::Zero(m), Eigen::MatrixXd(m, k),
                     Eigen::VectorXd::Zero(k), config, {}};
  Rng rng(mix_seed(config.seed, 0));
  const double bound1 = 1.0 / std::sqrt(static_cast<double>(input_width));
  const double bound2 = 1.0 / std::sqrt(static_cast<double>(config.hidden_width));
  for (Index i = 0; i < model.w1.size(); ++i) model.w1.data()[i] = rng.uniform(-bound1, bound1);
  for (Index i = 0; i < model.w2.size(); ++i) model.w2.data()[i] = rng.uniform(-bound2, bound2);
  return model;
}

NetworkModel symmetric_model(std::size_t input_width, std::size_t hidden_width, std::size_t kappa) {
  const auto l = static_cast<Index>(input_width);
  const auto m = static_cast<Index>(hidden_width);
  const auto k = static_cast<Index>(kappa);
  TrainConfig config;
  config.hidden_width = hidden_width;
  NetworkModel model{Eigen::MatrixXd::Zero(l, m), Eigen::VectorXd::Zero(m), Eigen::MatrixXd::Zero(m, k),
                     Eigen::VectorXd::Zero(k), config, {}};
  model.validate();
  return model;
}

double cross_entropy(const NetworkModel& model, const Eigen::MatrixXd& features, std::span<const int> labels) {
  check_examples(model, features, labels);
  if (labels.empty()) return 0.0;
  const auto f = forward(model, features);
  double total = 0.0;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    total -= f.log_probs(static_cast<Index>(r), labels[r]);
  }
  return total / static_cast<double>(labels.size());
}

Gradients loss_gradients(const NetworkModel& model, const Eigen::MatrixXd& features, std::span<const int> labels) {
  check_examples(model, features, labels);
  const auto n = static_cast<double>(std::max<std::size_t>(labels.size(), 1));
  const auto f = forward(model, features);

  Eigen::MatrixXd delta_out = f.log_probs.array().exp();
  for (std::size_t r = 0; r < labels.size(); ++r) {
    delta_out(static_cast<Index>(r), labels[r]) -= 1.0;
  }
  delta_out /= n;

  Gradients g;
  g.w2 = f.hidden.transpose() * delta_out;
  g.b2 = delta_out.colwise().sum().transpose();
  const Eigen::MatrixXd delta_hidden =
      ((delta_out * model.w2.transpose()).array() * f.hidden.array() * (1.0 - f.hidden.array())).matrix();
  g.w1 = features.transpose() * delta_hidden;
  g.b1 = delta_hidden.colwise().sum().transpose();
  return g;
}

void gradient_step(NetworkModel& model, const Eigen::MatrixXd& features, std::span<const int> labels,
                   double learning_rate) {
  const auto g = loss_gradients(model, features, labels);
  model.w1 -= learning_rate * g.w1;
  model.b1 -= learning_rate * g.b1;
  model.w2 -= learning_rate * g.w2;
  model.b2 -= learning_rate * g.b2;
}

NetworkModel train(const Eigen::MatrixXd& features, std::span<const int> labels, std::size_t kappa,
                   const TrainConfig& config) {
  config.validate();
  if (!features.allFinite()) {
    throw TrainingError("training features must be finite");
  }
  NetworkModel model = init_model(static_cast<std::size_t>(features.cols()), kappa, config);
  check_examples(model, features, labels);
  std::vector<bool> present(kappa, false);
  for (int label : labels) present[static_cast<std::size_t>(label)] = true;
  for (std::size_t c = 0; c < kappa; ++c) {
    if (!present[c]) {
      throw TrainingError("class " + std::to_string(c) + " has no training example");
    }
  }

  const std::size_t n = labels.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(mix_seed(config.seed, 1));
  std::vector<int> batch_labels;

  model.loss_history.push_back(cross_entropy(model, features, labels));
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const auto rows = std::span<const std::size_t>(order).subspan(start, std::min(config.batch_size, n - start));
      batch_labels.clear();
      for (std::size_t r : rows) batch_labels.push_back(labels[r]);
      gradient_step(model, gather_rows(features, rows), batch_labels, config.learning_rate);
    }
    const double loss = cross_entropy(model, features, labels);
    if (!std::isfinite(loss)) {
      throw DivergenceError("training diverged: loss is not finite at epoch " + std::to_string(epoch), epoch);
    }
    model.loss_history.push_back(loss);
  }
  return model;
}

std::vector<double> predict_scores(const NetworkModel& model, std::span<const double> features) {
  if (features.size() != model.input_width()) {
    throw ParameterError("feature vector has length " + std::to_string(features.size()) + ", model expects " +
                         std::to_string(model.input_width()));
  }
  Eigen::MatrixXd x(1, static_cast<Index>(features.size()));
  for (std::size_t i = 0; i < features.size(); ++i) x(0, static_cast<Index>(i)) = features[i];
  const Eigen::MatrixXd scores = predict_scores(model, x);
  return {scores.data(), scores.data() + scores.size()};
}

Eigen::MatrixXd predict_scores(const NetworkModel& model, const Eigen::MatrixXd& features) {
  if (static_cast<std::size_t>(features.cols()) != model.input_width()) {
    throw ParameterError("feature width does not match model input width");
  }
  return forward(model, features).log_probs.array().exp();
}

int predict_label(const NetworkModel& model, std::span<const double> features) {
  const auto scores = predict_scores(model, features);
  return static_cast<int>(std::max_element(scores.begin(), scores.end()) - scores.begin());
}

GradientCheck gradient_check(const NetworkModel& model, std::span<const double> features, int label,
                             double epsilon) {
  Eigen::MatrixXd x(1, static_cast<Index>(features.size()));
  for (std::size_t i = 0; i < features.size(); ++i) x(0, static_cast<Index>(i)) = features[i];
  const int labels[] = {label};
  const auto analytic = loss_gradients(model, x, labels);
  const Eigen::MatrixXd* grads[] = {&analytic.w1, nullptr, &analytic.w2, nullptr};
  const Eigen::VectorXd* bias_grads[] = {nullptr, &analytic.b1, nullptr, &analytic.b2};

  GradientCheck result;
  NetworkModel probe = model;
  for_each_parameter(probe, [&](double& parameter, int block, Index i) {
    const double saved = parameter;
    parameter = saved + epsilon;
    const double plus = cross_entropy(probe, x, labels);
    parameter = saved - epsilon;
    const double minus = cross_entropy(probe, x, labels);
    parameter = saved;
    const double numeric = (plus - minus) / (2.0 * epsilon);
    const double exact = grads[block] ? grads[block]->data()[i] : bias_grads[block]->data()[i];
    const double abs_err = std::abs(exact - numeric);
    const double scale = std::max({std::abs(exact), std::abs(numeric), 1e-8});
    result.max_absolute_error = std::max(result.max_absolute_error, abs_err);
    result.max_relative_error = std::max(result.max_relative_error, abs_err / scale);
  });
  return result;
}

std::string serialize_model(const NetworkModel& model) {
  model.validate();
  const auto& c = model.config;
  nlohmann::json j = {
      {"format", "privprof-model/1"},
      {"input_width", model.input_width()},
      {"hidden_width", model.hidden_width()},
      {"kappa", model.kappa()},
      {"w1", row_major(model.w1)},
      {"b1", std::vector<double>(model.b1.data(), model.b1.data() + model.b1.size())},
      {"w2", row_major(model.w2)},
      {"b2", std::vector<double>(model.b2.data(), model.b2.data() + model.b2.size())},
      {"train_config",
       {{"learning_rate", c.learning_rate},
        {"epochs", c.epochs},
        {"batch_size", c.batch_size},
        {"seed", c.seed},
        {"hidden_width", c.hidden_width}}},
      {"seed", c.seed},
  };
  return j.dump(1) + "\n";
}

NetworkModel deserialize_model(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("format").get<std::string>() != "privprof-model/1") {
      throw SchemaError("unsupported model snapshot format");
    }
    const auto l = j.at("input_width").get<Index>();
    const auto m = j.at("hidden_width").get<Index>();
    const auto k = j.at("kappa").get<Index>();
    NetworkModel model;
    model.w1 = from_row_major(j.at("w1").get<std::vector<double>>(), l, m);
    model.w2 = from_row_major(j.at("w2").get<std::vector<double>>(), m, k);
    const auto b1 = j.at("b1").get<std::vector<double>>();
    const auto b2 = j.at("b2").get<std::vector<double>>();
    model.b1 = Eigen::Map<const Eigen::VectorXd>(b1.data(), static_cast<Index>(b1.size()));
    model.b2 = Eigen::Map<const Eigen::VectorXd>(b2.data(), static_cast<Index>(b2.size()));
    const auto& c = j.at("train_config");
    model.config.learning_rate = c.at("learning_rate").get<double>();
    model.config.epochs = c.at("epochs").get<std::size_t>();
    model.config.batch_size = c.at("batch_size").get<std::size_t>();
    model.config.seed = c.at("seed").get<std::uint64_t>();
    model.config.hidden_width = c.at("hidden_width").get<std::size_t>();
    model.validate();
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed model snapshot: ") + e.what());
  }
}

void save_model(const NetworkModel& model, const std::filesystem::path& path) {
  write_file(path, serialize_model(model));
}

NetworkModel load_model(const std::filesystem::path& path) { return deserialize_model(read_file(path)); }

}  // namespace privprof
