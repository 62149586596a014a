#ifndef AMIV_NEURALNET_HPP
#define AMIV_NEURALNET_HPP

// Fully connected Softplus networks trained with mini-batch Adam.
//
// Batches are stored one sample per column. Inputs are mapped affinely to
// [0, 1] by per-feature offsets and scales that travel with the weights;
// targets are used as given.

#include <amiv/dataset.hpp>

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace amiv {

enum class Activation { Softplus, Identity };

std::string_view to_string(Activation a);

/// Single-head MSE, or the mean of the two head-wise MSEs. Both reduce to
/// the mean squared error over every output entry.
enum class Loss { Mse, DualMse };

/// log(1 + e^x) without overflow.
template <typename Scalar>
Scalar softplus(Scalar x) {
  return std::max(x, Scalar(0)) + std::log1p(std::exp(-std::abs(x)));
}

template <typename Scalar>
struct Layer {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Matrix weights;  // out x in
  Vector bias;
  Activation activation = Activation::Softplus;
};

template <typename Scalar>
class Mlp {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  std::vector<Layer<Scalar>> layers;
  Vector input_offset;
  Vector input_scale;
  std::vector<std::string> input_names;
  std::vector<std::string> output_names;

  /// widths = {inputs, hidden..., outputs}. Softplus on every hidden layer,
  /// identity on the output. Weights U(-b, b) with b = sqrt(6 / (fan_in +
  /// fan_out)), biases zero, identity input scaling.
  static Mlp init_glorot(const std::vector<int>& widths, std::uint64_t seed);

  int input_width() const { return static_cast<int>(layers.front().weights.cols()); }
  int output_width() const { return static_cast<int>(layers.back().weights.rows()); }
  std::vector<int> widths() const;
  std::size_t parameter_count() const;

  /// Maps [low, high] per feature onto [0, 1].
  void set_input_scaling(const Vector& low, const Vector& high);

  Vector forward(const Vector& x) const;
  /// x is inputs x n; returns outputs x n.
  Matrix forward_batch(const Matrix& x) const;

  template <typename Other>
  Mlp<Other> cast() const;
};

template <typename Scalar>
struct Gradient {
  std::vector<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>> weights;
  std::vector<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> biases;
};

/// Mean squared error over all entries of y.
template <typename Scalar>
Scalar loss_value(const Mlp<Scalar>& net, const typename Mlp<Scalar>::Matrix& x,
                  const typename Mlp<Scalar>::Matrix& y, Loss loss = Loss::Mse);

/// Backpropagated gradient of loss_value; returns the loss.
template <typename Scalar>
Scalar grad(const Mlp<Scalar>& net, const typename Mlp<Scalar>::Matrix& x, const typename Mlp<Scalar>::Matrix& y,
            Gradient<Scalar>& out, Loss loss = Loss::Mse);

template <typename Scalar>
struct AdamState {
  Gradient<Scalar> m;
  Gradient<Scalar> v;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  explicit AdamState(const Mlp<Scalar>& net);
};

template <typename Scalar>
void adam_step(Mlp<Scalar>& net, AdamState<Scalar>& state, const Gradient<Scalar>& g, Scalar lr);

struct HeadMetrics {
  double mse = 0.0;
  double mae = 0.0;
  /// Absent when any target is exactly zero.
  std::optional<double> mape;
  double r2 = 0.0;
};

struct MetricsReport {
  std::vector<HeadMetrics> heads;
};

HeadMetrics metrics(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat);
/// Row-wise metrics of heads x n matrices.
MetricsReport metrics(const Eigen::MatrixXd& y, const Eigen::MatrixXd& yhat);

struct EpochRecord {
  int epoch = 0;
  double learning_rate = 0.0;
  /// Mean of the mini-batch losses seen during the epoch.
  double train_loss = 0.0;
  double validation_loss = 0.0;
};

struct TrainConfig {
  int batch_size = 1024;
  int epochs = 4000;
  double learning_rate = 1e-3;
  /// The learning rate halves every this many epochs.
  int halving_period = 400;
  std::uint64_t seed = 0;
  Loss loss = Loss::Mse;
  /// Refit the input scaling to the training split's min and max.
  bool fit_input_scaling = true;
  std::function<void(const EpochRecord&)> on_epoch;

  void validate() const;
  double rate_at(int epoch) const;
};

/// Features x samples matrices for each split.
struct TrainingData {
  Eigen::MatrixXd x_train, y_train;
  Eigen::MatrixXd x_val, y_val;
  Eigen::MatrixXd x_test, y_test;

  static TrainingData from(const Dataset& d, const std::vector<std::string>& inputs,
                           const std::vector<std::string>& targets);
};

struct TrainReport {
  std::vector<EpochRecord> history;
  MetricsReport train;
  MetricsReport validation;
  MetricsReport test;
};

/// Mini-batch Adam over a reshuffled training split each epoch. Throws
/// DivergenceDetected when a batch loss is not finite.
template <typename Scalar>
TrainReport train(Mlp<Scalar>& net, const TrainingData& data, const TrainConfig& cfg);

template <typename Scalar>
TrainReport train(Mlp<Scalar>& net, const Dataset& d, const std::vector<std::string>& inputs,
                  const std::vector<std::string>& targets, const TrainConfig& cfg) {
  auto report = train(net, TrainingData::from(d, inputs, targets), cfg);
  net.input_names = inputs;
  net.output_names = targets;
  return report;
}

template <typename Scalar>
Eigen::MatrixXd predict(const Mlp<Scalar>& net, const Eigen::MatrixXd& x) {
  return net.forward_batch(x.cast<Scalar>()).template cast<double>();
}

inline constexpr int kWeightFormatVersion = 1;

/// Plain-text weight file. Values carry enough digits to round-trip exactly.
template <typename Scalar>
void save_weights(const Mlp<Scalar>& net, const std::string& path);

/// Throws FormatError on a malformed file or a version mismatch. A file
/// written at another precision is converted.
template <typename Scalar>
Mlp<Scalar> load_weights(const std::string& path);

template <typename Scalar>
template <typename Other>
Mlp<Other> Mlp<Scalar>::cast() const {
  Mlp<Other> out;
  for (const auto& l : layers)
    out.layers.push_back({l.weights.template cast<Other>(), l.bias.template cast<Other>(), l.activation});
  out.input_offset = input_offset.template cast<Other>();
  out.input_scale = input_scale.template cast<Other>();
  out.input_names = input_names;
  out.output_names = output_names;
  return out;
}

}  // namespace amiv

#endif  // AMIV_NEURALNET_HPP
