#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nsvm/kernels.hpp"
#include "nsvm/rng.hpp"

namespace nsvm::nn {

enum class LayerKind { dense, relu, l2_normalize, scale, conv2d, maxpool2d, channel_dropout };

std::string to_string(LayerKind kind);
LayerKind layer_kind_from_string(std::string_view name);

/// One layer of a feature map. Only the fields belonging to `kind` are read.
struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::size_t in_dim = 0;  // dense; 0 means "take from the previous layer"
  std::size_t out_dim = 0;
  double factor = 1.0;  // scale
  std::size_t in_channels = 0;  // conv2d; 0 means "take from the previous layer"
  std::size_t out_channels = 0;
  std::size_t filter_size = 0;
  std::size_t window = 2;  // maxpool2d
  double rate = 0.5;       // channel_dropout
  double epsilon = 1e-12;  // l2_normalize

  static LayerSpec dense(std::size_t in_dim, std::size_t out_dim);
  static LayerSpec relu();
  static LayerSpec l2_normalize(double epsilon = 1e-12);
  static LayerSpec scale(double factor);
  static LayerSpec conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t filter_size);
  static LayerSpec maxpool2d(std::size_t window);
  static LayerSpec channel_dropout(double rate = 0.5);

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Activation shape, channel-major: entry (c, y, x) lives at c*h*w + y*w + x.
/// A flat d-vector is {d, 1, 1}.
struct Shape {
  std::size_t channels = 1;
  std::size_t height = 1;
  std::size_t width = 1;

  [[nodiscard]] std::size_t size() const { return channels * height * width; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

struct NetworkSpec {
  Shape input;
  std::vector<LayerSpec> layers;

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

enum class Mode { train, infer };

/// Where a trainable layer's weights and biases sit inside the flat theta.
struct ParamSlice {
  std::size_t layer = 0;
  std::size_t offset = 0;
  std::size_t rows = 0;  // weight matrix is rows x cols, row-major
  std::size_t cols = 0;
  std::size_t fan_in = 0;

  [[nodiscard]] std::size_t weight_count() const { return rows * cols; }
  [[nodiscard]] std::size_t bias_offset() const { return offset + weight_count(); }
  [[nodiscard]] std::size_t size() const { return weight_count() + rows; }
};

struct LayerParameters {
  Matrix weights;
  Vector bias;
};

/// Per-layer activations recorded by a forward pass for the backward pass.
struct LayerTape {
  Matrix input;
  Matrix output;
  Matrix mask;  // dropout multipliers, channels x batch
  Vector norms;
  std::vector<Matrix> patches;
  Eigen::Matrix<Eigen::Index, Eigen::Dynamic, Eigen::Dynamic> argmax;
};
using Tape = std::vector<LayerTape>;

/// The parameterized feature map F_theta built from an ordered layer list.
/// An empty layer list is the identity map.
class Network {
 public:
  Network() = default;
  explicit Network(NetworkSpec spec);

  [[nodiscard]] const NetworkSpec& spec() const { return spec_; }
  [[nodiscard]] std::size_t input_dim() const { return spec_.input.size(); }
  [[nodiscard]] std::size_t output_dim() const { return shapes_.back().size(); }
  [[nodiscard]] std::size_t param_count() const { return param_count_; }
  [[nodiscard]] const std::vector<ParamSlice>& slices() const { return slices_; }
  [[nodiscard]] const std::vector<Shape>& shapes() const { return shapes_; }
  [[nodiscard]] bool has_dropout() const;

  /// Columns of `inputs` are samples. Train mode draws dropout masks from
  /// `rng`, which must then be non-null if the net has dropout layers.
  Matrix forward(std::span<const double> theta, const PointsRef& inputs, Mode mode, Rng* rng) const;
  Matrix forward(std::span<const double> theta, const PointsRef& inputs, Mode mode, Rng* rng, Tape& tape) const;

  /// grad += d(objective)/d(theta) given d(objective)/d(outputs) for the
  /// batch recorded in `tape`.
  void backward(std::span<const double> theta, const Tape& tape, const Matrix& d_outputs, std::span<double> grad) const;

 private:
  Matrix run(std::span<const double> theta, const PointsRef& inputs, Mode mode, Rng* rng, Tape* tape) const;
  void check_theta(std::span<const double> theta) const;

  NetworkSpec spec_;
  std::vector<Shape> shapes_{Shape{}};  // shapes_[i] is the input of layer i; back() is the output
  std::vector<ParamSlice> slices_;
  std::vector<std::ptrdiff_t> slice_of_layer_;
  std::size_t param_count_ = 0;
};

std::vector<LayerParameters> unflatten(const Network& net, std::span<const double> theta);
std::vector<double> flatten(const Network& net, const std::vector<LayerParameters>& params);

/// Weights uniform in [-s, s] with s = sqrt(6 / fan_in); biases zero.
std::vector<double> init_params(const Network& net, Rng& rng);

/// Differentiable scalar function of the network outputs on one batch.
/// Fills `d_outputs` (same shape as outputs) when it is non-null.
using OutputObjective = std::function<double(const Matrix& outputs, Matrix* d_outputs)>;

struct ValueAndGrad {
  double value = 0.0;
  std::vector<double> grad;
};

/// Exact reverse-mode gradient of objective(F_theta(inputs)). Dropout masks
/// come from `masks`; passing the same snapshot reproduces the same masks.
ValueAndGrad grad_theta(const Network& net, std::span<const double> theta, const OutputObjective& objective,
                        const PointsRef& inputs, Rng masks);

double objective_value(const Network& net, std::span<const double> theta, const OutputObjective& objective,
                       const PointsRef& inputs, Rng masks);

enum class EstimatorKind { fd, spsa, rdsa };

using ThetaFunction = std::function<double(std::span<const double> theta)>;

/// Derivative-free gradient estimates of a function of theta:
/// fd is central differences per coordinate, spsa uses one Rademacher
/// perturbation, rdsa one direction uniform on the unit sphere.
std::vector<double> estimate_gradient(const ThetaFunction& f, std::span<const double> theta, EstimatorKind method,
                                      Rng& rng, double step);

/// estimate_gradient applied to objective(F_theta(inputs)); every evaluation
/// sees the same dropout masks.
std::vector<double> grad_estimate(const Network& net, std::span<const double> theta, const OutputObjective& objective,
                                  const PointsRef& inputs, EstimatorKind method, Rng& rng, double step);

}  // namespace nsvm::nn
