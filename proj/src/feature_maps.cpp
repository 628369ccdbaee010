#include "nsvm/feature_maps.hpp"

#include <algorithm>
#include <cmath>

#include "nsvm/error.hpp"

namespace nsvm::nn {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr Eigen::Index kParallelBatch = 8;

std::string layer_name(std::size_t index, LayerKind kind) {
  return "layer " + std::to_string(index) + " (" + to_string(kind) + ")";
}

// Patch matrix for a valid, stride-1 convolution: row c*f*f + ky*f + kx,
// column oy*ow + ox holds input(c, oy + ky, ox + kx).
void im2col(const double* x, const Shape& in, std::size_t f, Matrix& patches) {
  const std::size_t oh = in.height - f + 1;
  const std::size_t ow = in.width - f + 1;
  patches.resize(static_cast<Eigen::Index>(in.channels * f * f), static_cast<Eigen::Index>(oh * ow));
  for (std::size_t c = 0; c < in.channels; ++c)
    for (std::size_t ky = 0; ky < f; ++ky)
      for (std::size_t kx = 0; kx < f; ++kx) {
        const auto row = static_cast<Eigen::Index>(c * f * f + ky * f + kx);
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const double* src = x + c * in.height * in.width + (oy + ky) * in.width + kx;
          for (std::size_t ox = 0; ox < ow; ++ox) patches(row, static_cast<Eigen::Index>(oy * ow + ox)) = src[ox];
        }
      }
}

void col2im(const Matrix& d_patches, const Shape& in, std::size_t f, double* d_x) {
  const std::size_t oh = in.height - f + 1;
  const std::size_t ow = in.width - f + 1;
  for (std::size_t c = 0; c < in.channels; ++c)
    for (std::size_t ky = 0; ky < f; ++ky)
      for (std::size_t kx = 0; kx < f; ++kx) {
        const auto row = static_cast<Eigen::Index>(c * f * f + ky * f + kx);
        for (std::size_t oy = 0; oy < oh; ++oy) {
          double* dst = d_x + c * in.height * in.width + (oy + ky) * in.width + kx;
          for (std::size_t ox = 0; ox < ow; ++ox) dst[ox] += d_patches(row, static_cast<Eigen::Index>(oy * ow + ox));
        }
      }
}

}  // namespace

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::dense: return "dense";
    case LayerKind::relu: return "relu";
    case LayerKind::l2_normalize: return "l2_normalize";
    case LayerKind::scale: return "scale";
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::maxpool2d: return "maxpool2d";
    case LayerKind::channel_dropout: return "channel_dropout";
  }
  return "unknown";
}

LayerKind layer_kind_from_string(std::string_view name) {
  for (auto kind : {LayerKind::dense, LayerKind::relu, LayerKind::l2_normalize, LayerKind::scale, LayerKind::conv2d,
                    LayerKind::maxpool2d, LayerKind::channel_dropout})
    if (name == to_string(kind)) return kind;
  throw Error(ErrorCode::parse, "unknown layer type '" + std::string(name) + "'");
}

LayerSpec LayerSpec::dense(std::size_t in_dim, std::size_t out_dim) {
  LayerSpec s;
  s.kind = LayerKind::dense;
  s.in_dim = in_dim;
  s.out_dim = out_dim;
  return s;
}

LayerSpec LayerSpec::relu() { return LayerSpec{}; }

LayerSpec LayerSpec::l2_normalize(double epsilon) {
  LayerSpec s;
  s.kind = LayerKind::l2_normalize;
  s.epsilon = epsilon;
  return s;
}

LayerSpec LayerSpec::scale(double factor) {
  LayerSpec s;
  s.kind = LayerKind::scale;
  s.factor = factor;
  return s;
}

LayerSpec LayerSpec::conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t filter_size) {
  LayerSpec s;
  s.kind = LayerKind::conv2d;
  s.in_channels = in_channels;
  s.out_channels = out_channels;
  s.filter_size = filter_size;
  return s;
}

LayerSpec LayerSpec::maxpool2d(std::size_t window) {
  LayerSpec s;
  s.kind = LayerKind::maxpool2d;
  s.window = window;
  return s;
}

LayerSpec LayerSpec::channel_dropout(double rate) {
  LayerSpec s;
  s.kind = LayerKind::channel_dropout;
  s.rate = rate;
  return s;
}

Network::Network(NetworkSpec spec) : spec_(std::move(spec)) {
  require(spec_.input.size() > 0, ErrorCode::invalid_argument, "network input shape is empty");
  shapes_ = {spec_.input};
  slice_of_layer_.assign(spec_.layers.size(), -1);
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    LayerSpec& layer = spec_.layers[i];
    const Shape in = shapes_.back();
    Shape out = in;
    const std::string name = layer_name(i, layer.kind);
    switch (layer.kind) {
      case LayerKind::dense: {
        if (layer.in_dim == 0) layer.in_dim = in.size();
        require(layer.in_dim == in.size(), ErrorCode::dimension_mismatch,
                name + " expects input dimension " + std::to_string(layer.in_dim) + " but receives " +
                    std::to_string(in.size()));
        require(layer.out_dim > 0, ErrorCode::invalid_argument, name + " needs out_dim > 0");
        out = Shape{layer.out_dim, 1, 1};
        slice_of_layer_[i] = static_cast<std::ptrdiff_t>(slices_.size());
        slices_.push_back({i, param_count_, layer.out_dim, layer.in_dim, layer.in_dim});
        break;
      }
      case LayerKind::conv2d: {
        if (layer.in_channels == 0) layer.in_channels = in.channels;
        require(layer.in_channels == in.channels, ErrorCode::dimension_mismatch,
                name + " expects " + std::to_string(layer.in_channels) + " input channels but receives " +
                    std::to_string(in.channels));
        require(layer.out_channels > 0 && layer.filter_size > 0, ErrorCode::invalid_argument,
                name + " needs positive out_channels and filter_size");
        require(layer.filter_size <= in.height && layer.filter_size <= in.width, ErrorCode::dimension_mismatch,
                name + " filter is larger than its input");
        out = Shape{layer.out_channels, in.height - layer.filter_size + 1, in.width - layer.filter_size + 1};
        const std::size_t fan_in = in.channels * layer.filter_size * layer.filter_size;
        slice_of_layer_[i] = static_cast<std::ptrdiff_t>(slices_.size());
        slices_.push_back({i, param_count_, layer.out_channels, fan_in, fan_in});
        break;
      }
      case LayerKind::maxpool2d:
        require(layer.window > 0 && in.height >= layer.window && in.width >= layer.window,
                ErrorCode::dimension_mismatch, name + " window does not fit its input");
        out = Shape{in.channels, in.height / layer.window, in.width / layer.window};
        break;
      case LayerKind::channel_dropout:
        require(layer.rate >= 0.0 && layer.rate < 1.0, ErrorCode::invalid_argument, name + " rate must be in [0, 1)");
        break;
      case LayerKind::l2_normalize:
        require(layer.epsilon > 0.0, ErrorCode::invalid_argument, name + " epsilon must be positive");
        break;
      case LayerKind::scale:
        require(std::isfinite(layer.factor), ErrorCode::invalid_argument, name + " factor must be finite");
        break;
      case LayerKind::relu:
        break;
    }
    if (slice_of_layer_[i] >= 0) param_count_ += slices_.back().size();
    shapes_.push_back(out);
  }
}

bool Network::has_dropout() const {
  return std::any_of(spec_.layers.begin(), spec_.layers.end(),
                     [](const LayerSpec& l) { return l.kind == LayerKind::channel_dropout && l.rate > 0.0; });
}

void Network::check_theta(std::span<const double> theta) const {
  require(theta.size() == param_count_, ErrorCode::dimension_mismatch,
          "parameter vector has length " + std::to_string(theta.size()) + ", network expects " +
              std::to_string(param_count_));
}

Matrix Network::forward(std::span<const double> theta, const PointsRef& inputs, Mode mode, Rng* rng) const {
  return run(theta, inputs, mode, rng, nullptr);
}

Matrix Network::forward(std::span<const double> theta, const PointsRef& inputs, Mode mode, Rng* rng,
                        Tape& tape) const {
  return run(theta, inputs, mode, rng, &tape);
}

Matrix Network::run(std::span<const double> theta, const PointsRef& inputs, Mode mode, Rng* rng, Tape* tape) const {
  check_theta(theta);
  require(static_cast<std::size_t>(inputs.rows()) == input_dim(), ErrorCode::dimension_mismatch,
          "input dimension " + std::to_string(inputs.rows()) + " does not match network input " +
              std::to_string(input_dim()));
  require(inputs.allFinite(), ErrorCode::non_finite, "network input contains a non-finite entry");
  const Eigen::Index batch = inputs.cols();
  if (tape) tape->assign(spec_.layers.size(), LayerTape{});

  Matrix x = inputs;
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const LayerSpec& layer = spec_.layers[i];
    const Shape& in = shapes_[i];
    const Shape& out_shape = shapes_[i + 1];
    LayerTape* rec = tape ? &(*tape)[i] : nullptr;
    Matrix y;
    switch (layer.kind) {
      case LayerKind::dense: {
        const ParamSlice& s = slices_[static_cast<std::size_t>(slice_of_layer_[i])];
        Eigen::Map<const RowMatrix> w(theta.data() + s.offset, static_cast<Eigen::Index>(s.rows),
                                      static_cast<Eigen::Index>(s.cols));
        Eigen::Map<const Vector> b(theta.data() + s.bias_offset(), static_cast<Eigen::Index>(s.rows));
        y.noalias() = w * x;
        y.colwise() += b;
        if (rec) rec->input = std::move(x);
        break;
      }
      case LayerKind::relu:
        y = x.cwiseMax(0.0);
        if (rec) rec->input = std::move(x);
        break;
      case LayerKind::scale:
        y = layer.factor * x;
        break;
      case LayerKind::l2_normalize: {
        Vector norms = x.colwise().norm().transpose();
        y.resize(x.rows(), batch);
        for (Eigen::Index j = 0; j < batch; ++j) y.col(j) = x.col(j) / std::max(norms(j), layer.epsilon);
        if (rec) {
          rec->output = y;
          rec->norms = std::move(norms);
        }
        break;
      }
      case LayerKind::conv2d: {
        const ParamSlice& s = slices_[static_cast<std::size_t>(slice_of_layer_[i])];
        Eigen::Map<const RowMatrix> w(theta.data() + s.offset, static_cast<Eigen::Index>(s.rows),
                                      static_cast<Eigen::Index>(s.cols));
        Eigen::Map<const Vector> b(theta.data() + s.bias_offset(), static_cast<Eigen::Index>(s.rows));
        const auto plane = static_cast<Eigen::Index>(out_shape.height * out_shape.width);
        y.resize(static_cast<Eigen::Index>(out_shape.size()), batch);
        if (rec) rec->patches.resize(static_cast<std::size_t>(batch));
#pragma omp parallel for schedule(static) if (batch >= kParallelBatch && !rec)
        for (Eigen::Index j = 0; j < batch; ++j) {
          Matrix local;
          Matrix& patches = rec ? rec->patches[static_cast<std::size_t>(j)] : local;
          im2col(x.col(j).data(), in, layer.filter_size, patches);
          Eigen::Map<RowMatrix> yj(y.col(j).data(), static_cast<Eigen::Index>(s.rows), plane);
          yj.noalias() = w * patches;
          yj.colwise() += b;
        }
        break;
      }
      case LayerKind::maxpool2d: {
        const std::size_t win = layer.window;
        y.resize(static_cast<Eigen::Index>(out_shape.size()), batch);
        if (rec) rec->argmax.resize(y.rows(), batch);
        for (Eigen::Index j = 0; j < batch; ++j) {
          for (std::size_t c = 0; c < out_shape.channels; ++c)
            for (std::size_t oy = 0; oy < out_shape.height; ++oy)
              for (std::size_t ox = 0; ox < out_shape.width; ++ox) {
                Eigen::Index best = -1;
                double best_value = 0.0;
                for (std::size_t ky = 0; ky < win; ++ky)
                  for (std::size_t kx = 0; kx < win; ++kx) {
                    const auto idx = static_cast<Eigen::Index>(c * in.height * in.width +
                                                               (oy * win + ky) * in.width + ox * win + kx);
                    if (best < 0 || x(idx, j) > best_value) {
                      best = idx;
                      best_value = x(idx, j);
                    }
                  }
                const auto o = static_cast<Eigen::Index>(c * out_shape.height * out_shape.width +
                                                         oy * out_shape.width + ox);
                y(o, j) = best_value;
                if (rec) rec->argmax(o, j) = best;
              }
        }
        break;
      }
      case LayerKind::channel_dropout: {
        if (mode == Mode::infer || layer.rate == 0.0) {
          y = std::move(x);
          if (rec) rec->mask = Matrix::Ones(static_cast<Eigen::Index>(in.channels), batch);
          break;
        }
        require(rng != nullptr, ErrorCode::invalid_argument, layer_name(i, layer.kind) + " needs an rng in train mode");
        const double keep_scale = 1.0 / (1.0 - layer.rate);
        Matrix mask(static_cast<Eigen::Index>(in.channels), batch);
        for (Eigen::Index j = 0; j < batch; ++j)
          for (Eigen::Index c = 0; c < mask.rows(); ++c) mask(c, j) = rng->uniform() < layer.rate ? 0.0 : keep_scale;
        const auto plane = static_cast<Eigen::Index>(in.height * in.width);
        y = std::move(x);
        for (Eigen::Index j = 0; j < batch; ++j)
          for (Eigen::Index c = 0; c < mask.rows(); ++c) y.col(j).segment(c * plane, plane) *= mask(c, j);
        if (rec) rec->mask = std::move(mask);
        break;
      }
    }
    require(y.allFinite(), ErrorCode::non_finite, layer_name(i, layer.kind) + " produced non-finite activations");
    x = std::move(y);
  }
  return x;
}

void Network::backward(std::span<const double> theta, const Tape& tape, const Matrix& d_outputs,
                       std::span<double> grad) const {
  check_theta(theta);
  require(grad.size() == param_count_, ErrorCode::dimension_mismatch, "gradient buffer has the wrong length");
  require(tape.size() == spec_.layers.size(), ErrorCode::invalid_argument, "tape does not match network");
  require(static_cast<std::size_t>(d_outputs.rows()) == output_dim(), ErrorCode::dimension_mismatch,
          "output gradient has the wrong dimension");

  Matrix d = d_outputs;
  const Eigen::Index batch = d.cols();
  for (std::size_t ii = spec_.layers.size(); ii-- > 0;) {
    const LayerSpec& layer = spec_.layers[ii];
    const LayerTape& rec = tape[ii];
    const Shape& in = shapes_[ii];
    const Shape& out_shape = shapes_[ii + 1];
    Matrix d_in;
    switch (layer.kind) {
      case LayerKind::dense: {
        const ParamSlice& s = slices_[static_cast<std::size_t>(slice_of_layer_[ii])];
        const auto rows = static_cast<Eigen::Index>(s.rows);
        const auto cols = static_cast<Eigen::Index>(s.cols);
        Eigen::Map<const RowMatrix> w(theta.data() + s.offset, rows, cols);
        Eigen::Map<RowMatrix> gw(grad.data() + s.offset, rows, cols);
        Eigen::Map<Vector> gb(grad.data() + s.bias_offset(), rows);
        gw.noalias() += d * rec.input.transpose();
        gb += d.rowwise().sum();
        d_in.noalias() = w.transpose() * d;
        break;
      }
      case LayerKind::relu:
        d_in = (rec.input.array() > 0.0).select(d.array(), 0.0).matrix();
        break;
      case LayerKind::scale:
        d_in = layer.factor * d;
        break;
      case LayerKind::l2_normalize: {
        d_in.resize(d.rows(), batch);
        for (Eigen::Index j = 0; j < batch; ++j) {
          const double norm = rec.norms(j);
          if (norm > layer.epsilon) {
            const auto yj = rec.output.col(j);
            d_in.col(j) = (d.col(j) - yj * yj.dot(d.col(j))) / norm;
          } else {
            d_in.col(j) = d.col(j) / layer.epsilon;
          }
        }
        break;
      }
      case LayerKind::conv2d: {
        const ParamSlice& s = slices_[static_cast<std::size_t>(slice_of_layer_[ii])];
        const auto rows = static_cast<Eigen::Index>(s.rows);
        const auto cols = static_cast<Eigen::Index>(s.cols);
        const auto plane = static_cast<Eigen::Index>(out_shape.height * out_shape.width);
        Eigen::Map<const RowMatrix> w(theta.data() + s.offset, rows, cols);
        Eigen::Map<RowMatrix> gw(grad.data() + s.offset, rows, cols);
        Eigen::Map<Vector> gb(grad.data() + s.bias_offset(), rows);
        d_in = Matrix::Zero(static_cast<Eigen::Index>(in.size()), batch);
        for (Eigen::Index j = 0; j < batch; ++j) {
          Eigen::Map<const RowMatrix> dj(d.col(j).data(), rows, plane);
          const Matrix& patches = rec.patches[static_cast<std::size_t>(j)];
          gw.noalias() += dj * patches.transpose();
          gb += dj.rowwise().sum();
          const Matrix d_patches = w.transpose() * dj;
          col2im(d_patches, in, layer.filter_size, d_in.col(j).data());
        }
        break;
      }
      case LayerKind::maxpool2d:
        d_in = Matrix::Zero(static_cast<Eigen::Index>(in.size()), batch);
        for (Eigen::Index j = 0; j < batch; ++j)
          for (Eigen::Index o = 0; o < d.rows(); ++o) d_in(rec.argmax(o, j), j) += d(o, j);
        break;
      case LayerKind::channel_dropout: {
        const auto plane = static_cast<Eigen::Index>(in.height * in.width);
        d_in = d;
        for (Eigen::Index j = 0; j < batch; ++j)
          for (Eigen::Index c = 0; c < rec.mask.rows(); ++c) d_in.col(j).segment(c * plane, plane) *= rec.mask(c, j);
        break;
      }
    }
    d = std::move(d_in);
  }
}

std::vector<LayerParameters> unflatten(const Network& net, std::span<const double> theta) {
  require(theta.size() == net.param_count(), ErrorCode::dimension_mismatch, "unflatten: wrong parameter count");
  std::vector<LayerParameters> out;
  for (const ParamSlice& s : net.slices()) {
    const auto rows = static_cast<Eigen::Index>(s.rows);
    LayerParameters p;
    p.weights = Eigen::Map<const RowMatrix>(theta.data() + s.offset, rows, static_cast<Eigen::Index>(s.cols));
    p.bias = Eigen::Map<const Vector>(theta.data() + s.bias_offset(), rows);
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<double> flatten(const Network& net, const std::vector<LayerParameters>& params) {
  require(params.size() == net.slices().size(), ErrorCode::dimension_mismatch, "flatten: wrong layer count");
  std::vector<double> theta(net.param_count());
  for (std::size_t k = 0; k < params.size(); ++k) {
    const ParamSlice& s = net.slices()[k];
    const auto rows = static_cast<Eigen::Index>(s.rows);
    const auto cols = static_cast<Eigen::Index>(s.cols);
    require(params[k].weights.rows() == rows && params[k].weights.cols() == cols && params[k].bias.size() == rows,
            ErrorCode::dimension_mismatch, "flatten: layer parameter shapes do not match the network");
    Eigen::Map<RowMatrix>(theta.data() + s.offset, rows, cols) = params[k].weights;
    Eigen::Map<Vector>(theta.data() + s.bias_offset(), rows) = params[k].bias;
  }
  return theta;
}

std::vector<double> init_params(const Network& net, Rng& rng) {
  std::vector<double> theta(net.param_count(), 0.0);
  for (const ParamSlice& s : net.slices()) {
    const double bound = std::sqrt(6.0 / static_cast<double>(s.fan_in));
    for (std::size_t i = 0; i < s.weight_count(); ++i) theta[s.offset + i] = rng.uniform(-bound, bound);
  }
  return theta;
}

ValueAndGrad grad_theta(const Network& net, std::span<const double> theta, const OutputObjective& objective,
                        const PointsRef& inputs, Rng masks) {
  Tape tape;
  const Matrix outputs = net.forward(theta, inputs, Mode::train, &masks, tape);
  Matrix d_outputs = Matrix::Zero(outputs.rows(), outputs.cols());
  ValueAndGrad result;
  result.value = objective(outputs, &d_outputs);
  require(std::isfinite(result.value), ErrorCode::non_finite, "objective is not finite");
  require(d_outputs.rows() == outputs.rows() && d_outputs.cols() == outputs.cols(), ErrorCode::dimension_mismatch,
          "objective returned an output gradient of the wrong shape");
  result.grad.assign(net.param_count(), 0.0);
  net.backward(theta, tape, d_outputs, result.grad);
  return result;
}

double objective_value(const Network& net, std::span<const double> theta, const OutputObjective& objective,
                       const PointsRef& inputs, Rng masks) {
  const Matrix outputs = net.forward(theta, inputs, Mode::train, &masks);
  return objective(outputs, nullptr);
}

std::vector<double> estimate_gradient(const ThetaFunction& f, std::span<const double> theta, EstimatorKind method,
                                      Rng& rng, double step) {
  require(step > 0.0, ErrorCode::invalid_argument, "gradient estimator step must be positive");
  const std::size_t n = theta.size();
  std::vector<double> grad(n, 0.0);
  std::vector<double> plus(theta.begin(), theta.end());
  std::vector<double> minus(theta.begin(), theta.end());
  switch (method) {
    case EstimatorKind::fd:
      for (std::size_t i = 0; i < n; ++i) {
        plus[i] = theta[i] + step;
        minus[i] = theta[i] - step;
        grad[i] = (f(plus) - f(minus)) / (2.0 * step);
        plus[i] = theta[i];
        minus[i] = theta[i];
      }
      break;
    case EstimatorKind::spsa: {
      std::vector<double> delta(n);
      for (std::size_t i = 0; i < n; ++i) {
        delta[i] = rng.rademacher();
        plus[i] = theta[i] + step * delta[i];
        minus[i] = theta[i] - step * delta[i];
      }
      const double diff = (f(plus) - f(minus)) / (2.0 * step);
      for (std::size_t i = 0; i < n; ++i) grad[i] = diff / delta[i];
      break;
    }
    case EstimatorKind::rdsa: {
      std::vector<double> dir(n);
      double norm = 0.0;
      while (norm == 0.0) {
        norm = 0.0;
        for (auto& v : dir) {
          v = rng.normal();
          norm += v * v;
        }
        norm = std::sqrt(norm);
      }
      for (std::size_t i = 0; i < n; ++i) {
        dir[i] /= norm;
        plus[i] = theta[i] + step * dir[i];
        minus[i] = theta[i] - step * dir[i];
      }
      // E[d d^T] = I/n on the sphere, hence the factor n.
      const double diff = static_cast<double>(n) * (f(plus) - f(minus)) / (2.0 * step);
      for (std::size_t i = 0; i < n; ++i) grad[i] = diff * dir[i];
      break;
    }
  }
  return grad;
}

std::vector<double> grad_estimate(const Network& net, std::span<const double> theta, const OutputObjective& objective,
                                  const PointsRef& inputs, EstimatorKind method, Rng& rng, double step) {
  const Rng masks = rng.split();
  const ThetaFunction f = [&](std::span<const double> t) { return objective_value(net, t, objective, inputs, masks); };
  return estimate_gradient(f, theta, method, rng, step);
}

}  // namespace nsvm::nn
