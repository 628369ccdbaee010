#include "nsvm/models.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>

#include "nsvm/error.hpp"

namespace nsvm::models {

using nlohmann::json;

namespace {

constexpr const char* kFormatTag = "nsvm-model";

template <typename T>
T get(const json& j, const char* key, const std::string& where) {
  require(j.is_object() && j.contains(key), ErrorCode::parse, where + ": missing key '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse, where + ": bad value for '" + key + "': " + e.what());
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  return get<T>(j, key, where);
}

json matrix_to_json(const Matrix& m) { return json(std::vector<double>(m.data(), m.data() + m.size())); }

}  // namespace

void check_keys(const json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
  require(j.is_object(), ErrorCode::parse, where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || key == a;
    require(ok, ErrorCode::parse, where + ": unknown key '" + key + "'");
  }
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::alg1: return "alg1";
    case Variant::expansion: return "expansion";
    case Variant::pipeline: return "pipeline";
  }
  return "unknown";
}

Variant variant_from_string(std::string_view name) {
  for (auto v : {Variant::alg1, Variant::expansion, Variant::pipeline})
    if (name == to_string(v)) return v;
  throw Error(ErrorCode::parse, "unknown model variant '" + std::string(name) + "'");
}

bool operator==(const NsvmModel& a, const NsvmModel& b) {
  const bool same_inner = (!a.inner && !b.inner) || (a.inner && b.inner && *a.inner == *b.inner);
  // an empty expansion has no meaningful row count
  const bool same_z = (a.z.size() == 0 && b.z.size() == 0) ||
                      (a.z.rows() == b.z.rows() && a.z.cols() == b.z.cols() && a.z == b.z);
  return a.variant == b.variant && a.kernel == b.kernel && a.net == b.net && a.theta == b.theta &&
         a.alphas == b.alphas && a.labels == b.labels && same_z && a.lambda == b.lambda && a.steps == b.steps && same_inner;
}

void NsvmModel::validate() const {
  kernel.validate();
  const nn::Network network(net);
  require(theta.size() == network.param_count(), ErrorCode::dimension_mismatch,
          "model theta length does not match its network");
  require(lambda > 0.0 && std::isfinite(lambda), ErrorCode::invalid_argument, "model lambda must be positive");
  require(steps >= 1 || variant == Variant::pipeline, ErrorCode::invalid_argument, "model step count must be >= 1");
  const auto finite = [](double v) { return std::isfinite(v); };
  require(std::all_of(theta.begin(), theta.end(), finite) && z.allFinite(), ErrorCode::non_finite,
          "model contains non-finite values");
  if (variant == Variant::pipeline) {
    require(inner != nullptr && inner->variant == Variant::expansion, ErrorCode::invalid_argument,
            "pipeline model needs an expansion inner classifier");
    require(inner->input_dim() == network.output_dim(), ErrorCode::dimension_mismatch,
            "inner classifier input does not match feature dimension");
    inner->validate();
    return;
  }
  require(inner == nullptr, ErrorCode::invalid_argument, "only pipeline models carry an inner classifier");
  require(alphas.size() == labels.size() && static_cast<Eigen::Index>(alphas.size()) == z.cols(),
          ErrorCode::dimension_mismatch, "model alphas, labels and stored features differ in length");
  if (variant == Variant::alg1)
    require(alphas.size() == steps, ErrorCode::dimension_mismatch, "alg1 model must store one term per step");
  require(z.cols() == 0 || static_cast<std::size_t>(z.rows()) == network.output_dim(), ErrorCode::dimension_mismatch,
          "stored features do not match the network output dimension");
  require(std::all_of(alphas.begin(), alphas.end(), [](double a) { return a >= 0.0 && std::isfinite(a); }),
          ErrorCode::invalid_argument, "model alphas must be finite and non-negative");
  require(std::all_of(labels.begin(), labels.end(), [](int y) { return y == 1 || y == -1; }),
          ErrorCode::invalid_argument, "model labels must be -1 or 1");
}

Vector decision_batch(const NsvmModel& model, const PointsRef& inputs) {
  require(static_cast<std::size_t>(inputs.rows()) == model.input_dim(), ErrorCode::dimension_mismatch,
          "input dimension " + std::to_string(inputs.rows()) + " does not match model input " +
              std::to_string(model.input_dim()));
  const nn::Network net(model.net);
  const Matrix features = net.forward(model.theta, inputs, nn::Mode::infer, nullptr);
  Vector out(inputs.cols());
  if (model.variant == Variant::pipeline) {
    const Vector inner = decision_batch(*model.inner, features);
    for (Eigen::Index j = 0; j < out.size(); ++j) out(j) = sign_label(inner(j));
    return out;
  }
  std::vector<double> weights;
  std::vector<Eigen::Index> cols;
  for (std::size_t s = 0; s < model.alphas.size(); ++s)
    if (model.alphas[s] != 0.0) {
      weights.push_back(model.alphas[s] * model.labels[s]);
      cols.push_back(static_cast<Eigen::Index>(s));
    }
  Matrix support(model.z.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) support.col(static_cast<Eigen::Index>(c)) = model.z.col(cols[c]);
  const double scale = 1.0 / (model.lambda * static_cast<double>(model.steps));
  for (Eigen::Index j = 0; j < out.size(); ++j)
    out(j) = scale * kernels::weighted_sum(model.kernel, support, weights, column(features, j));
  return out;
}

double decision(const NsvmModel& model, std::span<const double> x) {
  const Eigen::Map<const Vector> col(x.data(), static_cast<Eigen::Index>(x.size()));
  return decision_batch(model, col)(0);
}

int classify(const NsvmModel& model, std::span<const double> x) { return sign_label(decision(model, x)); }

Metrics evaluate(const NsvmModel& model, const data::Dataset& data) {
  require(data.size() > 0, ErrorCode::invalid_argument, "cannot evaluate on an empty dataset");
  data.validate();
  const Vector g = decision_batch(model, data.inputs);
  Metrics m;
  m.m = data.size();
  for (std::size_t j = 0; j < data.size(); ++j) {
    const int predicted = sign_label(g(static_cast<Eigen::Index>(j)));
    const int actual = data.labels[j];
    if (actual == 1) (predicted == 1 ? m.tp : m.fn)++;
    else (predicted == -1 ? m.tn : m.fp)++;
  }
  m.accuracy = static_cast<double>(m.tp + m.tn) / static_cast<double>(m.m);
  return m;
}

json to_json(const kernels::KernelSpec& spec) {
  return {{"kind", kernels::to_string(spec.kind)}, {"gamma", spec.gamma}, {"normalized", spec.normalized}};
}

kernels::KernelSpec kernel_from_json(const json& j) {
  const std::string where = "kernel";
  check_keys(j, {"kind", "gamma", "normalized"}, where);
  kernels::KernelSpec spec;
  spec.kind = kernels::kernel_kind_from_string(get<std::string>(j, "kind", where));
  spec.gamma = get_or<double>(j, "gamma", 1.0, where);
  spec.normalized = get_or<bool>(j, "normalized", false, where);
  spec.validate();
  return spec;
}

json to_json(const nn::LayerSpec& layer) {
  json j = {{"type", nn::to_string(layer.kind)}};
  switch (layer.kind) {
    case nn::LayerKind::dense: j["in"] = layer.in_dim; j["out"] = layer.out_dim; break;
    case nn::LayerKind::scale: j["factor"] = layer.factor; break;
    case nn::LayerKind::l2_normalize: j["epsilon"] = layer.epsilon; break;
    case nn::LayerKind::conv2d:
      j["in_channels"] = layer.in_channels;
      j["out_channels"] = layer.out_channels;
      j["filter"] = layer.filter_size;
      break;
    case nn::LayerKind::maxpool2d: j["window"] = layer.window; break;
    case nn::LayerKind::channel_dropout: j["rate"] = layer.rate; break;
    case nn::LayerKind::relu: break;
  }
  return j;
}

nn::LayerSpec layer_from_json(const json& j) {
  const std::string where = "layer";
  const nn::LayerKind kind = nn::layer_kind_from_string(get<std::string>(j, "type", where));
  const std::string at = where + " '" + nn::to_string(kind) + "'";
  switch (kind) {
    case nn::LayerKind::dense:
      check_keys(j, {"type", "in", "out"}, at);
      return nn::LayerSpec::dense(get_or<std::size_t>(j, "in", 0, at), get<std::size_t>(j, "out", at));
    case nn::LayerKind::relu:
      check_keys(j, {"type"}, at);
      return nn::LayerSpec::relu();
    case nn::LayerKind::l2_normalize:
      check_keys(j, {"type", "epsilon"}, at);
      return nn::LayerSpec::l2_normalize(get_or<double>(j, "epsilon", 1e-12, at));
    case nn::LayerKind::scale:
      check_keys(j, {"type", "factor"}, at);
      return nn::LayerSpec::scale(get<double>(j, "factor", at));
    case nn::LayerKind::conv2d:
      check_keys(j, {"type", "in_channels", "out_channels", "filter"}, at);
      return nn::LayerSpec::conv2d(get_or<std::size_t>(j, "in_channels", 0, at),
                                   get<std::size_t>(j, "out_channels", at), get<std::size_t>(j, "filter", at));
    case nn::LayerKind::maxpool2d:
      check_keys(j, {"type", "window"}, at);
      return nn::LayerSpec::maxpool2d(get_or<std::size_t>(j, "window", 2, at));
    case nn::LayerKind::channel_dropout:
      check_keys(j, {"type", "rate"}, at);
      return nn::LayerSpec::channel_dropout(get_or<double>(j, "rate", 0.5, at));
  }
  throw Error(ErrorCode::parse, "unreachable layer kind");
}

json to_json(const nn::NetworkSpec& spec) {
  json layers = json::array();
  for (const auto& l : spec.layers) layers.push_back(to_json(l));
  return {{"input_shape", {spec.input.channels, spec.input.height, spec.input.width}}, {"layers", layers}};
}

nn::NetworkSpec network_from_json(const json& j) {
  const std::string where = "net";
  check_keys(j, {"input_shape", "layers"}, where);
  const auto shape = get<std::vector<std::size_t>>(j, "input_shape", where);
  require(!shape.empty() && shape.size() <= 3, ErrorCode::parse, "net.input_shape must have 1 to 3 entries");
  nn::NetworkSpec spec;
  spec.input = shape.size() == 1 ? nn::Shape{shape[0], 1, 1}
               : shape.size() == 2 ? nn::Shape{1, shape[0], shape[1]}
                                   : nn::Shape{shape[0], shape[1], shape[2]};
  if (j.contains("layers")) {
    require(j["layers"].is_array(), ErrorCode::parse, "net.layers must be an array");
    for (const auto& l : j["layers"]) spec.layers.push_back(layer_from_json(l));
  }
  // Resolve inferred dimensions so the stored spec is self-describing.
  return nn::Network(spec).spec();
}

json to_json(const Metrics& metrics) {
  return {{"accuracy", metrics.accuracy}, {"tp", metrics.tp}, {"tn", metrics.tn},
          {"fp", metrics.fp},             {"fn", metrics.fn}, {"m", metrics.m}};
}

json to_json(const NsvmModel& model) {
  model.validate();
  const nn::Network net(model.net);
  json j;
  j["format"] = kFormatTag;
  j["version"] = kFormatVersion;
  j["variant"] = to_string(model.variant);
  j["dims"] = {{"input", net.input_dim()},
               {"feature", net.output_dim()},
               {"params", net.param_count()},
               {"terms", model.alphas.size()}};
  j["kernel"] = to_json(model.kernel);
  j["net"] = to_json(model.net);
  j["lambda"] = model.lambda;
  j["steps"] = model.steps;
  j["theta"] = model.theta;
  j["alphas"] = model.alphas;
  j["labels"] = model.labels;
  j["z"] = matrix_to_json(model.z);
  if (model.inner) j["inner"] = to_json(*model.inner);
  return j;
}

NsvmModel model_from_json(const json& j, std::optional<Variant> expected) {
  const std::string where = "model";
  check_keys(j, {"format", "version", "variant", "dims", "kernel", "net", "lambda", "steps", "theta", "alphas",
                 "labels", "z", "inner"},
             where);
  require(get<std::string>(j, "format", where) == kFormatTag, ErrorCode::parse, "not an nsvm model document");
  const int version = get<int>(j, "version", where);
  require(version == kFormatVersion, ErrorCode::version_mismatch,
          "unsupported model format version " + std::to_string(version) + " (expected " +
              std::to_string(kFormatVersion) + ")");
  NsvmModel model;
  model.variant = variant_from_string(get<std::string>(j, "variant", where));
  if (expected)
    require(model.variant == *expected, ErrorCode::variant_mismatch,
            "model variant is '" + to_string(model.variant) + "', expected '" + to_string(*expected) + "'");
  require(j.contains("kernel") && j.contains("net"), ErrorCode::parse, "model: missing kernel or net");
  model.kernel = kernel_from_json(j["kernel"]);
  model.net = network_from_json(j["net"]);
  model.lambda = get<double>(j, "lambda", where);
  model.steps = get<std::size_t>(j, "steps", where);
  model.theta = get<std::vector<double>>(j, "theta", where);
  model.alphas = get<std::vector<double>>(j, "alphas", where);
  model.labels = get<std::vector<int>>(j, "labels", where);
  const auto z = get<std::vector<double>>(j, "z", where);
  const auto dims = get<json>(j, "dims", where);
  const auto feature = get<std::size_t>(dims, "feature", where + ".dims");
  const auto terms = model.alphas.size();
  require(z.size() == feature * terms, ErrorCode::parse, "model: stored feature array has the wrong length");
  model.z = Eigen::Map<const Matrix>(z.data(), static_cast<Eigen::Index>(terms == 0 ? 0 : feature),
                                     static_cast<Eigen::Index>(terms));
  if (j.contains("inner")) model.inner = std::make_shared<const NsvmModel>(model_from_json(j["inner"], Variant::expansion));
  model.validate();
  return model;
}

void save(const NsvmModel& model, std::ostream& sink) {
  sink << to_json(model).dump(1) << '\n';
  require(sink.good(), ErrorCode::io, "failed to write model");
}

void save(const NsvmModel& model, const std::filesystem::path& path) {
  const std::string text = to_json(model).dump(1) + "\n";
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorCode::io, "cannot write " + path.string());
  out << text;
  require(out.good(), ErrorCode::io, "write failed for " + path.string());
}

NsvmModel load(std::istream& source, std::optional<Variant> expected) {
  json j;
  try {
    j = json::parse(source);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse, std::string("malformed model file: ") + e.what());
  }
  return model_from_json(j, expected);
}

NsvmModel load(const std::filesystem::path& path, std::optional<Variant> expected) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::io, "cannot open " + path.string());
  return load(in, expected);
}

}  // namespace nsvm::models
