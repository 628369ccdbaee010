#pragma once

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "nsvm/data.hpp"
#include "nsvm/feature_maps.hpp"
#include "nsvm/kernels.hpp"

namespace nsvm::models {

/// alg1: one coefficient, label and stored feature vector per training step.
/// expansion: coefficients over (a subset of) the training inputs, features at Theta.
/// pipeline: a classifier fitted on F_Theta features, g = h o F_Theta.
enum class Variant { alg1, expansion, pipeline };

std::string to_string(Variant v);
Variant variant_from_string(std::string_view name);

inline constexpr int kFormatVersion = 1;

struct NsvmModel {
  Variant variant = Variant::expansion;
  kernels::KernelSpec kernel;
  nn::NetworkSpec net;
  std::vector<double> theta;
  std::vector<double> alphas;
  std::vector<int> labels;
  Matrix z;  // feature dimension x alphas.size()
  double lambda = 1.0;
  std::size_t steps = 1;
  std::shared_ptr<const NsvmModel> inner;  // pipeline only; an expansion over feature space

  /// Throws when lengths disagree, values are non-finite or labels are not +-1.
  void validate() const;

  [[nodiscard]] std::size_t input_dim() const { return net.input.size(); }

  friend bool operator==(const NsvmModel& a, const NsvmModel& b);
};

/// Decision values for every column of `inputs`: for alg1 and expansion
/// models (1/(lambda T)) sum alpha y K(z, F_Theta(x)); for pipelines the
/// inner classifier's +-1 on F_Theta(x). Features use infer mode.
Vector decision_batch(const NsvmModel& model, const PointsRef& inputs);
double decision(const NsvmModel& model, std::span<const double> x);

/// 1 when g(x) >= 0, else -1.
inline int sign_label(double g) { return g >= 0.0 ? 1 : -1; }
int classify(const NsvmModel& model, std::span<const double> x);

struct Metrics {
  double accuracy = 0.0;
  std::size_t tp = 0;
  std::size_t tn = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t m = 0;
};

Metrics evaluate(const NsvmModel& model, const data::Dataset& data);

nlohmann::json to_json(const kernels::KernelSpec& spec);
kernels::KernelSpec kernel_from_json(const nlohmann::json& j);
nlohmann::json to_json(const nn::LayerSpec& layer);
nn::LayerSpec layer_from_json(const nlohmann::json& j);
nlohmann::json to_json(const nn::NetworkSpec& spec);
nn::NetworkSpec network_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Metrics& metrics);

nlohmann::json to_json(const NsvmModel& model);
/// Throws on a wrong format tag or version, on schema violations, and when
/// `expected` is given and the stored variant differs.
NsvmModel model_from_json(const nlohmann::json& j, std::optional<Variant> expected = std::nullopt);

void save(const NsvmModel& model, std::ostream& sink);
void save(const NsvmModel& model, const std::filesystem::path& path);
NsvmModel load(std::istream& source, std::optional<Variant> expected = std::nullopt);
NsvmModel load(const std::filesystem::path& path, std::optional<Variant> expected = std::nullopt);

/// Rejects keys of `j` outside `allowed`.
void check_keys(const nlohmann::json& j, std::initializer_list<std::string_view> allowed, const std::string& where);

}  // namespace nsvm::models
