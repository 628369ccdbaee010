#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "nsvm/data.hpp"
#include "nsvm/feature_maps.hpp"
#include "nsvm/kernels.hpp"
#include "nsvm/models.hpp"
#include "nsvm/objectives.hpp"
#include "nsvm/optimizer.hpp"

namespace nsvm::training {

/// Hyperparameters of the classifier fitted on the learned features.
struct FitterSpec {
  std::string name = "pegasos";
  std::size_t steps = 1000;
  double lambda = 1e-4;

  friend bool operator==(const FitterSpec&, const FitterSpec&) = default;
};

struct TrainConfig {
  int algo = 1;
  std::size_t steps = 1000;
  double lambda = 1e-4;
  double mu = 1.0;
  std::size_t batch_size = 16;
  std::string loss = "squared";
  FitterSpec fitter;
  OptimizerSettings optimizer;
  kernels::KernelSpec kernel;
  nn::NetworkSpec net;
  std::uint64_t seed = 1;
  /// Keep (1/(lambda T)) sum alpha y K(z, z_j) for every training input (alg 2/3).
  bool record_final_decisions = false;

  /// Throws when a field is out of range for the selected algorithm or when
  /// the dataset cannot be used (single class, k > m, dimension mismatch).
  void validate(const data::Dataset& train) const;
};

enum class Branch { init, violation, satisfied, batch };
std::string to_string(Branch b);

struct StepRecord {
  std::size_t step = 0;
  int label = 0;       // y of the sampled input; 0 for batch steps
  double margin = 0;   // g~_t; for batch steps the mean of y_i g~_t^(i)
  Branch branch = Branch::init;
  std::size_t violations = 0;
  std::optional<double> objective;  // theta objective value when a theta step was taken
};

struct TrainReport {
  std::vector<StepRecord> log;
  std::size_t nonzero_alphas = 0;
  std::chrono::duration<double> duration{};
};

struct TrainOutcome {
  models::NsvmModel model;
  TrainReport report;
  /// alg1: one entry per step; alg0/2/3: one per training input; alg4: the inner fit's.
  std::vector<double> alphas;
  std::vector<double> final_decisions;
};

/// Fits a classifier on labeled feature vectors; returns an expansion model
/// whose network is the identity on the feature dimension.
using SvmFitter = std::function<models::NsvmModel(const data::Dataset& features, const kernels::KernelSpec& kernel,
                                                  Rng& sampling)>;

SvmFitter pegasos_fitter(std::size_t steps, double lambda);
SvmFitter make_fitter(const FitterSpec& spec);

objectives::LossSpec loss_from_name(const std::string& name);

TrainOutcome train_alg0(const data::Dataset& train, const TrainConfig& cfg);
TrainOutcome train_alg1(const data::Dataset& train, const TrainConfig& cfg);
TrainOutcome train_alg2(const data::Dataset& train, const TrainConfig& cfg);
TrainOutcome train_alg3(const data::Dataset& train, const TrainConfig& cfg);
TrainOutcome train_alg4(const data::Dataset& train, const TrainConfig& cfg, const SvmFitter& fitter);
TrainOutcome train_alg4(const data::Dataset& train, const TrainConfig& cfg);

/// Dispatches on cfg.algo.
TrainOutcome train(const data::Dataset& train, const TrainConfig& cfg);

}  // namespace nsvm::training
