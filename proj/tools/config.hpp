#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"
#include "nsvm/data.hpp"
#include "nsvm/training.hpp"

namespace nsvm::cli {

inline constexpr int kSchemaVersion = 1;

/// Where the training data comes from and how it is split and scaled.
struct DataConfig {
  std::string source = "ringnorm";  // ringnorm | images | csv | idx
  std::size_t n = 7400;
  double noise = 0.3;
  std::string train_csv;
  std::string test_csv;
  std::string train_images;
  std::string train_labels;
  std::string test_images;
  std::string test_labels;
  int negative = 0;
  int positive = 1;
  double test_fraction = 0.1;
  bool stratified = true;
  bool standardize = true;
  std::size_t max_train_per_class = 0;  // 0 keeps everything
  std::uint64_t seed = 1;
};

struct RunConfig {
  DataConfig data;
  training::TrainConfig train;
  std::string out_dir = "run";
};

/// Strict parse: unknown keys and a missing or wrong schema_version are errors.
RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& cfg);

RunConfig load_run_config(const std::string& path);

struct PreparedData {
  data::Dataset train;
  data::Dataset test;  // empty when the source has no held-out part
};

/// Loads or generates the data, splits it and standardizes with train statistics.
PreparedData prepare_data(const DataConfig& cfg);

}  // namespace nsvm::cli
