#include "config.hpp"

#include <fstream>

#include "nsvm/error.hpp"
#include "nsvm/models.hpp"

namespace nsvm::cli {

using nlohmann::json;
using models::check_keys;

namespace {

template <typename T>
void read(const json& j, const char* key, T& field, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    field = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::parse, where + "." + key + " has the wrong type");
  }
}

const json& section(const json& j, const char* key) {
  static const json empty = json::object();
  if (!j.contains(key)) return empty;
  require(j.at(key).is_object(), ErrorCode::parse, std::string("config section '") + key + "' must be an object");
  return j.at(key);
}

DataConfig data_from_json(const json& j) {
  check_keys(j,
             {"source", "n", "noise", "train_csv", "test_csv", "train_images", "train_labels", "test_images",
              "test_labels", "negative", "positive", "test_fraction", "stratified", "standardize",
              "max_train_per_class", "seed"},
             "data");
  DataConfig d;
  read(j, "source", d.source, "data");
  read(j, "n", d.n, "data");
  read(j, "noise", d.noise, "data");
  read(j, "train_csv", d.train_csv, "data");
  read(j, "test_csv", d.test_csv, "data");
  read(j, "train_images", d.train_images, "data");
  read(j, "train_labels", d.train_labels, "data");
  read(j, "test_images", d.test_images, "data");
  read(j, "test_labels", d.test_labels, "data");
  read(j, "negative", d.negative, "data");
  read(j, "positive", d.positive, "data");
  read(j, "test_fraction", d.test_fraction, "data");
  read(j, "stratified", d.stratified, "data");
  read(j, "standardize", d.standardize, "data");
  read(j, "max_train_per_class", d.max_train_per_class, "data");
  read(j, "seed", d.seed, "data");
  require(d.source == "ringnorm" || d.source == "images" || d.source == "csv" || d.source == "idx",
          ErrorCode::invalid_argument, "data.source must be ringnorm, images, csv or idx");
  return d;
}

json to_json(const DataConfig& d) {
  return {{"source", d.source},
          {"n", d.n},
          {"noise", d.noise},
          {"train_csv", d.train_csv},
          {"test_csv", d.test_csv},
          {"train_images", d.train_images},
          {"train_labels", d.train_labels},
          {"test_images", d.test_images},
          {"test_labels", d.test_labels},
          {"negative", d.negative},
          {"positive", d.positive},
          {"test_fraction", d.test_fraction},
          {"stratified", d.stratified},
          {"standardize", d.standardize},
          {"max_train_per_class", d.max_train_per_class},
          {"seed", d.seed}};
}

void train_from_json(const json& j, training::TrainConfig& t) {
  check_keys(j, {"algo", "steps", "lambda", "mu", "batch_size", "loss", "fitter", "optimizer", "seed"}, "train");
  read(j, "algo", t.algo, "train");
  read(j, "steps", t.steps, "train");
  read(j, "lambda", t.lambda, "train");
  read(j, "mu", t.mu, "train");
  read(j, "batch_size", t.batch_size, "train");
  read(j, "loss", t.loss, "train");
  read(j, "seed", t.seed, "train");
  const json& fitter = section(j, "fitter");
  check_keys(fitter, {"name", "steps", "lambda"}, "train.fitter");
  read(fitter, "name", t.fitter.name, "train.fitter");
  read(fitter, "steps", t.fitter.steps, "train.fitter");
  read(fitter, "lambda", t.fitter.lambda, "train.fitter");
  const json& opt = section(j, "optimizer");
  check_keys(opt, {"learning_rate", "momentum", "weight_decay"}, "train.optimizer");
  read(opt, "learning_rate", t.optimizer.learning_rate, "train.optimizer");
  read(opt, "momentum", t.optimizer.momentum, "train.optimizer");
  read(opt, "weight_decay", t.optimizer.weight_decay, "train.optimizer");
}

}  // namespace

RunConfig run_config_from_json(const json& j) {
  check_keys(j, {"schema_version", "data", "net", "kernel", "train", "output"}, "config");
  require(j.contains("schema_version"), ErrorCode::parse, "config: missing schema_version");
  int version = 0;
  read(j, "schema_version", version, "config");
  require(version == kSchemaVersion, ErrorCode::version_mismatch,
          "config schema_version " + std::to_string(version) + " is not supported (expected " +
              std::to_string(kSchemaVersion) + ")");
  RunConfig cfg;
  cfg.data = data_from_json(section(j, "data"));
  require(j.contains("net"), ErrorCode::parse, "config: missing net");
  cfg.train.net = models::network_from_json(j.at("net"));
  if (j.contains("kernel")) cfg.train.kernel = models::kernel_from_json(j.at("kernel"));
  train_from_json(section(j, "train"), cfg.train);
  const json& output = section(j, "output");
  check_keys(output, {"dir"}, "output");
  read(output, "dir", cfg.out_dir, "output");
  return cfg;
}

json to_json(const RunConfig& cfg) {
  const auto& t = cfg.train;
  return {{"schema_version", kSchemaVersion},
          {"data", to_json(cfg.data)},
          {"net", models::to_json(t.net)},
          {"kernel", models::to_json(t.kernel)},
          {"train",
           {{"algo", t.algo},
            {"steps", t.steps},
            {"lambda", t.lambda},
            {"mu", t.mu},
            {"batch_size", t.batch_size},
            {"loss", t.loss},
            {"seed", t.seed},
            {"fitter", {{"name", t.fitter.name}, {"steps", t.fitter.steps}, {"lambda", t.fitter.lambda}}},
            {"optimizer",
             {{"learning_rate", t.optimizer.learning_rate},
              {"momentum", t.optimizer.momentum},
              {"weight_decay", t.optimizer.weight_decay}}}}},
          {"output", {{"dir", cfg.out_dir}}}};
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::io, "cannot open config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse, "config " + path + ": " + e.what());
  }
  return run_config_from_json(j);
}

PreparedData prepare_data(const DataConfig& cfg) {
  PreparedData out;
  bool has_test = true;
  if (cfg.source == "ringnorm" || cfg.source == "images") {
    require(cfg.n >= 2, ErrorCode::invalid_argument, "data.n must be >= 2");
    const data::Dataset all = cfg.source == "ringnorm" ? data::gen_ringnorm(cfg.n, cfg.seed)
                                                       : data::gen_two_gaussian_images(cfg.n, cfg.seed, cfg.noise);
    if (cfg.test_fraction > 0.0) {
      auto split = data::split_fraction(all, cfg.test_fraction, cfg.stratified, cfg.seed);
      out.train = std::move(split.train);
      out.test = std::move(split.rest);
    } else {
      out.train = all;
      has_test = false;
    }
  } else if (cfg.source == "csv") {
    require(!cfg.train_csv.empty(), ErrorCode::invalid_argument, "data.train_csv is required for csv data");
    out.train = data::load_csv(cfg.train_csv);
    if (cfg.test_csv.empty()) has_test = false;
    else out.test = data::load_csv(cfg.test_csv);
  } else {
    require(!cfg.train_images.empty() && !cfg.train_labels.empty(), ErrorCode::invalid_argument,
            "data.train_images and data.train_labels are required for idx data");
    out.train = data::load_idx_images(cfg.train_images, cfg.train_labels, cfg.negative, cfg.positive);
    if (cfg.test_images.empty()) has_test = false;
    else out.test = data::load_idx_images(cfg.test_images, cfg.test_labels, cfg.negative, cfg.positive);
  }
  if (cfg.max_train_per_class > 0) out.train = data::split_per_class(out.train, cfg.max_train_per_class, cfg.seed).rest;
  if (cfg.standardize) {
    const auto stats = data::standardize_fit(out.train);
    out.train = data::standardize_apply(stats, out.train);
    if (has_test) out.test = data::standardize_apply(stats, out.test);
  }
  return out;
}

}  // namespace nsvm::cli
