#include "commands.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "config.hpp"
#include "nsvm/data.hpp"
#include "nsvm/error.hpp"
#include "nsvm/models.hpp"
#include "nsvm/training.hpp"

namespace nsvm::cli {

using nlohmann::json;
namespace fs = std::filesystem;

std::string file_crc32(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::io, "cannot open " + path.string());
  uLong crc = crc32(0L, Z_NULL, 0);
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    const auto got = in.gcount();
    if (got > 0) crc = crc32(crc, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(got));
  }
  char hex[9];
  std::snprintf(hex, sizeof hex, "%08lx", static_cast<unsigned long>(crc));
  return hex;
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorCode::io, "cannot write " + path.string());
  out << text;
  require(out.good(), ErrorCode::io, "write failed for " + path.string());
}

std::string step_log_jsonl(const training::TrainReport& report) {
  std::string text;
  for (const auto& r : report.log) {
    json line = {{"step", r.step},
                 {"label", r.label},
                 {"margin", r.margin},
                 {"branch", training::to_string(r.branch)},
                 {"violations", r.violations},
                 {"objective", r.objective ? json(*r.objective) : json(nullptr)}};
    text += line.dump();
    text += '\n';
  }
  return text;
}

struct GenArgs {
  std::string kind = "ringnorm";
  long long n = 7400;
  std::uint64_t seed = 1;
  double noise = 0.3;
  std::string out;
};

int cmd_gen(const GenArgs& a, std::ostream& out) {
  require(a.n >= 2, ErrorCode::invalid_argument, "--n must be >= 2");
  const auto n = static_cast<std::size_t>(a.n);
  const data::Dataset d =
      a.kind == "ringnorm" ? data::gen_ringnorm(n, a.seed) : data::gen_two_gaussian_images(n, a.seed, a.noise);
  data::save_csv(d, a.out);
  out << "rows " << d.size() << " crc32 " << file_crc32(a.out) << '\n';
  return kOk;
}

struct TrainArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> steps;
  std::optional<double> learning_rate;
  std::optional<std::string> out_dir;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  RunConfig cfg = load_run_config(a.config);
  if (a.seed) cfg.train.seed = *a.seed;
  if (a.steps) cfg.train.steps = *a.steps;
  if (a.learning_rate) cfg.train.optimizer.learning_rate = *a.learning_rate;
  if (a.out_dir) cfg.out_dir = *a.out_dir;

  // Everything that can fail on bad input happens before the first file is written.
  const PreparedData prepared = prepare_data(cfg.data);
  cfg.train.validate(prepared.train);
  const training::TrainOutcome outcome = training::train(prepared.train, cfg.train);
  const models::Metrics train_metrics = models::evaluate(outcome.model, prepared.train);
  std::optional<models::Metrics> test_metrics;
  if (prepared.test.size() > 0) test_metrics = models::evaluate(outcome.model, prepared.test);

  const fs::path dir = cfg.out_dir;
  fs::create_directories(dir);
  write_text(dir / "config.resolved.json", to_json(cfg).dump(2) + "\n");
  models::save(outcome.model, dir / "model.json");
  write_text(dir / "steps.jsonl", step_log_jsonl(outcome.report));
  data::save_csv(prepared.train, dir / "train.csv");
  if (test_metrics) data::save_csv(prepared.test, dir / "test.csv");

  json metrics = {{"train", models::to_json(train_metrics)},
                  {"nonzero_alphas", outcome.report.nonzero_alphas},
                  {"model_crc32", file_crc32(dir / "model.json")}};
  if (test_metrics) metrics["test"] = models::to_json(*test_metrics);
  write_text(dir / "metrics.json", metrics.dump(2) + "\n");

  out << "algo " << cfg.train.algo << " steps " << cfg.train.steps << " nonzero_alphas "
      << outcome.report.nonzero_alphas << '\n';
  out << "train_accuracy " << train_metrics.accuracy << '\n';
  if (test_metrics) out << "test_accuracy " << test_metrics->accuracy << '\n';
  out << "seconds " << outcome.report.duration.count() << '\n';
  return kOk;
}

struct EvalArgs {
  std::string model;
  std::string data;
  std::string out;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const models::NsvmModel model = models::load(fs::path(a.model));
  const data::Dataset d = data::load_csv(a.data);
  const models::Metrics m = models::evaluate(model, d);
  json doc = models::to_json(m);
  doc["model_crc32"] = file_crc32(a.model);
  if (!a.out.empty()) write_text(a.out, doc.dump(2) + "\n");
  out << "accuracy " << m.accuracy << '\n';
  return kOk;
}

struct DiagnoseArgs {
  std::string model;
  std::string data;
  long long sample = 200;
  std::uint64_t seed = 1;
  std::string out;
};

int cmd_diagnose(const DiagnoseArgs& a, std::ostream& out) {
  const models::NsvmModel model = models::load(fs::path(a.model));
  const data::Dataset d = data::load_csv(a.data);
  require(a.sample >= 2, ErrorCode::invalid_argument, "--sample must be >= 2");
  const std::size_t k = std::min(static_cast<std::size_t>(a.sample), d.size());
  require(k >= 2, ErrorCode::invalid_argument, "diagnostics need at least two samples");
  Rng rng(a.seed);
  std::vector<std::size_t> idx = rng.sample_without_replacement(d.size(), k);
  std::sort(idx.begin(), idx.end());
  const data::Dataset sub = d.subset(idx);
  require(sub.dim() == model.input_dim(), ErrorCode::dimension_mismatch, "data dimension does not match the model");
  const nn::Network net(model.net);
  const Matrix features = net.forward(model.theta, sub.inputs, nn::Mode::infer, nullptr);
  const Matrix g = kernels::gram(model.kernel, features);
  const kernels::GramDiagnostics diag = kernels::diagnose(g, sub.labels);
  const json doc = {{"m", k},
                    {"entropy", diag.entropy},
                    {"alignment", diag.alignment},
                    {"distance_to_identity", diag.distance_to_identity},
                    {"distance_to_ones", diag.distance_to_ones}};
  if (!a.out.empty()) write_text(a.out, doc.dump(2) + "\n");
  out << doc.dump() << '\n';
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Neural support vector machine training and evaluation"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Generate a synthetic dataset as CSV");
  g->add_option("kind", gen.kind, "ringnorm or images")->check(CLI::IsMember({"ringnorm", "images"}));
  g->add_option("--n", gen.n, "Number of samples");
  g->add_option("--seed", gen.seed, "Random seed");
  g->add_option("--noise", gen.noise, "Pixel noise for images");
  g->add_option("--out", gen.out, "Output CSV path")->required();

  TrainArgs train;
  std::uint64_t seed = 0;
  std::size_t steps = 0;
  double lr = 0.0;
  std::string out_dir;
  auto* t = app.add_subcommand("train", "Train a model from a JSON config");
  t->add_option("--config", train.config, "Config file")->required();
  auto* seed_opt = t->add_option("--seed", seed, "Training seed (overrides config)");
  auto* steps_opt = t->add_option("--steps", steps, "Step count (overrides config)");
  auto* lr_opt = t->add_option("--lr", lr, "Learning rate (overrides config)");
  auto* dir_opt = t->add_option("--out-dir", out_dir, "Output directory (overrides config)");

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "Evaluate a model on a CSV dataset");
  e->add_option("--model", eval.model, "Model file")->required();
  e->add_option("--data", eval.data, "CSV dataset")->required();
  e->add_option("--out", eval.out, "Metrics output path");

  DiagnoseArgs diag;
  auto* d = app.add_subcommand("diagnose", "Gram matrix diagnostics at the model's parameters");
  d->add_option("--model", diag.model, "Model file")->required();
  d->add_option("--data", diag.data, "CSV dataset")->required();
  d->add_option("--sample", diag.sample, "Subsample size");
  d->add_option("--seed", diag.seed, "Subsample seed");
  d->add_option("--out", diag.out, "Diagnostics output path");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& pe) {
    const int code = app.exit(pe, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*seed_opt) train.seed = seed;
    if (*steps_opt) train.steps = steps;
    if (*lr_opt) train.learning_rate = lr;
    if (*dir_opt) train.out_dir = out_dir;
    if (*g) return cmd_gen(gen, out);
    if (*t) return cmd_train(train, out);
    if (*e) return cmd_eval(eval, out);
    return cmd_diagnose(diag, out);
  } catch (const Error& ex) {
    err << "error: " << ex.what() << '\n';
    return ex.code() == ErrorCode::non_finite ? kNumeric : kUsage;
  } catch (const fs::filesystem_error& ex) {
    err << "error: " << ex.what() << '\n';
    return kUsage;
  }
}

}  // namespace nsvm::cli
