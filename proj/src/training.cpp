#include "nsvm/training.hpp"

#include <algorithm>
#include <cmath>

#include "nsvm/error.hpp"

namespace nsvm::training {

namespace {

using Clock = std::chrono::steady_clock;

Matrix gather(const PointsRef& inputs, std::span<const std::size_t> idx) {
  Matrix out(inputs.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t c = 0; c < idx.size(); ++c)
    out.col(static_cast<Eigen::Index>(c)) = inputs.col(static_cast<Eigen::Index>(idx[c]));
  return out;
}

std::vector<double> support_weights(std::span<const std::size_t> idx, std::span<const double> alphas,
                                    std::span<const int> labels) {
  std::vector<double> w(idx.size());
  for (std::size_t c = 0; c < idx.size(); ++c) w[c] = alphas[idx[c]] * labels[idx[c]];
  return w;
}

// Re-throws numeric failures with the step at which they happened.
template <typename F>
void at_step(std::size_t t, F&& body) {
  try {
    body();
  } catch (const Error& e) {
    if (e.code() != ErrorCode::non_finite) throw;
    throw Error(ErrorCode::non_finite, "step " + std::to_string(t) + ": " + e.what());
  }
}

double checked_step(MomentumSgd& opt, std::vector<double>& theta, const objectives::ThetaObjective& obj, Rng masks) {
  const nn::ValueAndGrad vg = obj.value_and_grad(theta, masks);
  require(std::isfinite(vg.value), ErrorCode::non_finite, "theta objective is not finite");
  opt.step(theta, vg.grad);
  return vg.value;
}

nn::NetworkSpec identity_net(std::size_t dim) {
  nn::NetworkSpec spec;
  spec.input = nn::Shape{dim, 1, 1};
  return spec;
}

// Expansion model over the nonzero coefficients; `features` holds F_Theta(x_j) for every j.
models::NsvmModel expansion_model(const TrainConfig& cfg, const nn::NetworkSpec& net, std::vector<double> theta,
                                  std::span<const double> alphas, std::span<const int> labels,
                                  const Matrix& features, std::size_t steps, double lambda) {
  models::NsvmModel model;
  model.variant = models::Variant::expansion;
  model.kernel = cfg.kernel;
  model.net = net;
  model.theta = std::move(theta);
  model.lambda = lambda;
  model.steps = steps;
  const std::vector<std::size_t> idx = objectives::support(alphas);
  model.z = gather(features, idx);
  for (std::size_t j : idx) {
    model.alphas.push_back(alphas[j]);
    model.labels.push_back(labels[j]);
  }
  return model;
}

std::vector<double> final_decisions(const kernels::KernelSpec& kernel, const Matrix& features,
                                    std::span<const double> alphas, std::span<const int> labels, double lambda,
                                    std::size_t steps) {
  const std::vector<std::size_t> idx = objectives::support(alphas);
  const Matrix support = gather(features, idx);
  const std::vector<double> weights = support_weights(idx, alphas, labels);
  std::vector<double> out(static_cast<std::size_t>(features.cols()));
  for (Eigen::Index j = 0; j < features.cols(); ++j)
    out[static_cast<std::size_t>(j)] = objectives::pegasos_scale(
        kernels::weighted_sum(kernel, support, weights, column(features, j)), lambda, steps + 1);
  return out;
}

std::size_t count_nonzero(std::span<const double> alphas) {
  return static_cast<std::size_t>(std::count_if(alphas.begin(), alphas.end(), [](double a) { return a != 0.0; }));
}

struct PegasosResult {
  std::vector<double> alphas;
  std::vector<StepRecord> log;
};

PegasosResult pegasos(const PointsRef& inputs, std::span<const int> labels, const kernels::KernelSpec& kernel,
                      std::size_t steps, double lambda, Rng& sampling, bool keep_log) {
  const auto m = static_cast<std::size_t>(inputs.cols());
  PegasosResult r;
  r.alphas.assign(m, 0.0);
  const std::size_t first = sampling.uniform_index(m);
  r.alphas[first] = 1.0;
  if (keep_log) r.log.push_back({1, labels[first], 0.0, Branch::init, 0, std::nullopt});
  std::vector<std::size_t> idx{first};
  for (std::size_t t = 2; t <= steps; ++t) {
    const std::size_t i = sampling.uniform_index(m);
    const Matrix support = gather(inputs, idx);
    const std::vector<double> weights = support_weights(idx, r.alphas, labels);
    const double g = objectives::pegasos_scale(
        kernels::weighted_sum(kernel, support, weights, column(inputs, static_cast<Eigen::Index>(i))), lambda, t);
    const bool violated = labels[i] * g < 1.0;
    if (violated) {
      if (r.alphas[i] == 0.0) idx.insert(std::upper_bound(idx.begin(), idx.end(), i), i);
      r.alphas[i] += 1.0;
    }
    if (keep_log)
      r.log.push_back({t, labels[i], g, violated ? Branch::violation : Branch::satisfied, violated ? 1u : 0u,
                       std::nullopt});
  }
  return r;
}

void check_dataset(const data::Dataset& train) {
  train.validate();
  require(train.size() >= 2, ErrorCode::invalid_argument, "training needs at least two samples");
  require(train.has_both_classes(), ErrorCode::invalid_argument, "training data must contain both labels");
}

}  // namespace

std::string to_string(Branch b) {
  switch (b) {
    case Branch::init: return "init";
    case Branch::violation: return "violation";
    case Branch::satisfied: return "satisfied";
    case Branch::batch: return "batch";
  }
  return "unknown";
}

void TrainConfig::validate(const data::Dataset& train) const {
  require(algo >= 0 && algo <= 4, ErrorCode::invalid_argument, "algo must be 0, 1, 2, 3 or 4");
  require(algo == 4 || steps >= 1, ErrorCode::invalid_argument, "steps must be >= 1");
  require(lambda > 0.0 && std::isfinite(lambda), ErrorCode::invalid_argument, "lambda must be positive");
  require(mu > 0.0 && std::isfinite(mu), ErrorCode::invalid_argument, "mu must be positive");
  kernel.validate();
  optimizer.validate();
  check_dataset(train);
  if (algo != 0) {
    const nn::Network network(net);
    require(network.input_dim() == train.dim(), ErrorCode::dimension_mismatch,
            "network input " + std::to_string(network.input_dim()) + " does not match data dimension " +
                std::to_string(train.dim()));
  }
  if (algo == 3 || algo == 4) {
    require(batch_size >= 2, ErrorCode::invalid_argument, "batch_size must be >= 2");
    require(batch_size <= train.size(), ErrorCode::invalid_argument,
            "batch_size " + std::to_string(batch_size) + " exceeds the " + std::to_string(train.size()) +
                " training samples");
  }
  if (algo == 4) {
    (void)loss_from_name(loss);
    require(fitter.name == "pegasos", ErrorCode::invalid_argument, "unknown fitter '" + fitter.name + "'");
    require(fitter.steps >= 1, ErrorCode::invalid_argument, "fitter steps must be >= 1");
    require(fitter.lambda > 0.0 && std::isfinite(fitter.lambda), ErrorCode::invalid_argument,
            "fitter lambda must be positive");
  }
}

objectives::LossSpec loss_from_name(const std::string& name) {
  if (name == "squared") return objectives::LossSpec::squared();
  throw Error(ErrorCode::invalid_argument, "unknown loss '" + name + "'");
}

SvmFitter pegasos_fitter(std::size_t steps, double lambda) {
  return [steps, lambda](const data::Dataset& features, const kernels::KernelSpec& kernel, Rng& sampling) {
    check_dataset(features);
    const PegasosResult r = pegasos(features.inputs, features.labels, kernel, steps, lambda, sampling, false);
    TrainConfig cfg;
    cfg.kernel = kernel;
    return expansion_model(cfg, identity_net(features.dim()), {}, r.alphas, features.labels, features.inputs, steps,
                           lambda);
  };
}

SvmFitter make_fitter(const FitterSpec& spec) {
  require(spec.name == "pegasos", ErrorCode::invalid_argument, "unknown fitter '" + spec.name + "'");
  return pegasos_fitter(spec.steps, spec.lambda);
}

TrainOutcome train_alg0(const data::Dataset& train, const TrainConfig& cfg) {
  const auto start = Clock::now();
  cfg.validate(train);
  TrainingStreams streams = make_streams(cfg.seed);
  PegasosResult r = pegasos(train.inputs, train.labels, cfg.kernel, cfg.steps, cfg.lambda, streams.sampling, true);
  TrainOutcome out;
  out.model = expansion_model(cfg, identity_net(train.dim()), {}, r.alphas, train.labels, train.inputs, cfg.steps,
                              cfg.lambda);
  out.report.log = std::move(r.log);
  out.report.nonzero_alphas = count_nonzero(r.alphas);
  out.alphas = std::move(r.alphas);
  out.report.duration = Clock::now() - start;
  return out;
}

TrainOutcome train_alg1(const data::Dataset& train, const TrainConfig& cfg) {
  const auto start = Clock::now();
  cfg.validate(train);
  TrainingStreams streams = make_streams(cfg.seed);
  const nn::Network net(cfg.net);
  std::vector<double> theta = nn::init_params(net, streams.init);
  MomentumSgd opt(cfg.optimizer, theta.size());
  const std::size_t m = train.size();
  const std::size_t n = net.output_dim();

  objectives::ExpansionState state(n, cfg.lambda);
  Matrix z(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cfg.steps));
  std::vector<double> alphas(cfg.steps, 0.0);
  std::vector<int> labels(cfg.steps, 0);
  TrainOutcome out;

  for (std::size_t t = 1; t <= cfg.steps; ++t) {
    const std::size_t i = streams.sampling.uniform_index(m);
    const int y = train.labels[i];
    const auto col = static_cast<Eigen::Index>(t - 1);
    const auto x = column(train.inputs, static_cast<Eigen::Index>(i));
    labels[t - 1] = y;
    at_step(t, [&] {
      // z_t is a train-mode evaluation; the theta step below reuses its dropout masks.
      const Rng masks = streams.dropout.split();
      Rng draw = masks;
      z.col(col) = net.forward(theta, train.inputs.col(static_cast<Eigen::Index>(i)), nn::Mode::train, &draw);
      const auto z_t = column(z, col);
      if (t == 1) {
        alphas[0] = 1.0;
        state.append(1.0, y, z_t);
        out.report.log.push_back({1, y, 0.0, Branch::init, 0, std::nullopt});
        return;
      }
      state.t = t;
      const double g = objectives::margin_alg1(state, z_t, cfg.kernel);
      StepRecord rec{t, y, g, Branch::satisfied, 0, std::nullopt};
      if (y * g < 1.0) {
        const auto obj = objectives::theta_objective_alg1(state, cfg.kernel, net, x, y);
        rec.objective = checked_step(opt, theta, obj, masks);
        rec.branch = Branch::violation;
        rec.violations = 1;
        alphas[t - 1] = 1.0;
        state.append(1.0, y, z_t);
      }
      out.report.log.push_back(rec);
    });
  }

  models::NsvmModel& model = out.model;
  model.variant = models::Variant::alg1;
  model.kernel = cfg.kernel;
  model.net = net.spec();
  model.theta = theta;
  model.alphas = alphas;
  model.labels = labels;
  model.z = std::move(z);
  model.lambda = cfg.lambda;
  model.steps = cfg.steps;
  out.report.nonzero_alphas = count_nonzero(alphas);
  out.alphas = std::move(alphas);
  out.report.duration = Clock::now() - start;
  return out;
}

TrainOutcome train_alg2(const data::Dataset& train, const TrainConfig& cfg) {
  const auto start = Clock::now();
  cfg.validate(train);
  TrainingStreams streams = make_streams(cfg.seed);
  const nn::Network net(cfg.net);
  std::vector<double> theta = nn::init_params(net, streams.init);
  MomentumSgd opt(cfg.optimizer, theta.size());
  const std::size_t m = train.size();
  std::vector<double> alphas(m, 0.0);
  TrainOutcome out;

  const std::size_t first = streams.sampling.uniform_index(m);
  alphas[first] = 1.0;
  out.report.log.push_back({1, train.labels[first], 0.0, Branch::init, 0, std::nullopt});

  for (std::size_t t = 2; t <= cfg.steps; ++t) {
    const std::size_t i = streams.sampling.uniform_index(m);
    const int y = train.labels[i];
    at_step(t, [&] {
      const double g =
          objectives::margin_alg2(alphas, train.labels, train.inputs, theta, cfg.kernel, net, i, cfg.lambda, t);
      StepRecord rec{t, y, g, Branch::satisfied, 0, std::nullopt};
      if (y * g < 1.0) {
        // The objective uses alpha^(t), so it is built before the increment.
        const auto obj =
            objectives::theta_objective_alg2(alphas, train.labels, train.inputs, cfg.kernel, net, i, cfg.lambda, t);
        alphas[i] += 1.0;
        rec.objective = checked_step(opt, theta, obj, streams.dropout.split());
        rec.branch = Branch::violation;
        rec.violations = 1;
      }
      out.report.log.push_back(rec);
    });
  }

  Matrix features;
  at_step(cfg.steps, [&] { features = net.forward(theta, train.inputs, nn::Mode::infer, nullptr); });
  if (cfg.record_final_decisions)
    out.final_decisions = final_decisions(cfg.kernel, features, alphas, train.labels, cfg.lambda, cfg.steps);
  out.model = expansion_model(cfg, net.spec(), theta, alphas, train.labels, features, cfg.steps, cfg.lambda);
  out.report.nonzero_alphas = count_nonzero(alphas);
  out.alphas = std::move(alphas);
  out.report.duration = Clock::now() - start;
  return out;
}

TrainOutcome train_alg3(const data::Dataset& train, const TrainConfig& cfg) {
  const auto start = Clock::now();
  cfg.validate(train);
  TrainingStreams streams = make_streams(cfg.seed);
  const nn::Network net(cfg.net);
  std::vector<double> theta = nn::init_params(net, streams.init);
  MomentumSgd opt(cfg.optimizer, theta.size());
  const std::size_t m = train.size();
  const std::size_t k = cfg.batch_size;
  const double inc = 1.0 / static_cast<double>(k);
  std::vector<double> alphas(m, 0.0);
  TrainOutcome out;

  for (std::size_t j : streams.sampling.sample_without_replacement(m, k)) alphas[j] = inc;
  out.report.log.push_back({1, 0, 0.0, Branch::init, 0, std::nullopt});

  std::vector<int> batch_labels(k);
  std::vector<double> batch_alphas(k);
  for (std::size_t t = 2; t <= cfg.steps; ++t) {
    const std::vector<std::size_t> batch = streams.sampling.sample_without_replacement(m, k);
    at_step(t, [&] {
      const std::vector<std::size_t> idx = objectives::support(alphas);
      const std::vector<double> weights = support_weights(idx, alphas, train.labels);
      const Matrix support = net.forward(theta, gather(train.inputs, idx), nn::Mode::infer, nullptr);
      const Matrix batch_inputs = gather(train.inputs, batch);
      const Matrix queries = net.forward(theta, batch_inputs, nn::Mode::infer, nullptr);

      // All margins use alpha^(t); increments are applied afterwards.
      std::vector<bool> violated(k);
      double mean_margin = 0.0;
      std::size_t violations = 0;
      for (std::size_t b = 0; b < k; ++b) {
        const double g = objectives::pegasos_scale(
            kernels::weighted_sum(cfg.kernel, support, weights, column(queries, static_cast<Eigen::Index>(b))),
            cfg.lambda, t);
        const int y = train.labels[batch[b]];
        mean_margin += y * g;
        violated[b] = y * g < 1.0;
        violations += violated[b] ? 1 : 0;
      }
      for (std::size_t b = 0; b < k; ++b) {
        if (violated[b]) alphas[batch[b]] += inc;
        batch_alphas[b] = alphas[batch[b]];
        batch_labels[b] = train.labels[batch[b]];
      }
      const auto obj = objectives::theta_objective_alg3(batch_alphas, batch_labels, batch_inputs, cfg.kernel, net,
                                                        cfg.mu);
      StepRecord rec{t, 0, mean_margin / static_cast<double>(k), Branch::batch, violations, std::nullopt};
      rec.objective = checked_step(opt, theta, obj, streams.dropout.split());
      out.report.log.push_back(rec);
    });
  }

  Matrix features;
  at_step(cfg.steps, [&] { features = net.forward(theta, train.inputs, nn::Mode::infer, nullptr); });
  if (cfg.record_final_decisions)
    out.final_decisions = final_decisions(cfg.kernel, features, alphas, train.labels, cfg.lambda, cfg.steps);
  out.model = expansion_model(cfg, net.spec(), theta, alphas, train.labels, features, cfg.steps, cfg.lambda);
  out.report.nonzero_alphas = count_nonzero(alphas);
  out.alphas = std::move(alphas);
  out.report.duration = Clock::now() - start;
  return out;
}

TrainOutcome train_alg4(const data::Dataset& train, const TrainConfig& cfg, const SvmFitter& fitter) {
  const auto start = Clock::now();
  cfg.validate(train);
  TrainingStreams streams = make_streams(cfg.seed);
  const nn::Network net(cfg.net);
  std::vector<double> theta = nn::init_params(net, streams.init);
  MomentumSgd opt(cfg.optimizer, theta.size());
  const objectives::LossSpec loss = loss_from_name(cfg.loss);
  const std::size_t m = train.size();
  const std::size_t k = cfg.batch_size;
  TrainOutcome out;

  std::vector<int> batch_labels(k);
  for (std::size_t t = 1; t <= cfg.steps; ++t) {
    const std::vector<std::size_t> batch = streams.sampling.sample_without_replacement(m, k);
    at_step(t, [&] {
      for (std::size_t b = 0; b < k; ++b) batch_labels[b] = train.labels[batch[b]];
      const auto obj =
          objectives::theta_objective_alg4(batch_labels, gather(train.inputs, batch), cfg.kernel, net, loss);
      StepRecord rec{t, 0, 0.0, Branch::batch, 0, std::nullopt};
      rec.objective = checked_step(opt, theta, obj, streams.dropout.split());
      out.report.log.push_back(rec);
    });
  }

  data::Dataset features;
  at_step(cfg.steps, [&] { features.inputs = net.forward(theta, train.inputs, nn::Mode::infer, nullptr); });
  features.labels = train.labels;
  auto inner = std::make_shared<models::NsvmModel>(fitter(features, cfg.kernel, streams.sampling));
  inner->variant = models::Variant::expansion;

  models::NsvmModel& model = out.model;
  model.variant = models::Variant::pipeline;
  model.kernel = cfg.kernel;
  model.net = net.spec();
  model.theta = theta;
  model.lambda = inner->lambda;
  model.steps = cfg.steps;
  model.inner = inner;
  out.alphas = inner->alphas;
  out.report.nonzero_alphas = count_nonzero(inner->alphas);
  out.report.duration = Clock::now() - start;
  return out;
}

TrainOutcome train_alg4(const data::Dataset& train, const TrainConfig& cfg) {
  return train_alg4(train, cfg, make_fitter(cfg.fitter));
}

TrainOutcome train(const data::Dataset& train, const TrainConfig& cfg) {
  switch (cfg.algo) {
    case 0: return train_alg0(train, cfg);
    case 1: return train_alg1(train, cfg);
    case 2: return train_alg2(train, cfg);
    case 3: return train_alg3(train, cfg);
    case 4: return train_alg4(train, cfg);
    default: throw Error(ErrorCode::invalid_argument, "algo must be 0, 1, 2, 3 or 4");
  }
}

}  // namespace nsvm::training
