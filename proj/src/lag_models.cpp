#include "gpsysid/lag_models.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "gpsysid/error.hpp"

namespace gpsysid {

namespace {

constexpr double kZ95 = 1.96;

void validate_records(std::span<const SignalRecord> records) {
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.index != records.front().index + static_cast<long>(i)) {
      throw Error(ErrorCode::InvalidArgument,
                  "record indices must be contiguous and increasing (at position " +
                      std::to_string(i) + ")");
    }
    if (!std::isfinite(r.output) || (r.input && !std::isfinite(*r.input))) {
      throw Error(ErrorCode::InvalidArgument, "record " + std::to_string(r.index) +
                                                  " has a non-finite value");
    }
  }
}

std::vector<SignalRecord> normalized(std::span<const SignalRecord> records,
                                     const Normalization& norm) {
  std::vector<SignalRecord> out(records.begin(), records.end());
  if (!norm.enabled) return out;
  for (auto& r : out) {
    r.output = norm.output(r.output);
    if (r.input) r.input = norm.input(*r.input);
  }
  return out;
}

double sample_std(std::span<const double> v, double mean) {
  if (v.size() < 2) return 0.0;
  double acc = 0.0;
  for (double x : v) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

// Regressor from normalized, chronological histories.
Matrix regressor(const LagSpec& spec, std::span<const double> outputs,
                 std::span<const double> inputs) {
  Matrix z(1, spec.regressor_dim());
  for (int i = 0; i < spec.n; ++i) z(0, i) = outputs[outputs.size() - 1 - i];
  for (int j = 0; j < spec.m; ++j) z(0, spec.n + j) = inputs[inputs.size() - 1 - j];
  return z;
}

StepPrediction predict_regressor(const LagModel& model, const Matrix& z) {
  const Posterior post = model.gp().predict(z);
  const auto& norm = model.normalization();
  return {norm.output_back(post.mean[0]), norm.variance_back(post.variance()[0])};
}

}  // namespace

std::vector<SignalRecord> make_records(std::span<const double> inputs,
                                       std::span<const double> outputs) {
  if (!inputs.empty() && inputs.size() != outputs.size()) {
    throw Error(ErrorCode::DimensionMismatch, "input and output sequences differ in length");
  }
  std::vector<SignalRecord> records(outputs.size());
  for (std::size_t k = 0; k < outputs.size(); ++k) {
    records[k].index = static_cast<long>(k);
    records[k].output = outputs[k];
    if (!inputs.empty()) records[k].input = inputs[k];
  }
  return records;
}

void LagSpec::validate() const {
  if (n < 0 || m < 0) throw Error(ErrorCode::InvalidArgument, "lag counts must be nonnegative");
  if (n + m < 1) throw Error(ErrorCode::InvalidArgument, "lag spec needs n + m >= 1");
}

Normalization Normalization::fit(std::span<const SignalRecord> records) {
  Normalization norm;
  norm.enabled = true;
  std::vector<double> u;
  std::vector<double> y;
  for (const auto& r : records) {
    y.push_back(r.output);
    if (r.input) u.push_back(*r.input);
  }
  auto mean_of = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
  };
  norm.output_mean = mean_of(y);
  norm.input_mean = mean_of(u);
  norm.output_scale = sample_std(y, norm.output_mean);
  norm.input_scale = sample_std(u, norm.input_mean);
  if (!(norm.output_scale > 0.0)) norm.output_scale = 1.0;
  if (!(norm.input_scale > 0.0)) norm.input_scale = 1.0;
  return norm;
}

Dataset embed(std::span<const SignalRecord> records, const LagSpec& spec) {
  spec.validate();
  validate_records(records);
  const auto total = static_cast<long>(records.size());
  const long start = spec.max_lag();
  if (total <= start) {
    throw Error(ErrorCode::SequenceTooShort, "sequence of length " + std::to_string(total) +
                                                 " needs more than " + std::to_string(start) +
                                                 " samples");
  }
  if (spec.m > 0) {
    for (const auto& r : records) {
      if (!r.input) {
        throw Error(ErrorCode::MissingInput,
                    "record " + std::to_string(r.index) + " has no input but m > 0");
      }
    }
  }
  Dataset ds;
  ds.inputs.resize(total - start, spec.regressor_dim());
  ds.outputs.resize(total - start);
  for (long k = start; k < total; ++k) {
    const long row = k - start;
    for (int i = 0; i < spec.n; ++i) ds.inputs(row, i) = records[k - 1 - i].output;
    for (int j = 0; j < spec.m; ++j) ds.inputs(row, spec.n + j) = *records[k - 1 - j].input;
    ds.outputs[row] = records[k].output;
  }
  return ds;
}

LagModel::LagModel(LagSpec spec, TrainedGP gp, Normalization normalization)
    : spec_(spec), gp_(std::move(gp)), normalization_(normalization) {
  spec_.validate();
  if (gp_.input_dim() != spec_.regressor_dim()) {
    throw Error(ErrorCode::DimensionMismatch, "GP input dimension " +
                                                  std::to_string(gp_.input_dim()) +
                                                  " does not match n + m = " +
                                                  std::to_string(spec_.regressor_dim()));
  }
}

LagModel fit_lag_model(std::span<const SignalRecord> records, const LagSpec& spec,
                       const LagFitOptions& options) {
  return fit_lag_model_report(records, spec, options).model;
}

LagFit fit_lag_model_report(std::span<const SignalRecord> records, const LagSpec& spec,
                            const LagFitOptions& options) {
  validate_records(records);
  Normalization norm;
  if (options.normalize) norm = Normalization::fit(records);
  const auto working = normalized(records, norm);
  Dataset ds = embed(working, spec);

  MeanFunction mean = options.mean;
  if (mean.kind == MeanFunction::Kind::Constant) mean.constant = norm.output(mean.constant);

  const HyperVector init = options.init ? *options.init : default_init(ds, mean);
  HyperVector hyper = init;
  std::optional<OptimizeResult> opt;
  if (options.optimize) {
    opt = optimize_hyper(ds, options.family, init, options.optimizer, mean);
    hyper = opt->hyper;
  }
  ds.noise_variance = hyper.noise_variance();
  return LagFit{LagModel(spec, TrainedGP::fit(ds, hyper.kernel(options.family), mean), norm),
                std::move(opt)};
}

StepPrediction predict_one_step(const LagModel& model, const LagHistory& history) {
  const auto& spec = model.spec();
  if (history.outputs.size() < static_cast<std::size_t>(spec.n) ||
      history.inputs.size() < static_cast<std::size_t>(spec.m)) {
    throw Error(ErrorCode::InsufficientHistory,
                "need " + std::to_string(spec.n) + " outputs and " + std::to_string(spec.m) +
                    " inputs, got " + std::to_string(history.outputs.size()) + " and " +
                    std::to_string(history.inputs.size()));
  }
  const auto& norm = model.normalization();
  std::vector<double> y(history.outputs.end() - spec.n, history.outputs.end());
  std::vector<double> u(history.inputs.end() - spec.m, history.inputs.end());
  for (double& v : y) v = norm.output(v);
  for (double& v : u) v = norm.input(v);
  return predict_regressor(model, regressor(spec, y, u));
}

std::vector<StepPrediction> simulate_noe(const LagModel& model, std::span<const double> inputs,
                                         std::span<const double> init_outputs, int horizon) {
  const auto& spec = model.spec();
  if (horizon < 1) throw Error(ErrorCode::InvalidArgument, "horizon must be >= 1");
  const long k0 = spec.max_lag();
  if (init_outputs.size() < static_cast<std::size_t>(spec.n)) {
    throw Error(ErrorCode::InsufficientHistory, "need " + std::to_string(spec.n) +
                                                    " initial outputs, got " +
                                                    std::to_string(init_outputs.size()));
  }
  if (spec.m > 0 && static_cast<long>(inputs.size()) < k0 + horizon - 1) {
    throw Error(ErrorCode::InsufficientHistory,
                "need " + std::to_string(k0 + horizon - 1) + " inputs for horizon " +
                    std::to_string(horizon) + ", got " + std::to_string(inputs.size()));
  }
  const auto& norm = model.normalization();
  std::vector<double> y;
  for (auto it = init_outputs.end() - spec.n; it != init_outputs.end(); ++it) {
    y.push_back(norm.output(*it));
  }
  std::vector<double> u;
  u.reserve(inputs.size());
  for (double v : inputs) u.push_back(norm.input(v));

  std::vector<StepPrediction> out;
  out.reserve(static_cast<std::size_t>(horizon));
  for (long k = k0; k < k0 + horizon; ++k) {
    const std::span<const double> u_hist(u.data(), spec.m > 0 ? static_cast<std::size_t>(k) : 0);
    const Matrix z = regressor(spec, y, u_hist);
    const Posterior post = model.gp().predict(z);
    out.push_back({norm.output_back(post.mean[0]), norm.variance_back(post.variance()[0])});
    y.push_back(post.mean[0]);
  }
  return out;
}

Metrics score_predictions(std::span<const double> targets, std::span<const double> means,
                          std::span<const double> variances) {
  if (targets.size() != means.size() || targets.size() != variances.size()) {
    throw Error(ErrorCode::DimensionMismatch, "score_predictions: length mismatch");
  }
  Metrics m;
  m.count = static_cast<long>(targets.size());
  if (targets.empty()) return m;
  double sq = 0.0;
  double abs = 0.0;
  double nll = 0.0;
  long covered = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const double e = targets[i] - means[i];
    sq += e * e;
    abs += std::abs(e);
    if (std::abs(e) <= kZ95 * std::sqrt(variances[i])) ++covered;
    nll += 0.5 * std::log(2.0 * std::numbers::pi * variances[i]) + 0.5 * e * e / variances[i];
  }
  const auto n = static_cast<double>(targets.size());
  m.rmse = std::sqrt(sq / n);
  m.mae = abs / n;
  m.coverage95 = static_cast<double>(covered) / n;
  m.mean_nll = nll / n;
  return m;
}

std::vector<StepPrediction> predict_series(const LagModel& model,
                                           std::span<const SignalRecord> records, EvalMode mode) {
  const auto& spec = model.spec();
  const long k0 = spec.max_lag();
  if (static_cast<long>(records.size()) <= k0) {
    throw Error(ErrorCode::SequenceTooShort, "evaluation needs more than " + std::to_string(k0) +
                                                 " records");
  }
  std::vector<StepPrediction> out;
  if (mode == EvalMode::OneStep) {
    const auto& norm = model.normalization();
    const Dataset ds = embed(normalized(records, norm), spec);
    const Posterior post = model.gp().predict(ds.inputs);
    const Vector var = post.variance();
    for (Eigen::Index i = 0; i < ds.size(); ++i) {
      out.push_back({norm.output_back(post.mean[i]), norm.variance_back(var[i])});
    }
    return out;
  }
  validate_records(records);
  std::vector<double> u;
  std::vector<double> y0;
  for (const auto& r : records) {
    if (spec.m > 0 && !r.input) {
      throw Error(ErrorCode::MissingInput, "record " + std::to_string(r.index) + " has no input");
    }
    u.push_back(r.input.value_or(0.0));
  }
  for (long k = 0; k < k0; ++k) y0.push_back(records[static_cast<std::size_t>(k)].output);
  const int horizon = static_cast<int>(records.size()) - static_cast<int>(k0);
  return simulate_noe(model, u, y0, horizon);
}

Metrics evaluate(const LagModel& model, std::span<const SignalRecord> records, EvalMode mode) {
  const auto preds = predict_series(model, records, mode);
  const auto k0 = static_cast<std::size_t>(model.spec().max_lag());
  const double noise = model.noise_variance();
  std::vector<double> targets, means, variances;
  for (std::size_t h = 0; h < preds.size(); ++h) {
    targets.push_back(records[k0 + h].output);
    means.push_back(preds[h].mean);
    variances.push_back(preds[h].variance + noise);
  }
  return score_predictions(targets, means, variances);
}

}  // namespace gpsysid
