#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "gpsysid/gp.hpp"

namespace gpsysid {

/// One sample of an input/output series. `input` is empty for output-only
/// series.
struct SignalRecord {
  long index = 0;
  std::optional<double> input;
  double output = 0.0;
};

/// Builds contiguous records from parallel sequences; pass an empty `inputs`
/// for an output-only series.
std::vector<SignalRecord> make_records(std::span<const double> inputs,
                                       std::span<const double> outputs);

/// Output-lag count n and input-lag count m.
struct LagSpec {
  int n = 0;
  int m = 1;

  int max_lag() const { return n > m ? n : m; }
  int regressor_dim() const { return n + m; }
  bool is_nfir() const { return n == 0 && m >= 1; }
  /// Throws InvalidArgument for negative lags or n + m = 0.
  void validate() const;
};

/// Regressor layout stored with every model: y_{k-1..k-n} then u_{k-1..k-m}.
inline constexpr std::string_view kLagInputOrder = "y_newest_first,u_newest_first";

/// Affine z-scoring applied to u and y before embedding.
struct Normalization {
  bool enabled = false;
  double input_mean = 0.0;
  double input_scale = 1.0;
  double output_mean = 0.0;
  double output_scale = 1.0;

  static Normalization fit(std::span<const SignalRecord> records);
  double input(double u) const { return enabled ? (u - input_mean) / input_scale : u; }
  double output(double y) const { return enabled ? (y - output_mean) / output_scale : y; }
  double output_back(double y) const { return enabled ? y * output_scale + output_mean : y; }
  double variance_back(double v) const { return enabled ? v * output_scale * output_scale : v; }
};

/// One regression row per k in [max(n,m), N): target y_k, regressor in
/// kLagInputOrder. Throws SequenceTooShort when N <= max(n, m) and
/// MissingInput when m > 0 but some record has no input.
Dataset embed(std::span<const SignalRecord> records, const LagSpec& spec);

class LagModel {
 public:
  LagModel(LagSpec spec, TrainedGP gp, Normalization normalization = {});

  const LagSpec& spec() const { return spec_; }
  const TrainedGP& gp() const { return gp_; }
  const Normalization& normalization() const { return normalization_; }
  std::string_view input_order() const { return kLagInputOrder; }
  /// σ_n² in output units.
  double noise_variance() const { return normalization_.variance_back(gp_.noise_variance()); }

 private:
  LagSpec spec_;
  TrainedGP gp_;
  Normalization normalization_;
};

struct LagFitOptions {
  KernelFamily family = KernelFamily::SquaredExponential;
  OptimizerConfig optimizer{};
  /// In output units; translated when normalization is on.
  MeanFunction mean{};
  bool normalize = false;
  std::optional<HyperVector> init;
  bool optimize = true;
};

LagModel fit_lag_model(std::span<const SignalRecord> records, const LagSpec& spec,
                       const LagFitOptions& options = {});

struct LagFit {
  LagModel model;
  /// Empty when options.optimize is false.
  std::optional<OptimizeResult> optimization;
};

/// fit_lag_model plus the optimizer outcome.
LagFit fit_lag_model_report(std::span<const SignalRecord> records, const LagSpec& spec,
                            const LagFitOptions& options = {});

struct StepPrediction {
  double mean = 0.0;
  /// Latent-function variance; add model.noise_variance() for the
  /// observation predictive.
  double variance = 0.0;
};

/// Chronological histories (oldest first, newest last).
struct LagHistory {
  std::vector<double> outputs;
  std::vector<double> inputs;
};

/// Throws InsufficientHistory when fewer than n outputs or m inputs are given.
StepPrediction predict_one_step(const LagModel& model, const LagHistory& history);

/// Free-run simulation feeding posterior means back as past outputs.
/// The first simulated index is k0 = max(n, m); `init_outputs` holds
/// y_{k0-n..k0-1} (only the last n are used), `inputs` holds u_0, u_1, ...
/// and must cover u_{k0+horizon-2} when m > 0. The returned variances are
/// the GP's conditional variances at the propagated regressors and ignore
/// the uncertainty of fed-back outputs, so they underestimate the true
/// free-run spread.
std::vector<StepPrediction> simulate_noe(const LagModel& model, std::span<const double> inputs,
                                         std::span<const double> init_outputs, int horizon);

enum class EvalMode { OneStep, FreeRun };

struct Metrics {
  double rmse = 0.0;
  double mae = 0.0;
  /// Fraction of targets inside mean ± 1.96·√(variance + σ_n²).
  double coverage95 = 0.0;
  /// Average Gaussian negative log predictive density per step.
  double mean_nll = 0.0;
  long count = 0;
};

/// Metrics from parallel target/mean/variance sequences (variance already
/// including observation noise).
Metrics score_predictions(std::span<const double> targets, std::span<const double> means,
                          std::span<const double> variances);

/// Predictions for k = max(n,m)..N-1: one-step from measured history, or
/// free-run seeded with the first max(n,m) measured outputs. Variances are
/// latent (add model.noise_variance() for the observation predictive).
std::vector<StepPrediction> predict_series(const LagModel& model,
                                           std::span<const SignalRecord> records, EvalMode mode);

Metrics evaluate(const LagModel& model, std::span<const SignalRecord> records, EvalMode mode);

}  // namespace gpsysid
