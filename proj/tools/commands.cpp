#include "commands.hpp"

#include <cmath>
#include <cstdio>
#include <iostream>
#include <numbers>
#include <sstream>

#include <CLI11.hpp>

#include "gpsysid/error.hpp"
#include "gpsysid/generators.hpp"
#include "gpsysid/gp.hpp"
#include "gpsysid/gpss.hpp"
#include "gpsysid/io.hpp"
#include "gpsysid/lag_models.hpp"
#include "gpsysid/temporal.hpp"
#include "model_file.hpp"

namespace gpsysid::cli {

namespace {

constexpr double kZ95 = 1.96;

const ConfigSchema& schema() {
  static const ConfigSchema s{
      {"model",
       {"kind", "kernel", "magnitude", "lengthscale", "noise_std", "optimize", "mean", "mean_value",
        "normalize"}},
      {"optimizer", {"max_iter", "grad_tol", "restarts", "seed"}},
      {"lags", {"n", "m"}},
      {"basis", {"lower", "upper", "size", "noise_var"}},
      {"filter", {"particles", "measurement", "measurement_noise_var", "initial_mean", "initial_var", "seed"}},
      {"generator",
       {"name", "n", "seed", "noise_std", "t_max", "dt", "kernel", "magnitude", "lengthscale", "a", "b",
        "hold", "process_std", "measurement_std", "input_gain", "x0"}},
  };
  return s;
}

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool quiet = false;
};

struct Io {
  std::ostream& out;
  std::ostream& err;
  const Globals& g;

  void info(const std::string& msg) const {
    if (!g.quiet) err << msg << "\n";
  }
};

Config load_config(const Globals& g, bool required) {
  if (g.config.empty()) {
    if (required) throw Error(ErrorCode::ParseError, "this command needs --config");
    return Config{};
  }
  return Config::load(g.config, schema());
}

void emit(const Io& io, const std::string& content) {
  if (io.g.out.empty()) {
    io.out << content;
  } else {
    write_file_atomic(io.g.out, content);
  }
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string seed_text(std::optional<std::uint64_t> s) { return s ? std::to_string(*s) : "none"; }

// Key=value lines from a flat JSON object, in insertion order.
std::string key_values(const json& obj) {
  std::string out;
  for (const auto& [k, v] : obj.items()) {
    out += k + "=";
    if (v.is_string()) {
      out += v.get<std::string>();
    } else if (v.is_boolean()) {
      out += v.get<bool>() ? "true" : "false";
    } else if (v.is_number_integer() || v.is_number_unsigned()) {
      out += v.dump();
    } else {
      out += format_double(v.get<double>());
    }
    out += "\n";
  }
  return out;
}

Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

// ---------------------------------------------------------------- gen

int cmd_gen(const Io& io, const std::string& generator_flag, std::optional<int> n_flag) {
  const Config cfg = load_config(io.g, false);
  const std::string name = !generator_flag.empty() ? generator_flag : cfg.get_string("generator", "name", "");
  if (name.empty()) throw Error(ErrorCode::ParseError, "gen needs a generator name (--generator or [generator] name)");
  const auto n_cfg = cfg.get_int("generator", "n");
  if (!n_flag && !n_cfg) throw Error(ErrorCode::ParseError, "gen needs N (--n or [generator] n)");
  const long long n = n_flag ? *n_flag : *n_cfg;
  if (n < 0 || n > 100000000) throw Error(ErrorCode::InvalidArgument, "N must be in [0, 1e8]");
  std::optional<std::uint64_t> seed = io.g.seed;
  if (!seed) {
    if (const auto s = cfg.get_int("generator", "seed")) seed = static_cast<std::uint64_t>(*s);
  }
  if (!seed) throw Error(ErrorCode::ParseError, "gen is stochastic: --seed or [generator] seed is required");

  const auto ni = static_cast<int>(n);
  const auto num = [&](const char* key, double fallback) { return cfg.get_double("generator", key, fallback); };
  std::string csv;
  if (name == "sinusoid") {
    const auto d = ni > 0 ? generate_sinusoid(ni, num("noise_std", 0.1), *seed, num("t_max", 2.0 * std::numbers::pi))
                          : SeriesData{};
    csv = to_csv({"t", "y"}, {d.times, d.outputs});
  } else if (name == "linear-arx") {
    LinearArxParams p;
    p.a = num("a", p.a);
    p.b = num("b", p.b);
    p.noise_std = num("noise_std", p.noise_std);
    p.hold = static_cast<int>(cfg.get_int("generator", "hold", p.hold));
    const auto d = ni > 0 ? generate_linear_arx(ni, p, *seed) : SeriesData{};
    csv = to_csv({"t", "u", "y"}, {d.times, d.inputs, d.outputs});
  } else if (name == "logistic-narx") {
    const auto d = ni > 0 ? generate_logistic_narx(ni, num("noise_std", 0.01), *seed) : SeriesData{};
    csv = to_csv({"t", "u", "y"}, {d.times, d.inputs, d.outputs});
  } else if (name == "gp-draw") {
    const Kernel k{kernel_family_or_throw(cfg.get_string("generator", "kernel", "matern32"), "[generator] kernel"),
                   num("magnitude", 1.0), num("lengthscale", 1.0)};
    const auto d = ni > 0 ? generate_gp_draw(ni, k, num("dt", 0.1), num("noise_std", 0.1), *seed) : SeriesData{};
    csv = to_csv({"t", "y"}, {d.times, d.outputs});
  } else if (name == "pendulum") {
    PendulumParams p;
    p.process_std = num("process_std", p.process_std);
    p.measurement_std = num("measurement_std", p.measurement_std);
    p.input_gain = num("input_gain", p.input_gain);
    p.x0 = num("x0", p.x0);
    std::vector<double> k, x;
    StateSeries s;
    if (ni > 0) {
      s = generate_pendulum(ni, p, *seed);
      for (int i = 0; i < ni; ++i) {
        k.push_back(i);
        x.push_back(s.states(i, 0));
      }
    }
    csv = to_csv({"k", "x1", "u", "y"}, {k, x, s.inputs, s.outputs});
  } else {
    throw Error(ErrorCode::UnknownGenerator,
                "unknown generator '" + name + "' (sinusoid|linear-arx|logistic-narx|gp-draw|pendulum)");
  }
  emit(io, csv);
  io.info("gen: wrote " + std::to_string(n) + " rows (" + name + ", seed " + std::to_string(*seed) + ")");
  return 0;
}

// ---------------------------------------------------------------- shared data access

struct SeriesColumns {
  std::vector<double> t;
  std::vector<double> u;
  std::vector<double> y;
};

SeriesColumns series_columns(const CsvTable& t, bool need_u, bool need_y) {
  SeriesColumns c;
  c.t = t.column("t");
  if (need_u || t.has("u")) c.u = t.column("u");
  if (need_y || t.has("y")) c.y = t.column("y");
  return c;
}

Matrix state_matrix(const CsvTable& t, Eigen::Index dx) {
  Matrix x(static_cast<Eigen::Index>(t.rows()), dx);
  for (Eigen::Index j = 0; j < dx; ++j) {
    const auto& col = t.column("x" + std::to_string(j + 1));
    for (std::size_t r = 0; r < col.size(); ++r) x(static_cast<Eigen::Index>(r), j) = col[r];
  }
  return x;
}

Eigen::Index count_state_columns(const CsvTable& t) {
  Eigen::Index d = 0;
  while (t.has("x" + std::to_string(d + 1))) ++d;
  if (d == 0) throw Error(ErrorCode::ParseError, "missing column 'x1'");
  return d;
}

// Rows k = 0..N carry x_k, u_k, y_k: the trajectory takes x_{0:N}, u_{0:N-1}, y_{1:N}.
StateTrajectory trajectory_from(const CsvTable& t, Eigen::Index dx, bool with_u, bool with_y) {
  if (t.rows() < 2) throw Error(ErrorCode::SequenceTooShort, "trajectory needs at least two rows");
  StateTrajectory traj;
  traj.states = state_matrix(t, dx);
  const auto n = static_cast<Eigen::Index>(t.rows()) - 1;
  if (with_u) traj.inputs = to_vector(t.column("u")).head(n);
  if (with_y) traj.outputs = to_vector(t.column("y")).tail(n);
  return traj;
}

MeanFunction mean_from(const Config& cfg) {
  const std::string kind = cfg.get_string("model", "mean", "zero");
  if (kind == "zero") return MeanFunction::zero();
  if (kind == "constant") {
    const auto v = cfg.get_double("model", "mean_value");
    if (!v) throw Error(ErrorCode::ParseError, "[model] mean_value is required with mean = constant");
    return MeanFunction::constant_value(*v);
  }
  throw Error(ErrorCode::ParseError, "[model] mean: expected zero|constant, got '" + kind + "'");
}

OptimizerConfig optimizer_from(const Config& cfg, const Globals& g, bool optimizes,
                               std::optional<std::uint64_t>& seed_used) {
  OptimizerConfig oc;
  oc.max_iter = static_cast<int>(cfg.get_int("optimizer", "max_iter", oc.max_iter));
  oc.grad_tol = cfg.get_double("optimizer", "grad_tol", oc.grad_tol);
  oc.restarts = static_cast<int>(cfg.get_int("optimizer", "restarts", oc.restarts));
  if (oc.max_iter < 0 || oc.restarts < 1 || !(oc.grad_tol > 0.0)) {
    throw Error(ErrorCode::ParseError, "[optimizer]: need max_iter >= 0, restarts >= 1, grad_tol > 0");
  }
  seed_used = g.seed;
  if (!seed_used) {
    if (const auto s = cfg.get_int("optimizer", "seed")) seed_used = static_cast<std::uint64_t>(*s);
  }
  if (optimizes && oc.restarts > 1 && !seed_used) {
    throw Error(ErrorCode::ParseError,
                "[optimizer] restarts > 1 draws random starts: --seed or [optimizer] seed is required");
  }
  oc.seed = seed_used.value_or(0);
  return oc;
}

// Config-supplied starting point; missing entries fall back to the data-driven default.
HyperVector init_from(const Config& cfg, const Dataset& ds, const MeanFunction& mean) {
  HyperVector h = default_init(ds, mean);
  if (const auto v = cfg.get_double("model", "magnitude")) h.values[0] = std::log(*v);
  if (const auto v = cfg.get_double("model", "lengthscale")) h.values[1] = std::log(*v);
  if (const auto v = cfg.get_double("model", "noise_std")) h.values[2] = std::log(*v);
  for (double v : h.values) {
    if (!std::isfinite(v)) {
      throw Error(ErrorCode::ParseError, "[model] magnitude, lengthscale and noise_std must be positive");
    }
  }
  return h;
}

void report_gp(json& r, const std::string& prefix, const TrainedGP& gp, const std::optional<OptimizeResult>& opt) {
  r[prefix + "family"] = std::string(to_string(gp.kernel().family));
  r[prefix + "magnitude"] = gp.kernel().magnitude;
  r[prefix + "lengthscale"] = gp.kernel().lengthscale;
  r[prefix + "noise_variance"] = gp.noise_variance();
  r[prefix + "optimized"] = opt.has_value();
  if (opt) {
    r[prefix + "iterations"] = opt->iterations;
    r[prefix + "converged"] = opt->converged;
    r[prefix + "stop_reason"] = std::string(to_string(opt->stop_reason));
    r[prefix + "grad_inf_norm"] = opt->grad_inf_norm;
  }
  const Dataset ds{gp.train_inputs(), gp.train_outputs(), gp.noise_variance()};
  r[prefix + "nll"] = nll(ds, gp.kernel(), gp.mean_function()).value;
}

FilterSettings filter_from(const Config& cfg, const StateTrajectory& traj) {
  FilterSettings f;
  f.particles = static_cast<int>(cfg.get_int("filter", "particles", f.particles));
  if (f.particles < 2) throw Error(ErrorCode::ParseError, "[filter] particles must be >= 2");
  if (const auto s = cfg.get_int("filter", "seed")) f.seed = static_cast<std::uint64_t>(*s);
  const Eigen::Index dx = traj.state_dim();
  f.initial_mean = traj.states.row(0).transpose();
  f.initial_var = Vector::Ones(dx);
  if (const auto m = cfg.get_list("filter", "initial_mean")) f.initial_mean = to_vector(*m);
  if (const auto v = cfg.get_list("filter", "initial_var")) f.initial_var = to_vector(*v);
  if (f.initial_mean.size() != dx || f.initial_var.size() != dx) {
    throw Error(ErrorCode::ParseError, "[filter] initial_mean/initial_var need one entry per state dimension");
  }
  return f;
}

// ---------------------------------------------------------------- fit

int cmd_fit(const Io& io, const std::string& data_path, const std::string& report_path) {
  const Config cfg = load_config(io.g, true);
  if (io.g.out.empty()) throw Error(ErrorCode::ParseError, "fit needs --out for the model file");
  const auto kind_text = cfg.get("model", "kind");
  if (!kind_text) throw Error(ErrorCode::ParseError, "[model] kind is required");
  const ModelKind kind = parse_model_kind(*kind_text);
  const KernelFamily family = kernel_family_or_throw(cfg.get_string("model", "kernel", "se"), "[model] kernel");
  const MeanFunction mean = mean_from(cfg);
  const bool optimize = cfg.get_bool("model", "optimize", true);
  const CsvTable data = read_csv(data_path);

  std::optional<std::uint64_t> seed;
  const OptimizerConfig oc = optimizer_from(cfg, io.g, optimize && kind != ModelKind::GpssBasis, seed);
  Config hashed = cfg;
  hashed.set("cli", "seed", seed_text(seed));

  StoredModel model;
  model.kind = kind;
  model.config_hash = hex64(fnv1a64(hashed.canonical()));
  json r;
  r["kind"] = to_string(kind);
  r["config_hash"] = model.config_hash;
  r["rows"] = data.rows();

  switch (kind) {
    case ModelKind::Gp:
    case ModelKind::Temporal: {
      const auto cols = series_columns(data, false, true);
      if (kind == ModelKind::Temporal) {
        if (!is_matern(family)) {
          throw Error(ErrorCode::UnsupportedKernel, "[model] kernel: temporal models need a Matern kernel");
        }
        if (mean.kind != MeanFunction::Kind::Zero) {
          throw Error(ErrorCode::InvalidArgument, "[model] mean: temporal models support the zero mean only");
        }
      }
      Dataset ds{to_vector(cols.t), to_vector(cols.y), 0.0};
      ds.validate();
      HyperVector hyper = init_from(cfg, ds, mean);
      std::optional<OptimizeResult> opt;
      if (optimize) {
        opt = optimize_hyper(ds, family, hyper, oc, mean);
        hyper = opt->hyper;
      }
      ds.noise_variance = hyper.noise_variance();
      model.gp = TrainedGP::fit(ds, hyper.kernel(family), mean);
      r["mean_kind"] = mean.kind == MeanFunction::Kind::Constant ? "constant" : "zero";
      r["mean_value"] = mean.constant;
      report_gp(r, "", *model.gp, opt);
      if (kind == ModelKind::Temporal) {
        r["exact_nll"] = r["nll"];
        r["nll"] = kalman_regress(model.gp->kernel(), cols.t, cols.y, model.gp->noise_variance(), {}).nll;
      }
      break;
    }
    case ModelKind::Nfir:
    case ModelKind::Narx:
    case ModelKind::Noe: {
      LagSpec spec{static_cast<int>(cfg.get_int("lags", "n", kind == ModelKind::Nfir ? 0 : 1)),
                   static_cast<int>(cfg.get_int("lags", "m", 1))};
      spec.validate();
      if (kind == ModelKind::Nfir && !spec.is_nfir()) {
        throw Error(ErrorCode::ParseError, "[lags]: nfir needs n = 0 and m >= 1");
      }
      if (kind != ModelKind::Nfir && spec.n < 1) {
        throw Error(ErrorCode::ParseError, "[lags] n: " + to_string(kind) + " needs n >= 1");
      }
      const auto cols = series_columns(data, spec.m > 0, true);
      const auto records = make_records(cols.u, cols.y);
      LagFitOptions lo;
      lo.family = family;
      lo.optimizer = oc;
      lo.mean = mean;
      lo.normalize = cfg.get_bool("model", "normalize", false);
      lo.optimize = optimize;
      const bool any_init = cfg.has("model", "magnitude") || cfg.has("model", "lengthscale") ||
                            cfg.has("model", "noise_std");
      if (any_init) {
        const auto s = cfg.get_double("model", "magnitude"), l = cfg.get_double("model", "lengthscale"),
                   n = cfg.get_double("model", "noise_std");
        if (!s || !l || !n) {
          throw Error(ErrorCode::ParseError,
                      "[model]: lag models take magnitude, lengthscale and noise_std together (or none)");
        }
        lo.init = HyperVector::from(Kernel{family, *s, *l}, *n * *n);
      }
      LagFit fit = fit_lag_model_report(records, spec, lo);
      r["n"] = spec.n;
      r["m"] = spec.m;
      r["input_order"] = std::string(kLagInputOrder);
      r["normalize"] = lo.normalize;
      report_gp(r, "", fit.model.gp(), fit.optimization);
      model.lag.emplace(std::move(fit.model));
      break;
    }
    case ModelKind::Gpss: {
      const Eigen::Index dx = count_state_columns(data);
      const std::string meas = cfg.get_string("filter", "measurement", data.has("y") ? "learned" : "none");
      GpssFitOptions go;
      go.family = family;
      go.optimizer = oc;
      go.mean = mean;
      bool with_y = false;
      if (meas == "first_state") {
        const auto v = cfg.get_double("filter", "measurement_noise_var");
        if (!v) throw Error(ErrorCode::ParseError, "[filter] measurement_noise_var is required with first_state");
        go.known_measurement_noise = *v;
      } else if (meas == "learned") {
        with_y = true;
      } else if (meas != "none") {
        throw Error(ErrorCode::ParseError, "[filter] measurement: expected none|first_state|learned");
      }
      if (!optimize) throw Error(ErrorCode::ParseError, "[model] optimize = false is not supported for gpss");
      const StateTrajectory traj = trajectory_from(data, dx, data.has("u"), with_y);
      GpssFit fit = fit_gpss_observed_report(traj, go);
      r["state_dim"] = dx;
      r["uses_inputs"] = fit.model.uses_inputs();
      r["measurement"] = meas;
      double total = 0.0;
      for (std::size_t j = 0; j < fit.model.f_gps().size(); ++j) {
        const std::string p = "f" + std::to_string(j + 1) + ".";
        report_gp(r, p, fit.model.f_gps()[j], fit.f_optimization[j]);
        total += r[p + "nll"].get<double>();
      }
      if (fit.model.g_gp()) {
        report_gp(r, "g.", *fit.model.g_gp(), fit.g_optimization);
        total += r["g.nll"].get<double>();
      }
      r["nll"] = total;
      model.filter = filter_from(cfg, traj);
      model.gpss.emplace(std::move(fit.model));
      break;
    }
    case ModelKind::GpssBasis: {
      const Eigen::Index dx = count_state_columns(data);
      const bool with_u = data.has("u");
      const auto lower = cfg.get_list("basis", "lower");
      const auto upper = cfg.get_list("basis", "upper");
      const auto size = cfg.get_list("basis", "size");
      const auto noise_var = cfg.get_double("basis", "noise_var");
      if (!lower || !upper || !size || !noise_var) {
        throw Error(ErrorCode::ParseError, "[basis] lower, upper, size and noise_var are required");
      }
      const auto dims = static_cast<std::size_t>(dx + (with_u ? 1 : 0));
      if (lower->size() != dims || upper->size() != dims || (size->size() != dims && size->size() != 1)) {
        throw Error(ErrorCode::ParseError, "[basis]: lower/upper need " + std::to_string(dims) +
                                               " entries (states then input); size needs 1 or " +
                                               std::to_string(dims));
      }
      std::vector<Interval> domain;
      std::vector<int> counts;
      for (std::size_t d = 0; d < dims; ++d) {
        domain.push_back({(*lower)[d], (*upper)[d]});
        const double s = size->size() == 1 ? (*size)[0] : (*size)[d];
        if (s != std::floor(s)) throw Error(ErrorCode::ParseError, "[basis] size must hold integers");
        counts.push_back(static_cast<int>(s));
      }
      const SineBasis basis = make_sine_basis(domain, counts);
      const auto mag = cfg.get_double("model", "magnitude");
      const auto len = cfg.get_double("model", "lengthscale");
      if (!mag || !len) {
        throw Error(ErrorCode::ParseError, "[model] magnitude and lengthscale set the basis prior; both are required");
      }
      BasisFitOptions bo{spectral_prior_variances(basis, Kernel{family, *mag, *len}), *noise_var, std::nullopt};
      const std::string meas = cfg.get_string("filter", "measurement", "none");
      if (meas == "first_state") {
        const auto v = cfg.get_double("filter", "measurement_noise_var");
        if (!v) throw Error(ErrorCode::ParseError, "[filter] measurement_noise_var is required with first_state");
        bo.measurement_noise_var = *v;
      } else if (meas != "none") {
        throw Error(ErrorCode::ParseError, "[filter] measurement: basis models take none|first_state");
      }
      StateTrajectory traj = trajectory_from(data, dx, with_u, false);
      model.basis = fit_basis_gpss_observed(traj, basis, bo);
      r["state_dim"] = dx;
      r["uses_inputs"] = with_u;
      r["basis_size"] = basis.size();
      r["noise_var"] = *noise_var;
      r["measurement"] = meas;
      model.filter = filter_from(cfg, traj);
      model.basis_traj = std::move(traj);
      model.basis_fit = std::move(bo);
      break;
    }
  }

  model.fit_report = r;
  write_file_atomic(io.g.out, serialize_model(model));
  const std::string report = key_values(r);
  if (!report_path.empty()) write_file_atomic(report_path, report);
  io.out << report;
  io.info("fit: model written to " + io.g.out);
  return 0;
}

// ---------------------------------------------------------------- predict

struct Band {
  std::vector<double> mean;
  std::vector<double> var;
};

void append_band(std::vector<std::string>& header, std::vector<std::vector<double>>& cols,
                 const std::string& prefix, const Band& b, bool quantiles) {
  header.push_back(prefix + "mean");
  cols.push_back(b.mean);
  header.push_back(prefix + "variance");
  cols.push_back(b.var);
  if (quantiles) {
    std::vector<double> lo, hi;
    for (std::size_t i = 0; i < b.mean.size(); ++i) {
      const double h = kZ95 * std::sqrt(b.var[i]);
      lo.push_back(b.mean[i] - h);
      hi.push_back(b.mean[i] + h);
    }
    header.push_back(prefix + "q2.5");
    cols.push_back(lo);
    header.push_back(prefix + "q97.5");
    cols.push_back(hi);
  }
}

EvalMode lag_mode(const std::string& mode, ModelKind kind) {
  if (mode.empty()) return kind == ModelKind::Noe ? EvalMode::FreeRun : EvalMode::OneStep;
  if (mode == "one_step") return EvalMode::OneStep;
  if (mode == "free_run") return EvalMode::FreeRun;
  throw Error(ErrorCode::InvalidArgument, "--mode: expected one_step|free_run for lag models, got '" + mode + "'");
}

Band gp_band(const StoredModel& m, const std::vector<double>& t, bool obs_noise) {
  Band b;
  const TrainedGP& gp = *m.gp;
  if (m.kind == ModelKind::Temporal) {
    const std::vector<double> times = to_std(gp.train_inputs().col(0));
    const std::vector<double> y = to_std(gp.train_outputs());
    const auto post = kalman_regress(gp.kernel(), times, y, gp.noise_variance(), t);
    b.mean = to_std(post.mean);
    b.var = to_std(post.variance);
  } else {
    const Posterior post = gp.predict(to_vector(t));
    b.mean = to_std(post.mean);
    b.var = to_std(post.variance());
  }
  if (obs_noise) {
    for (double& v : b.var) v += gp.noise_variance();
  }
  return b;
}

std::vector<SignalRecord> lag_records(const LagModel& lm, const CsvTable& data, SeriesColumns& cols) {
  cols = series_columns(data, lm.spec().m > 0, lm.spec().n > 0);
  if (cols.y.empty()) cols.y.assign(cols.t.size(), 0.0);  // NFIR never reads outputs
  return make_records(cols.u, cols.y);
}

// Per-dimension one-step predictions of f at rows (x_k, u_k).
std::vector<Band> state_bands(const StoredModel& m, const CsvTable& data, bool obs_noise) {
  const StateSpaceModel& ssm = m.gpss ? static_cast<const StateSpaceModel&>(*m.gpss)
                                      : static_cast<const StateSpaceModel&>(*m.basis);
  const Eigen::Index dx = ssm.state_dim();
  const Matrix x = state_matrix(data, dx);
  std::vector<double> u;
  if (ssm.uses_inputs()) u = data.column("u");
  const Vector q = ssm.process_noise_var();
  std::vector<Band> bands(static_cast<std::size_t>(dx));
  if (m.gpss) {
    Matrix z(x.rows(), dx + (ssm.uses_inputs() ? 1 : 0));
    z.leftCols(dx) = x;
    if (ssm.uses_inputs()) z.col(dx) = to_vector(u);
    for (Eigen::Index j = 0; j < dx; ++j) {
      const Posterior post = m.gpss->f_gps()[static_cast<std::size_t>(j)].predict(z);
      bands[static_cast<std::size_t>(j)] = {to_std(post.mean), to_std(post.variance())};
    }
  } else {
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      Vector z(dx + (ssm.uses_inputs() ? 1 : 0));
      z.head(dx) = x.row(r).transpose();
      if (ssm.uses_inputs()) z(dx) = u[static_cast<std::size_t>(r)];
      const BasisPrediction p = m.basis->predict(z);
      for (Eigen::Index j = 0; j < dx; ++j) {
        bands[static_cast<std::size_t>(j)].mean.push_back(p.mean(j));
        bands[static_cast<std::size_t>(j)].var.push_back(p.variance(j));
      }
    }
  }
  if (obs_noise) {
    for (Eigen::Index j = 0; j < dx; ++j) {
      for (double& v : bands[static_cast<std::size_t>(j)].var) v += q(j);
    }
  }
  return bands;
}

int cmd_predict(const Io& io, const std::string& model_path, const std::string& data_path, bool quantiles,
                bool obs_noise, const std::string& mode) {
  const StoredModel m = load_model(model_path);
  const CsvTable data = read_csv(data_path);
  std::vector<std::string> header;
  std::vector<std::vector<double>> cols;

  if (m.kind == ModelKind::Gp || m.kind == ModelKind::Temporal) {
    const auto& t = data.column("t");
    header.push_back("t");
    cols.push_back(t);
    append_band(header, cols, "", gp_band(m, t, obs_noise), quantiles);
  } else if (is_lag(m.kind)) {
    SeriesColumns sc;
    const auto records = lag_records(*m.lag, data, sc);
    const auto preds = predict_series(*m.lag, records, lag_mode(mode, m.kind));
    const auto k0 = static_cast<std::size_t>(m.lag->spec().max_lag());
    Band b;
    std::vector<double> t;
    for (std::size_t h = 0; h < preds.size(); ++h) {
      t.push_back(sc.t[k0 + h]);
      b.mean.push_back(preds[h].mean);
      b.var.push_back(preds[h].variance + (obs_noise ? m.lag->noise_variance() : 0.0));
    }
    header.push_back("t");
    cols.push_back(t);
    append_band(header, cols, "", b, quantiles);
  } else {
    header.push_back("k");
    cols.push_back(data.column("k"));
    const auto bands = state_bands(m, data, obs_noise);
    for (std::size_t j = 0; j < bands.size(); ++j) {
      append_band(header, cols, "x" + std::to_string(j + 1) + "_", bands[j], quantiles);
    }
  }
  emit(io, to_csv(header, cols));
  io.info("predict: " + std::to_string(cols.front().size()) + " rows");
  return 0;
}

// ---------------------------------------------------------------- simulate

int cmd_simulate(const Io& io, const std::string& model_path, const std::string& data_path,
                 std::optional<int> horizon_flag, const std::string& mode) {
  const StoredModel m = load_model(model_path);
  const CsvTable data = read_csv(data_path);
  if (mode != "mean" && mode != "sample") {
    throw Error(ErrorCode::InvalidArgument, "--mode: expected mean|sample, got '" + mode + "'");
  }
  if (m.kind == ModelKind::Gp || m.kind == ModelKind::Temporal) {
    throw Error(ErrorCode::InvalidArgument, "simulate needs a dynamic model (lag or gpss kinds)");
  }

  if (is_lag(m.kind)) {
    if (mode == "sample") {
      throw Error(ErrorCode::InvalidArgument, "lag models simulate in mean mode only (posterior-mean feedback)");
    }
    const LagModel& lm = *m.lag;
    const auto k0 = static_cast<std::size_t>(lm.spec().max_lag());
    SeriesColumns sc;
    sc = series_columns(data, lm.spec().m > 0, lm.spec().n > 0);
    if (sc.t.size() < k0) {
      throw Error(ErrorCode::InsufficientHistory, "need at least " + std::to_string(k0) + " rows of history");
    }
    const int available = static_cast<int>(sc.t.size()) - static_cast<int>(k0);
    const int horizon = horizon_flag.value_or(available);
    std::vector<double> init(sc.y.begin(), sc.y.begin() + static_cast<long>(std::min(k0, sc.y.size())));
    const auto sim = simulate_noe(lm, sc.u, init, horizon);
    Band b;
    std::vector<double> k;
    for (std::size_t h = 0; h < sim.size(); ++h) {
      k.push_back(static_cast<double>(k0 + h));
      b.mean.push_back(sim[h].mean);
      b.var.push_back(sim[h].variance);
    }
    std::vector<std::string> header{"k"};
    std::vector<std::vector<double>> cols{k};
    append_band(header, cols, "", b, false);
    emit(io, to_csv(header, cols));
    return 0;
  }

  const StateSpaceModel& ssm = m.gpss ? static_cast<const StateSpaceModel&>(*m.gpss)
                                      : static_cast<const StateSpaceModel&>(*m.basis);
  const Eigen::Index dx = ssm.state_dim();
  if (data.rows() < 1) throw Error(ErrorCode::SequenceTooShort, "simulate needs x0 in the first row");
  const Matrix x = state_matrix(data, dx);
  std::vector<double> u;
  if (ssm.uses_inputs()) u = data.column("u");
  const int horizon = horizon_flag.value_or(static_cast<int>(data.rows()) - 1);
  if (mode == "sample" && !io.g.seed) throw Error(ErrorCode::ParseError, "sample mode is stochastic: --seed is required");
  const StateTrajectory traj = simulate(ssm, x.row(0).transpose(), u, horizon,
                                        mode == "sample" ? SimulateMode::Sample : SimulateMode::Mean,
                                        io.g.seed.value_or(0));

  std::vector<std::string> header{"k"};
  std::vector<std::vector<double>> cols(1);
  for (int k = 0; k <= horizon; ++k) cols[0].push_back(k);
  for (Eigen::Index j = 0; j < dx; ++j) {
    header.push_back("x" + std::to_string(j + 1));
    cols.push_back(to_std(traj.states.col(j)));
  }
  if (ssm.uses_inputs()) {
    // row k carries u_k; the final row repeats the data's u_H when present
    std::vector<double> uc(u.begin(), u.begin() + horizon);
    uc.push_back(static_cast<std::size_t>(horizon) < u.size() ? u[static_cast<std::size_t>(horizon)] : 0.0);
    header.push_back("u");
    cols.push_back(uc);
  }
  if (traj.outputs) {
    // y_0 is the noiseless measurement of x0; y_{1:H} come from the simulation
    std::vector<double> y{ssm.measurement_mean(traj.states.topRows(1))(0)};
    for (int k = 0; k < horizon; ++k) y.push_back((*traj.outputs)(k));
    header.push_back("y");
    cols.push_back(y);
  }
  emit(io, to_csv(header, cols));
  return 0;
}

// ---------------------------------------------------------------- eval

int cmd_eval(const Io& io, const std::string& model_path, const std::string& data_path, const std::string& mode) {
  const StoredModel m = load_model(model_path);
  const CsvTable data = read_csv(data_path);
  json r;
  r["kind"] = to_string(m.kind);
  const auto put_metrics = [&](const Metrics& mt) {
    r["count"] = mt.count;
    r["rmse"] = mt.rmse;
    r["mae"] = mt.mae;
    r["coverage95"] = mt.coverage95;
    r["mean_nll"] = mt.mean_nll;
  };

  if (m.kind == ModelKind::Gp || m.kind == ModelKind::Temporal) {
    if (!mode.empty() && mode != "one_step") {
      throw Error(ErrorCode::InvalidArgument, "--mode: regression models evaluate in one_step mode only");
    }
    const auto cols = series_columns(data, false, true);
    const Band b = gp_band(m, cols.t, true);
    r["mode"] = "one_step";
    put_metrics(score_predictions(cols.y, b.mean, b.var));
  } else if (is_lag(m.kind)) {
    SeriesColumns sc;
    const auto records = lag_records(*m.lag, data, sc);
    if (m.lag->spec().n == 0 && !data.has("y")) throw Error(ErrorCode::ParseError, "missing column 'y'");
    const EvalMode em = lag_mode(mode, m.kind);
    r["mode"] = em == EvalMode::OneStep ? "one_step" : "free_run";
    put_metrics(evaluate(*m.lag, records, em));
  } else {
    const StateSpaceModel& ssm = m.gpss ? static_cast<const StateSpaceModel&>(*m.gpss)
                                        : static_cast<const StateSpaceModel&>(*m.basis);
    const Eigen::Index dx = ssm.state_dim();
    const std::string em = mode.empty() ? "one_step" : mode;
    r["mode"] = em;
    if (em == "one_step") {
      if (data.rows() < 2) throw Error(ErrorCode::SequenceTooShort, "one-step evaluation needs two rows");
      const auto bands = state_bands(m, data, true);
      const Matrix x = state_matrix(data, dx);
      std::vector<double> t, mu, var;
      for (Eigen::Index j = 0; j < dx; ++j) {
        const auto& b = bands[static_cast<std::size_t>(j)];
        for (Eigen::Index k = 0; k + 1 < x.rows(); ++k) {
          t.push_back(x(k + 1, j));
          mu.push_back(b.mean[static_cast<std::size_t>(k)]);
          var.push_back(b.var[static_cast<std::size_t>(k)]);
        }
      }
      put_metrics(score_predictions(t, mu, var));
    } else if (em == "filter") {
      const auto seed = io.g.seed ? io.g.seed : m.filter.seed;
      if (!seed) throw Error(ErrorCode::ParseError, "filter mode is stochastic: --seed or [filter] seed is required");
      const auto& y = data.column("y");
      if (y.size() < 2) throw Error(ErrorCode::SequenceTooShort, "filter evaluation needs two rows");
      std::vector<double> ys(y.begin() + 1, y.end());
      std::vector<double> u;
      if (ssm.uses_inputs()) u = data.column("u");
      const PfResult pf =
          bootstrap_pf(ssm, ys, u, PfOptions{m.filter.particles, *seed, m.filter.initial_mean, m.filter.initial_var});
      r["particles"] = m.filter.particles;
      r["seed"] = *seed;
      r["log_likelihood"] = pf.log_likelihood;
      r["resamples"] = pf.resamples;
      r["min_ess"] = *std::min_element(pf.ess.begin(), pf.ess.end());
      if (data.has("x1")) {
        const Matrix x = state_matrix(data, dx);
        std::vector<double> t, mu, var;
        for (Eigen::Index j = 0; j < dx; ++j) {
          for (Eigen::Index k = 1; k < x.rows(); ++k) {
            t.push_back(x(k, j));
            mu.push_back(pf.means(k - 1, j));
            var.push_back(pf.variances(k - 1, j));
          }
        }
        put_metrics(score_predictions(t, mu, var));
      }
    } else {
      throw Error(ErrorCode::InvalidArgument, "--mode: expected one_step|filter for gpss models");
    }
  }
  const std::string text = key_values(r);
  io.out << text;
  if (!io.g.out.empty()) write_file_atomic(io.g.out, text);
  return 0;
}

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotPositiveDefinite:
    case ErrorCode::NumericalInconsistency:
    case ErrorCode::DegenerateWeights:
      return 3;
    default:
      return 2;
  }
}

}  // namespace

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Gaussian-process system identification toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "Run configuration file");
  app.add_option("--seed", g.seed, "Seed for every stochastic step");
  app.add_option("--out", g.out, "Output path (stdout when omitted, where allowed)");
  app.add_flag("--quiet", g.quiet, "Suppress informational messages");

  std::string generator, data, report, model, mode;
  std::optional<int> n, horizon;
  bool quantiles = false, obs_noise = false;

  auto* gen = app.add_subcommand("gen", "Generate a synthetic data CSV");
  gen->add_option("--generator", generator, "sinusoid|linear-arx|logistic-narx|gp-draw|pendulum");
  gen->add_option("--n", n, "Number of rows");

  auto* fit = app.add_subcommand("fit", "Fit a model from --config and a data CSV");
  fit->add_option("--data", data, "Training data CSV")->required();
  fit->add_option("--report", report, "Also write the key=value fit report here");

  auto* pred = app.add_subcommand("predict", "Posterior predictions at query rows");
  pred->add_option("--model", model, "Model file")->required();
  pred->add_option("--data", data, "Query CSV")->required();
  pred->add_flag("--quantiles", quantiles, "Add q2.5/q97.5 columns (mean -/+ 1.96 sd)");
  pred->add_flag("--observation-noise", obs_noise, "Include the noise variance in variance/quantiles");
  pred->add_option("--mode", mode, "one_step|free_run (lag models)");

  auto* sim = app.add_subcommand("simulate", "Free-run simulation from an input CSV");
  sim->add_option("--model", model, "Model file")->required();
  sim->add_option("--data", data, "Input CSV (history / x0 and inputs)")->required();
  sim->add_option("--horizon", horizon, "Steps to simulate");
  std::string sim_mode = "mean";
  sim->add_option("--mode", sim_mode, "mean|sample");

  auto* ev = app.add_subcommand("eval", "Score a model on a data CSV");
  ev->add_option("--model", model, "Model file")->required();
  ev->add_option("--data", data, "Data CSV")->required();
  ev->add_option("--mode", mode, "one_step|free_run (lag), one_step|filter (gpss)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    err << "error: " << e.what() << "\n";
    return 2;
  }

  const Io io{out, err, g};
  try {
    if (*gen) return cmd_gen(io, generator, n);
    if (*fit) return cmd_fit(io, data, report);
    if (*pred) return cmd_predict(io, model, data, quantiles, obs_noise, mode);
    if (*sim) return cmd_simulate(io, model, data, horizon, sim_mode);
    if (*ev) return cmd_eval(io, model, data, mode);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  }
  return 2;
}

}  // namespace gpsysid::cli
