#include <string>
#include <vector>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "gpsysid/error.hpp"
#include "gpsysid/generators.hpp"
#include "gpsysid/gp.hpp"
#include "gpsysid/gpss.hpp"
#include "gpsysid/kernels.hpp"
#include "gpsysid/lag_models.hpp"
#include "gpsysid/temporal.hpp"

namespace py = pybind11;
using namespace gpsysid;
using namespace pybind11::literals;

namespace {

using Doubles = std::vector<double>;

Matrix as_inputs(const Matrix& z) { return z; }

Dataset make_dataset(const Matrix& inputs, const Vector& outputs, double noise_variance) {
  Dataset ds{inputs, outputs, noise_variance};
  ds.validate();
  return ds;
}

MeanFunction make_mean(const std::optional<double>& constant) {
  return constant ? MeanFunction::constant_value(*constant) : MeanFunction::zero();
}

OptimizerConfig make_optimizer(int max_iter, double grad_tol, int restarts, std::uint64_t seed) {
  OptimizerConfig oc;
  oc.max_iter = max_iter;
  oc.grad_tol = grad_tol;
  oc.restarts = restarts;
  oc.seed = seed;
  return oc;
}

StateTrajectory make_trajectory(const Matrix& states, const std::optional<Vector>& inputs,
                                const std::optional<Vector>& outputs) {
  StateTrajectory t{states, inputs, outputs};
  t.validate();
  return t;
}

py::dict trajectory_dict(const StateTrajectory& t) {
  py::dict d("states"_a = t.states);
  d["inputs"] = t.inputs ? py::cast(*t.inputs) : py::none();
  d["outputs"] = t.outputs ? py::cast(*t.outputs) : py::none();
  return d;
}

py::tuple predictions_tuple(const std::vector<StepPrediction>& preds) {
  Vector mean(static_cast<Eigen::Index>(preds.size()));
  Vector var(mean.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    mean(static_cast<Eigen::Index>(i)) = preds[i].mean;
    var(static_cast<Eigen::Index>(i)) = preds[i].variance;
  }
  return py::make_tuple(mean, var);
}

EvalMode parse_eval_mode(const std::string& mode) {
  if (mode == "one_step") return EvalMode::OneStep;
  if (mode == "free_run") return EvalMode::FreeRun;
  throw Error(ErrorCode::InvalidArgument, "mode: expected one_step|free_run, got '" + mode + "'");
}

SimulateMode parse_simulate_mode(const std::string& mode) {
  if (mode == "mean") return SimulateMode::Mean;
  if (mode == "sample") return SimulateMode::Sample;
  throw Error(ErrorCode::InvalidArgument, "mode: expected mean|sample, got '" + mode + "'");
}

}  // namespace

PYBIND11_MODULE(gpsysid, m) {
  m.doc() = "Gaussian-process system identification";

  static py::exception<Error> error_type(m, "Error", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object inst = py::reinterpret_borrow<py::object>(error_type)(e.what());
      inst.attr("code") = std::string(to_string(e.code()));
      PyErr_SetObject(error_type.ptr(), inst.ptr());
    }
  });

  // ---------------------------------------------------------------- kernels

  py::enum_<KernelFamily>(m, "KernelFamily")
      .value("SE", KernelFamily::SquaredExponential)
      .value("Matern12", KernelFamily::Matern12)
      .value("Matern32", KernelFamily::Matern32)
      .value("Matern52", KernelFamily::Matern52);

  py::class_<Kernel>(m, "Kernel")
      .def(py::init([](KernelFamily family, double magnitude, double lengthscale) {
             Kernel k{family, magnitude, lengthscale};
             k.validate();
             return k;
           }),
           "family"_a, "magnitude"_a = 1.0, "lengthscale"_a = 1.0)
      .def_readonly("family", &Kernel::family)
      .def_readonly("magnitude", &Kernel::magnitude)
      .def_readonly("lengthscale", &Kernel::lengthscale)
      .def("__call__", [](const Kernel& k, const Matrix& a, const Matrix& b) { return gram(k, a, b); },
           "za"_a, "zb"_a, "Cross-covariance matrix between the rows of za and zb.")
      .def("__repr__", [](const Kernel& k) {
        return "Kernel(" + std::string(to_string(k.family)) + ", magnitude=" + std::to_string(k.magnitude) +
               ", lengthscale=" + std::to_string(k.lengthscale) + ")";
      });

  // ---------------------------------------------------------------- gp-core

  py::class_<TrainedGP>(m, "TrainedGP")
      .def_static(
          "fit",
          [](const Matrix& inputs, const Vector& outputs, const Kernel& kernel, double noise_variance,
             std::optional<double> mean_constant) {
            return TrainedGP::fit(make_dataset(inputs, outputs, noise_variance), kernel, make_mean(mean_constant));
          },
          "inputs"_a, "outputs"_a, "kernel"_a, "noise_variance"_a, "mean_constant"_a = py::none())
      .def(
          "predict",
          [](const TrainedGP& gp, const Matrix& test, bool full_covariance, bool observation_noise) {
            const Posterior p = gp.predict(as_inputs(test), {full_covariance, observation_noise});
            return py::make_tuple(p.mean, full_covariance ? py::cast(p.covariance) : py::cast(p.diagonal));
          },
          "test_inputs"_a, "full_covariance"_a = false, "observation_noise"_a = false,
          "Returns (mean, variance) or (mean, covariance) when full_covariance is set.")
      .def("predict_mean", &TrainedGP::predict_mean, "test_inputs"_a)
      .def_property_readonly("kernel", &TrainedGP::kernel)
      .def_property_readonly("noise_variance", &TrainedGP::noise_variance)
      .def_property_readonly("alpha", &TrainedGP::alpha);

  m.def(
      "nll",
      [](const Matrix& inputs, const Vector& outputs, const Kernel& kernel, double noise_variance,
         std::optional<double> mean_constant) {
        const NllResult r = nll(make_dataset(inputs, outputs, noise_variance), kernel, make_mean(mean_constant));
        return py::make_tuple(r.value, Vector(r.grad));
      },
      "inputs"_a, "outputs"_a, "kernel"_a, "noise_variance"_a, "mean_constant"_a = py::none(),
      "Negative log marginal likelihood and its gradient in (log s, log l, log sigma_n).");

  py::class_<OptimizeResult>(m, "OptimizeResult")
      .def_readonly("kernel", &OptimizeResult::kernel)
      .def_readonly("noise_variance", &OptimizeResult::noise_variance)
      .def_readonly("final_nll", &OptimizeResult::final_nll)
      .def_readonly("grad_inf_norm", &OptimizeResult::grad_inf_norm)
      .def_readonly("iterations", &OptimizeResult::iterations)
      .def_readonly("converged", &OptimizeResult::converged)
      .def_property_readonly("stop_reason",
                             [](const OptimizeResult& r) { return std::string(to_string(r.stop_reason)); });

  m.def(
      "optimize_hyper",
      [](const Matrix& inputs, const Vector& outputs, KernelFamily family, std::optional<Kernel> init_kernel,
         std::optional<double> init_noise_variance, int max_iter, double grad_tol, int restarts,
         std::uint64_t seed, std::optional<double> mean_constant) {
        const MeanFunction mean = make_mean(mean_constant);
        const Dataset ds = make_dataset(inputs, outputs, 0.0);
        HyperVector init = default_init(ds, mean);
        if (init_kernel) {
          const HyperVector h = HyperVector::from(*init_kernel, 1.0);
          init.values[0] = h.values[0];
          init.values[1] = h.values[1];
        }
        if (init_noise_variance) init.values[2] = HyperVector::from(Kernel{}, *init_noise_variance).values[2];
        return optimize_hyper(ds, family, init, make_optimizer(max_iter, grad_tol, restarts, seed), mean);
      },
      "inputs"_a, "outputs"_a, "family"_a, "init_kernel"_a = py::none(), "init_noise_variance"_a = py::none(),
      "max_iter"_a = 200, "grad_tol"_a = 1e-5, "restarts"_a = 3, "seed"_a = 0, "mean_constant"_a = py::none());

  // ---------------------------------------------------------------- temporal

  m.def(
      "kalman_regress",
      [](const Kernel& kernel, const Doubles& times, const Doubles& outputs, double noise_variance,
         const Doubles& test_times) {
        const TemporalPosterior p = kalman_regress(kernel, times, outputs, noise_variance, test_times);
        return py::make_tuple(p.mean, p.variance, p.nll);
      },
      "kernel"_a, "times"_a, "outputs"_a, "noise_variance"_a, "test_times"_a,
      "Matern GP regression in time by Kalman filtering and RTS smoothing: (mean, variance, nll).");

  m.def(
      "matern_to_ss",
      [](const Kernel& kernel) {
        const LtiSde s = matern_to_ss(kernel);
        return py::dict("drift"_a = s.drift, "noise_input"_a = s.noise_input,
                        "measurement"_a = Vector(s.measurement.transpose()),
                        "spectral_density"_a = s.spectral_density, "stationary_cov"_a = s.stationary_cov);
      },
      "kernel"_a);

  // ---------------------------------------------------------------- lag models

  py::class_<LagModel>(m, "LagModel")
      .def_property_readonly("n", [](const LagModel& lm) { return lm.spec().n; })
      .def_property_readonly("m", [](const LagModel& lm) { return lm.spec().m; })
      .def_property_readonly("kernel", [](const LagModel& lm) { return lm.gp().kernel(); })
      .def_property_readonly("noise_variance", &LagModel::noise_variance)
      .def(
          "predict_one_step",
          [](const LagModel& lm, const Doubles& outputs, const Doubles& inputs) {
            const StepPrediction p = predict_one_step(lm, {outputs, inputs});
            return py::make_tuple(p.mean, p.variance);
          },
          "past_outputs"_a, "past_inputs"_a = Doubles{}, "Histories are oldest first.")
      .def(
          "simulate",
          [](const LagModel& lm, const Doubles& inputs, const Doubles& init_outputs, int horizon) {
            return predictions_tuple(simulate_noe(lm, inputs, init_outputs, horizon));
          },
          "inputs"_a, "init_outputs"_a, "horizon"_a)
      .def(
          "predict_series",
          [](const LagModel& lm, const Doubles& inputs, const Doubles& outputs, const std::string& mode) {
            const auto records = make_records(inputs, outputs);
            return predictions_tuple(predict_series(lm, records, parse_eval_mode(mode)));
          },
          "inputs"_a, "outputs"_a, "mode"_a = "one_step")
      .def(
          "evaluate",
          [](const LagModel& lm, const Doubles& inputs, const Doubles& outputs, const std::string& mode) {
            const auto records = make_records(inputs, outputs);
            const Metrics r = evaluate(lm, records, parse_eval_mode(mode));
            return py::dict("rmse"_a = r.rmse, "mae"_a = r.mae, "coverage95"_a = r.coverage95,
                            "mean_nll"_a = r.mean_nll, "count"_a = r.count);
          },
          "inputs"_a, "outputs"_a, "mode"_a = "one_step");

  m.def(
      "fit_lag_model",
      [](const Doubles& inputs, const Doubles& outputs, int n, int m_lags, KernelFamily family, bool normalize,
         int max_iter, int restarts, std::uint64_t seed) {
        LagFitOptions opts;
        opts.family = family;
        opts.normalize = normalize;
        opts.optimizer = make_optimizer(max_iter, 1e-5, restarts, seed);
        const auto records = make_records(inputs, outputs);
        return fit_lag_model(records, LagSpec{n, m_lags}, opts);
      },
      "inputs"_a, "outputs"_a, "n"_a, "m"_a, "family"_a = KernelFamily::SquaredExponential,
      "normalize"_a = false, "max_iter"_a = 200, "restarts"_a = 3, "seed"_a = 0,
      "NFIR (n = 0), NARX or NOE model with n output lags and m input lags; pass inputs=[] for output-only data.");

  // ---------------------------------------------------------------- gpss

  py::enum_<MeasurementKind>(m, "MeasurementKind")
      .value("None_", MeasurementKind::None)
      .value("FirstState", MeasurementKind::FirstState)
      .value("Learned", MeasurementKind::Learned);

  py::class_<StateSpaceModel>(m, "StateSpaceModel")
      .def_property_readonly("state_dim", &StateSpaceModel::state_dim)
      .def_property_readonly("uses_inputs", &StateSpaceModel::uses_inputs)
      .def_property_readonly("has_measurement", &StateSpaceModel::has_measurement)
      .def("transition_mean", &StateSpaceModel::transition_mean, "states"_a, "input"_a = 0.0)
      .def("process_noise_var", &StateSpaceModel::process_noise_var)
      .def_property_readonly("measurement_noise_var", &StateSpaceModel::measurement_noise_var)
      .def(
          "simulate",
          [](const StateSpaceModel& model, const Vector& x0, const Doubles& inputs, int horizon,
             const std::string& mode, std::uint64_t seed) {
            return trajectory_dict(simulate(model, x0, inputs, horizon, parse_simulate_mode(mode), seed));
          },
          "x0"_a, "inputs"_a = Doubles{}, "horizon"_a = 1, "mode"_a = "mean", "seed"_a = 0)
      .def(
          "particle_filter",
          [](const StateSpaceModel& model, const Doubles& outputs, const Doubles& inputs, int particles,
             std::uint64_t seed, const Vector& initial_mean, const Vector& initial_var) {
            const PfResult r = bootstrap_pf(model, outputs, inputs, {particles, seed, initial_mean, initial_var});
            return py::dict("means"_a = r.means, "variances"_a = r.variances, "log_likelihood"_a = r.log_likelihood,
                            "ess"_a = r.ess, "resamples"_a = r.resamples,
                            "particles"_a = r.final_particles.particles, "weights"_a = r.final_particles.weights);
          },
          "outputs"_a, "inputs"_a, "particles"_a, "seed"_a, "initial_mean"_a, "initial_var"_a,
          "Bootstrap particle filter over y_1..y_N given u_0..u_{N-1}.");

  py::class_<GpssModel, StateSpaceModel>(m, "GpssModel")
      .def_property_readonly("f_gps", &GpssModel::f_gps)
      .def_property_readonly("g_gp", &GpssModel::g_gp)
      .def_property_readonly("measurement_kind", &GpssModel::measurement_kind);

  m.def(
      "fit_gpss",
      [](const Matrix& states, const std::optional<Vector>& inputs, const std::optional<Vector>& outputs,
         std::optional<double> measurement_noise_var, KernelFamily family, int max_iter, int restarts,
         std::uint64_t seed) {
        GpssFitOptions opts;
        opts.family = family;
        opts.optimizer = make_optimizer(max_iter, 1e-5, restarts, seed);
        opts.known_measurement_noise = measurement_noise_var;
        return fit_gpss_observed(make_trajectory(states, inputs, outputs), opts);
      },
      "states"_a, "inputs"_a = py::none(), "outputs"_a = py::none(), "measurement_noise_var"_a = py::none(),
      "family"_a = KernelFamily::SquaredExponential, "max_iter"_a = 200, "restarts"_a = 3, "seed"_a = 0,
      "GP state-space model from an observed trajectory: states rows x_0..x_N, inputs u_0..u_{N-1}, outputs "
      "y_1..y_N. With measurement_noise_var the measurement is y = x_1 + noise; otherwise g is learned from "
      "the outputs when given.");

  py::class_<SineBasis>(m, "SineBasis")
      .def(py::init([](const std::vector<std::pair<double, double>>& domain, const std::vector<int>& counts) {
             std::vector<Interval> d;
             for (const auto& [lo, hi] : domain) d.push_back({lo, hi});
             return make_sine_basis(std::move(d), counts);
           }),
           "domain"_a, "counts"_a)
      .def_property_readonly("size", &SineBasis::size)
      .def_property_readonly("dim", &SineBasis::dim)
      .def("evaluate", &SineBasis::evaluate, "z"_a)
      .def("design", &SineBasis::design, "z"_a)
      .def("multi_index", &SineBasis::multi_index, "i"_a)
      .def("frequency", &SineBasis::frequency, "i"_a)
      .def("prior_variances", [](const SineBasis& b, const Kernel& k) { return spectral_prior_variances(b, k); },
           "kernel"_a);

  m.def("spectral_density", &spectral_density, "kernel"_a, "omega"_a, "dim"_a);

  py::class_<BasisModel, StateSpaceModel>(m, "BasisModel")
      .def(
          "predict",
          [](const BasisModel& b, const Vector& z) {
            const BasisPrediction p = b.predict(z);
            return py::make_tuple(p.mean, p.variance);
          },
          "z"_a);

  m.def(
      "fit_basis_gpss",
      [](const Matrix& states, const std::optional<Vector>& inputs, const std::optional<Vector>& outputs,
         const SineBasis& basis, const Vector& prior_var, double noise_var,
         std::optional<double> measurement_noise_var) {
        BasisFitOptions opts;
        opts.prior_var = prior_var;
        opts.noise_var = noise_var;
        opts.measurement_noise_var = measurement_noise_var;
        return fit_basis_gpss_observed(make_trajectory(states, inputs, outputs), basis, opts);
      },
      "states"_a, "inputs"_a, "outputs"_a, "basis"_a, "prior_var"_a, "noise_var"_a = 1e-2,
      "measurement_noise_var"_a = py::none());

  // ---------------------------------------------------------------- generators

  m.def(
      "generate",
      [](const std::string& name, int n, std::uint64_t seed, double noise_std) -> py::dict {
        SeriesData s;
        if (name == "sinusoid") {
          s = generate_sinusoid(n, noise_std, seed);
        } else if (name == "linear-arx") {
          LinearArxParams p;
          p.noise_std = noise_std;
          s = generate_linear_arx(n, p, seed);
        } else if (name == "logistic-narx") {
          s = generate_logistic_narx(n, noise_std, seed);
        } else if (name == "pendulum") {
          PendulumParams p;
          p.measurement_std = noise_std;
          const StateSeries ss = generate_pendulum(n, p, seed);
          return py::dict("states"_a = ss.states, "inputs"_a = ss.inputs, "outputs"_a = ss.outputs);
        } else {
          throw Error(ErrorCode::UnknownGenerator, "'" + name + "'");
        }
        return py::dict("times"_a = s.times, "inputs"_a = s.inputs, "outputs"_a = s.outputs);
      },
      "name"_a, "n"_a, "seed"_a, "noise_std"_a = 0.05,
      "Synthetic benchmark data: sinusoid, linear-arx, logistic-narx or pendulum.");

  m.def(
      "generate_gp_draw",
      [](int n, const Kernel& kernel, double dt, double noise_std, std::uint64_t seed) {
        const SeriesData s = generate_gp_draw(n, kernel, dt, noise_std, seed);
        return py::dict("times"_a = s.times, "outputs"_a = s.outputs);
      },
      "n"_a, "kernel"_a, "dt"_a, "noise_std"_a, "seed"_a);
}
