#include "model_file.hpp"

#include "gpsysid/error.hpp"
#include "gpsysid/io.hpp"

namespace gpsysid::cli {

namespace {

constexpr const char* kFormat = "gpsysid-model";
constexpr int kVersion = 1;

json vec_json(const Vector& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

Vector json_vec(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json mat_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    rows.push_back(vec_json(m.row(r).transpose()));
  }
  return rows;
}

Matrix json_mat(const json& j, Eigen::Index cols_if_empty) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = rows > 0 ? static_cast<Eigen::Index>(j[0].size()) : cols_if_empty;
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    if (static_cast<Eigen::Index>(row.size()) != cols) {
      throw Error(ErrorCode::ParseError, "model file: ragged matrix");
    }
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

json gp_json(const TrainedGP& gp) {
  const auto& mean = gp.mean_function();
  return json{{"family", std::string(to_string(gp.kernel().family))},
              {"magnitude", gp.kernel().magnitude},
              {"lengthscale", gp.kernel().lengthscale},
              {"noise_variance", gp.noise_variance()},
              {"mean", json{{"kind", mean.kind == MeanFunction::Kind::Constant ? "constant" : "zero"},
                            {"value", mean.constant}}},
              {"input_dim", gp.input_dim()},
              {"inputs", mat_json(gp.train_inputs())},
              {"outputs", vec_json(gp.train_outputs())}};
}

}  // namespace

KernelFamily kernel_family_or_throw(const std::string& name, const std::string& field) {
  const auto fam = parse_kernel_family(name);
  if (!fam) {
    throw Error(ErrorCode::ParseError,
                field + ": unknown kernel '" + name + "' (se|matern12|matern32|matern52)");
  }
  return *fam;
}

namespace {

TrainedGP json_gp(const json& j) {
  const Kernel k{kernel_family_or_throw(j.at("family").get<std::string>(), "model file family"),
                 j.at("magnitude").get<double>(),
                 j.at("lengthscale").get<double>()};
  MeanFunction mean;
  if (j.at("mean").at("kind").get<std::string>() == "constant") {
    mean = MeanFunction::constant_value(j.at("mean").at("value").get<double>());
  }
  Dataset ds{json_mat(j.at("inputs"), j.at("input_dim").get<Eigen::Index>()), json_vec(j.at("outputs")),
             j.at("noise_variance").get<double>()};
  return TrainedGP::fit(ds, k, mean);
}

std::string measurement_name(MeasurementKind k) {
  switch (k) {
    case MeasurementKind::None:
      return "none";
    case MeasurementKind::FirstState:
      return "first_state";
    case MeasurementKind::Learned:
      return "learned";
  }
  return "none";
}

MeasurementKind parse_measurement(const std::string& s) {
  if (s == "none") return MeasurementKind::None;
  if (s == "first_state") return MeasurementKind::FirstState;
  if (s == "learned") return MeasurementKind::Learned;
  throw Error(ErrorCode::ParseError, "unknown measurement kind '" + s + "'");
}

}  // namespace

ModelKind parse_model_kind(const std::string& s) {
  if (s == "gp") return ModelKind::Gp;
  if (s == "nfir") return ModelKind::Nfir;
  if (s == "narx") return ModelKind::Narx;
  if (s == "noe") return ModelKind::Noe;
  if (s == "temporal") return ModelKind::Temporal;
  if (s == "gpss") return ModelKind::Gpss;
  if (s == "gpss-basis") return ModelKind::GpssBasis;
  throw Error(ErrorCode::ParseError,
              "[model] kind: unknown '" + s + "' (gp|nfir|narx|noe|temporal|gpss|gpss-basis)");
}

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::Gp:
      return "gp";
    case ModelKind::Nfir:
      return "nfir";
    case ModelKind::Narx:
      return "narx";
    case ModelKind::Noe:
      return "noe";
    case ModelKind::Temporal:
      return "temporal";
    case ModelKind::Gpss:
      return "gpss";
    case ModelKind::GpssBasis:
      return "gpss-basis";
  }
  return "gp";
}

std::string serialize_model(const StoredModel& m) {
  json j;
  j["format"] = kFormat;
  j["version"] = kVersion;
  j["kind"] = to_string(m.kind);
  j["config_hash"] = m.config_hash;
  switch (m.kind) {
    case ModelKind::Gp:
    case ModelKind::Temporal:
      j["gp"] = gp_json(*m.gp);
      break;
    case ModelKind::Nfir:
    case ModelKind::Narx:
    case ModelKind::Noe: {
      const auto& lm = *m.lag;
      const auto& nm = lm.normalization();
      j["lags"] = json{{"n", lm.spec().n}, {"m", lm.spec().m}, {"input_order", std::string(lm.input_order())}};
      j["normalization"] = json{{"enabled", nm.enabled},       {"input_mean", nm.input_mean},
                                {"input_scale", nm.input_scale}, {"output_mean", nm.output_mean},
                                {"output_scale", nm.output_scale}};
      j["gp"] = gp_json(lm.gp());
      break;
    }
    case ModelKind::Gpss: {
      const auto& g = *m.gpss;
      j["uses_inputs"] = g.uses_inputs();
      json f = json::array();
      for (const auto& gp : g.f_gps()) f.push_back(gp_json(gp));
      j["f"] = f;
      json meas{{"kind", measurement_name(g.measurement_kind())},
                {"noise_variance", g.has_measurement() ? g.measurement_noise_var() : 0.0}};
      if (g.g_gp()) meas["gp"] = gp_json(*g.g_gp());
      j["measurement"] = meas;
      break;
    }
    case ModelKind::GpssBasis: {
      const auto& b = *m.basis;
      json lower = json::array(), upper = json::array();
      for (const auto& iv : b.basis().domain()) {
        lower.push_back(iv.lower);
        upper.push_back(iv.upper);
      }
      j["basis"] = json{{"lower", lower}, {"upper", upper}, {"size", b.basis().counts()}};
      j["prior_var"] = vec_json(m.basis_fit->prior_var);
      j["noise_var"] = m.basis_fit->noise_var;
      j["measurement"] = json{{"kind", measurement_name(b.measurement_kind())},
                              {"noise_variance", b.has_measurement() ? b.measurement_noise_var() : 0.0}};
      json traj{{"states", mat_json(m.basis_traj->states)}};
      if (m.basis_traj->inputs) traj["inputs"] = vec_json(*m.basis_traj->inputs);
      j["trajectory"] = traj;
      break;
    }
  }
  if (is_state_space(m.kind)) {
    json filter{{"particles", m.filter.particles},
                {"initial_mean", vec_json(m.filter.initial_mean)},
                {"initial_var", vec_json(m.filter.initial_var)}};
    if (m.filter.seed) filter["seed"] = *m.filter.seed;
    j["filter"] = filter;
  }
  j["fit_report"] = m.fit_report;
  return j.dump(1) + "\n";
}

StoredModel load_model(const std::string& path) {
  const std::string text = read_file(path);
  try {
    const json j = json::parse(text);
    if (j.value("format", "") != kFormat || j.value("version", 0) != kVersion) {
      throw Error(ErrorCode::ParseError, "'" + path + "' is not a gpsysid model file (version " +
                                             std::to_string(kVersion) + ")");
    }
    StoredModel m;
    m.kind = parse_model_kind(j.at("kind").get<std::string>());
    m.config_hash = j.value("config_hash", "");
    m.fit_report = j.value("fit_report", json::object());
    switch (m.kind) {
      case ModelKind::Gp:
      case ModelKind::Temporal:
        m.gp = json_gp(j.at("gp"));
        break;
      case ModelKind::Nfir:
      case ModelKind::Narx:
      case ModelKind::Noe: {
        const auto& lj = j.at("lags");
        if (lj.at("input_order").get<std::string>() != kLagInputOrder) {
          throw Error(ErrorCode::ParseError, "model file: unsupported lag input order '" +
                                                 lj.at("input_order").get<std::string>() + "'");
        }
        LagSpec spec{lj.at("n").get<int>(), lj.at("m").get<int>()};
        const auto& nj = j.at("normalization");
        Normalization norm{nj.at("enabled").get<bool>(), nj.at("input_mean").get<double>(),
                           nj.at("input_scale").get<double>(), nj.at("output_mean").get<double>(),
                           nj.at("output_scale").get<double>()};
        m.lag.emplace(spec, json_gp(j.at("gp")), norm);
        break;
      }
      case ModelKind::Gpss: {
        std::vector<TrainedGP> f;
        for (const auto& fj : j.at("f")) f.push_back(json_gp(fj));
        const auto& mj = j.at("measurement");
        const auto kind = parse_measurement(mj.at("kind").get<std::string>());
        std::optional<TrainedGP> g;
        if (mj.contains("gp")) g = json_gp(mj.at("gp"));
        m.gpss.emplace(std::move(f), j.at("uses_inputs").get<bool>(), kind, std::move(g),
                       mj.at("noise_variance").get<double>());
        break;
      }
      case ModelKind::GpssBasis: {
        const auto& bj = j.at("basis");
        const auto lower = bj.at("lower").get<std::vector<double>>();
        const auto upper = bj.at("upper").get<std::vector<double>>();
        if (lower.size() != upper.size()) throw Error(ErrorCode::ParseError, "model file: basis bounds mismatch");
        std::vector<Interval> domain;
        for (std::size_t d = 0; d < lower.size(); ++d) domain.push_back({lower[d], upper[d]});
        const SineBasis basis = make_sine_basis(domain, bj.at("size").get<std::vector<int>>());
        StateTrajectory traj;
        const auto& tj = j.at("trajectory");
        traj.states = json_mat(tj.at("states"), 1);
        if (tj.contains("inputs")) traj.inputs = json_vec(tj.at("inputs"));
        BasisFitOptions opts{json_vec(j.at("prior_var")), j.at("noise_var").get<double>(), std::nullopt};
        const auto& mj = j.at("measurement");
        if (parse_measurement(mj.at("kind").get<std::string>()) == MeasurementKind::FirstState) {
          opts.measurement_noise_var = mj.at("noise_variance").get<double>();
        }
        m.basis = fit_basis_gpss_observed(traj, basis, opts);
        m.basis_traj = std::move(traj);
        m.basis_fit = std::move(opts);
        break;
      }
    }
    if (is_state_space(m.kind)) {
      const auto& fj = j.at("filter");
      m.filter.particles = fj.at("particles").get<int>();
      m.filter.initial_mean = json_vec(fj.at("initial_mean"));
      m.filter.initial_var = json_vec(fj.at("initial_var"));
      if (fj.contains("seed")) m.filter.seed = fj.at("seed").get<std::uint64_t>();
    }
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, "model file '" + path + "': " + e.what());
  }
}

}  // namespace gpsysid::cli
