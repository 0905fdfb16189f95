#pragma once

#include <optional>
#include <string>

#include <json.hpp>

#include "gpsysid/gp.hpp"
#include "gpsysid/gpss.hpp"
#include "gpsysid/lag_models.hpp"

namespace gpsysid::cli {

using json = nlohmann::ordered_json;

enum class ModelKind { Gp, Nfir, Narx, Noe, Temporal, Gpss, GpssBasis };

ModelKind parse_model_kind(const std::string& s);
std::string to_string(ModelKind kind);
inline bool is_lag(ModelKind k) {
  return k == ModelKind::Nfir || k == ModelKind::Narx || k == ModelKind::Noe;
}
inline bool is_state_space(ModelKind k) { return k == ModelKind::Gpss || k == ModelKind::GpssBasis; }

struct FilterSettings {
  int particles = 1000;
  std::optional<std::uint64_t> seed;
  Vector initial_mean;
  Vector initial_var;
};

/// Everything a model file carries, reconstructed. Exactly one of the model
/// members is populated according to `kind`.
struct StoredModel {
  ModelKind kind = ModelKind::Gp;
  std::string config_hash;
  std::optional<TrainedGP> gp;  // gp and temporal
  std::optional<LagModel> lag;
  std::optional<GpssModel> gpss;
  std::optional<BasisModel> basis;
  /// Basis models keep their training trajectory and priors so they can be
  /// refitted on load.
  std::optional<StateTrajectory> basis_traj;
  std::optional<BasisFitOptions> basis_fit;
  FilterSettings filter;
  json fit_report = json::object();
};

KernelFamily kernel_family_or_throw(const std::string& name, const std::string& field);

std::string serialize_model(const StoredModel& model);
/// Throws ParseError on malformed or unsupported files.
StoredModel load_model(const std::string& path);

}  // namespace gpsysid::cli
