#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

namespace fg {

struct ContactModel;

/// Every scalar of the system model. Fields marked optional are filled by
/// validate(); after validation all of them are engaged.
struct SystemParams {
  // Area and mobility.
  int n_total = 200;
  double area_side = 200.0;      // m
  double rz_radius = 100.0;      // m, RZ concentric with the area
  double speed = 0.5;            // m/s
  double tx_range = 5.0;         // m
  double epoch_mean = 30.0;      // s, mean Random Direction epoch

  // D2D channel.
  double channel_rate = 1e7;     // bit/s
  double t0 = 0.0;               // s, connection setup

  // Models and observations.
  int model_count = 1;                           // M
  std::optional<int> subscription_limit;         // W; defaults to M
  double model_size = 1e4;                       // L, bits
  std::optional<double> min_model_size;          // L_m, defaults to L
  double bits_per_observation = 1.0;             // k
  double obs_rate = 0.1;                         // lambda, per model
  int recorders = 1;                             // Lambda
  double train_time = 5.0;                       // T_T
  double merge_time = 2.5;                       // T_M
  double obs_lifetime = 300.0;                   // tau_l
  double slot = 0.5;

  // Mean-field inputs; geometric defaults unless configured or calibrated.
  std::optional<double> n_rz;    // N
  std::optional<double> alpha;   // RZ entry rate
  std::optional<double> g;       // per-node contact rate
  std::optional<double> t_star;  // mean RZ sojourn
  double transfer_time = 0.0;    // T_L = L / channel_rate, derived

  // Analytic switches.
  bool condition_verbatim = false;
  bool dm_textbook = false;
  std::optional<double> staleness_delta;  // defaults to 1/lambda
  double damping = 0.5;

  // Estimators.
  double warmup_fraction = 0.3;
  double age_bucket = 5.0;

  /// Origin of each mean-field input: "geometric", "config" or "calibrated".
  std::map<std::string, std::string> provenance;

  // Accessors valid after validate().
  int W() const { return *subscription_limit; }
  double N() const { return *n_rz; }
  double w() const;                 // min(W/M, 1)
  int models_per_node() const;      // min(M, W)
  std::int64_t capacity() const;    // floor(L/k), observations per instance
  double delta() const { return staleness_delta.value_or(1.0 / obs_rate); }
};

struct EffectiveSubscription {
  double w;
  int m_eff;
};

EffectiveSubscription effective_subscription(int model_count, int subscription_limit);

struct Geometry {
  double n_rz;
  double alpha;
  double t_star;
};

/// N = n_total * pi R^2 / side^2, t* = sqrt(2) R / v, alpha = N / t*.
Geometry derive_geometry(const SystemParams& params);

/// Kinetic contact rate of isotropic constant-speed nodes at uniform density:
/// 2 r * rho * E|v_rel| with E|v_rel| = 4 v / pi.
double kinetic_contact_rate(const SystemParams& params);

/// Checks every invariant and fills derived fields. Throws fg::Error with
/// NonPositive / GeometryViolation / CapacityZero / InvalidValue.
SystemParams validate(SystemParams params);

/// Replaces the geometric mean-field defaults with calibrated values.
/// Values that came from the config file are left alone.
SystemParams apply_contact_model(SystemParams params, const ContactModel& cm);

/// Strict parse: unknown keys raise Errc::UnknownKey. Does not validate.
SystemParams params_from_json(const nlohmann::json& doc);

/// Fully-resolved echo (the config.resolved.json content).
nlohmann::json params_to_json(const SystemParams& params);

SystemParams load_config(const std::string& path);

}  // namespace fg
