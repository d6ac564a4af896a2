#include "fg/params.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

#include "fg/error.hpp"
#include "fg/mobility.hpp"

namespace fg {

using nlohmann::json;

const char* errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::NonPositive: return "NonPositive";
    case Errc::GeometryViolation: return "GeometryViolation";
    case Errc::CapacityZero: return "CapacityZero";
    case Errc::UnknownKey: return "UnknownKey";
    case Errc::InvalidValue: return "InvalidValue";
    case Errc::InsufficientSamples: return "InsufficientSamples";
    case Errc::NoConvergence: return "NoConvergence";
    case Errc::DegenerateContactModel: return "DegenerateContactModel";
    case Errc::UnstableSystem: return "UnstableSystem";
    case Errc::CurveUnavailable: return "CurveUnavailable";
    case Errc::ModelMismatch: return "ModelMismatch";
    case Errc::NotSubscribed: return "NotSubscribed";
    case Errc::EmptyWindow: return "EmptyWindow";
    case Errc::TooFewObservations: return "TooFewObservations";
    case Errc::NoInstances: return "NoInstances";
    case Errc::InsufficientRuns: return "InsufficientRuns";
    case Errc::AllUnstable: return "AllUnstable";
    case Errc::Io: return "Io";
    case Errc::Usage: return "Usage";
  }
  return "Unknown";
}

double SystemParams::w() const { return effective_subscription(model_count, W()).w; }

int SystemParams::models_per_node() const {
  return effective_subscription(model_count, W()).m_eff;
}

std::int64_t SystemParams::capacity() const {
  return static_cast<std::int64_t>(std::floor(model_size / bits_per_observation));
}

EffectiveSubscription effective_subscription(int model_count, int subscription_limit) {
  const double w = std::min(static_cast<double>(subscription_limit) / model_count, 1.0);
  return {w, std::min(model_count, subscription_limit)};
}

Geometry derive_geometry(const SystemParams& p) {
  const double n_rz = p.n_total * std::numbers::pi * p.rz_radius * p.rz_radius /
                      (p.area_side * p.area_side);
  const double t_star = std::numbers::sqrt2 * p.rz_radius / p.speed;
  return {n_rz, n_rz / t_star, t_star};
}

double kinetic_contact_rate(const SystemParams& p) {
  const double density = p.n_total / (p.area_side * p.area_side);
  return 2.0 * p.tx_range * density * 4.0 * p.speed / std::numbers::pi;
}

namespace {

void require_positive(double value, const char* field) {
  if (!(value > 0.0) || !std::isfinite(value)) {
    throw Error(Errc::NonPositive, std::string(field) + " must be strictly positive", field);
  }
}

void require_non_negative(double value, const char* field) {
  if (!(value >= 0.0) || !std::isfinite(value)) {
    throw Error(Errc::NonPositive, std::string(field) + " must be non-negative", field);
  }
}

void fill(std::optional<double>& slot, double value, SystemParams& p, const char* key) {
  if (!slot) {
    slot = value;
    p.provenance[key] = "geometric";
  } else if (!p.provenance.contains(key)) {
    p.provenance[key] = "config";
  }
}

}  // namespace

SystemParams validate(SystemParams p) {
  if (p.n_total < 1) throw Error(Errc::NonPositive, "n_total must be >= 1", "n_total");
  require_positive(p.area_side, "area_side");
  require_positive(p.rz_radius, "rz_radius");
  require_positive(p.speed, "speed");
  require_positive(p.tx_range, "tx_range");
  require_positive(p.epoch_mean, "mobility.epoch_mean_s");
  require_positive(p.channel_rate, "channel_rate");
  require_non_negative(p.t0, "t0");
  if (p.model_count < 1) throw Error(Errc::NonPositive, "model_count must be >= 1", "model_count");
  require_positive(p.model_size, "model_size");
  require_positive(p.bits_per_observation, "bits_per_observation");
  // Zero rates and compute times are legal degenerate inputs for the
  // analytic engine (pure churn, instantaneous service).
  require_non_negative(p.obs_rate, "obs_rate");
  require_non_negative(p.train_time, "train_time");
  require_non_negative(p.merge_time, "merge_time");
  require_positive(p.obs_lifetime, "obs_lifetime");
  require_positive(p.slot, "slot");
  require_positive(p.age_bucket, "metrics.age_bucket_s");
  if (!(p.damping > 0.0 && p.damping <= 1.0)) {
    throw Error(Errc::InvalidValue, "analytic.damping must be in (0, 1]", "analytic.damping");
  }
  if (!(p.warmup_fraction >= 0.0 && p.warmup_fraction < 1.0)) {
    throw Error(Errc::InvalidValue, "metrics.warmup_fraction must be in [0, 1)",
                "metrics.warmup_fraction");
  }

  if (p.rz_radius > p.area_side / 2.0) {
    throw Error(Errc::GeometryViolation, "rz_radius must not exceed area_side / 2", "rz_radius");
  }
  if (p.tx_range >= p.rz_radius) {
    throw Error(Errc::GeometryViolation, "tx_range must be smaller than rz_radius", "tx_range");
  }

  if (!p.subscription_limit) p.subscription_limit = p.model_count;
  if (*p.subscription_limit < 1) {
    throw Error(Errc::NonPositive, "subscription_limit must be >= 1", "subscription_limit");
  }
  if (!p.min_model_size) p.min_model_size = p.model_size;
  require_positive(*p.min_model_size, "min_model_size");
  if (p.model_size < *p.min_model_size) {
    throw Error(Errc::InvalidValue, "model_size must be >= min_model_size", "model_size");
  }
  if (p.capacity() < 1) {
    throw Error(Errc::CapacityZero, "floor(model_size / bits_per_observation) is zero",
                "bits_per_observation");
  }

  const Geometry geo = derive_geometry(p);
  fill(p.n_rz, geo.n_rz, p, "n_rz");
  fill(p.t_star, geo.t_star, p, "t_star");
  fill(p.alpha, *p.n_rz / *p.t_star, p, "alpha");
  fill(p.g, kinetic_contact_rate(p), p, "g");
  require_positive(*p.n_rz, "n_rz");
  require_non_negative(*p.alpha, "alpha");
  require_non_negative(*p.g, "g");
  require_positive(*p.t_star, "t_star");
  if (p.staleness_delta) require_positive(*p.staleness_delta, "analytic.staleness_delta_s");

  if (p.recorders < 1) throw Error(Errc::NonPositive, "recorders must be >= 1", "recorders");
  if (p.recorders > std::min<double>(p.W(), *p.n_rz)) {
    throw Error(Errc::InvalidValue, "recorders must not exceed min(subscription_limit, n_rz)",
                "recorders");
  }

  p.transfer_time = p.model_size / p.channel_rate;
  return p;
}

SystemParams apply_contact_model(SystemParams p, const ContactModel& cm) {
  auto take = [&](std::optional<double>& slot, double value, const char* key) {
    if (p.provenance[key] == "config") return;
    slot = value;
    p.provenance[key] = "calibrated";
  };
  take(p.n_rz, cm.mean_nodes_in_rz, "n_rz");
  take(p.alpha, cm.alpha, "alpha");
  take(p.g, cm.mean_contact_rate, "g");
  take(p.t_star, cm.t_star, "t_star");
  return validate(std::move(p));
}

namespace {

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) {
    throw Error(Errc::InvalidValue, where + " must be a JSON object", where);
  }
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.contains(key)) {
      const std::string path = where.empty() ? key : where + "." + key;
      throw Error(Errc::UnknownKey, "unknown config key '" + path + "'", path);
    }
  }
}

template <class T>
void read(const json& obj, const char* key, T& out, const std::string& where = {}) {
  if (!obj.contains(key)) return;
  const std::string path = where.empty() ? key : where + "." + key;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidValue, "config key '" + path + "': " + e.what(), path);
  }
}

template <class T>
void read(const json& obj, const char* key, std::optional<T>& out, const std::string& where = {}) {
  if (!obj.contains(key) || obj.at(key).is_null()) return;
  T value{};
  read(obj, key, value, where);
  out = value;
}

}  // namespace

SystemParams params_from_json(const json& doc) {
  static const std::set<std::string> top = {
      "n_total", "area_side", "rz_radius", "speed", "tx_range", "channel_rate", "t0",
      "model_count", "subscription_limit", "model_size", "min_model_size",
      "bits_per_observation", "obs_rate", "recorders", "train_time", "merge_time",
      "obs_lifetime", "slot", "n_rz", "alpha", "g", "t_star", "transfer_time", "mobility",
      "protocol", "analytic", "metrics", "provenance"};
  check_keys(doc, top, "");

  SystemParams p;
  read(doc, "n_total", p.n_total);
  read(doc, "area_side", p.area_side);
  read(doc, "rz_radius", p.rz_radius);
  read(doc, "speed", p.speed);
  read(doc, "tx_range", p.tx_range);
  read(doc, "channel_rate", p.channel_rate);
  read(doc, "model_count", p.model_count);
  read(doc, "subscription_limit", p.subscription_limit);
  read(doc, "model_size", p.model_size);
  read(doc, "min_model_size", p.min_model_size);
  read(doc, "bits_per_observation", p.bits_per_observation);
  read(doc, "obs_rate", p.obs_rate);
  read(doc, "recorders", p.recorders);
  read(doc, "train_time", p.train_time);
  read(doc, "merge_time", p.merge_time);
  read(doc, "obs_lifetime", p.obs_lifetime);
  read(doc, "slot", p.slot);
  read(doc, "n_rz", p.n_rz);
  read(doc, "alpha", p.alpha);
  read(doc, "g", p.g);
  read(doc, "t_star", p.t_star);

  std::optional<double> t0_top;
  std::optional<double> t0_protocol;
  read(doc, "t0", t0_top);

  if (doc.contains("mobility")) {
    const auto& m = doc.at("mobility");
    check_keys(m, {"epoch_mean_s"}, "mobility");
    read(m, "epoch_mean_s", p.epoch_mean, "mobility");
  }
  if (doc.contains("protocol")) {
    const auto& pr = doc.at("protocol");
    check_keys(pr, {"t0_s"}, "protocol");
    read(pr, "t0_s", t0_protocol, "protocol");
  }
  if (t0_top && t0_protocol && *t0_top != *t0_protocol) {
    throw Error(Errc::InvalidValue, "t0 and protocol.t0_s disagree", "t0");
  }
  p.t0 = t0_top.value_or(t0_protocol.value_or(0.0));

  if (doc.contains("analytic")) {
    const auto& a = doc.at("analytic");
    check_keys(a, {"condition_verbatim", "dm_textbook", "staleness_delta_s", "damping"},
               "analytic");
    read(a, "condition_verbatim", p.condition_verbatim, "analytic");
    read(a, "dm_textbook", p.dm_textbook, "analytic");
    read(a, "staleness_delta_s", p.staleness_delta, "analytic");
    read(a, "damping", p.damping, "analytic");
  }
  if (doc.contains("metrics")) {
    const auto& m = doc.at("metrics");
    check_keys(m, {"warmup_fraction", "age_bucket_s"}, "metrics");
    read(m, "warmup_fraction", p.warmup_fraction, "metrics");
    read(m, "age_bucket_s", p.age_bucket, "metrics");
  }
  if (doc.contains("provenance")) {
    const auto& prov = doc.at("provenance");
    check_keys(prov, {"n_rz", "alpha", "g", "t_star"}, "provenance");
    for (const auto& [key, value] : prov.items()) {
      // Echoed configs keep their recorded origin; anything else is config.
      if (value.is_string() && doc.contains(key)) p.provenance[key] = value.get<std::string>();
    }
  }

  if (doc.contains("transfer_time")) {
    double echoed = 0.0;
    read(doc, "transfer_time", echoed);
    const double expected = p.model_size / p.channel_rate;
    if (std::abs(echoed - expected) > 1e-12 * std::max(1.0, expected)) {
      throw Error(Errc::InvalidValue, "transfer_time must equal model_size / channel_rate",
                  "transfer_time");
    }
  }
  return p;
}

json params_to_json(const SystemParams& p) {
  json doc = {
      {"n_total", p.n_total},
      {"area_side", p.area_side},
      {"rz_radius", p.rz_radius},
      {"speed", p.speed},
      {"tx_range", p.tx_range},
      {"channel_rate", p.channel_rate},
      {"t0", p.t0},
      {"model_count", p.model_count},
      {"model_size", p.model_size},
      {"bits_per_observation", p.bits_per_observation},
      {"obs_rate", p.obs_rate},
      {"recorders", p.recorders},
      {"train_time", p.train_time},
      {"merge_time", p.merge_time},
      {"obs_lifetime", p.obs_lifetime},
      {"slot", p.slot},
      {"transfer_time", p.transfer_time},
      {"mobility", {{"epoch_mean_s", p.epoch_mean}}},
      {"analytic",
       {{"condition_verbatim", p.condition_verbatim},
        {"dm_textbook", p.dm_textbook},
        {"damping", p.damping}}},
      {"metrics", {{"warmup_fraction", p.warmup_fraction}, {"age_bucket_s", p.age_bucket}}},
      {"provenance", p.provenance},
  };
  if (p.subscription_limit) doc["subscription_limit"] = *p.subscription_limit;
  if (p.min_model_size) doc["min_model_size"] = *p.min_model_size;
  if (p.n_rz) doc["n_rz"] = *p.n_rz;
  if (p.alpha) doc["alpha"] = *p.alpha;
  if (p.g) doc["g"] = *p.g;
  if (p.t_star) doc["t_star"] = *p.t_star;
  if (p.staleness_delta) doc["analytic"]["staleness_delta_s"] = *p.staleness_delta;
  return doc;
}

SystemParams load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open config file '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(Errc::InvalidValue, "config '" + path + "' is not valid JSON: " + e.what());
  }
  return params_from_json(doc);
}

}  // namespace fg
