#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "fg/params.hpp"
#include "fg/rng.hpp"

namespace fg {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

struct NodeKinematics {
  Vec2 position;
  double heading = 0.0;          // radians
  double epoch_remaining = 0.0;  // s until the next heading draw
};

struct HistogramBin {
  double lo;
  double hi;
  double mass;
  double mid() const { return 0.5 * (lo + hi); }
};

/// Contact-duration law plus the mobility statistics the analytic engine
/// consumes. Produced by calibration or by the exponential fallback.
struct ContactModel {
  double mean_contact_rate = 0.0;  // g, per node, 1/s
  std::vector<HistogramBin> duration_hist;
  double mean_duration = 0.0;      // s, histogram mean
  double t_star = 0.0;             // s
  double alpha = 0.0;              // 1/s
  double mean_nodes_in_rz = 0.0;
  double aggregate_contact_rate = 0.0;  // contacts/s inside the RZ
  std::uint64_t contacts_observed = 0;
  std::uint64_t sojourns_observed = 0;
  std::string source = "calibrated";

  /// Throws InvalidValue when masses do not sum to 1 or fields are not positive.
  void check() const;
};

nlohmann::json contact_model_to_json(const ContactModel& cm);
ContactModel contact_model_from_json(const nlohmann::json& doc);
ContactModel load_contact_model(const std::string& path);

/// Exponential duration law whose mean follows from Little's law
/// (g * E[t_c] = rho * pi * r^2), discretized on a fine grid. Used for
/// analytic-only runs without calibration.
ContactModel exponential_contact_model(const SystemParams& params);

/// Uniform positions, uniform headings, exponential epochs.
std::vector<NodeKinematics> initial_kinematics(const SystemParams& params, Rng& rng);

/// Random Direction step with reflections at the area boundary. Epoch
/// expiries inside the step redraw the heading at the exact expiry point.
void step_mobility(std::span<NodeKinematics> nodes, double dt, const SystemParams& params,
                   Rng& rng);

bool inside_rz(const Vec2& position, const SystemParams& params);

using ContactPair = std::pair<std::uint32_t, std::uint32_t>;

/// Unordered pairs within tx_range (inclusive), i < j, sorted by (i, j).
std::vector<ContactPair> detect_contacts(std::span<const Vec2> positions, double tx_range);

/// Mobility-only run measuring contact rate, contact durations (both
/// endpoints in the RZ at contact start), sojourns, entry rate and occupancy.
ContactModel calibrate_contact_model(const SystemParams& params, double duration,
                                     std::uint64_t seed);

}  // namespace fg
