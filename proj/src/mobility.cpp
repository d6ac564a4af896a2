#include "fg/mobility.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>

#include "fg/error.hpp"

namespace fg {

using nlohmann::json;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double wrap_angle(double h) {
  h = std::fmod(h, kTwoPi);
  return h < 0.0 ? h + kTwoPi : h;
}

// Straight segment with mirror reflections; length never exceeds the side.
void move_reflecting(NodeKinematics& node, double distance, double side) {
  node.position.x += std::cos(node.heading) * distance;
  node.position.y += std::sin(node.heading) * distance;
  if (node.position.x < 0.0) {
    node.position.x = -node.position.x;
    node.heading = std::numbers::pi - node.heading;
  } else if (node.position.x > side) {
    node.position.x = 2.0 * side - node.position.x;
    node.heading = std::numbers::pi - node.heading;
  }
  if (node.position.y < 0.0) {
    node.position.y = -node.position.y;
    node.heading = -node.heading;
  } else if (node.position.y > side) {
    node.position.y = 2.0 * side - node.position.y;
    node.heading = -node.heading;
  }
  node.position.x = std::clamp(node.position.x, 0.0, side);
  node.position.y = std::clamp(node.position.y, 0.0, side);
  node.heading = wrap_angle(node.heading);
}

}  // namespace

void ContactModel::check() const {
  if (duration_hist.empty()) throw Error(Errc::InvalidValue, "contact model histogram is empty");
  double total = 0.0;
  double mean = 0.0;
  for (const auto& bin : duration_hist) {
    if (bin.mass < 0.0 || !(bin.hi > bin.lo)) {
      throw Error(Errc::InvalidValue, "contact model histogram has an invalid bin");
    }
    total += bin.mass;
    mean += bin.mass * bin.mid();
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw Error(Errc::InvalidValue, "contact model histogram masses do not sum to 1");
  }
  if (std::abs(mean - mean_duration) > 1e-6) {
    throw Error(Errc::InvalidValue, "mean_duration disagrees with the histogram mean");
  }
  if (!(mean_contact_rate > 0.0 && t_star > 0.0 && alpha > 0.0 && mean_nodes_in_rz > 0.0)) {
    throw Error(Errc::InvalidValue, "contact model fields must be positive");
  }
}

json contact_model_to_json(const ContactModel& cm) {
  json edges = json::array();
  json lo = json::array();
  json hi = json::array();
  json mass = json::array();
  for (const auto& bin : cm.duration_hist) {
    lo.push_back(bin.lo);
    hi.push_back(bin.hi);
    mass.push_back(bin.mass);
  }
  return {
      {"mean_contact_rate", cm.mean_contact_rate},
      {"mean_duration", cm.mean_duration},
      {"t_star", cm.t_star},
      {"alpha", cm.alpha},
      {"mean_nodes_in_rz", cm.mean_nodes_in_rz},
      {"aggregate_contact_rate", cm.aggregate_contact_rate},
      {"contacts_observed", cm.contacts_observed},
      {"sojourns_observed", cm.sojourns_observed},
      {"source", cm.source},
      {"duration_hist", {{"lo", lo}, {"hi", hi}, {"mass", mass}}},
  };
}

ContactModel contact_model_from_json(const json& doc) {
  ContactModel cm;
  try {
    cm.mean_contact_rate = doc.at("mean_contact_rate").get<double>();
    cm.mean_duration = doc.at("mean_duration").get<double>();
    cm.t_star = doc.at("t_star").get<double>();
    cm.alpha = doc.at("alpha").get<double>();
    cm.mean_nodes_in_rz = doc.at("mean_nodes_in_rz").get<double>();
    cm.aggregate_contact_rate = doc.value("aggregate_contact_rate", 0.0);
    cm.contacts_observed = doc.value("contacts_observed", std::uint64_t{0});
    cm.sojourns_observed = doc.value("sojourns_observed", std::uint64_t{0});
    cm.source = doc.value("source", std::string("calibrated"));
    const auto& hist = doc.at("duration_hist");
    const auto lo = hist.at("lo").get<std::vector<double>>();
    const auto hi = hist.at("hi").get<std::vector<double>>();
    const auto mass = hist.at("mass").get<std::vector<double>>();
    if (lo.size() != hi.size() || lo.size() != mass.size()) {
      throw Error(Errc::InvalidValue, "duration_hist columns have different lengths");
    }
    for (std::size_t i = 0; i < lo.size(); ++i) cm.duration_hist.push_back({lo[i], hi[i], mass[i]});
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidValue, std::string("malformed contact model: ") + e.what());
  }
  cm.check();
  return cm;
}

ContactModel load_contact_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open contact model '" + path + "'");
  try {
    return contact_model_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw Error(Errc::InvalidValue, "contact model '" + path + "' is not valid JSON: " + e.what());
  }
}

ContactModel exponential_contact_model(const SystemParams& p) {
  const double g = p.g.value_or(kinetic_contact_rate(p));
  const double density = p.n_total / (p.area_side * p.area_side);
  const double mean = density * std::numbers::pi * p.tx_range * p.tx_range / g;
  constexpr int kBins = 6000;
  const double width = 30.0 * mean / kBins;

  ContactModel cm;
  cm.source = "exponential";
  double total = 0.0;
  for (int i = 0; i < kBins; ++i) {
    const double lo = i * width;
    const double hi = lo + width;
    const double mass = std::exp(-lo / mean) - std::exp(-hi / mean);
    cm.duration_hist.push_back({lo, hi, mass});
    total += mass;
  }
  double hist_mean = 0.0;
  for (auto& bin : cm.duration_hist) {
    bin.mass /= total;
    hist_mean += bin.mass * bin.mid();
  }
  const Geometry geo = derive_geometry(p);
  cm.mean_duration = hist_mean;
  cm.mean_contact_rate = g;
  cm.mean_nodes_in_rz = p.n_rz.value_or(geo.n_rz);
  cm.t_star = p.t_star.value_or(geo.t_star);
  cm.alpha = p.alpha.value_or(cm.mean_nodes_in_rz / cm.t_star);
  cm.aggregate_contact_rate = cm.mean_nodes_in_rz * g / 2.0;
  return cm;
}

std::vector<NodeKinematics> initial_kinematics(const SystemParams& p, Rng& rng) {
  std::vector<NodeKinematics> nodes(static_cast<std::size_t>(p.n_total));
  for (auto& node : nodes) {
    node.position = {rng.uniform(0.0, p.area_side), rng.uniform(0.0, p.area_side)};
    node.heading = rng.uniform(0.0, kTwoPi);
    node.epoch_remaining = rng.exponential(p.epoch_mean);
  }
  return nodes;
}

void step_mobility(std::span<NodeKinematics> nodes, double dt, const SystemParams& p, Rng& rng) {
  for (auto& node : nodes) {
    double remaining = dt;
    while (remaining > 0.0) {
      const double segment = std::min(remaining, node.epoch_remaining);
      move_reflecting(node, p.speed * segment, p.area_side);
      remaining -= segment;
      node.epoch_remaining -= segment;
      if (node.epoch_remaining <= 0.0) {
        node.heading = rng.uniform(0.0, kTwoPi);
        node.epoch_remaining = rng.exponential(p.epoch_mean);
      }
    }
  }
}

bool inside_rz(const Vec2& pos, const SystemParams& p) {
  const double c = p.area_side / 2.0;
  const double dx = pos.x - c;
  const double dy = pos.y - c;
  return dx * dx + dy * dy <= p.rz_radius * p.rz_radius;
}

std::vector<ContactPair> detect_contacts(std::span<const Vec2> positions, double tx_range) {
  const std::size_t n = positions.size();
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0U);
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    return positions[a].x < positions[b].x || (positions[a].x == positions[b].x && a < b);
  });
  const double r2 = tx_range * tx_range;
  std::vector<ContactPair> pairs;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2& pi = positions[order[i]];
    for (std::size_t j = i + 1; j < n; ++j) {
      const Vec2& pj = positions[order[j]];
      if (pj.x - pi.x > tx_range) break;
      const double dx = pj.x - pi.x;
      const double dy = pj.y - pi.y;
      if (dx * dx + dy * dy <= r2) {
        pairs.emplace_back(std::min(order[i], order[j]), std::max(order[i], order[j]));
      }
    }
  }
  std::sort(pairs.begin(), pairs.end());
  return pairs;
}

namespace {

struct OpenContact {
  ContactPair pair;
  double start;
  bool counted;  // both endpoints in the RZ at start, start observed
};

}  // namespace

ContactModel calibrate_contact_model(const SystemParams& params, double duration,
                                     std::uint64_t seed) {
  const SystemParams p = validate(params);
  if (!(duration >= 10.0 * *p.t_star)) {
    throw Error(Errc::InvalidValue, "calibration duration must be at least 10 * t_star",
                "duration");
  }
  Rng rng(seed);
  auto nodes = initial_kinematics(p, rng);
  const std::size_t n = nodes.size();
  const auto slots = static_cast<std::int64_t>(std::ceil(duration / p.slot));

  std::vector<Vec2> positions(n);
  std::vector<char> in_rz(n, 0);
  std::vector<double> entry_time(n, std::numeric_limits<double>::quiet_NaN());
  std::vector<OpenContact> open;
  std::vector<OpenContact> next_open;
  std::vector<std::int64_t> duration_slots;

  std::uint64_t entries = 0;
  double sojourn_sum = 0.0;
  std::uint64_t sojourns = 0;
  double occupancy_sum = 0.0;

  for (std::int64_t s = 0; s < slots; ++s) {
    if (s > 0) step_mobility(nodes, p.slot, p, rng);
    const double now = static_cast<double>(s) * p.slot;
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i) {
      positions[i] = nodes[i].position;
      const bool in = inside_rz(positions[i], p);
      if (in && !in_rz[i] && s > 0) {
        ++entries;
        entry_time[i] = now;
      } else if (!in && in_rz[i] && !std::isnan(entry_time[i])) {
        sojourn_sum += now - entry_time[i];
        ++sojourns;
      }
      if (!in) entry_time[i] = std::numeric_limits<double>::quiet_NaN();
      in_rz[i] = in ? 1 : 0;
      count += in ? 1 : 0;
    }
    occupancy_sum += static_cast<double>(count);

    const auto pairs = detect_contacts(positions, p.tx_range);
    next_open.clear();
    std::size_t k = 0;
    for (const auto& pair : pairs) {
      while (k < open.size() && open[k].pair < pair) {
        if (open[k].counted) {
          duration_slots.push_back(std::llround((now - open[k].start) / p.slot));
        }
        ++k;
      }
      if (k < open.size() && open[k].pair == pair) {
        next_open.push_back(open[k]);
        ++k;
      } else {
        const bool counted = s > 0 && in_rz[pair.first] && in_rz[pair.second];
        next_open.push_back({pair, now, counted});
      }
    }
    for (; k < open.size(); ++k) {
      if (open[k].counted) duration_slots.push_back(std::llround((now - open[k].start) / p.slot));
    }
    std::swap(open, next_open);
  }

  const std::uint64_t started =
      duration_slots.size() +
      static_cast<std::uint64_t>(std::count_if(open.begin(), open.end(),
                                               [](const OpenContact& c) { return c.counted; }));
  if (duration_slots.size() < 1000) {
    throw Error(Errc::InsufficientSamples,
                "only " + std::to_string(duration_slots.size()) + " contacts observed (< 1000)");
  }

  const double elapsed = static_cast<double>(slots - 1) * p.slot;
  const double node_time = occupancy_sum * p.slot;

  ContactModel cm;
  cm.source = "calibrated";
  cm.contacts_observed = duration_slots.size();
  cm.sojourns_observed = sojourns;
  cm.mean_nodes_in_rz = occupancy_sum / static_cast<double>(slots);
  cm.mean_contact_rate = 2.0 * static_cast<double>(started) / node_time;
  cm.aggregate_contact_rate = static_cast<double>(started) / elapsed;
  cm.alpha = static_cast<double>(entries) / elapsed;
  cm.t_star = sojourns > 0 ? sojourn_sum / static_cast<double>(sojourns)
                           : cm.mean_nodes_in_rz / cm.alpha;

  const std::int64_t max_k = *std::max_element(duration_slots.begin(), duration_slots.end());
  std::vector<std::uint64_t> counts(static_cast<std::size_t>(max_k) + 1, 0);
  for (auto d : duration_slots) ++counts[static_cast<std::size_t>(d)];
  const auto total = static_cast<double>(duration_slots.size());
  double mean = 0.0;
  for (std::int64_t d = 1; d <= max_k; ++d) {
    const double mass = static_cast<double>(counts[static_cast<std::size_t>(d)]) / total;
    if (mass == 0.0) continue;
    HistogramBin bin{(static_cast<double>(d) - 0.5) * p.slot, (static_cast<double>(d) + 0.5) * p.slot,
                     mass};
    mean += mass * bin.mid();
    cm.duration_hist.push_back(bin);
  }
  cm.mean_duration = mean;
  return cm;
}

}  // namespace fg
