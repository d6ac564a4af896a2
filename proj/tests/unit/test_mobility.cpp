#include <doctest.h>

#include <cmath>
#include <numbers>

#include "fg/error.hpp"
#include "fg/mobility.hpp"

using namespace fg;

TEST_CASE("nodes stay inside the area under reflection") {
  const auto p = validate(SystemParams{});
  Rng rng(3);
  auto nodes = initial_kinematics(p, rng);
  for (int s = 0; s < 2000; ++s) {
    step_mobility(nodes, p.slot, p, rng);
    for (const auto& n : nodes) {
      REQUIRE(n.position.x >= 0.0);
      REQUIRE(n.position.x <= p.area_side);
      REQUIRE(n.position.y >= 0.0);
      REQUIRE(n.position.y <= p.area_side);
    }
  }
}

TEST_CASE("reflection at a wall mirrors the position and heading") {
  auto p = validate(SystemParams{});
  p.epoch_mean = 1e9;
  Rng rng(1);
  NodeKinematics n{{199.9, 100.0}, 0.0, 1e9};
  std::span<NodeKinematics> one(&n, 1);
  step_mobility(one, 1.0, p, rng);  // 0.5 m towards x = 200
  CHECK(n.position.x == doctest::Approx(199.6));
  CHECK(n.position.y == doctest::Approx(100.0));
  CHECK(std::cos(n.heading) == doctest::Approx(-1.0));
}

TEST_CASE("stationary positions are uniform over the area") {
  // One snapshot per independent replica, 5x5 grid.
  const auto p = validate(SystemParams{});
  std::vector<double> counts(25, 0.0);
  double total = 0.0;
  for (std::uint64_t rep = 0; rep < 100; ++rep) {
    Rng rng(rep);
    auto nodes = initial_kinematics(p, rng);
    for (int s = 0; s < 400; ++s) step_mobility(nodes, p.slot, p, rng);
    for (const auto& n : nodes) {
      const int cx = std::min(4, static_cast<int>(n.position.x / 40.0));
      const int cy = std::min(4, static_cast<int>(n.position.y / 40.0));
      counts[static_cast<std::size_t>(cx * 5 + cy)] += 1.0;
      total += 1.0;
    }
  }
  double chi2 = 0.0;
  const double expected = total / 25.0;
  for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
  // chi-square 0.999 quantile with 24 degrees of freedom
  CHECK(chi2 < 51.18);
}

TEST_CASE("contact detection matches brute force") {
  Rng rng(5);
  std::vector<Vec2> pts(300);
  for (auto& v : pts) v = {rng.uniform(0.0, 100.0), rng.uniform(0.0, 100.0)};
  pts[10] = {50.0, 50.0};
  pts[11] = {53.0, 54.0};  // exactly 5 m apart: inclusive boundary
  const auto fast = detect_contacts(pts, 5.0);
  std::vector<ContactPair> brute;
  for (std::uint32_t i = 0; i < pts.size(); ++i) {
    for (std::uint32_t j = i + 1; j < pts.size(); ++j) {
      const double dx = pts[i].x - pts[j].x;
      const double dy = pts[i].y - pts[j].y;
      if (dx * dx + dy * dy <= 25.0) brute.emplace_back(i, j);
    }
  }
  CHECK(fast == brute);
  CHECK(std::binary_search(fast.begin(), fast.end(), ContactPair{10, 11}));
}

TEST_CASE("rz membership") {
  const auto p = validate(SystemParams{});
  CHECK(inside_rz({100.0, 100.0}, p));
  CHECK(inside_rz({200.0, 100.0}, p));
  CHECK_FALSE(inside_rz({0.0, 0.0}, p));
}

TEST_CASE("exponential fallback obeys the Little's-law mean") {
  const auto p = validate(SystemParams{});
  const auto cm = exponential_contact_model(p);
  double mass = 0.0;
  for (const auto& b : cm.duration_hist) mass += b.mass;
  CHECK(mass == doctest::Approx(1.0));
  const double expected = 0.005 * std::numbers::pi * 25.0 / *p.g;
  CHECK(cm.mean_duration == doctest::Approx(expected).epsilon(1e-3));
  CHECK_NOTHROW(cm.check());
}

TEST_CASE("contact model json round trip") {
  const auto cm = exponential_contact_model(validate(SystemParams{}));
  const auto back = contact_model_from_json(contact_model_to_json(cm));
  CHECK(back.duration_hist.size() == cm.duration_hist.size());
  CHECK(back.mean_contact_rate == cm.mean_contact_rate);
  CHECK(back.duration_hist[17].mass == cm.duration_hist[17].mass);
}

TEST_CASE("calibration reproduces the flux and kinetic identities") {
  const auto p = validate(SystemParams{});
  const auto cm = calibrate_contact_model(p, 6000.0, 2);
  // Occupancy pi R^2 n / side^2, sojourn pi R / (2 v), rate 2 r rho 4 v / pi.
  CHECK(cm.mean_nodes_in_rz == doctest::Approx(157.08).epsilon(0.03));
  CHECK(cm.t_star == doctest::Approx(std::numbers::pi * 100.0 / 1.0).epsilon(0.1));
  CHECK(cm.mean_contact_rate == doctest::Approx(*p.g).epsilon(0.1));
  CHECK_NOTHROW(cm.check());
}

TEST_CASE("calibration errors") {
  auto p = validate(SystemParams{});
  CHECK_THROWS_AS(calibrate_contact_model(p, 100.0, 1), Error);
  p.n_total = 10;
  p = validate(p);
  try {
    calibrate_contact_model(p, 3000.0, 1);
    FAIL("expected InsufficientSamples");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::InsufficientSamples);
  }
}
