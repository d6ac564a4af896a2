#include <doctest.h>

#include <cmath>
#include <numbers>

#include "fg/error.hpp"
#include "fg/mobility.hpp"
#include "fg/params.hpp"

using namespace fg;
using nlohmann::json;

namespace {

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no fg::Error thrown");
  return Errc::Usage;
}

}  // namespace

TEST_CASE("defaults resolve to the geometric mean-field inputs") {
  const auto p = validate(SystemParams{});
  CHECK(p.N() == doctest::Approx(200.0 * std::numbers::pi / 4.0).epsilon(1e-12));
  CHECK(*p.t_star == doctest::Approx(std::numbers::sqrt2 * 200.0).epsilon(1e-12));
  CHECK(*p.alpha == doctest::Approx(p.N() / *p.t_star).epsilon(1e-12));
  // 2 r rho (4 v / pi) with rho = 200 / 200^2
  CHECK(*p.g == doctest::Approx(2.0 * 5.0 * 0.005 * 2.0 / std::numbers::pi).epsilon(1e-12));
  CHECK(p.W() == 1);
  CHECK(p.w() == 1.0);
  CHECK(p.capacity() == 10000);
  CHECK(p.transfer_time == doctest::Approx(1e-3));
  CHECK(p.delta() == doctest::Approx(10.0));
  CHECK(p.provenance.at("n_rz") == "geometric");
}

TEST_CASE("effective subscription") {
  CHECK(effective_subscription(10, 3).w == doctest::Approx(0.3));
  CHECK(effective_subscription(10, 3).m_eff == 3);
  CHECK(effective_subscription(2, 5).w == 1.0);
  CHECK(effective_subscription(2, 5).m_eff == 2);
}

TEST_CASE("validation errors") {
  SUBCASE("non-positive") {
    SystemParams p;
    p.speed = 0.0;
    CHECK(code_of([&] { validate(p); }) == Errc::NonPositive);
    p = {};
    p.model_count = 0;
    CHECK(code_of([&] { validate(p); }) == Errc::NonPositive);
  }
  SUBCASE("geometry") {
    SystemParams p;
    p.rz_radius = 150.0;
    CHECK(code_of([&] { validate(p); }) == Errc::GeometryViolation);
    p = {};
    p.tx_range = 100.0;
    CHECK(code_of([&] { validate(p); }) == Errc::GeometryViolation);
  }
  SUBCASE("capacity") {
    SystemParams p;
    p.model_size = 10.0;
    p.bits_per_observation = 11.0;
    CHECK(code_of([&] { validate(p); }) == Errc::CapacityZero);
  }
  SUBCASE("recorders above the subscription limit") {
    SystemParams p;
    p.model_count = 4;
    p.subscription_limit = 2;
    p.recorders = 3;
    CHECK(code_of([&] { validate(p); }) == Errc::InvalidValue);
  }
  SUBCASE("damping range") {
    SystemParams p;
    p.damping = 0.0;
    CHECK(code_of([&] { validate(p); }) == Errc::InvalidValue);
  }
}

TEST_CASE("json parsing is strict") {
  CHECK(code_of([] { params_from_json(json{{"speeed", 1.0}}); }) == Errc::UnknownKey);
  CHECK(code_of([] { params_from_json(json{{"analytic", {{"dampng", 0.5}}}}); }) ==
        Errc::UnknownKey);
  CHECK(code_of([] { params_from_json(json{{"t0", 1.0}, {"protocol", {{"t0_s", 2.0}}}}); }) ==
        Errc::InvalidValue);
  CHECK(code_of([] { params_from_json(json{{"speed", "fast"}}); }) == Errc::InvalidValue);
  CHECK(code_of([] { params_from_json(json{{"transfer_time", 5.0}}); }) == Errc::InvalidValue);

  const auto p = params_from_json(json{{"protocol", {{"t0_s", 0.25}}},
                                       {"analytic", {{"condition_verbatim", true}}},
                                       {"metrics", {{"warmup_fraction", 0.5}}}});
  CHECK(p.t0 == 0.25);
  CHECK(p.condition_verbatim);
  CHECK(p.warmup_fraction == 0.5);
}

TEST_CASE("resolved echo re-validates to the same parameters") {
  SystemParams in;
  in.model_count = 3;
  in.obs_rate = 0.5;
  in.g = 0.02;
  const auto p = validate(in);
  CHECK(p.provenance.at("g") == "config");
  const json echo = params_to_json(p);
  const auto again = validate(params_from_json(echo));
  CHECK(params_to_json(again) == echo);
}

TEST_CASE("explicit config values survive calibration overlay") {
  SystemParams in;
  in.g = 0.05;
  const auto p = validate(in);
  ContactModel cm = exponential_contact_model(p);
  cm.mean_contact_rate = 0.01;
  cm.mean_nodes_in_rz = 150.0;
  cm.t_star = 300.0;
  cm.alpha = 0.5;
  const auto q = apply_contact_model(p, cm);
  CHECK(*q.g == 0.05);
  CHECK(q.provenance.at("g") == "config");
  CHECK(q.N() == 150.0);
  CHECK(q.provenance.at("n_rz") == "calibrated");
  CHECK(*q.alpha == 0.5);
}
