#include <doctest.h>

#include <cmath>

#include "fg/pipeline.hpp"

using namespace fg;

// Analytic quantities against simulated estimates at the defaults, with a
// calibrated contact model.

namespace {

struct Setup {
  SystemParams params;
  AnalyticResult analytic;
  MetricsReport simulated;
};

const Setup& setup() {
  static const Setup s = [] {
    const auto base = validate(SystemParams{});
    const auto cm = calibrate_contact_model(base, 20000.0, 2024);
    const auto p = apply_contact_model(base, cm);
    return Setup{p, run_analytic(p, cm, 20000, 1), *run_batch(p, 10, 5, 10000).aggregate};
  }();
  return s;
}

}  // namespace

TEST_CASE("merge arrival rate matches the simulated merge-enqueue rate within 15%") {
  const auto& s = setup();
  INFO("analytic r = " << s.analytic.solution.r << ", simulated = " << s.simulated.merge_rate_hat);
  CHECK(std::abs(s.analytic.solution.r - s.simulated.merge_rate_hat) <=
        0.15 * s.simulated.merge_rate_hat);
}

TEST_CASE("node stored information matches the simulated fresh count within 25%") {
  const auto& s = setup();
  REQUIRE(s.analytic.stored_information);
  INFO("analytic = " << *s.analytic.stored_information
                     << ", simulated = " << s.simulated.stored_info_hat);
  CHECK(std::abs(*s.analytic.stored_information - s.simulated.stored_info_hat) <=
        0.25 * s.simulated.stored_info_hat);
}
