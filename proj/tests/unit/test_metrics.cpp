#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "fg/error.hpp"
#include "fg/metrics.hpp"

using namespace fg;

namespace {

// Constant series: 100 nodes, 2 models with 80 and 60 holders, 10 busy.
RawMetrics synthetic(std::size_t slots = 100) {
  RawMetrics r;
  r.slot = 0.5;
  r.model_count = 2;
  r.obs_lifetime = 300.0;
  r.age_bucket = 5.0;
  r.warmup_fraction = 0.3;
  for (std::size_t s = 0; s < slots; ++s) {
    r.time.push_back(0.5 * (s + 1));
    r.in_rz.push_back(100);
    r.busy.push_back(10);
    r.merge_queue.push_back(0);
    r.train_queue.push_back(0);
    r.merges_enqueued.push_back(5);
    r.holders.push_back(80);
    r.holders.push_back(60);
    r.stored_fresh.push_back(300.0);
    r.staleness_sum.push_back(140.0 * 42.0);
    r.staleness_n.push_back(140);
    r.generated.push_back(0);
    r.lost.push_back(0);
  }
  r.obs_curve_sum.assign(60, 0.0);
  for (std::size_t k = 0; k < 60; ++k) r.obs_curve_sum[k] = 200.0 * 0.064;
  r.obs_curve_count = 200;
  return r;
}

}  // namespace

TEST_CASE("estimators return the constants of a synthetic run") {
  const auto raw = synthetic();
  const auto av = availability_series(raw, 0.3);
  CHECK(av.per_model[0] == doctest::Approx(0.8));
  CHECK(av.per_model[1] == doctest::Approx(0.6));
  CHECK(av.a_hat == doctest::Approx(0.7));
  CHECK(av.busy_hat == doctest::Approx(0.1));
  CHECK(staleness_estimate(raw, 0.3) == doctest::Approx(42.0));
  CHECK(stored_information_estimate(raw, 0.3) == doctest::Approx(3.0));
  CHECK(merge_rate_estimate(raw, 0.3) == doctest::Approx(0.1));
  const auto curve = observation_availability_curve(raw);
  CHECK(curve.age.front() == doctest::Approx(2.5));
  CHECK(curve.age.back() == doctest::Approx(297.5));
  for (double v : curve.value) CHECK(v == doctest::Approx(0.064));
}

TEST_CASE("full availability") {
  auto raw = synthetic();
  std::fill(raw.holders.begin(), raw.holders.end(), 100);
  CHECK(availability_series(raw, 0.0).a_hat == 1.0);
}

TEST_CASE("estimator errors") {
  auto raw = synthetic();
  CHECK_THROWS_AS(availability_series(raw, 1.0), Error);
  auto empty = synthetic(0);
  try {
    availability_series(empty, 0.3);
    FAIL("expected EmptyWindow");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::EmptyWindow);
  }
  raw.obs_curve_count = 99;
  try {
    observation_availability_curve(raw);
    FAIL("expected TooFewObservations");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::TooFewObservations);
  }
  std::fill(raw.staleness_n.begin(), raw.staleness_n.end(), 0);
  try {
    staleness_estimate(raw, 0.3);
    FAIL("expected NoInstances");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::NoInstances);
  }
}

TEST_CASE("warmup only drops the leading slots") {
  auto raw = synthetic();
  for (std::size_t s = 0; s < 50; ++s) raw.holders[2 * s] = 0;
  CHECK(availability_series(raw, 0.5).per_model[0] == doctest::Approx(0.8));
  CHECK(availability_series(raw, 0.0).per_model[0] == doctest::Approx(0.4));
}

TEST_CASE("aggregation") {
  const auto base = compute_report(synthetic(), 0.3);
  SUBCASE("identical runs have zero width") {
    const std::vector<MetricsReport> rs(4, base);
    const auto agg = aggregate_runs(rs);
    CHECK(agg.a_hat == doctest::Approx(base.a_hat));
    CHECK(agg.ci95.a_hat == 0.0);
    CHECK(agg.runs == 4);
  }
  SUBCASE("student-t half width") {
    std::vector<double> v = {1.0, 2.0, 3.0};
    // sd 1, t(0.975, 2) = 4.302653
    CHECK(ci95_half_width(v) == doctest::Approx(4.302653 / std::sqrt(3.0)).epsilon(1e-6));
  }
  SUBCASE("order does not matter") {
    std::vector<MetricsReport> rs;
    for (int i = 0; i < 5; ++i) {
      auto r = base;
      r.a_hat = 0.1 * i + 0.013;
      r.staleness_hat = 40.0 + 3.7 * i * i;
      rs.push_back(r);
    }
    auto shuffled = rs;
    std::reverse(shuffled.begin(), shuffled.end());
    std::swap(shuffled[1], shuffled[3]);
    const auto x = aggregate_runs(rs);
    const auto y = aggregate_runs(shuffled);
    CHECK(x.a_hat == y.a_hat);
    CHECK(x.ci95.a_hat == y.ci95.a_hat);
    CHECK(x.staleness_hat == y.staleness_hat);
  }
  SUBCASE("a single run is rejected") {
    const std::vector<MetricsReport> one(1, base);
    try {
      aggregate_runs(one);
      FAIL("expected InsufficientRuns");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::InsufficientRuns);
    }
  }
}
