#include <doctest.h>

#include <atomic>

#include "fg/error.hpp"
#include "fg/pipeline.hpp"

using namespace fg;
using nlohmann::json;

TEST_CASE("config patching by dotted path") {
  const json base = {{"model_count", 1}, {"analytic", {{"damping", 0.5}}}};
  const auto a = patch_config(base, "model_count", 3.0);
  CHECK(a.at("model_count").is_number_integer());
  CHECK(a.at("model_count") == 3);
  const auto b = patch_config(base, "analytic.damping", 0.25);
  CHECK(b.at("analytic").at("damping") == 0.25);
  const auto c = patch_config(base, "metrics.warmup_fraction", 0.4);
  CHECK(validate(params_from_json(c)).warmup_fraction == 0.4);
  CHECK_THROWS_AS(patch_config(base, "analytic..x", 1.0), Error);
}

TEST_CASE("parallel_for visits every index once and propagates errors") {
  std::vector<std::atomic<int>> hits(100);
  parallel_for(hits.size(), [&](std::size_t i) { ++hits[i]; }, 3);
  for (const auto& h : hits) CHECK(h.load() == 1);
  CHECK_THROWS_AS(parallel_for(10, [](std::size_t i) {
    if (i == 7) throw Error(Errc::InvalidValue, "boom");
  }, 2),
                  Error);
}

TEST_CASE("batch results do not depend on the worker count") {
  SystemParams in;
  in.n_total = 80;
  const auto p = validate(in);
  const auto one = run_batch(p, 3, 11, 800, false, 1);
  const auto three = run_batch(p, 3, 11, 800, false, 3);
  REQUIRE(one.aggregate);
  REQUIRE(three.aggregate);
  for (std::size_t i = 0; i < 3; ++i) CHECK(one.reports[i].a_hat == three.reports[i].a_hat);
  CHECK(one.aggregate->ci95.a_hat == three.aggregate->ci95.a_hat);
}

TEST_CASE("analytic pipeline output") {
  const auto p = validate(SystemParams{});
  const auto r = run_analytic(p, exponential_contact_model(p), 10000, 1);
  REQUIRE(r.curve);
  REQUIRE(r.staleness);
  const auto doc = analytic_to_json(r);
  CHECK(doc.at("solution").at("stable") == true);
  CHECK(doc.at("curve").at("tau").size() == doc.at("curve").at("o").size());
  CHECK(doc.at("staleness").at("F_lower").get<double>() >= 1.0 / p.obs_rate);
}
