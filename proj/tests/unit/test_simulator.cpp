#include <doctest.h>

#include <set>

#include "fg/error.hpp"
#include "fg/simulator.hpp"

using namespace fg;

namespace {

ObservationRecord obs(std::uint64_t id, double t, int model = 0) { return {id, model, t}; }

ModelInstance inst(std::initializer_list<ObservationRecord> recs, int model = 0) {
  return {model, std::make_shared<const TrainingSet>(recs)};
}

std::vector<std::uint64_t> ids(const ModelInstance& m) {
  std::vector<std::uint64_t> out;
  for (const auto& r : m.records()) out.push_back(r.obs_id);
  return out;
}

SystemParams params_with(double model_size = 1e4) {
  SystemParams p;
  p.model_size = model_size;
  p.min_model_size = model_size;
  return validate(p);
}

ExchangeView view(std::optional<ModelInstance> m) {
  ExchangeView v;
  v.subscriptions = {0};
  v.instances = {std::move(m)};
  return v;
}

}  // namespace

TEST_CASE("merge is a set union with expiry and capacity") {
  const auto p = params_with();
  CHECK(ids(merge_instances(inst({obs(1, 0)}), inst({obs(2, 1)}), 5.0, p)) ==
        std::vector<std::uint64_t>{1, 2});
  CHECK(ids(merge_instances(std::nullopt, inst({obs(2, 1)}), 5.0, p)) ==
        std::vector<std::uint64_t>{2});

  const auto cap2 = params_with(2.0);
  CHECK(ids(merge_instances(inst({obs(1, 0), obs(2, 10)}), inst({obs(3, 20)}), 30.0, cap2)) ==
        std::vector<std::uint64_t>{2, 3});

  // Older than the lifetime at merge time.
  CHECK(ids(merge_instances(inst({obs(1, 0)}), inst({obs(2, 100)}), 301.0, p)) ==
        std::vector<std::uint64_t>{2});

  CHECK_THROWS_AS(merge_instances(inst({obs(1, 0)}, 0), inst({obs(2, 0, 1)}, 1), 1.0, p), Error);
}

TEST_CASE("training one observation at a time") {
  const auto p = params_with();
  const auto first = train_instance(std::nullopt, obs(1, 0), 5.0, p);
  REQUIRE(first);
  CHECK(ids(*first) == std::vector<std::uint64_t>{1});

  const auto again = train_instance(first, obs(1, 0), 10.0, p);
  CHECK(ids(*again) == std::vector<std::uint64_t>{1});

  const auto expired = train_instance(first, obs(2, 0), 301.0, p);
  CHECK(expired->training_set == first->training_set);
  CHECK_FALSE(train_instance(std::nullopt, obs(2, 0), 301.0, p).has_value());

  try {
    train_instance(std::nullopt, obs(3, 0), 1.0, p, false);
    FAIL("expected NotSubscribed");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::NotSubscribed);
  }
}

TEST_CASE("subset and expiry helpers") {
  const TrainingSet a = {obs(1, 0), obs(3, 2)};
  const TrainingSet b = {obs(1, 0), obs(2, 1), obs(3, 2)};
  CHECK(is_subset(a, b));
  CHECK_FALSE(is_subset(b, a));
  CHECK(is_subset({}, a));
  CHECK(unexpired(b, 301.5, 300.0).size() == 1);
}

TEST_CASE("exchange planning") {
  const auto p = params_with();
  Rng rng(1);
  SUBCASE("equal sets give an empty plan") {
    CHECK(plan_exchange(view(inst({obs(1, 0)})), view(inst({obs(1, 0)})), 1.0, p, rng).empty());
  }
  SUBCASE("one-sided") {
    const auto plan = plan_exchange(view(inst({obs(1, 0)})), view(std::nullopt), 1.0, p, rng);
    REQUIRE(plan.size() == 1);
    CHECK(plan[0].from == 0);
    CHECK(plan[0].model_id == 0);
  }
  SUBCASE("expired content is not offered") {
    CHECK(plan_exchange(view(inst({obs(1, 0)})), view(std::nullopt), 400.0, p, rng).empty());
  }
  SUBCASE("no common subscription") {
    auto x = view(inst({obs(1, 0)}));
    auto y = view(std::nullopt);
    x.instances.resize(2);
    y.instances.resize(2);
    y.subscriptions = {1};
    CHECK(plan_exchange(x, y, 1.0, p, rng).empty());
  }
  SUBCASE("both directions, both orders occur") {
    std::set<int> first_senders;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng r(seed);
      const auto plan = plan_exchange(view(inst({obs(1, 0), obs(2, 1)})),
                                      view(inst({obs(2, 1), obs(3, 2)})), 5.0, p, r);
      REQUIRE(plan.size() == 2);
      CHECK(plan[0].from != plan[1].from);
      first_senders.insert(plan[0].from);
    }
    CHECK(first_senders.size() == 2);
  }
}

TEST_CASE("simulation is deterministic per seed") {
  auto in = SystemParams{};
  in.model_count = 3;
  in.obs_rate = 0.3;
  const auto p = validate(in);
  const auto a = run_simulation(p, 42, 1500);
  const auto b = run_simulation(p, 42, 1500);
  const auto c = run_simulation(p, 43, 1500);
  CHECK(a.holders == b.holders);
  CHECK(a.staleness_sum == b.staleness_sum);
  CHECK(a.obs_curve_sum == b.obs_curve_sum);
  CHECK(a.merges_enqueued == b.merges_enqueued);
  CHECK(a.holders != c.holders);
}

TEST_CASE("nodes start with the default model only") {
  const auto raw = run_simulation(params_with(), 1, 5);
  CHECK(raw.holders_at(0, 0) == 0);
  CHECK(raw.in_rz[0] > 100);
}

TEST_CASE("invariants hold on randomized configurations") {
  Rng rng(77);
  for (int k = 0; k < 6; ++k) {
    SystemParams in;
    in.n_total = 40 + static_cast<int>(rng.below(80));
    in.area_side = 100.0;
    in.rz_radius = 45.0;
    in.model_count = 1 + static_cast<int>(rng.below(4));
    in.subscription_limit = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(in.model_count)));
    in.model_size = std::pow(10.0, rng.uniform(1.0, 8.0));
    in.bits_per_observation = std::max(1.0, in.model_size / rng.uniform(2.0, 50.0));
    in.obs_rate = rng.uniform(0.05, 2.0);
    in.train_time = rng.uniform(0.0, 6.0);
    in.merge_time = rng.uniform(0.0, 4.0);
    in.t0 = rng.uniform(0.0, 1.0);
    in.obs_lifetime = rng.uniform(20.0, 200.0);
    const auto p = validate(in);
    SimOptions opt;
    opt.check_invariants = true;
    CHECK_NOTHROW(run_simulation(p, rng.next_u64(), 2000, opt));
  }
}

TEST_CASE("generation rate and lost observations") {
  SystemParams in;
  in.n_total = 2;
  in.obs_rate = 0.1;
  const auto p = validate(in);
  const auto raw = run_simulation(p, 5, 200000);
  double generated = 0.0, lost = 0.0;
  for (std::size_t s = 0; s < raw.slots(); ++s) {
    generated += raw.generated[s];
    lost += raw.lost[s];
  }
  const double rate = generated / (raw.slots() * p.slot);
  // 1e4 expected events: 4 standard deviations is 4%.
  CHECK(rate == doctest::Approx(0.1).epsilon(0.04));
  CHECK(lost > 0.0);
  CHECK(lost < generated);
}
