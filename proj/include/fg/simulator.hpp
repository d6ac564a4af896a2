#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "fg/mobility.hpp"
#include "fg/params.hpp"
#include "fg/rng.hpp"

namespace fg {

struct ObservationRecord {
  std::uint64_t obs_id = 0;  // assigned in generation order, so also ordered by gen_time
  int model_id = 0;
  double gen_time = 0.0;

  friend bool operator==(const ObservationRecord&, const ObservationRecord&) = default;
};

/// Training sets are sorted by obs_id and shared immutably between an
/// instance, in-flight transfers and queued merges.
using TrainingSet = std::vector<ObservationRecord>;
using SharedSet = std::shared_ptr<const TrainingSet>;

struct ModelInstance {
  int model_id = 0;
  SharedSet training_set;

  const TrainingSet& records() const;
  std::size_t size() const { return training_set ? training_set->size() : 0; }
};

/// True when every record of `sub` is in `super` (by obs_id).
bool is_subset(const TrainingSet& sub, const TrainingSet& super);

/// Records younger than the lifetime at `now`.
TrainingSet unexpired(const TrainingSet& set, double now, double lifetime);

/// Union, expiry, then oldest-first eviction down to floor(L/k).
/// Throws ModelMismatch when the model ids differ.
ModelInstance merge_instances(const std::optional<ModelInstance>& local,
                              const ModelInstance& received, double now,
                              const SystemParams& params);

/// Adds one observation under the same expiry and capacity policy. An
/// expired observation leaves the instance unchanged (absent stays absent).
/// `subscribed` guards the NotSubscribed error.
std::optional<ModelInstance> train_instance(const std::optional<ModelInstance>& local,
                             const ObservationRecord& obs, double now,
                             const SystemParams& params, bool subscribed = true);

struct PlanItem {
  int from;  // 0: first node sends, 1: second node sends
  int model_id;
};

/// Minimal node view used to plan an exchange.
struct ExchangeView {
  std::vector<int> subscriptions;  // sorted
  std::vector<std::optional<ModelInstance>> instances;  // indexed by model
};

std::vector<PlanItem> plan_exchange(const ExchangeView& x, const ExchangeView& y, double now,
                                    const SystemParams& params, Rng& rng);

/// Columnar per-slot series plus observation-availability accumulators.
struct RawMetrics {
  double slot = 0.0;
  int model_count = 0;
  double obs_lifetime = 0.0;
  double age_bucket = 0.0;
  double warmup_fraction = 0.0;
  std::uint64_t seed = 0;

  // One entry per slot, sampled at the end of the slot.
  std::vector<double> time;
  std::vector<int> in_rz;
  std::vector<int> busy;
  std::vector<int> merge_queue;
  std::vector<int> train_queue;
  std::vector<int> merges_enqueued;
  std::vector<int> holders;  // [slot * model_count + m]
  std::vector<double> stored_fresh;  // fresh records summed over in-RZ instances
  std::vector<double> staleness_sum;
  std::vector<int> staleness_n;
  std::vector<int> generated;
  std::vector<int> lost;

  // Per-observation bookkeeping.
  std::vector<double> obs_gen_time;
  std::vector<int> obs_model;
  std::vector<double> obs_first_trained;  // NaN if never trained

  // Observation availability by age bucket, summed over observations that
  // were trained, born after warmup and fully aged before the end.
  std::vector<double> obs_curve_sum;
  std::size_t obs_curve_count = 0;

  std::size_t slots() const { return time.size(); }
  int holders_at(std::size_t s, int m) const {
    return holders[s * static_cast<std::size_t>(model_count) + static_cast<std::size_t>(m)];
  }
};

struct SimOptions {
  bool check_invariants = false;  // throw std::logic_error on a violation
};

RawMetrics run_simulation(const SystemParams& params, std::uint64_t seed,
                          std::size_t duration_slots, const SimOptions& options = {});

}  // namespace fg
