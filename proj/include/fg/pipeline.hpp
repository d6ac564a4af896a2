#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fg/meanfield.hpp"
#include "fg/metrics.hpp"
#include "fg/mobility.hpp"
#include "fg/params.hpp"
#include "fg/simulator.hpp"

namespace fg {

/// Worker count: FG_THREADS when set, else the hardware concurrency.
unsigned worker_threads();

/// Runs fn(0..n-1) on a pool; results land by index, so output order never
/// depends on completion order. The first exception is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn,
                  unsigned threads = 0);

struct AnalyticResult {
  MeanFieldSolution solution;
  std::optional<AvailabilityCurve> curve;
  std::optional<StalenessBound> staleness;
  std::optional<double> stored_information;
};

/// Fixed point, stability, then (when stable) the observation curve,
/// staleness bound and stored information.
AnalyticResult run_analytic(const SystemParams& params, const ContactModel& cm,
                            std::size_t staleness_samples = 100000, std::uint64_t seed = 1);

nlohmann::json solution_to_json(const MeanFieldSolution& sol);
nlohmann::json curve_to_json(const AvailabilityCurve& curve, std::size_t stride = 1);
nlohmann::json analytic_to_json(const AnalyticResult& result);
nlohmann::json capacity_to_json(const CapacityResult& result);
nlohmann::json report_to_json(const MetricsReport& report);

struct BatchResult {
  std::vector<MetricsReport> reports;
  std::vector<RawMetrics> raws;  // kept only on request
  std::optional<MetricsReport> aggregate;
};

/// Independent replicate runs with seeds mix_seed(seed, run).
BatchResult run_batch(const SystemParams& params, std::size_t runs, std::uint64_t seed,
                      std::size_t slots, bool keep_raw = false, unsigned threads = 0);

void write_text(const std::string& path, const std::string& text);
void write_json(const std::string& path, const nlohmann::json& doc);
void write_metrics_csv(const RawMetrics& raw, const std::string& path);
void write_observations_csv(const RawMetrics& raw, const std::string& path);

/// Sets a dotted key ("obs_rate", "analytic.damping") in a config document.
nlohmann::json patch_config(nlohmann::json doc, const std::string& dotted_path, double value);

}  // namespace fg
