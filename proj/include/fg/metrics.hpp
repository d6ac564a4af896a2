#pragma once

#include <span>
#include <vector>

#include "fg/params.hpp"
#include "fg/simulator.hpp"

namespace fg {

struct AvailabilityEstimate {
  double a_hat;
  double busy_hat;
  std::vector<double> per_model;
};

/// Post-warmup time averages of holders / in-RZ nodes and busy / in-RZ
/// nodes. Throws EmptyWindow when no slot survives the warmup cut.
AvailabilityEstimate availability_series(const RawMetrics& raw, double warmup_fraction);

struct ObservationCurveEstimate {
  std::vector<double> age;    // bucket midpoints, s
  std::vector<double> value;  // mean holder fraction
  std::size_t observations;
};

/// Mean fraction of model holders containing an observation, by age
/// bucket, over observations trained at least once. The warmup cut is the
/// one the run was recorded with. Throws TooFewObservations below 100.
ObservationCurveEstimate observation_availability_curve(const RawMetrics& raw);

/// Mean over post-warmup slots of the per-instance age of the newest
/// record. Throws NoInstances.
double staleness_estimate(const RawMetrics& raw, double warmup_fraction);

/// Fresh records per in-RZ node, post-warmup.
double stored_information_estimate(const RawMetrics& raw, double warmup_fraction);

/// Merge tasks enqueued per in-RZ node per second, post-warmup.
double merge_rate_estimate(const RawMetrics& raw, double warmup_fraction);

struct MetricsReport {
  double a_hat = 0.0;
  std::vector<double> a_per_model;
  double busy_hat = 0.0;
  std::vector<double> o_age;
  std::vector<double> o_curve;  // empty when too few observations were tracked
  double stored_info_hat = 0.0;
  double staleness_hat = 0.0;   // NaN when no instance existed
  double merge_rate_hat = 0.0;
  std::size_t runs = 1;

  struct Ci {
    double a_hat = 0.0;
    std::vector<double> a_per_model;
    double busy_hat = 0.0;
    std::vector<double> o_curve;
    double stored_info_hat = 0.0;
    double staleness_hat = 0.0;
    double merge_rate_hat = 0.0;
  } ci95;
};

MetricsReport compute_report(const RawMetrics& raw, double warmup_fraction);

/// Cross-run means with Student-t 95% half-widths. Throws InsufficientRuns
/// below two reports.
MetricsReport aggregate_runs(std::span<const MetricsReport> reports);

/// Student-t 95% half-width of a sample mean; 0 for fewer than 2 values.
double ci95_half_width(std::span<const double> values);

}  // namespace fg
