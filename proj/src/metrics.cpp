#include "fg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

#include "fg/error.hpp"

namespace fg {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::size_t first_slot(const RawMetrics& raw, double warmup_fraction) {
  if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) {
    throw Error(Errc::InvalidValue, "warmup_fraction must lie in [0, 1)", "warmup_fraction");
  }
  const auto first =
      static_cast<std::size_t>(std::floor(warmup_fraction * static_cast<double>(raw.slots())));
  if (first >= raw.slots()) throw Error(Errc::EmptyWindow, "no slots after warmup");
  return first;
}

double mean(std::span<const double> v) {
  return v.empty() ? kNaN : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

AvailabilityEstimate availability_series(const RawMetrics& raw, double warmup_fraction) {
  const std::size_t first = first_slot(raw, warmup_fraction);
  const auto M = static_cast<std::size_t>(raw.model_count);
  AvailabilityEstimate out{0.0, 0.0, std::vector<double>(M, 0.0)};
  std::size_t n = 0;
  for (std::size_t s = first; s < raw.slots(); ++s) {
    if (raw.in_rz[s] == 0) continue;
    const double nodes = raw.in_rz[s];
    for (std::size_t m = 0; m < M; ++m) {
      out.per_model[m] += raw.holders_at(s, static_cast<int>(m)) / nodes;
    }
    out.busy_hat += raw.busy[s] / nodes;
    ++n;
  }
  if (n == 0) throw Error(Errc::EmptyWindow, "no post-warmup slot with nodes in the RZ");
  for (auto& v : out.per_model) v /= static_cast<double>(n);
  out.busy_hat /= static_cast<double>(n);
  out.a_hat = mean(out.per_model);
  return out;
}

ObservationCurveEstimate observation_availability_curve(const RawMetrics& raw) {
  if (raw.obs_curve_count < 100) {
    throw Error(Errc::TooFewObservations,
                "only " + std::to_string(raw.obs_curve_count) + " tracked observations");
  }
  ObservationCurveEstimate out;
  out.observations = raw.obs_curve_count;
  for (std::size_t k = 0; k < raw.obs_curve_sum.size(); ++k) {
    const double lo = static_cast<double>(k) * raw.age_bucket;
    const double hi = std::min(lo + raw.age_bucket, raw.obs_lifetime);
    out.age.push_back(0.5 * (lo + hi));
    out.value.push_back(raw.obs_curve_sum[k] / static_cast<double>(raw.obs_curve_count));
  }
  return out;
}

double staleness_estimate(const RawMetrics& raw, double warmup_fraction) {
  const std::size_t first = first_slot(raw, warmup_fraction);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t s = first; s < raw.slots(); ++s) {
    if (raw.staleness_n[s] == 0) continue;
    sum += raw.staleness_sum[s] / raw.staleness_n[s];
    ++n;
  }
  if (n == 0) throw Error(Errc::NoInstances, "no instance existed after warmup");
  return sum / static_cast<double>(n);
}

double stored_information_estimate(const RawMetrics& raw, double warmup_fraction) {
  const std::size_t first = first_slot(raw, warmup_fraction);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t s = first; s < raw.slots(); ++s) {
    if (raw.in_rz[s] == 0) continue;
    sum += raw.stored_fresh[s] / raw.in_rz[s];
    ++n;
  }
  if (n == 0) throw Error(Errc::EmptyWindow, "no post-warmup slot with nodes in the RZ");
  return sum / static_cast<double>(n);
}

double merge_rate_estimate(const RawMetrics& raw, double warmup_fraction) {
  const std::size_t first = first_slot(raw, warmup_fraction);
  double merges = 0.0;
  double node_time = 0.0;
  for (std::size_t s = first; s < raw.slots(); ++s) {
    merges += raw.merges_enqueued[s];
    node_time += raw.in_rz[s] * raw.slot;
  }
  if (node_time <= 0.0) throw Error(Errc::EmptyWindow, "no node time after warmup");
  return merges / node_time;
}

MetricsReport compute_report(const RawMetrics& raw, double warmup_fraction) {
  MetricsReport r;
  const auto av = availability_series(raw, warmup_fraction);
  r.a_hat = av.a_hat;
  r.a_per_model = av.per_model;
  r.busy_hat = av.busy_hat;
  try {
    const auto curve = observation_availability_curve(raw);
    r.o_age = curve.age;
    r.o_curve = curve.value;
  } catch (const Error& e) {
    if (e.code() != Errc::TooFewObservations) throw;
  }
  r.stored_info_hat = stored_information_estimate(raw, warmup_fraction);
  try {
    r.staleness_hat = staleness_estimate(raw, warmup_fraction);
  } catch (const Error& e) {
    if (e.code() != Errc::NoInstances) throw;
    r.staleness_hat = kNaN;
  }
  r.merge_rate_hat = merge_rate_estimate(raw, warmup_fraction);
  r.ci95.a_per_model.assign(r.a_per_model.size(), 0.0);
  r.ci95.o_curve.assign(r.o_curve.size(), 0.0);
  return r;
}

double ci95_half_width(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n < 2) return 0.0;
  const double m = mean(values);
  double ss = 0.0;
  for (double v : values) ss += (v - m) * (v - m);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  const boost::math::students_t dist(static_cast<double>(n - 1));
  return boost::math::quantile(dist, 0.975) * sd / std::sqrt(static_cast<double>(n));
}

MetricsReport aggregate_runs(std::span<const MetricsReport> reports) {
  if (reports.size() < 2) throw Error(Errc::InsufficientRuns, "aggregation needs at least 2 runs");
  MetricsReport out;
  out.runs = reports.size();

  auto scalar = [&](auto field, double& value, double& ci) {
    std::vector<double> v;
    for (const auto& r : reports) {
      if (!std::isnan(r.*field)) v.push_back(r.*field);
    }
    std::sort(v.begin(), v.end());  // order-independent sums
    value = mean(v);
    ci = ci95_half_width(v);
  };
  scalar(&MetricsReport::a_hat, out.a_hat, out.ci95.a_hat);
  scalar(&MetricsReport::busy_hat, out.busy_hat, out.ci95.busy_hat);
  scalar(&MetricsReport::stored_info_hat, out.stored_info_hat, out.ci95.stored_info_hat);
  scalar(&MetricsReport::staleness_hat, out.staleness_hat, out.ci95.staleness_hat);
  scalar(&MetricsReport::merge_rate_hat, out.merge_rate_hat, out.ci95.merge_rate_hat);

  auto vector_field = [&](auto field, std::vector<double>& value, std::vector<double>& ci) {
    std::size_t len = 0;
    for (const auto& r : reports) len = std::max(len, (r.*field).size());
    value.assign(len, 0.0);
    ci.assign(len, 0.0);
    for (std::size_t k = 0; k < len; ++k) {
      std::vector<double> v;
      for (const auto& r : reports) {
        if (k < (r.*field).size()) v.push_back((r.*field)[k]);
      }
      std::sort(v.begin(), v.end());
      value[k] = mean(v);
      ci[k] = ci95_half_width(v);
    }
  };
  vector_field(&MetricsReport::a_per_model, out.a_per_model, out.ci95.a_per_model);
  vector_field(&MetricsReport::o_curve, out.o_curve, out.ci95.o_curve);
  for (const auto& r : reports) {
    if (r.o_age.size() > out.o_age.size()) out.o_age = r.o_age;
  }
  return out;
}

}  // namespace fg
