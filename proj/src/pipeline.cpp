#include "fg/pipeline.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

#include "fg/error.hpp"

namespace fg {

using json = nlohmann::json;

unsigned worker_threads() {
  if (const char* env = std::getenv("FG_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return static_cast<unsigned>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn, unsigned threads) {
  if (threads == 0) threads = worker_threads();
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

AnalyticResult run_analytic(const SystemParams& params, const ContactModel& cm,
                            std::size_t staleness_samples, std::uint64_t seed) {
  AnalyticResult out;
  out.solution = solve_fixed_point(params, cm);
  if (!out.solution.stable || out.solution.a <= 0.0) return out;
  out.curve = solve_observation_dde(out.solution, params);
  out.staleness = staleness_bound(*out.curve, params, staleness_samples, seed);
  out.stored_information = node_stored_information(out.solution, *out.curve, params);
  return out;
}

namespace {

// JSON has no NaN/inf; those become null.
json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

json solution_to_json(const MeanFieldSolution& s) {
  return {{"a", number(s.a)},
          {"b", number(s.b)},
          {"w", number(s.w)},
          {"gamma", number(s.gamma)},
          {"S", number(s.S)},
          {"T_S", number(s.T_S)},
          {"K", number(s.K)},
          {"H", number(s.H)},
          {"r", number(s.r)},
          {"rho", number(s.rho)},
          {"stable", s.stable},
          {"stability_lhs", number(s.stability_lhs)},
          {"load_term", number(s.load_term)},
          {"delay_term", number(s.delay_term)},
          {"d_M", number(s.d_M)},
          {"d_I", number(s.d_I)},
          {"iterations", s.iterations},
          {"used_bisection", s.used_bisection}};
}

json curve_to_json(const AvailabilityCurve& c, std::size_t stride) {
  stride = std::max<std::size_t>(stride, 1);
  json tau = json::array();
  json o = json::array();
  json rate = json::array();
  for (std::size_t i = 0; i < c.tau.size(); i += stride) {
    tau.push_back(c.tau[i]);
    o.push_back(c.o[i]);
    rate.push_back(c.incorporation_rate(i));
  }
  return {{"step", c.step},         {"d_I", number(c.d_I)}, {"d_M", number(c.d_M)},
          {"integral_o", c.integral_o}, {"tau", tau},        {"o", o},
          {"R", rate}};
}

json analytic_to_json(const AnalyticResult& r) {
  json doc = {{"solution", solution_to_json(r.solution)}};
  if (r.curve) {
    const auto stride = std::max<std::size_t>(1, r.curve->tau.size() / 3000);
    doc["curve"] = curve_to_json(*r.curve, stride);
  }
  if (r.staleness) {
    doc["staleness"] = {{"F_lower", number(r.staleness->value)},
                        {"std_error", number(r.staleness->std_error)},
                        {"normalized", number(r.staleness->ratio)},
                        {"delta", r.staleness->delta},
                        {"finite", r.staleness->finite},
                        {"terms", r.staleness->terms}};
  }
  if (r.stored_information) doc["stored_information"] = *r.stored_information;
  return doc;
}

json capacity_to_json(const CapacityResult& r) {
  json rows = json::array();
  for (const auto& row : r.table) {
    rows.push_back({{"M", row.model_count},
                    {"stable", row.stable},
                    {"a", number(row.a)},
                    {"lhs", number(row.lhs)},
                    {"integral_o", number(row.integral_o)},
                    {"stored_information", number(row.stored_information)},
                    {"value", number(row.value)},
                    {"error", row.error}});
  }
  return {{"best_M", r.best_model_count},
          {"L_star", r.best_model_size},
          {"value", r.value},
          {"table", rows}};
}

json report_to_json(const MetricsReport& r) {
  auto vec = [](const std::vector<double>& v) {
    json a = json::array();
    for (double x : v) a.push_back(number(x));
    return a;
  };
  return {{"runs", r.runs},
          {"a_hat", number(r.a_hat)},
          {"a_per_model", vec(r.a_per_model)},
          {"busy_hat", number(r.busy_hat)},
          {"o_age", vec(r.o_age)},
          {"o_curve", vec(r.o_curve)},
          {"stored_info_hat", number(r.stored_info_hat)},
          {"staleness_hat", number(r.staleness_hat)},
          {"merge_rate_hat", number(r.merge_rate_hat)},
          {"ci95",
           {{"a_hat", number(r.ci95.a_hat)},
            {"a_per_model", vec(r.ci95.a_per_model)},
            {"busy_hat", number(r.ci95.busy_hat)},
            {"o_curve", vec(r.ci95.o_curve)},
            {"stored_info_hat", number(r.ci95.stored_info_hat)},
            {"staleness_hat", number(r.ci95.staleness_hat)},
            {"merge_rate_hat", number(r.ci95.merge_rate_hat)}}}};
}

BatchResult run_batch(const SystemParams& params, std::size_t runs, std::uint64_t seed,
                      std::size_t slots, bool keep_raw, unsigned threads) {
  BatchResult out;
  out.reports.resize(runs);
  if (keep_raw) out.raws.resize(runs);
  parallel_for(
      runs,
      [&](std::size_t i) {
        auto raw = run_simulation(params, mix_seed(seed, i), slots);
        out.reports[i] = compute_report(raw, params.warmup_fraction);
        if (keep_raw) out.raws[i] = std::move(raw);
      },
      threads);
  if (runs >= 2) out.aggregate = aggregate_runs(out.reports);
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::Io, "cannot open '" + path + "' for writing");
  f << text;
  if (!f) throw Error(Errc::Io, "write to '" + path + "' failed");
}

void write_json(const std::string& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

void write_metrics_csv(const RawMetrics& raw, const std::string& path) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "slot,time,in_rz,busy,merge_queue,train_queue,merges_enqueued,generated,lost,"
         "stored_fresh,staleness_sum,staleness_n";
  for (int m = 0; m < raw.model_count; ++m) out << ",holders_" << m;
  out << "\n";
  for (std::size_t s = 0; s < raw.slots(); ++s) {
    out << s << ',' << raw.time[s] << ',' << raw.in_rz[s] << ',' << raw.busy[s] << ','
        << raw.merge_queue[s] << ',' << raw.train_queue[s] << ',' << raw.merges_enqueued[s]
        << ',' << raw.generated[s] << ',' << raw.lost[s] << ',' << raw.stored_fresh[s] << ','
        << raw.staleness_sum[s] << ',' << raw.staleness_n[s];
    for (int m = 0; m < raw.model_count; ++m) out << ',' << raw.holders_at(s, m);
    out << "\n";
  }
  write_text(path, out.str());
}

void write_observations_csv(const RawMetrics& raw, const std::string& path) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "age_bucket_lo,age_bucket_hi,holder_fraction_sum,tracked_observations\n";
  for (std::size_t k = 0; k < raw.obs_curve_sum.size(); ++k) {
    const double lo = static_cast<double>(k) * raw.age_bucket;
    out << lo << ',' << std::min(lo + raw.age_bucket, raw.obs_lifetime) << ','
        << raw.obs_curve_sum[k] << ',' << raw.obs_curve_count << "\n";
  }
  write_text(path, out.str());
}

json patch_config(json doc, const std::string& dotted_path, double value) {
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = dotted_path.find('.', start);
    const std::string key = dotted_path.substr(start, dot - start);
    if (key.empty()) throw Error(Errc::Usage, "bad parameter path '" + dotted_path + "'");
    if (dot == std::string::npos) {
      if (std::floor(value) == value && std::abs(value) < 9e15) {
        (*node)[key] = static_cast<std::int64_t>(value);
      } else {
        (*node)[key] = value;
      }
      break;
    }
    if (!node->contains(key)) (*node)[key] = json::object();
    node = &(*node)[key];
    start = dot + 1;
  }
  return doc;
}

}  // namespace fg
