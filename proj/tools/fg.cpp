// fg: command-line front end for calibration, analytic solves, simulation
// batches, sweeps, stability maps, capacity search and comparisons.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "fg/error.hpp"
#include "fg/meanfield.hpp"
#include "fg/metrics.hpp"
#include "fg/mobility.hpp"
#include "fg/params.hpp"
#include "fg/pipeline.hpp"
#include "fg/simulator.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

struct Common {
  std::string config;
  std::string contact_model;
  bool fallback = false;
  std::uint64_t seed = 1;
  std::vector<std::string> argv;
};

json read_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw fg::Error(fg::Errc::Io, "cannot open '" + path + "'");
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw fg::Error(fg::Errc::InvalidValue, "'" + path + "' is not valid JSON: " + e.what());
  }
}

json raw_config(const Common& c) { return c.config.empty() ? json::object() : read_json_file(c.config); }

struct Resolved {
  fg::SystemParams params;
  std::optional<fg::ContactModel> cm;
};

// Validates, then overlays a calibrated contact model or builds the
// exponential fallback. `need_cm` makes a missing model a usage error.
Resolved resolve(const json& doc, const Common& c, bool need_cm) {
  Resolved r;
  r.params = fg::validate(fg::params_from_json(doc));
  if (!c.contact_model.empty()) {
    r.cm = fg::load_contact_model(c.contact_model);
    r.params = fg::apply_contact_model(r.params, *r.cm);
  } else if (c.fallback) {
    r.cm = fg::exponential_contact_model(r.params);
  } else if (need_cm) {
    throw fg::Error(fg::Errc::Usage,
                    "no contact model: pass --contact-model cm.json (from `fg calibrate`) or "
                    "--exponential-fallback");
  }
  return r;
}

fs::path output_dir_of(const std::string& out_file) {
  fs::path dir = fs::path(out_file).parent_path();
  if (dir.empty()) dir = ".";
  fs::create_directories(dir);
  return dir;
}

void write_manifest(const fs::path& dir, const std::string& command, const Common& c,
                    const fg::SystemParams& params, double wall, json extra = json::object()) {
  fg::write_json((dir / "config.resolved.json").string(), fg::params_to_json(params));
  json m = {{"command", command},
            {"argv", c.argv},
            {"seed", c.seed},
            {"version", kVersion},
            {"threads", fg::worker_threads()},
            {"wall_time_s", wall},
            {"config", c.config},
            {"contact_model", c.contact_model.empty() ? json(nullptr) : json(c.contact_model)},
            {"exponential_fallback", c.fallback}};
  m.update(extra);
  fg::write_json((dir / "manifest.json").string(), m);
}

double elapsed(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
  if (!std::isfinite(v)) return std::isnan(v) ? "" : (v > 0 ? "inf" : "-inf");
  std::ostringstream s;
  s << std::setprecision(10) << v;
  return s.str();
}

/// "a,b,c", "lin:lo:hi:n" or "log:lo:hi:n".
std::vector<double> parse_values(const std::string& spec) {
  std::vector<double> out;
  auto fail = [&] { throw fg::Error(fg::Errc::Usage, "cannot parse value list '" + spec + "'"); };
  if (spec.rfind("lin:", 0) == 0 || spec.rfind("log:", 0) == 0) {
    double lo = 0, hi = 0;
    int n = 0;
    char c1 = 0, c2 = 0;
    std::istringstream in(spec.substr(4));
    if (!(in >> lo >> c1 >> hi >> c2 >> n) || c1 != ':' || c2 != ':' || n < 1) fail();
    const bool log = spec[1] == 'o';
    if (log && (lo <= 0 || hi <= 0)) fail();
    for (int i = 0; i < n; ++i) {
      const double x = n == 1 ? 0.0 : static_cast<double>(i) / (n - 1);
      out.push_back(log ? std::exp(std::log(lo) + x * (std::log(hi) - std::log(lo)))
                        : lo + x * (hi - lo));
    }
  } else {
    std::stringstream in(spec);
    std::string item;
    while (std::getline(in, item, ',')) {
      if (item.empty()) continue;
      try {
        std::size_t used = 0;
        out.push_back(std::stod(item, &used));
        if (used != item.size()) fail();
      } catch (const std::logic_error&) {
        fail();
      }
    }
  }
  if (out.empty()) throw fg::Error(fg::Errc::Usage, "empty value list");
  return out;
}

void add_common(CLI::App* cmd, Common& c, bool contact_model) {
  cmd->add_option("--config", c.config, "JSON configuration file");
  cmd->add_option("--seed", c.seed, "Base seed");
  if (contact_model) {
    cmd->add_option("--contact-model", c.contact_model, "Calibrated contact model JSON");
    cmd->add_flag("--exponential-fallback", c.fallback,
                  "Use the exponential contact-duration law instead of a calibration");
  }
}

// ---------------------------------------------------------------- commands

int cmd_calibrate(const Common& c, double duration, const std::string& out) {
  const auto t0 = std::chrono::steady_clock::now();
  auto params = fg::validate(fg::params_from_json(raw_config(c)));
  const auto cm = fg::calibrate_contact_model(params, duration, c.seed);
  const auto dir = output_dir_of(out);
  fg::write_json(out, fg::contact_model_to_json(cm));
  write_manifest(dir, "calibrate", c, fg::apply_contact_model(params, cm), elapsed(t0),
                 {{"duration_s", duration}});
  std::cout << "mean nodes in RZ " << cm.mean_nodes_in_rz << ", sojourn " << cm.t_star
            << " s, inter-contact " << 1.0 / cm.mean_contact_rate << " s, contact duration "
            << cm.mean_duration << " s, aggregate " << cm.aggregate_contact_rate
            << " contacts/s\n";
  return 0;
}

int cmd_analytic(const Common& c, const std::string& out, std::size_t samples) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = resolve(raw_config(c), c, true);
  const auto dir = output_dir_of(out);
  json doc;
  int code = 0;
  try {
    const auto result = fg::run_analytic(r.params, *r.cm, samples, c.seed);
    doc = fg::analytic_to_json(result);
    try {
      doc["capacity"] = fg::capacity_to_json(
          fg::learning_capacity(r.params, *r.cm, r.params.model_count));
    } catch (const fg::Error& e) {
      doc["capacity"] = {{"error", fg::errc_name(e.code())}, {"message", e.what()}};
    }
    if (!result.solution.stable) {
      doc["diagnostic"] = {{"error", "UnstableSystem"},
                           {"message", "stability condition violated; delays undefined"}};
    }
  } catch (const fg::NoConvergenceError& e) {
    doc = {{"error", "NoConvergence"}, {"message", e.what()}, {"trace", e.trace()}};
    code = 2;
  } catch (const fg::Error& e) {
    if (e.code() != fg::Errc::DegenerateContactModel) throw;
    doc = {{"error", fg::errc_name(e.code())}, {"message", e.what()}};
    code = 2;
  }
  fg::write_json(out, doc);
  write_manifest(dir, "analytic", c, r.params, elapsed(t0));
  return code;
}

void write_aggregate_csv(const fg::MetricsReport& agg, const std::string& path) {
  std::ostringstream s;
  s << "metric,mean,ci95\n";
  s << "a_hat," << fmt(agg.a_hat) << ',' << fmt(agg.ci95.a_hat) << "\n";
  for (std::size_t m = 0; m < agg.a_per_model.size(); ++m) {
    s << "a_hat_model_" << m << ',' << fmt(agg.a_per_model[m]) << ','
      << fmt(agg.ci95.a_per_model[m]) << "\n";
  }
  s << "busy_hat," << fmt(agg.busy_hat) << ',' << fmt(agg.ci95.busy_hat) << "\n";
  s << "stored_info_hat," << fmt(agg.stored_info_hat) << ',' << fmt(agg.ci95.stored_info_hat)
    << "\n";
  s << "staleness_hat," << fmt(agg.staleness_hat) << ',' << fmt(agg.ci95.staleness_hat) << "\n";
  s << "merge_rate_hat," << fmt(agg.merge_rate_hat) << ',' << fmt(agg.ci95.merge_rate_hat)
    << "\n";
  for (std::size_t k = 0; k < agg.o_curve.size(); ++k) {
    s << "o_curve_age_" << fmt(agg.o_age[k]) << ',' << fmt(agg.o_curve[k]) << ','
      << fmt(agg.ci95.o_curve[k]) << "\n";
  }
  fg::write_text(path, s.str());
}

int cmd_simulate(const Common& c, std::size_t runs, std::size_t slots, const std::string& out_dir) {
  const auto t0 = std::chrono::steady_clock::now();
  if (runs < 1) throw fg::Error(fg::Errc::Usage, "--runs must be >= 1");
  const auto r = resolve(raw_config(c), c, false);
  const fs::path dir(out_dir);
  fs::create_directories(dir);
  const auto batch = fg::run_batch(r.params, runs, c.seed, slots, true);
  json run_list = json::array();
  for (std::size_t i = 0; i < runs; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "run_%03zu", i);
    const fs::path run_dir = dir / name;
    fs::create_directories(run_dir);
    fg::write_metrics_csv(batch.raws[i], (run_dir / "metrics.csv").string());
    fg::write_observations_csv(batch.raws[i], (run_dir / "observations.csv").string());
    fg::write_json((run_dir / "report.json").string(), fg::report_to_json(batch.reports[i]));
    run_list.push_back({{"dir", name}, {"seed", fg::mix_seed(c.seed, i)}});
  }
  if (batch.aggregate) {
    fg::write_json((dir / "aggregate.json").string(), fg::report_to_json(*batch.aggregate));
    write_aggregate_csv(*batch.aggregate, (dir / "aggregate.csv").string());
  } else {
    std::cerr << "warning: one run, no confidence intervals\n";
  }
  write_manifest(dir, "simulate", c, r.params, elapsed(t0),
                 {{"runs", run_list}, {"slots", slots}});
  const auto& head = batch.aggregate ? *batch.aggregate : batch.reports.front();
  std::cout << "a_hat " << head.a_hat << " +- " << head.ci95.a_hat << ", busy " << head.busy_hat
            << ", staleness " << head.staleness_hat << " s\n";
  return 0;
}

struct SweepRow {
  double value;
  std::string mode;
  json cols;
  std::string error;
};

const std::vector<std::string> kAnalyticCols = {"a", "b", "r", "stable", "lhs", "d_M", "d_I",
                                                "integral_o", "F_lower", "stored_info",
                                                "capacity"};
const std::vector<std::string> kSimCols = {
    "a_hat", "a_hat_ci", "busy_hat", "busy_hat_ci", "stored_info_hat", "stored_info_hat_ci",
    "staleness_hat", "staleness_hat_ci", "merge_rate_hat", "merge_rate_hat_ci"};

json analytic_cols(const fg::SystemParams& p, const fg::ContactModel& cm, std::uint64_t seed) {
  const auto r = fg::run_analytic(p, cm, 20000, seed);
  const auto& s = r.solution;
  json cols = {{"a", s.a}, {"b", s.b}, {"r", s.r}, {"stable", s.stable ? 1 : 0},
               {"lhs", s.stability_lhs}, {"d_M", s.d_M}, {"d_I", s.d_I}};
  if (r.curve) {
    cols["integral_o"] = r.curve->integral_o;
    cols["F_lower"] = r.staleness->value;
    cols["stored_info"] = *r.stored_information;
    cols["capacity"] = s.w * s.a *
                       std::min(static_cast<double>(p.capacity()) / p.obs_rate, r.curve->integral_o);
  }
  return cols;
}

json sim_cols(const fg::MetricsReport& m) {
  return {{"a_hat", m.a_hat},
          {"a_hat_ci", m.ci95.a_hat},
          {"busy_hat", m.busy_hat},
          {"busy_hat_ci", m.ci95.busy_hat},
          {"stored_info_hat", m.stored_info_hat},
          {"stored_info_hat_ci", m.ci95.stored_info_hat},
          {"staleness_hat", m.staleness_hat},
          {"staleness_hat_ci", m.ci95.staleness_hat},
          {"merge_rate_hat", m.merge_rate_hat},
          {"merge_rate_hat_ci", m.ci95.merge_rate_hat}};
}

std::string cell(const json& cols, const std::string& key) {
  if (!cols.contains(key)) return "";
  const auto& v = cols.at(key);
  return v.is_number() ? fmt(v.get<double>()) : "";
}

int cmd_sweep(const Common& c, const std::string& param, const std::string& values_spec,
              const std::string& mode, std::size_t runs, std::size_t slots, const std::string& out) {
  const auto t0 = std::chrono::steady_clock::now();
  if (mode != "analytic" && mode != "simulate" && mode != "both") {
    throw fg::Error(fg::Errc::Usage, "--mode must be analytic, simulate or both");
  }
  const auto values = parse_values(values_spec);
  const json base = raw_config(c);
  const bool do_analytic = mode != "simulate";
  const bool do_sim = mode != "analytic";
  // Validates the base config and contact model before any work starts.
  const auto base_resolved = resolve(base, c, do_analytic);

  const std::size_t n = values.size();
  std::vector<SweepRow> analytic_rows(n), sim_rows(n);
  std::vector<std::optional<fg::SystemParams>> point_params(n);
  std::vector<std::string> point_errors(n);
  for (std::size_t i = 0; i < n; ++i) {
    try {
      point_params[i] = resolve(fg::patch_config(base, param, values[i]), c, do_analytic).params;
    } catch (const fg::Error& e) {
      if (e.code() == fg::Errc::Usage) throw;
      point_errors[i] = std::string(fg::errc_name(e.code())) + ": " + e.what();
    }
  }

  // One pool task per analytic point and per (point, replicate).
  const std::size_t sim_tasks = do_sim ? n * runs : 0;
  const std::size_t analytic_tasks = do_analytic ? n : 0;
  std::vector<std::optional<fg::MetricsReport>> reports(sim_tasks);
  std::vector<std::string> sim_errors(sim_tasks);
  fg::parallel_for(analytic_tasks + sim_tasks, [&](std::size_t t) {
    if (t < analytic_tasks) {
      auto& row = analytic_rows[t];
      row.value = values[t];
      row.mode = "analytic";
      if (!point_params[t]) {
        row.error = point_errors[t];
        return;
      }
      try {
        row.cols = analytic_cols(*point_params[t], *base_resolved.cm, c.seed);
      } catch (const fg::Error& e) {
        row.error = std::string(fg::errc_name(e.code())) + ": " + e.what();
      }
      return;
    }
    const std::size_t k = t - analytic_tasks;
    const std::size_t i = k / runs;
    if (!point_params[i]) return;
    try {
      const auto raw = fg::run_simulation(*point_params[i], fg::mix_seed(c.seed, k % runs), slots);
      reports[k] = fg::compute_report(raw, point_params[i]->warmup_fraction);
    } catch (const fg::Error& e) {
      sim_errors[k] = std::string(fg::errc_name(e.code())) + ": " + e.what();
    }
  });
  if (do_sim) {
    for (std::size_t i = 0; i < n; ++i) {
      auto& row = sim_rows[i];
      row.value = values[i];
      row.mode = "simulate";
      if (!point_params[i]) {
        row.error = point_errors[i];
        continue;
      }
      std::vector<fg::MetricsReport> rs;
      for (std::size_t j = 0; j < runs; ++j) {
        const auto k = i * runs + j;
        if (reports[k]) rs.push_back(*reports[k]);
        if (!sim_errors[k].empty() && row.error.empty()) row.error = sim_errors[k];
      }
      if (rs.size() >= 2) {
        row.cols = sim_cols(fg::aggregate_runs(rs));
      } else if (rs.size() == 1) {
        row.cols = sim_cols(rs.front());
        for (const auto& key : kSimCols) {
          if (key.ends_with("_ci")) row.cols.erase(key);
        }
      }
    }
  }

  std::ostringstream s;
  s << "param,value,mode";
  for (const auto& k : kAnalyticCols) s << ',' << k;
  for (const auto& k : kSimCols) s << ',' << k;
  s << ",error\n";
  for (std::size_t i = 0; i < n; ++i) {
    for (const SweepRow* row : {&analytic_rows[i], &sim_rows[i]}) {
      if (row->mode.empty()) continue;
      s << param << ',' << fmt(row->value) << ',' << row->mode;
      for (const auto& k : kAnalyticCols) s << ',' << cell(row->cols, k);
      for (const auto& k : kSimCols) s << ',' << cell(row->cols, k);
      std::string err = row->error;
      for (auto& ch : err) {
        if (ch == ',' || ch == '\n') ch = ';';
      }
      s << ',' << err << "\n";
    }
  }
  const auto dir = output_dir_of(out);
  fg::write_text(out, s.str());
  write_manifest(dir, "sweep", c, base_resolved.params, elapsed(t0),
                 {{"param", param}, {"values", values}, {"mode", mode}, {"runs", runs},
                  {"slots", slots}});
  return 0;
}

int cmd_stability_map(const Common& c, const std::string& m_spec, const std::string& l_spec,
                      const std::string& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = resolve(raw_config(c), c, true);
  std::vector<int> ms;
  for (double v : parse_values(m_spec)) {
    const auto m = static_cast<int>(std::lround(v));
    if (m < 1) throw fg::Error(fg::Errc::Usage, "model counts must be >= 1");
    if (ms.empty() || ms.back() != m) ms.push_back(m);
  }
  const auto lambdas = parse_values(l_spec);
  std::vector<std::vector<fg::StabilityCell>> rows(ms.size());
  fg::parallel_for(ms.size(), [&](std::size_t i) {
    rows[i] = fg::stability_map(r.params, *r.cm, {ms[i]}, lambdas);
  });
  std::ostringstream s;
  s << "M,lambda,lhs,stable,feasible,error\n";
  for (const auto& row : rows) {
    for (const auto& cell_v : row) {
      s << cell_v.model_count << ',' << fmt(cell_v.obs_rate) << ',' << fmt(cell_v.lhs) << ','
        << (cell_v.stable ? 1 : 0) << ',' << (cell_v.feasible ? 1 : 0) << ',' << cell_v.error
        << "\n";
    }
  }
  const auto dir = output_dir_of(out);
  fg::write_text(out, s.str());
  write_manifest(dir, "stability-map", c, r.params, elapsed(t0),
                 {{"m_values", ms}, {"lambda_values", lambdas}});
  return 0;
}

int cmd_capacity(const Common& c, int m_max, const std::string& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = resolve(raw_config(c), c, true);
  const auto dir = output_dir_of(out);
  json doc;
  try {
    doc = fg::capacity_to_json(fg::learning_capacity(r.params, *r.cm, m_max));
  } catch (const fg::Error& e) {
    if (e.code() != fg::Errc::AllUnstable) throw;
    doc = {{"error", "AllUnstable"}, {"message", e.what()}};
  }
  fg::write_json(out, doc);
  write_manifest(dir, "capacity", c, r.params, elapsed(t0), {{"m_max", m_max}});
  return 0;
}

int cmd_compare(const Common& c, std::size_t runs, std::size_t slots, const std::string& out) {
  const auto t0 = std::chrono::steady_clock::now();
  if (runs < 1) throw fg::Error(fg::Errc::Usage, "--runs must be >= 1");
  const auto r = resolve(raw_config(c), c, true);
  const auto batch = fg::run_batch(r.params, runs, c.seed, slots);
  const fg::MetricsReport sim = batch.aggregate ? *batch.aggregate : batch.reports.front();
  if (runs == 1) std::cerr << "warning: one run, CI columns left empty\n";

  std::optional<fg::AnalyticResult> an;
  try {
    an = fg::run_analytic(r.params, *r.cm, 100000, c.seed);
    if (!an->solution.stable) {
      std::cerr << "warning: analytic point is unstable, analytic columns left empty\n";
      an.reset();
    }
  } catch (const fg::NoConvergenceError& e) {
    std::cerr << "warning: " << e.what() << "\n";
  }

  std::ostringstream s;
  s << "quantity,analytic,simulated,ci95,rel_error\n";
  auto row = [&](const std::string& name, std::optional<double> analytic, double simulated,
                 double ci) {
    s << name << ',' << (analytic ? fmt(*analytic) : "") << ',' << fmt(simulated) << ','
      << (runs >= 2 ? fmt(ci) : "") << ',';
    if (analytic && std::isfinite(simulated) && simulated != 0.0) {
      s << fmt((*analytic - simulated) / std::abs(simulated));
    }
    s << "\n";
  };
  auto opt = [&](auto f) -> std::optional<double> {
    if (!an) return std::nullopt;
    return f(*an);
  };
  row("a", opt([](const auto& x) { return x.solution.a; }), sim.a_hat, sim.ci95.a_hat);
  row("b", opt([](const auto& x) { return x.solution.b; }), sim.busy_hat, sim.ci95.busy_hat);
  row("r", opt([](const auto& x) { return x.solution.r; }), sim.merge_rate_hat,
      sim.ci95.merge_rate_hat);
  row("stored_information", opt([](const auto& x) { return *x.stored_information; }),
      sim.stored_info_hat, sim.ci95.stored_info_hat);
  row("staleness_vs_F_lower", opt([](const auto& x) { return x.staleness->value; }),
      sim.staleness_hat, sim.ci95.staleness_hat);
  const double nan = std::nan("");
  row("d_M", opt([](const auto& x) { return x.solution.d_M; }), nan, nan);
  row("d_I", opt([](const auto& x) { return x.solution.d_I; }), nan, nan);
  for (std::size_t k = 0; k < sim.o_curve.size(); ++k) {
    const double age = sim.o_age[k];
    row("o(" + fmt(age) + ")", opt([&](const auto& x) { return x.curve->at(age); }),
        sim.o_curve[k], sim.ci95.o_curve.empty() ? nan : sim.ci95.o_curve[k]);
  }
  const auto dir = output_dir_of(out);
  fg::write_text(out, s.str());
  write_manifest(dir, "compare", c, r.params, elapsed(t0), {{"runs", runs}, {"slots", slots}});
  return 0;
}

int exit_code(const fg::Error& e) {
  switch (e.code()) {
    case fg::Errc::Io: return 3;
    case fg::Errc::NoConvergence:
    case fg::Errc::DegenerateContactModel: return 2;
    default: return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Floating Gossip analytic engine and simulator"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  Common c;
  for (int i = 0; i < argc; ++i) c.argv.emplace_back(argv[i]);
  std::string out;
  std::string out_dir = "out";
  double duration = 2e4;
  std::size_t runs = 20;
  std::size_t slots = 10000;
  std::size_t samples = 100000;
  std::string param, values, mode = "analytic", m_range, l_range;
  int m_max = 50;

  auto* cal = app.add_subcommand("calibrate", "Measure the contact model from a mobility-only run");
  add_common(cal, c, false);
  cal->add_option("--duration", duration, "Simulated seconds");
  cal->add_option("--out", out, "Contact model JSON")->required();

  auto* ana = app.add_subcommand("analytic", "Mean-field pipeline");
  add_common(ana, c, true);
  ana->add_option("--out", out, "Output JSON")->required();
  ana->add_option("--staleness-samples", samples, "Monte Carlo samples");

  auto* sim = app.add_subcommand("simulate", "Replicate simulation runs");
  add_common(sim, c, true);
  sim->add_option("--runs", runs, "Replicates");
  sim->add_option("--slots", slots, "Slots per run");
  sim->add_option("--out-dir", out_dir, "Output directory")->required();

  auto* swp = app.add_subcommand("sweep", "One-parameter sweep");
  add_common(swp, c, true);
  swp->add_option("--param", param, "Dotted config key")->required();
  swp->add_option("--values", values, "a,b,c | lin:lo:hi:n | log:lo:hi:n")->required();
  swp->add_option("--mode", mode, "analytic | simulate | both");
  swp->add_option("--runs", runs, "Replicates per point");
  swp->add_option("--slots", slots, "Slots per run");
  swp->add_option("--out", out, "Output CSV")->required();

  auto* map = app.add_subcommand("stability-map", "Stability condition over (M, lambda)");
  add_common(map, c, true);
  map->add_option("--m-range", m_range, "Model counts")->required();
  map->add_option("--lambda-range", l_range, "Observation rates")->required();
  map->add_option("--out", out, "Output CSV")->required();

  auto* cap = app.add_subcommand("capacity", "Learning capacity search");
  add_common(cap, c, true);
  cap->add_option("--m-max", m_max, "Largest model count");
  cap->add_option("--out", out, "Output JSON")->required();

  auto* cmp = app.add_subcommand("compare", "Analytic versus simulated estimates");
  add_common(cmp, c, true);
  cmp->add_option("--runs", runs, "Replicates");
  cmp->add_option("--slots", slots, "Slots per run");
  cmp->add_option("--out", out, "Output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*cal) return cmd_calibrate(c, duration, out);
    if (*ana) return cmd_analytic(c, out, samples);
    if (*sim) return cmd_simulate(c, runs, slots, out_dir);
    if (*swp) return cmd_sweep(c, param, values, mode, runs, slots, out);
    if (*map) return cmd_stability_map(c, m_range, l_range, out);
    if (*cap) return cmd_capacity(c, m_max, out);
    if (*cmp) return cmd_compare(c, runs, slots, out);
  } catch (const fg::Error& e) {
    std::cerr << "error [" << fg::errc_name(e.code()) << "]";
    if (!e.field().empty()) std::cerr << " (" << e.field() << ")";
    std::cerr << ": " << e.what() << "\n";
    return exit_code(e);
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error [Io]: " << e.what() << "\n";
    return 3;
  }
  return 1;
}
