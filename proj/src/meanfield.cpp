#include "fg/meanfield.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "fg/error.hpp"
#include "fg/rng.hpp"

namespace fg {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Completed transfers in a contact of length tc; the epsilon absorbs
// rounding of exact multiples such as 6 / 0.001.
double transfers_within(double tc, double t0, double transfer_time) {
  if (tc <= t0) return 0.0;
  return std::floor((tc - t0) / transfer_time + 1e-9);
}

double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

}  // namespace

ContactIntegrals contact_integrals(double gamma, const ContactModel& cm, double transfer_time,
                                   double t0) {
  const double cap = gamma * transfer_time + t0;
  double S = 0.0;
  double T_S = 0.0;
  for (const auto& bin : cm.duration_hist) {
    const double tc = bin.mid();
    const double f = transfers_within(tc, t0, transfer_time);
    if (gamma > 0.0) {
      S += bin.mass * std::min(1.0, f / gamma);
    } else if (f >= 1.0) {
      S += bin.mass;
    }
    T_S += bin.mass * std::min(tc, cap);
  }
  return {S, T_S};
}

ContactQuadrature::ContactQuadrature(const ContactModel& cm, double transfer_time, double t0)
    : transfer_time_(transfer_time), t0_(t0) {
  const auto& hist = cm.duration_hist;
  const std::size_t n = hist.size();

  std::vector<std::pair<double, double>> by_f;
  std::vector<std::pair<double, double>> by_mid;
  by_f.reserve(n);
  by_mid.reserve(n);
  for (const auto& bin : hist) {
    by_f.emplace_back(transfers_within(bin.mid(), t0, transfer_time), bin.mass);
    by_mid.emplace_back(bin.mid(), bin.mass);
  }
  std::sort(by_f.begin(), by_f.end());
  std::sort(by_mid.begin(), by_mid.end());

  transfers_.resize(n);
  mass_by_transfers_.assign(n + 1, 0.0);
  weighted_by_transfers_.assign(n + 1, 0.0);
  mids_.resize(n);
  mass_by_mid_.assign(n + 1, 0.0);
  weighted_by_mid_.assign(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    transfers_[i] = by_f[i].first;
    weighted_by_transfers_[i + 1] = weighted_by_transfers_[i] + by_f[i].first * by_f[i].second;
    mids_[i] = by_mid[i].first;
    weighted_by_mid_[i + 1] = weighted_by_mid_[i] + by_mid[i].first * by_mid[i].second;
  }
  for (std::size_t i = n; i-- > 0;) {
    mass_by_transfers_[i] = mass_by_transfers_[i + 1] + by_f[i].second;
    mass_by_mid_[i] = mass_by_mid_[i + 1] + by_mid[i].second;
  }
}

ContactIntegrals ContactQuadrature::at(double gamma) const {
  double S = 0.0;
  if (gamma > 0.0) {
    const auto k = static_cast<std::size_t>(
        std::lower_bound(transfers_.begin(), transfers_.end(), gamma) - transfers_.begin());
    S = mass_by_transfers_[k] + weighted_by_transfers_[k] / gamma;
  } else {
    const auto k = static_cast<std::size_t>(
        std::lower_bound(transfers_.begin(), transfers_.end(), 1.0) - transfers_.begin());
    S = mass_by_transfers_[k];
  }
  const double cap = gamma * transfer_time_ + t0_;
  const auto k = static_cast<std::size_t>(
      std::lower_bound(mids_.begin(), mids_.end(), cap) - mids_.begin());
  const double T_S = weighted_by_mid_[k] + cap * mass_by_mid_[k];
  return {S, T_S};
}

FixedPointMap evaluate_fixed_point_map(double a, const SystemParams& params,
                                       const ContactQuadrature& quad) {
  FixedPointMap m{};
  const double M = params.model_count;
  const double w = params.w();
  const double N = params.N();
  const double alpha = *params.alpha;
  const double g = *params.g;
  const double seed_rate = params.obs_rate * params.recorders;

  m.gamma = 2.0 * M * w * w * a;
  const auto ci = quad.at(m.gamma);
  m.S = ci.S;
  m.T_S = ci.T_S;

  // b = K - sqrt(K^2 - 1) rewritten as T_S / (u + v) to avoid cancellation.
  if (g <= 0.0) {
    m.b = 0.0;
    m.b_over_ts = 0.0;
    m.K = kInf;
  } else {
    const double u = m.T_S * (1.0 + alpha / (2.0 * g * N)) + 1.0 / (4.0 * g);
    const double v = std::sqrt(std::max(u * u - m.T_S * m.T_S, 0.0));
    m.b_over_ts = 1.0 / (u + v);
    m.b = m.T_S * m.b_over_ts;
    m.K = m.T_S > 0.0 ? u / m.T_S : kInf;
  }

  const double X = m.b_over_ts * N * m.S * w;
  if (X <= 0.0) {
    m.H = -kInf;
    m.c = kInf;
    m.value = seed_rate > 0.0 ? seed_rate / (seed_rate + alpha) : 0.0;
    return m;
  }
  m.H = 1.0 - (alpha + seed_rate) / X;
  m.c = seed_rate / X;
  const double root = std::sqrt(m.H * m.H + 4.0 * m.c);
  m.value = m.H >= 0.0 ? 0.5 * (m.H + root) : (root > -m.H ? 2.0 * m.c / (root - m.H) : 0.0);
  m.value = clamp01(m.value);
  return m;
}

MeanFieldSolution solve_fixed_point(const SystemParams& params, const ContactModel& cm,
                                    const FixedPointOptions& options) {
  const ContactQuadrature quad(cm, params.transfer_time, params.t0);
  const double seed_rate = params.obs_rate * params.recorders;
  if (quad.at(0.0).S <= 0.0 && seed_rate <= 0.0) {
    throw Error(Errc::DegenerateContactModel,
                "no contact completes a transfer and no observations seed models");
  }

  std::vector<double> trace;
  double a = clamp01(options.initial);
  bool converged = false;
  bool bisected = false;
  int it = 0;
  const double theta = params.damping;
  for (; it < options.max_iterations; ++it) {
    const double next = evaluate_fixed_point_map(a, params, quad).value;
    trace.push_back(next);
    if (trace.size() > 50) trace.erase(trace.begin());
    if (std::abs(next - a) < options.tolerance) {
      a = next;
      converged = true;
      break;
    }
    a = (1.0 - theta) * a + theta * next;
    if (options.allow_bisection && it + 1 >= options.damped_iterations) break;
  }

  if (!converged && options.allow_bisection && it < options.max_iterations) {
    // Root of fix(a) - a on [0, 1]; fix(0) >= 0 and fix(1) <= 1 bracket it.
    bisected = true;
    double lo = 0.0;
    double hi = 1.0;
    auto residual = [&](double x) { return evaluate_fixed_point_map(x, params, quad).value - x; };
    if (residual(hi) >= 0.0) {
      a = 1.0;
      converged = true;
    } else if (residual(lo) <= 0.0) {
      a = 0.0;
      converged = true;
    }
    for (; !converged && it < options.max_iterations; ++it) {
      const double mid = 0.5 * (lo + hi);
      const double r = residual(mid);
      trace.push_back(mid);
      if (trace.size() > 50) trace.erase(trace.begin());
      if (r > 0.0) {
        lo = mid;
      } else {
        hi = mid;
      }
      if (hi - lo < options.tolerance) {
        a = 0.5 * (lo + hi);
        converged = true;
      }
    }
  }
  if (!converged) {
    throw NoConvergenceError("fixed point did not converge in " +
                                 std::to_string(options.max_iterations) + " iterations",
                             std::move(trace));
  }

  const auto m = evaluate_fixed_point_map(a, params, quad);
  MeanFieldSolution sol;
  sol.a = a;
  sol.b = m.b;
  sol.w = params.w();
  sol.gamma = m.gamma;
  sol.S = m.S;
  sol.T_S = m.T_S;
  sol.K = m.K;
  sol.H = m.H;
  sol.iterations = it + 1;
  sol.used_bisection = bisected;
  sol.r = merge_arrival_rate(sol, params);
  const auto verdict = stability_and_delays(sol, params);
  sol.stable = verdict.stable;
  sol.stability_lhs = verdict.lhs;
  sol.load_term = verdict.load_term;
  sol.delay_term = verdict.delay_term;
  sol.rho = verdict.load_term;
  sol.d_M = verdict.d_M;
  sol.d_I = verdict.d_I;
  return sol;
}

std::vector<TransientSample> integrate_transient_ode(const SystemParams& params,
                                                     const ContactModel& cm, double a0, double b0,
                                                     double horizon, double sample_every) {
  const ContactQuadrature quad(cm, params.transfer_time, params.t0);
  const double M = params.model_count;
  const double w = params.w();
  const double N = params.N();
  const double alpha = *params.alpha;
  const double g = *params.g;
  const double seed_rate = params.obs_rate * params.recorders;
  constexpr double kMinStep = 1e-7;

  auto drift = [&](double a, double b, double& da, double& db, double& ts) {
    a = clamp01(a);
    b = clamp01(b);
    const auto ci = quad.at(2.0 * M * w * w * a);
    ts = std::max(ci.T_S, 1e-12);
    da = (b / ts) * a * (1.0 - a) * ci.S * w * w + seed_rate * (1.0 - a) * w / N -
         (alpha / N) * w * a;
    db = 2.0 * g * (1.0 - b) * (1.0 - b) - b / ts - 2.0 * alpha * b / N;
  };

  std::vector<TransientSample> out;
  double t = 0.0;
  double a = a0;
  double b = b0;
  out.push_back({t, a, b});
  double next_sample = sample_every;
  while (t < horizon) {
    double k1a, k1b, ts;
    drift(a, b, k1a, k1b, ts);
    double h = std::max(std::min(0.1, ts / 10.0), kMinStep);
    h = std::min(h, horizon - t);
    double k2a, k2b, k3a, k3b, k4a, k4b, unused;
    drift(a + 0.5 * h * k1a, b + 0.5 * h * k1b, k2a, k2b, unused);
    drift(a + 0.5 * h * k2a, b + 0.5 * h * k2b, k3a, k3b, unused);
    drift(a + h * k3a, b + h * k3b, k4a, k4b, unused);
    a = clamp01(a + h / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a));
    b = clamp01(b + h / 6.0 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b));
    t += h;
    if (t >= next_sample - 1e-12 || t >= horizon) {
      out.push_back({t, a, b});
      while (next_sample <= t + 1e-12) next_sample += sample_every;
    }
  }
  return out;
}

double merge_arrival_rate(const MeanFieldSolution& sol, const SystemParams& params) {
  const double g = *params.g;
  return params.model_count * sol.a * sol.S * sol.w * sol.w * g * (1.0 - sol.b) * (1.0 - sol.b);
}

StabilityVerdict stability_and_delays(const MeanFieldSolution& sol, const SystemParams& params) {
  const double M = params.model_count;
  const double N = params.N();
  const double TT = params.train_time;
  const double TM = params.merge_time;
  const double seed = params.obs_rate * params.recorders;
  const double q = M * sol.w * seed / N;
  const double q2 = params.condition_verbatim ? M * seed / N : q;
  const double r = sol.r;
  const double rho_m = r * TM;
  const double t_star = *params.t_star;

  StabilityVerdict v{};
  v.load_term = q * TT + rho_m;
  if (rho_m >= 1.0 || q2 * TT >= 1.0) {
    v.delay_term = kInf;
  } else {
    v.delay_term = 1.0 / (2.0 * t_star * (1.0 - rho_m)) *
                   (r * TM * TM / (1.0 - rho_m) + TT * (2.0 - q2 * TT) / (1.0 - q2 * TT));
  }
  v.lhs = std::max(v.load_term, v.delay_term);
  v.stable = v.lhs <= 1.0;
  if (v.stable) {
    const double wait_m = r * TM * TM / (2.0 * (1.0 - rho_m));
    const double train_share = params.dm_textbook ? 0.5 * q * TT * TT : q * TT * TT;
    v.d_M = TM + wait_m + train_share;
    v.d_I = (wait_m + TT + q * TT * TT / (2.0 * (1.0 - q * TT))) / (1.0 - rho_m);
  } else {
    v.d_M = kNaN;
    v.d_I = kNaN;
  }
  return v;
}

double AvailabilityCurve::at(double age) const {
  if (tau.empty() || age < 0.0 || age > tau.back()) return 0.0;
  const auto it = std::upper_bound(tau.begin(), tau.end(), age);
  if (it == tau.end()) return o.back();
  const auto k = static_cast<std::size_t>(it - tau.begin());
  if (k == 0) return o.front();
  const double t0 = tau[k - 1];
  const double t1 = tau[k];
  const double x = t1 > t0 ? (age - t0) / (t1 - t0) : 0.0;
  return o[k - 1] + x * (o[k] - o[k - 1]);
}

AvailabilityCurve integrate_availability_dde(const DdeProblem& p) {
  if (!(p.step > 0.0) || !(p.tau_l > 0.0)) {
    throw Error(Errc::InvalidValue, "delay equation needs positive step and lifetime");
  }
  const auto K = static_cast<std::size_t>(std::ceil(p.tau_l / p.step - 1e-9));
  const double h = p.tau_l / static_cast<double>(K);
  const double start = p.d_I + p.d_M;

  AvailabilityCurve c;
  c.step = h;
  c.d_I = p.d_I;
  c.d_M = p.d_M;
  c.obs_rate = p.obs_rate;
  c.tau.resize(K + 1);
  c.o.assign(K + 1, 0.0);
  for (std::size_t k = 0; k <= K; ++k) {
    c.tau[k] = h * static_cast<double>(k);
    if (c.tau[k] >= p.d_I && c.tau[k] <= start) c.o[k] = p.initial_level;
  }

  // First grid index strictly after the start of integration.
  std::size_t first = static_cast<std::size_t>(std::floor(start / h)) + 1;
  std::size_t computed = first;  // grid points [first, computed) are solved

  auto history = [&](double s) {
    if (s < p.d_I) return 0.0;
    if (s <= start) return p.initial_level;
    const auto k = static_cast<std::size_t>(std::floor(s / h));
    if (k >= computed - 1) {
      // Beyond the solved region only when the step exceeds the delay.
      return computed > first ? c.o[computed - 1] : p.initial_level;
    }
    const double t_lo = k < first ? start : c.tau[k];
    const double o_lo = k < first ? p.initial_level : c.o[k];
    const double t_hi = c.tau[k + 1];
    const double x = t_hi > t_lo ? (s - t_lo) / (t_hi - t_lo) : 0.0;
    return o_lo + x * (c.o[k + 1] - o_lo);
  };
  auto rhs = [&](double tau, double o) {
    const double od = history(tau - p.d_M);
    return p.growth * ((1.0 - p.a) * o + p.a * od * (1.0 - od)) - p.exit_rate * o;
  };

  double t = start;
  double o = p.initial_level;
  for (std::size_t k = first; k <= K; ++k) {
    const double dt = c.tau[k] - t;
    if (dt > 0.0) {
      const double k1 = rhs(t, o);
      const double k2 = rhs(t + 0.5 * dt, o + 0.5 * dt * k1);
      const double k3 = rhs(t + 0.5 * dt, o + 0.5 * dt * k2);
      const double k4 = rhs(t + dt, o + dt * k3);
      o = clamp01(o + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
    }
    t = c.tau[k];
    c.o[k] = o;
    computed = k + 1;
  }

  double integral = 0.0;
  for (std::size_t k = 0; k < K; ++k) integral += 0.5 * h * (c.o[k] + c.o[k + 1]);
  c.integral_o = integral;
  return c;
}

AvailabilityCurve solve_observation_dde(const MeanFieldSolution& sol, const SystemParams& params,
                                        double step) {
  if (!sol.stable) {
    throw Error(Errc::UnstableSystem, "observation curve requires a stable operating point");
  }
  const double holders = std::ceil(sol.a * params.N());
  if (holders <= 0.0 || sol.T_S <= 0.0) {
    throw Error(Errc::CurveUnavailable, "model availability is zero");
  }
  DdeProblem p{};
  p.growth = sol.b * sol.S * sol.w * sol.w / sol.T_S;
  p.a = sol.a;
  p.exit_rate = *params.alpha * sol.w / params.N();
  p.d_M = sol.d_M;
  p.d_I = sol.d_I;
  p.initial_level = std::min(1.0, params.recorders / holders);
  p.tau_l = params.obs_lifetime;
  p.obs_rate = params.obs_rate;
  if (step > 0.0) {
    p.step = step;
  } else {
    p.step = std::min(0.1, params.obs_lifetime / 1e4);
    if (sol.d_M > 0.0) p.step = std::min(p.step, sol.d_M / 20.0);
  }
  return integrate_availability_dde(p);
}

StalenessBound staleness_bound(const AvailabilityCurve& curve, const SystemParams& params,
                               std::size_t samples, std::uint64_t seed) {
  const double lambda = params.obs_rate;
  const double tau_l = params.obs_lifetime;
  const double delta = params.delta();
  const auto i_max = static_cast<std::size_t>(std::ceil(10.0 * lambda * tau_l));
  constexpr std::size_t kBatches = 10;
  const std::size_t per_batch = std::max<std::size_t>(samples / kBatches, 1);

  // sum of o(gamma_i) and count of gamma_i <= tau_l, per batch and rung.
  std::vector<std::vector<double>> sum(kBatches, std::vector<double>(i_max + 1, 0.0));
  std::vector<std::vector<double>> hits(kBatches, std::vector<double>(i_max + 1, 0.0));
  Rng rng(seed);
  for (std::size_t batch = 0; batch < kBatches; ++batch) {
    for (std::size_t s = 0; s < per_batch; ++s) {
      double gamma = 0.0;
      for (std::size_t i = 1; i <= i_max; ++i) {
        gamma += rng.exponential(1.0 / lambda);
        if (gamma > tau_l) break;
        hits[batch][i] += 1.0;
        sum[batch][i] += curve.at(gamma);
      }
    }
  }

  struct Estimate {
    double value;
    int terms;
  };
  auto estimate = [&](const std::vector<double>& so, const std::vector<double>& cnt, double n) {
    double survival = 1.0;
    double num = 0.0;
    double den = 0.0;
    int terms = 0;
    for (std::size_t i = 1; i <= i_max; ++i) {
      if (cnt[i] <= 0.0) break;
      const double e_cond = so[i] / cnt[i];
      num += static_cast<double>(i) * e_cond * survival;
      den += (so[i] / n) * survival;
      survival *= 1.0 - e_cond;
      ++terms;
      if (survival < 1e-6) break;
    }
    return Estimate{den > 0.0 ? delta * num / den : kInf, terms};
  };

  std::vector<double> total_sum(i_max + 1, 0.0);
  std::vector<double> total_hits(i_max + 1, 0.0);
  std::vector<double> batch_values;
  for (std::size_t batch = 0; batch < kBatches; ++batch) {
    for (std::size_t i = 0; i <= i_max; ++i) {
      total_sum[i] += sum[batch][i];
      total_hits[i] += hits[batch][i];
    }
    batch_values.push_back(estimate(sum[batch], hits[batch], double(per_batch)).value);
  }
  const auto overall = estimate(total_sum, total_hits, double(per_batch * kBatches));

  StalenessBound out{};
  out.value = overall.value;
  out.delta = delta;
  out.terms = overall.terms;
  out.finite = std::isfinite(overall.value);
  out.ratio = out.finite ? overall.value / delta : kInf;
  if (out.finite && std::all_of(batch_values.begin(), batch_values.end(),
                                [](double v) { return std::isfinite(v); })) {
    const double mean =
        std::accumulate(batch_values.begin(), batch_values.end(), 0.0) / double(kBatches);
    double ss = 0.0;
    for (double v : batch_values) ss += (v - mean) * (v - mean);
    out.std_error = std::sqrt(ss / double(kBatches - 1) / double(kBatches));
  } else {
    out.std_error = kInf;
  }
  return out;
}

double node_stored_information(const MeanFieldSolution& sol, const AvailabilityCurve& curve,
                               const SystemParams& params) {
  if (!sol.stable) throw Error(Errc::UnstableSystem, "stored information needs a stable system");
  const double per_instance = std::min(static_cast<double>(params.capacity()),
                                       params.obs_rate * curve.integral_o);
  return params.model_count * sol.w * sol.a * per_instance;
}

SystemParams with_model_count(const SystemParams& tmpl, int model_count) {
  SystemParams p = tmpl;
  const bool follows = !tmpl.subscription_limit || tmpl.W() == tmpl.model_count;
  p.model_count = model_count;
  if (follows) p.subscription_limit = model_count;
  return validate(p);
}

CapacityResult learning_capacity(const SystemParams& tmpl, const ContactModel& cm, int m_max) {
  if (m_max < 1) throw Error(Errc::NonPositive, "m_max must be >= 1", "m_max");
  CapacityResult result{0, *tmpl.min_model_size, -1.0, {}};
  for (int M = 1; M <= m_max; ++M) {
    CapacityRow row;
    row.model_count = M;
    try {
      SystemParams p = tmpl;
      p.model_size = *tmpl.min_model_size;
      p = with_model_count(p, M);
      const auto sol = solve_fixed_point(p, cm);
      row.a = sol.a;
      row.lhs = sol.stability_lhs;
      row.stable = sol.stable;
      if (sol.stable) {
        const auto curve = solve_observation_dde(sol, p);
        row.integral_o = curve.integral_o;
        row.stored_information = node_stored_information(sol, curve, p);
        row.value = sol.w * sol.a *
                    std::min(static_cast<double>(p.capacity()) / p.obs_rate, curve.integral_o);
        if (row.value > result.value) {
          result.value = row.value;
          result.best_model_count = M;
        }
      }
    } catch (const Error& e) {
      row.stable = false;
      row.error = errc_name(e.code());
    }
    result.table.push_back(row);
  }
  if (result.best_model_count == 0) {
    throw Error(Errc::AllUnstable, "no model count in 1.." + std::to_string(m_max) + " is stable");
  }
  return result;
}

std::vector<StabilityCell> stability_map(const SystemParams& tmpl, const ContactModel& cm,
                                         const std::vector<int>& m_values,
                                         const std::vector<double>& lambda_values) {
  std::vector<StabilityCell> cells;
  for (int M : m_values) {
    for (double lambda : lambda_values) {
      StabilityCell cell{M, lambda, kNaN, false, false, {}};
      try {
        SystemParams p = tmpl;
        p.obs_rate = lambda;
        p = with_model_count(p, M);
        const auto sol = solve_fixed_point(p, cm);
        cell.lhs = sol.stability_lhs;
        cell.stable = sol.stable;
        cell.feasible = true;
      } catch (const Error& e) {
        cell.error = errc_name(e.code());
      }
      cells.push_back(cell);
    }
  }
  return cells;
}

}  // namespace fg
