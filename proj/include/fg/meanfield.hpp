#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fg/mobility.hpp"
#include "fg/params.hpp"

namespace fg {

struct ContactIntegrals {
  double S;    // single-transfer success probability
  double T_S;  // mean exchange duration, s
};

/// Bin-midpoint quadrature of the transfer-success and exchange-duration
/// integrals over the contact-duration histogram.
ContactIntegrals contact_integrals(double gamma, const ContactModel& cm, double transfer_time,
                                   double t0);

/// Same integrals in O(log bins) per evaluation, from sorted prefix sums.
/// The transient ODE calls this millions of times.
class ContactQuadrature {
 public:
  ContactQuadrature(const ContactModel& cm, double transfer_time, double t0);
  ContactIntegrals at(double gamma) const;

 private:
  double transfer_time_;
  double t0_;
  // Bins sorted by completed-transfer count f = floor((t_c - t0) / T_L).
  std::vector<double> transfers_;
  std::vector<double> mass_by_transfers_;          // suffix sums of mass
  std::vector<double> weighted_by_transfers_;      // prefix sums of mass * f
  // Bins sorted by midpoint.
  std::vector<double> mids_;
  std::vector<double> mass_by_mid_;                // suffix sums of mass
  std::vector<double> weighted_by_mid_;            // prefix sums of mass * t_c
};

struct MeanFieldSolution {
  double a = 0.0;      // model availability
  double b = 0.0;      // busy probability
  double w = 1.0;
  double gamma = 0.0;  // mean exchangeable instances per contact
  double S = 0.0;
  double T_S = 0.0;
  double K = 0.0;
  double H = 0.0;
  double r = 0.0;      // merge-task arrival rate per node
  double rho = 0.0;    // queue utilization r T_M + (M w lambda Lambda / N) T_T
  bool stable = false;
  double stability_lhs = 0.0;
  double load_term = 0.0;
  double delay_term = 0.0;
  double d_M = 0.0;    // NaN when unstable
  double d_I = 0.0;
  int iterations = 0;
  bool used_bisection = false;
};

struct FixedPointOptions {
  double tolerance = 1e-9;
  int max_iterations = 10000;
  int damped_iterations = 200;  // before switching to bisection
  bool allow_bisection = true;
  double initial = 0.5;
};

/// Intermediates of one evaluation of the fixed-point map at availability a.
struct FixedPointMap {
  double gamma, S, T_S, K, b, b_over_ts, H, c, value;
};

FixedPointMap evaluate_fixed_point_map(double a, const SystemParams& params,
                                       const ContactQuadrature& quad);

/// Damped iteration on the model availability; also fills r and the
/// stability verdict. Throws NoConvergenceError / DegenerateContactModel.
MeanFieldSolution solve_fixed_point(const SystemParams& params, const ContactModel& cm,
                                    const FixedPointOptions& options = {});

struct TransientSample {
  double t;
  double a;
  double b;
};

/// Fixed-step RK4 on the (a, b) drift, step min(0.1, T_S(a)/10).
std::vector<TransientSample> integrate_transient_ode(const SystemParams& params,
                                                     const ContactModel& cm, double a0, double b0,
                                                     double horizon, double sample_every = 1.0);

double merge_arrival_rate(const MeanFieldSolution& sol, const SystemParams& params);

struct StabilityVerdict {
  bool stable;
  double lhs;
  double load_term;
  double delay_term;
  double d_M;
  double d_I;
};

/// Two-class M/D/1 with non-preemptive merge priority. Uses sol.r.
StabilityVerdict stability_and_delays(const MeanFieldSolution& sol, const SystemParams& params);

struct AvailabilityCurve {
  std::vector<double> tau;
  std::vector<double> o;
  double step = 0.0;
  double d_I = 0.0;
  double d_M = 0.0;
  double integral_o = 0.0;
  double obs_rate = 0.0;

  /// Linear interpolation; zero outside [0, tau_l].
  double at(double age) const;
  double incorporation_rate(std::size_t i) const { return obs_rate * o[i]; }
};

/// Observation-availability delay equation in isolation.
struct DdeProblem {
  double growth;         // b S w^2 / T_S
  double a;
  double exit_rate;      // alpha w / N
  double d_M;
  double d_I;
  double initial_level;  // Lambda / ceil(a N)
  double tau_l;
  double step;
  double obs_rate = 0.0;
};

AvailabilityCurve integrate_availability_dde(const DdeProblem& problem);

/// Throws UnstableSystem on an unstable solution; `step` overrides the
/// default min(d_M/20, 0.1, tau_l/1e4) when positive.
AvailabilityCurve solve_observation_dde(const MeanFieldSolution& sol, const SystemParams& params,
                                        double step = 0.0);

struct StalenessBound {
  double value;      // F lower bound, s (infinite when nothing is incorporated)
  double std_error;  // batch-means standard error
  double ratio;      // value / delta
  double delta;
  bool finite;
  int terms;
};

StalenessBound staleness_bound(const AvailabilityCurve& curve, const SystemParams& params,
                               std::size_t samples, std::uint64_t seed);

double node_stored_information(const MeanFieldSolution& sol, const AvailabilityCurve& curve,
                               const SystemParams& params);

/// Copy of a validated template with M models; W follows M when it was
/// defaulted, otherwise stays fixed.
SystemParams with_model_count(const SystemParams& tmpl, int model_count);

struct CapacityRow {
  int model_count;
  bool stable = false;
  double a = 0.0;
  double lhs = 0.0;
  double integral_o = 0.0;
  double stored_information = 0.0;
  double value = 0.0;  // w a min(L / (lambda k), integral o)
  std::string error;
};

struct CapacityResult {
  int best_model_count;
  double best_model_size;
  double value;
  std::vector<CapacityRow> table;
};

/// Sets L = L_m and scans M = 1..m_max; throws AllUnstable when no M is
/// feasible.
CapacityResult learning_capacity(const SystemParams& tmpl, const ContactModel& cm, int m_max);

struct StabilityCell {
  int model_count;
  double obs_rate;
  double lhs;
  bool stable;
  bool feasible;
  std::string error;
};

std::vector<StabilityCell> stability_map(const SystemParams& tmpl, const ContactModel& cm,
                                         const std::vector<int>& m_values,
                                         const std::vector<double>& lambda_values);

}  // namespace fg
