#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "certmpc/certify.hpp"
#include "certmpc/model.hpp"
#include "certmpc/solvers.hpp"

namespace certmpc {

/// One plant update x+ = Ax + Bu0.
Vector step_plant(const LtiModel& model, const Vector& x, const Vector& u0);

/// Constants entering the per-step stability bound
///   2 eta1_bar gamma kappa^m ||x||_Q + 2 eta2_bar gamma^2 kappa^(2m) ||x||_Q^2.
struct BoundParams {
    double kappa;
    double eta1_bar;
    double eta2_bar;
    double gamma;

    static BoundParams from(const Certificate& cert) {
        return BoundParams{cert.kappa, cert.eta1_bar, cert.eta2_bar, cert.gamma};
    }

    double rhs(double iterations, double x_norm_q) const;
};

struct StepRecord {
    Vector x;                    // state the step was solved from
    Vector u0;                   // applied first input block
    long iterations = 0;
    double V_now = 0.0;          // V(x_j)
    double V_next_opt = 0.0;     // V(x_1), x_1 = Ax + B u0*(x)
    double V_next_actual = 0.0;  // V(x_0^+), x_0^+ = Ax + B u0
    double lyapunov_gap = 0.0;   // |V_next_actual - V_next_opt|
    double bound_rhs = 0.0;
    std::optional<double> delta;  // gap / |V_next_opt|; unset when |V_next_opt| <= v_floor
};

struct ClosedLoopTrace {
    std::vector<StepRecord> steps;
    Vector x_final;

    long total_iterations() const;
    long max_iterations() const;
};

/// A controller produces the full (sub)optimal input sequence for a state;
/// warm-start bookkeeping lives inside the callable.
using ControllerFn = std::function<SolverRun(const Vector& x0)>;

struct ClosedLoopOptions {
    int n_steps = 40;
    /// Steps whose optimal-next-state value is at or below this floor do not
    /// record a suboptimality rate (the denominator is noise-dominated once
    /// the state has effectively reached the origin).
    double v_floor = 1.0;
};

/// Receding-horizon simulation: solve from the current state, apply the
/// first input, record value-function diagnostics against the oracle.
ClosedLoopTrace run_closed_loop(const LtiModel& model, const CondensedQp& qp,
                                const ControllerFn& controller, const OracleSolver& oracle,
                                const BoundParams& bounds, const Vector& x_init,
                                const ClosedLoopOptions& opts);

/// Percent decrease in total iterations between two runs over the same
/// initial condition and step count.
double iteration_reduction(const ClosedLoopTrace& unbounded, const ClosedLoopTrace& bounded);
double iteration_reduction(long unbounded_total, long bounded_total);

struct SweepConfig {
    std::string label;
    std::function<ControllerFn()> make_controller;  // fresh warm-start state per run
    BoundParams bounds;
};

struct SweepRow {
    std::string label;
    double m_avg = 0.0;
    long m_max = 0;
    double delta_avg_pct = 0.0;
    double delta_max_pct = 0.0;
    long total_iterations = 0;
    long n_steps = 0;
    long n_delta_samples = 0;
};

/// Closed loops from every initial condition for every configuration;
/// aggregates summary statistics across all runs and steps. Runs fan
/// out over a bounded worker pool; aggregation is ordered by grid index.
std::vector<SweepRow> sweep_initial_conditions(const LtiModel& model, const CondensedQp& qp,
                                               const std::vector<SweepConfig>& configurations,
                                               const std::vector<Vector>& x0_set,
                                               const OracleSolver& oracle,
                                               const ClosedLoopOptions& opts, int n_threads = 0);

/// Delimited text export, one row per step:
/// step, x..., u0..., iterations, V_now, V_next_opt, V_next_actual,
/// lyapunov_gap, bound_rhs, delta.
std::string trace_to_csv(const ClosedLoopTrace& trace);

}  // namespace certmpc
