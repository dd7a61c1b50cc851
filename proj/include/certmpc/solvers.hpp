#pragma once

#include <Eigen/Cholesky>
#include <optional>
#include <vector>

#include "certmpc/model.hpp"

namespace certmpc {

/// When a solver run stops.
///   FixedIterations(m): run exactly m iterations.
///   Tolerance(eps):     run until the method's convergence test passes;
///                       throws NonConvergence if the safety cap is hit first.
///   Combined(m, eps):   stop at whichever fires first.
/// The convergence test is ||grad J|| <= eps for the projected gradient
/// method. For ADMM both residuals of the splitting must fall below eps:
/// the dual step ||lambda+ - lambda|| = rho ||u - v|| and rho ||v+ - v||.
/// (The dual-step norm alone is also zero at iteration one whenever the
/// local step lands inside the box, long before convergence.)
struct StopPolicy {
    enum class Kind { FixedIterations, Tolerance, Combined };

    Kind kind;
    long max_iterations;
    double epsilon;

    static StopPolicy fixed_iterations(long m_bar);
    static StopPolicy tolerance(double eps, long safety_cap = 1000000);
    static StopPolicy combined(long m_max, double eps);
};

enum class StopReason { HitIterationCap, ToleranceMet };

/// Optional per-iterate diagnostics. iterates[0] is the initial guess;
/// iterates[m] the result of iteration m. residuals[m-1] is the gradient
/// norm (PGDM) or dual step norm (ADMM) after iteration m.
struct SolverTrace {
    std::vector<Vector> iterates;
    std::vector<double> residuals;
};

struct SolverRun {
    Vector u_final;
    long iterations = 0;
    StopReason stop_reason = StopReason::HitIterationCap;
    std::optional<SolverTrace> trace;
};

/// Elementwise clamp onto [lo, hi].
Vector project_box(const Vector& u, const Vector& lo, const Vector& hi);

/// Projected gradient descent u+ = Proj(u - alpha (Hu + S'x0)).
/// alpha <= 0 selects the default step 1/lambda_max(H).
SolverRun pgdm_solve(const CondensedQp& qp, const Vector& x0, const Vector& u0,
                     double alpha, const StopPolicy& policy, bool record_trace = false);

struct AdmmState {
    Vector u;
    Vector v;
    Vector lambda;
    double rho;

    static AdmmState zero(Index n, double rho);
};

/// ADMM on the box-constrained QP with the splitting u = v:
///   (H + rho I) u+ = -(S'x0 + lambda - rho v)
///   v+      = Proj(u+ + lambda / rho)
///   lambda+ = lambda + rho (u+ - v+)
/// Returns v (the projected copy, always feasible) as the control sequence.
/// H + rho I is factored once per (qp, rho) pair and reused across solves.
class AdmmSolver {
public:
    AdmmSolver(const CondensedQp& qp, double rho);

    SolverRun solve(const Vector& x0, const AdmmState& state0, const StopPolicy& policy,
                    bool record_trace = false, AdmmState* final_state = nullptr) const;

    /// Zero-initialized state.
    SolverRun solve(const Vector& x0, const StopPolicy& policy, bool record_trace = false) const;

    double rho() const { return rho_; }

private:
    const CondensedQp& qp_;
    double rho_;
    Eigen::LLT<Matrix> llt_;
};

SolverRun admm_solve(const CondensedQp& qp, const Vector& x0, const AdmmState& state0,
                     const StopPolicy& policy, bool record_trace = false);

/// High-accuracy reference solver used for value-function evaluation and
/// ground truth. Projected gradient iterations with step 2/(mu+L); stops
/// once the iterate increment certifies ||u - u*|| <= tol through the
/// contraction bound ||u - u*|| <= ||u+ - u|| / (1 - kappa). When the
/// unconstrained minimizer -H^{-1}S'x0 is feasible it is returned directly
/// (the first-order condition already holds); tests cross-check both paths.
class OracleSolver {
public:
    explicit OracleSolver(const CondensedQp& qp, double tol = 1e-10, long max_iter = 1000000,
                          bool interior_shortcut = true);

    Vector solve(const Vector& x0) const;
    Vector solve(const Vector& x0, const Vector& u0) const;

    struct Run {
        Vector u;
        long iterations;
    };
    Run solve_run(const Vector& x0, const Vector* u0 = nullptr) const;

    /// V(x0) = 2 J(u*; x0) + x0'Q x0.
    double value(const Vector& x0) const;
    double value(const Vector& x0, const Vector& u0) const;

    double mu() const { return mu_; }
    double L() const { return L_; }
    double tol() const { return tol_; }
    const CondensedQp& qp() const { return qp_; }

private:
    const CondensedQp& qp_;
    double tol_;
    long max_iter_;
    bool interior_shortcut_;
    double mu_, L_, alpha_, increment_tol_;
    Eigen::LLT<Matrix> llt_h_;
};

/// Drop the first input block and append zeros (receding-horizon shift).
Vector shift_sequence(const Vector& u, Index n_u);

/// Scale u down to the ball ||u|| <= radius (unchanged when already inside).
Vector rescale_to_radius(Vector u, double radius);

/// Warm-start policy for receding-horizon solves. Produces the best (by
/// cost) of three feasible candidates, each rescaled so that
/// ||u0|| <= gamma ||x0||_Q as the certified initialization requires:
///   - the clamped unconstrained minimizer,
///   - one active-set refinement of it (coordinates clipped by the clamp
///     are fixed at their bounds and the rest re-solved exactly),
///   - the shifted previous solution, when one is supplied.
class WarmStart {
public:
    WarmStart(const CondensedQp& qp, double gamma);

    Vector seed(const Vector& x0, const Vector* previous = nullptr) const;

    double gamma() const { return gamma_; }

private:
    Vector refine_active_set(const Vector& x0, const Vector& u) const;

    const CondensedQp& qp_;
    double gamma_;
    Eigen::LLT<Matrix> llt_h_;
};

}  // namespace certmpc
