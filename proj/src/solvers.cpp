#include "certmpc/solvers.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <sstream>

namespace certmpc {

StopPolicy StopPolicy::fixed_iterations(long m_bar) {
    if (m_bar < 1) throw InvalidSpec("fixed iteration count must be >= 1");
    return StopPolicy{Kind::FixedIterations, m_bar, 0.0};
}

StopPolicy StopPolicy::tolerance(double eps, long safety_cap) {
    if (!(eps > 0.0)) throw InvalidSpec("tolerance must be positive");
    if (safety_cap < 1) throw InvalidSpec("safety cap must be >= 1");
    return StopPolicy{Kind::Tolerance, safety_cap, eps};
}

StopPolicy StopPolicy::combined(long m_max, double eps) {
    if (m_max < 1) throw InvalidSpec("iteration cap must be >= 1");
    if (!(eps > 0.0)) throw InvalidSpec("tolerance must be positive");
    return StopPolicy{Kind::Combined, m_max, eps};
}

Vector project_box(const Vector& u, const Vector& lo, const Vector& hi) {
    if (u.size() != lo.size() || u.size() != hi.size()) {
        throw DimensionMismatch("project_box: inconsistent lengths");
    }
    for (Index i = 0; i < u.size(); ++i) {
        if (lo(i) > hi(i)) throw InvalidSpec("project_box: lo > hi");
    }
    return u.cwiseMax(lo).cwiseMin(hi);
}

SolverRun pgdm_solve(const CondensedQp& qp, const Vector& x0, const Vector& u0,
                     double alpha, const StopPolicy& policy, bool record_trace) {
    const Index n = qp.num_vars();
    if (x0.size() != qp.state_dim()) throw DimensionMismatch("pgdm_solve: x0 has wrong length");
    if (u0.size() != n) throw DimensionMismatch("pgdm_solve: u0 has wrong length");

    if (alpha <= 0.0) {
        Eigen::SelfAdjointEigenSolver<Matrix> es(qp.H());
        alpha = 1.0 / es.eigenvalues().maxCoeff();
    }

    SolverRun run;
    if (record_trace) run.trace = SolverTrace{};

    const Vector sx = qp.S().transpose() * x0;
    Vector u = project_box(u0, qp.u_lo(), qp.u_hi());
    if (record_trace) run.trace->iterates.push_back(u);

    Vector grad(n), u_next(n);
    const bool check_tol = policy.kind != StopPolicy::Kind::FixedIterations;
    for (long m = 1; m <= policy.max_iterations; ++m) {
        grad.noalias() = qp.H() * u;
        grad += sx;
        u_next = (u - alpha * grad).cwiseMax(qp.u_lo()).cwiseMin(qp.u_hi());
        u.swap(u_next);
        if (!u.allFinite()) throw NonFiniteIterate("pgdm_solve: iterate is not finite");
        run.iterations = m;

        double grad_norm = 0.0;
        if (check_tol || record_trace) {
            grad.noalias() = qp.H() * u;
            grad += sx;
            grad_norm = grad.norm();
        }
        if (record_trace) {
            run.trace->iterates.push_back(u);
            run.trace->residuals.push_back(grad_norm);
        }
        if (check_tol && grad_norm <= policy.epsilon) {
            run.u_final = u;
            run.stop_reason = StopReason::ToleranceMet;
            return run;
        }
    }
    if (policy.kind == StopPolicy::Kind::Tolerance) {
        throw NonConvergence("pgdm_solve: tolerance not reached within the safety cap");
    }
    run.u_final = u;
    run.stop_reason = StopReason::HitIterationCap;
    return run;
}

AdmmState AdmmState::zero(Index n, double rho) {
    if (!(rho > 0.0)) throw InvalidSpec("rho must be positive");
    return AdmmState{Vector::Zero(n), Vector::Zero(n), Vector::Zero(n), rho};
}

AdmmSolver::AdmmSolver(const CondensedQp& qp, double rho) : qp_(qp), rho_(rho) {
    if (!(rho > 0.0)) throw InvalidSpec("rho must be positive");
    const Index n = qp.num_vars();
    Matrix HrI = qp.H() + rho * Matrix::Identity(n, n);
    llt_.compute(HrI);
    if (llt_.info() != Eigen::Success) {
        throw FactorizationFailure("AdmmSolver: H + rho I could not be factored");
    }
}

SolverRun AdmmSolver::solve(const Vector& x0, const AdmmState& state0, const StopPolicy& policy,
                            bool record_trace, AdmmState* final_state) const {
    const Index n = qp_.num_vars();
    if (x0.size() != qp_.state_dim()) throw DimensionMismatch("AdmmSolver: x0 has wrong length");
    if (state0.u.size() != n || state0.v.size() != n || state0.lambda.size() != n) {
        throw DimensionMismatch("AdmmSolver: state vectors have wrong length");
    }

    SolverRun run;
    if (record_trace) run.trace = SolverTrace{};

    const Vector sx = qp_.S().transpose() * x0;
    Vector v = state0.v;
    Vector lambda = state0.lambda;
    Vector u(n), v_next(n), dual_step(n);
    if (record_trace) run.trace->iterates.push_back(v);

    const bool check_tol = policy.kind != StopPolicy::Kind::FixedIterations;
    for (long m = 1; m <= policy.max_iterations; ++m) {
        u = llt_.solve(-(sx + lambda - rho_ * v));
        v_next = (u + lambda / rho_).cwiseMax(qp_.u_lo()).cwiseMin(qp_.u_hi());
        dual_step = rho_ * (u - v_next);
        lambda += dual_step;
        const double primal_res = dual_step.norm();                  // ||lambda+ - lambda||
        const double dual_res = rho_ * (v_next - v).norm();
        v = v_next;
        if (!u.allFinite() || !lambda.allFinite()) {
            throw NonFiniteIterate("AdmmSolver: iterate is not finite");
        }
        run.iterations = m;
        if (record_trace) {
            run.trace->iterates.push_back(v);
            run.trace->residuals.push_back(primal_res);
        }
        if (check_tol && primal_res <= policy.epsilon && dual_res <= policy.epsilon) {
            run.u_final = v;
            run.stop_reason = StopReason::ToleranceMet;
            if (final_state) *final_state = AdmmState{u, v, lambda, rho_};
            return run;
        }
    }
    if (policy.kind == StopPolicy::Kind::Tolerance) {
        throw NonConvergence("AdmmSolver: tolerance not reached within the safety cap");
    }
    run.u_final = v;
    run.stop_reason = StopReason::HitIterationCap;
    if (final_state) *final_state = AdmmState{u, v, lambda, rho_};
    return run;
}

SolverRun AdmmSolver::solve(const Vector& x0, const StopPolicy& policy, bool record_trace) const {
    return solve(x0, AdmmState::zero(qp_.num_vars(), rho_), policy, record_trace);
}

SolverRun admm_solve(const CondensedQp& qp, const Vector& x0, const AdmmState& state0,
                     const StopPolicy& policy, bool record_trace) {
    AdmmSolver solver(qp, state0.rho);
    return solver.solve(x0, state0, policy, record_trace);
}

OracleSolver::OracleSolver(const CondensedQp& qp, double tol, long max_iter, bool interior_shortcut)
    : qp_(qp), tol_(tol), max_iter_(max_iter), interior_shortcut_(interior_shortcut) {
    if (!(tol > 0.0)) throw InvalidSpec("oracle tolerance must be positive");
    Eigen::SelfAdjointEigenSolver<Matrix> es(qp.H());
    mu_ = es.eigenvalues().minCoeff();
    L_ = es.eigenvalues().maxCoeff();
    if (mu_ <= 0.0) throw NotPositiveDefinite("OracleSolver: H is not positive definite");
    alpha_ = 2.0 / (mu_ + L_);
    const double kappa = (L_ - mu_) / (L_ + mu_);
    increment_tol_ = tol * (1.0 - kappa);
    llt_h_.compute(qp.H());
    if (llt_h_.info() != Eigen::Success) {
        throw FactorizationFailure("OracleSolver: H could not be factored");
    }
}

OracleSolver::Run OracleSolver::solve_run(const Vector& x0, const Vector* u0) const {
    if (x0.size() != qp_.state_dim()) throw DimensionMismatch("OracleSolver: x0 has wrong length");
    if (!x0.allFinite()) throw InvalidSpec("OracleSolver: x0 must be finite");
    const Vector sx = qp_.S().transpose() * x0;
    const Vector u_unc = -llt_h_.solve(sx);

    if (interior_shortcut_) {
        bool feasible = true;
        for (Index i = 0; i < u_unc.size(); ++i) {
            if (u_unc(i) < qp_.u_lo()(i) || u_unc(i) > qp_.u_hi()(i)) {
                feasible = false;
                break;
            }
        }
        if (feasible) return Run{u_unc, 1};
    }

    Vector u = (u0 ? *u0 : u_unc).cwiseMax(qp_.u_lo()).cwiseMin(qp_.u_hi());
    Vector grad(u.size()), u_next(u.size());
    for (long m = 1; m <= max_iter_; ++m) {
        grad.noalias() = qp_.H() * u;
        grad += sx;
        u_next = (u - alpha_ * grad).cwiseMax(qp_.u_lo()).cwiseMin(qp_.u_hi());
        const double step = (u_next - u).norm();
        u = u_next;
        if (step <= increment_tol_) return Run{u, m};
    }
    std::ostringstream msg;
    msg << "oracle did not converge within " << max_iter_ << " iterations";
    throw OracleNonConvergence(msg.str());
}

Vector OracleSolver::solve(const Vector& x0) const { return solve_run(x0).u; }

Vector OracleSolver::solve(const Vector& x0, const Vector& u0) const {
    return solve_run(x0, &u0).u;
}

double OracleSolver::value(const Vector& x0) const {
    const Vector u_star = solve(x0);
    return 2.0 * qp_.cost(u_star, x0) + x0.dot(qp_.Q() * x0);
}

double OracleSolver::value(const Vector& x0, const Vector& u0) const {
    const Vector u_star = solve(x0, u0);
    return 2.0 * qp_.cost(u_star, x0) + x0.dot(qp_.Q() * x0);
}

Vector shift_sequence(const Vector& u, Index n_u) {
    if (n_u < 1 || u.size() % n_u != 0) throw DimensionMismatch("shift_sequence: bad block size");
    Vector out = Vector::Zero(u.size());
    out.head(u.size() - n_u) = u.tail(u.size() - n_u);
    return out;
}

Vector rescale_to_radius(Vector u, double radius) {
    const double norm = u.norm();
    if (norm > radius && norm > 0.0) u *= radius / norm;
    return u;
}

WarmStart::WarmStart(const CondensedQp& qp, double gamma) : qp_(qp), gamma_(gamma) {
    if (!(gamma > 0.0)) throw InvalidSpec("gamma must be positive");
    llt_h_.compute(qp.H());
    if (llt_h_.info() != Eigen::Success) {
        throw FactorizationFailure("WarmStart: H could not be factored");
    }
}

Vector WarmStart::refine_active_set(const Vector& x0, const Vector& u) const {
    const Index n = u.size();
    std::vector<Index> free_idx;
    free_idx.reserve(n);
    for (Index i = 0; i < n; ++i) {
        if (u(i) > qp_.u_lo()(i) && u(i) < qp_.u_hi()(i)) free_idx.push_back(i);
    }
    if (free_idx.empty() || static_cast<Index>(free_idx.size()) == n) return u;

    const Vector sx = qp_.S().transpose() * x0;
    const Index nf = static_cast<Index>(free_idx.size());
    Matrix Hff(nf, nf);
    Vector rhs(nf);
    for (Index a = 0; a < nf; ++a) {
        rhs(a) = -sx(free_idx[a]);
        for (Index b = 0; b < nf; ++b) Hff(a, b) = qp_.H()(free_idx[a], free_idx[b]);
    }
    // subtract the contribution of coordinates held at their bounds
    for (Index a = 0; a < nf; ++a) {
        double acc = 0.0;
        Index next = 0;
        for (Index i = 0; i < n; ++i) {
            if (next < nf && free_idx[next] == i) {
                ++next;
                continue;
            }
            acc += qp_.H()(free_idx[a], i) * u(i);
        }
        rhs(a) -= acc;
    }
    Eigen::LDLT<Matrix> ldlt(Hff);
    if (ldlt.info() != Eigen::Success) return u;
    const Vector wf = ldlt.solve(rhs);
    Vector out = u;
    for (Index a = 0; a < nf; ++a) out(free_idx[a]) = wf(a);
    return out.cwiseMax(qp_.u_lo()).cwiseMin(qp_.u_hi());
}

Vector WarmStart::seed(const Vector& x0, const Vector* previous) const {
    const double radius = gamma_ * qp_.state_norm_q(x0);
    const Vector u_unc = -llt_h_.solve(qp_.S().transpose() * x0);
    const Vector clamped = u_unc.cwiseMax(qp_.u_lo()).cwiseMin(qp_.u_hi());

    Vector best = rescale_to_radius(clamped, radius);
    double best_cost = qp_.cost(best, x0);

    Vector cand = rescale_to_radius(refine_active_set(x0, clamped), radius);
    double cand_cost = qp_.cost(cand, x0);
    if (cand_cost < best_cost) {
        best = cand;
        best_cost = cand_cost;
    }
    if (previous) {
        cand = rescale_to_radius(shift_sequence(*previous, qp_.input_dim()), radius);
        cand_cost = qp_.cost(cand, x0);
        if (cand_cost < best_cost) {
            best = cand;
            best_cost = cand_cost;
        }
    }
    return best;
}

}  // namespace certmpc
