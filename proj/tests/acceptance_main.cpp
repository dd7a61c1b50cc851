// Acceptance suite for the double-integrator benchmark. Runs every
// criterion at its stated tolerance and prints one pass/fail line each;
// exits nonzero if any criterion fails.

#include <Eigen/Cholesky>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "certmpc/experiment.hpp"
#include "certmpc/rng.hpp"

using namespace certmpc;

namespace {

struct Context {
    std::unique_ptr<Experiment> exp;
    std::vector<Vector> grid;
    std::vector<SweepRow> sweep_eps3;  // ADMM, ADMM(m_bar), PGDM, PGDM(m_bar) at eps = 1e-3
    std::vector<SweepRow> sweep_eps9;  // ADMM, PGDM at eps = 1e-9
    double sweep_seconds = 0.0;
};

using Criterion = std::function<bool(Context&, std::string&)>;

bool in_box(const CondensedQp& qp, const Vector& u) {
    return (u.array() >= qp.u_lo().array() - 1e-12).all() &&
           (u.array() <= qp.u_hi().array() + 1e-12).all();
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

// --- criterion 1: terminal penalty reproduction -----------------------------
bool criterion_riccati(Context& ctx, std::string& detail) {
    const auto t0 = std::chrono::steady_clock::now();
    const MpcSpec& spec = ctx.exp->spec();
    const Matrix P = solve_dare(spec.model(), spec.Q(), spec.R());
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    Matrix ref(2, 2);
    ref << 2.367, 1.118, 1.118, 2.588;
    const double worst = (P - ref).cwiseAbs().maxCoeff();
    detail = "max entry error " + fmt(worst) + " (tol 1e-3), " + fmt(seconds) + " s";
    return worst <= 1e-3 && seconds < 1.0;
}

// --- criterion 2: oracle closed loop descends the value function ------------
bool criterion_descent(Context& ctx, std::string& detail) {
    const auto t0 = std::chrono::steady_clock::now();
    const OracleSolver& oracle = ctx.exp->oracle();
    ControllerFn controller = ctx.exp->make_controller(SolverKind::Oracle,
                                                       StopPolicy::fixed_iterations(1), false);
    ClosedLoopOptions opts;
    opts.n_steps = ctx.exp->config().simulate.n_steps;
    opts.v_floor = ctx.exp->config().simulate.v_floor;
    const ClosedLoopTrace trace =
        run_closed_loop(ctx.exp->spec().model(), ctx.exp->qp(), controller, oracle,
                        BoundParams::from(ctx.exp->certificate(Method::Pgdm)),
                        ctx.exp->config().simulate.x_init, opts);
    double worst = -1e300;
    for (std::size_t j = 0; j + 1 < trace.steps.size(); ++j) {
        const double nq = ctx.exp->qp().state_norm_q(trace.steps[j].x);
        worst = std::max(worst, trace.steps[j + 1].V_now - (trace.steps[j].V_now - nq * nq));
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    detail = "worst descent slack " + fmt(worst) + " (tol 1e-6), " + fmt(seconds) + " s";
    return worst <= 1e-6 && seconds < 10.0;
}

// --- criterion 3: per-iterate contraction against the oracle ----------------
bool criterion_contraction(Context& ctx, std::string& detail) {
    const CondensedQp& qp = ctx.exp->qp();
    const SpectralBounds s = kappa_pgdm(qp);
    const OracleSolver oracle(qp, 1e-10);
    Rng rng(314159);
    double worst = -1e300;
    for (int trial = 0; trial < 50; ++trial) {
        Vector x0(2);
        x0 << rng.uniform(-8.0, 8.0), rng.uniform(-8.0, 8.0);
        const Vector u_star = oracle.solve(x0);
        const SolverRun run = pgdm_solve(qp, x0, Vector::Zero(qp.num_vars()), 1.0 / s.L,
                                         StopPolicy::fixed_iterations(250), true);
        const auto& its = run.trace->iterates;
        for (std::size_t m = 0; m + 1 < its.size(); ++m) {
            const double dm = (its[m] - u_star).norm();
            const double dn = (its[m + 1] - u_star).norm();
            worst = std::max(worst, dn - (s.kappa * dm + 1e-12));
        }
    }
    detail = "worst contraction violation " + fmt(worst) + " over 50 states";
    return worst <= 0.0;
}

// --- criterion 4: per-step gap stays below the certified bound --------------
bool criterion_gap_bound(Context& ctx, std::string& detail) {
    const bool warm = ctx.exp->config().simulate.warm_start;
    ClosedLoopOptions opts;
    opts.n_steps = ctx.exp->config().simulate.n_steps;
    opts.v_floor = ctx.exp->config().simulate.v_floor;

    double worst_ratio = 0.0;
    for (const Method method : {Method::Pgdm, Method::Admm}) {
        const SolverKind kind = method == Method::Pgdm ? SolverKind::Pgdm : SolverKind::Admm;
        ControllerFn controller =
            ctx.exp->make_controller(kind, ctx.exp->certified_policy(method), warm);
        const ClosedLoopTrace trace = run_closed_loop(
            ctx.exp->spec().model(), ctx.exp->qp(), controller, ctx.exp->oracle(),
            BoundParams::from(ctx.exp->certificate(method)), ctx.exp->config().simulate.x_init, opts);
        for (const StepRecord& rec : trace.steps) {
            if (rec.bound_rhs > 0.0) worst_ratio = std::max(worst_ratio, rec.lyapunov_gap / rec.bound_rhs);
            else if (rec.lyapunov_gap > 1e-12) worst_ratio = std::max(worst_ratio, 2.0);
        }
    }
    detail = "worst gap/bound ratio " + fmt(worst_ratio) + " (m_bar overrides " +
             std::to_string(ctx.exp->certificate(Method::Pgdm).effective_m_bar()) + "/" +
             std::to_string(ctx.exp->certificate(Method::Admm).effective_m_bar()) + ")";
    return worst_ratio <= 1.0;
}

void run_sweeps(Context& ctx) {
    if (!ctx.sweep_eps3.empty()) return;
    const auto t0 = std::chrono::steady_clock::now();
    const Experiment& exp = *ctx.exp;
    ctx.grid = exp.make_grid();
    const bool warm = exp.config().simulate.warm_start;
    ClosedLoopOptions opts;
    opts.n_steps = exp.config().simulate.n_steps;
    opts.v_floor = exp.config().simulate.v_floor;

    const BoundParams bp = BoundParams::from(exp.certificate(Method::Pgdm));
    const BoundParams ba = BoundParams::from(exp.certificate(Method::Admm));

    std::vector<SweepConfig> cfgs;
    cfgs.push_back({"ADMM", [&exp, warm] { return exp.make_controller(SolverKind::Admm, exp.unbounded_policy(Method::Admm), warm); }, ba});
    cfgs.push_back({"ADMM(m_bar)", [&exp, warm] { return exp.make_controller(SolverKind::Admm, exp.certified_policy(Method::Admm), warm); }, ba});
    cfgs.push_back({"PGDM", [&exp, warm] { return exp.make_controller(SolverKind::Pgdm, exp.unbounded_policy(Method::Pgdm), warm); }, bp});
    cfgs.push_back({"PGDM(m_bar)", [&exp, warm] { return exp.make_controller(SolverKind::Pgdm, exp.certified_policy(Method::Pgdm), warm); }, bp});
    ctx.sweep_eps3 =
        sweep_initial_conditions(exp.spec().model(), exp.qp(), cfgs, ctx.grid, exp.oracle(), opts);

    const StopPolicy tight_p = StopPolicy::combined(exp.config().pgdm.max_iterations, 1e-9);
    const StopPolicy tight_a = StopPolicy::combined(exp.config().admm.max_iterations, 1e-9);
    std::vector<SweepConfig> tight;
    tight.push_back({"ADMM", [&exp, warm, tight_a] { return exp.make_controller(SolverKind::Admm, tight_a, warm); }, ba});
    tight.push_back({"PGDM", [&exp, warm, tight_p] { return exp.make_controller(SolverKind::Pgdm, tight_p, warm); }, bp});
    ctx.sweep_eps9 =
        sweep_initial_conditions(exp.spec().model(), exp.qp(), tight, ctx.grid, exp.oracle(), opts);
    ctx.sweep_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// --- criterion 5: grid suboptimality of the certified runs ------------------
bool criterion_grid_suboptimality(Context& ctx, std::string& detail) {
    run_sweeps(ctx);
    const SweepRow& admm = ctx.sweep_eps3[1];
    const SweepRow& pgdm = ctx.sweep_eps3[3];
    detail = "ADMM(m_bar) max/avg " + fmt(admm.delta_max_pct) + "%/" + fmt(admm.delta_avg_pct) +
             "%, PGDM(m_bar) " + fmt(pgdm.delta_max_pct) + "%/" + fmt(pgdm.delta_avg_pct) +
             "% on " + std::to_string(ctx.grid.size()) + " states, " + fmt(ctx.sweep_seconds) + " s";
    return admm.delta_max_pct <= 2.0 && admm.delta_avg_pct <= 1.0 && pgdm.delta_max_pct <= 2.0 &&
           pgdm.delta_avg_pct <= 1.0 && ctx.sweep_seconds < 300.0;
}

// --- criterion 6: iteration reductions on the same grid ---------------------
bool criterion_reduction(Context& ctx, std::string& detail) {
    run_sweeps(ctx);
    const double admm_red =
        iteration_reduction(ctx.sweep_eps3[0].total_iterations, ctx.sweep_eps3[1].total_iterations);
    const double pgdm_red =
        iteration_reduction(ctx.sweep_eps3[2].total_iterations, ctx.sweep_eps3[3].total_iterations);
    detail = "ADMM " + fmt(admm_red) + "% (need >= 60), PGDM " + fmt(pgdm_red) + "% (need >= 85)";
    return admm_red >= 60.0 && pgdm_red >= 85.0;
}

// --- criterion 7: oracle equivalence -----------------------------------------
bool criterion_oracle(Context& ctx, std::string& detail) {
    const CondensedQp& qp = ctx.exp->qp();
    const OracleSolver& oracle = ctx.exp->oracle();
    Eigen::LLT<Matrix> llt(qp.H());
    Rng rng(271828);

    double worst_rel = 0.0;
    int found = 0;
    while (found < 100) {
        Vector x0(2);
        x0 << rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0);
        const Vector u_unc = -llt.solve(qp.S().transpose() * x0);
        if (!in_box(qp, u_unc)) continue;
        ++found;
        const Vector u = oracle.solve(x0);
        worst_rel = std::max(worst_rel, (u - u_unc).norm() / (1.0 + u_unc.norm()));
    }
    if (worst_rel > 1e-6) {
        detail = "interior mismatch " + fmt(worst_rel);
        return false;
    }

    int beaten = 0;
    for (int trial = 0; trial < 100; ++trial) {
        Vector x0(2);
        x0 << rng.uniform(-8.0, 8.0), rng.uniform(-8.0, 8.0);
        const Vector u = oracle.solve(x0);
        const double star_cost = qp.cost(u, x0);
        for (int z = 0; z < 1000; ++z) {
            Vector cand(qp.num_vars());
            for (Index i = 0; i < cand.size(); ++i) cand(i) = rng.uniform(-1.0, 1.0);
            if (qp.cost(cand, x0) < star_cost - 1e-12) {
                ++beaten;
                break;
            }
        }
    }
    detail = "interior rel err " + fmt(worst_rel) + ", beaten on " + std::to_string(beaten) +
             "/100 instances";
    return beaten == 0;
}

// --- criterion 8: stopping-criterion formula checks --------------------------
bool criterion_formula(Context&, std::string& detail) {
    bool ok = true;
    const MBarResult exact = compute_m_bar(0.5, 1.0, 1.0, 1.0);  // E = 4
    ok = ok && exact.m_bar == 3;
    ok = ok && compute_m_bar(0.9, 0.1, 0.3, 1.0).m_bar == 1;  // E = 0.8

    Rng rng(161803);
    for (int trial = 0; trial < 1000 && ok; ++trial) {
        const double kappa = rng.uniform(0.05, 0.995);
        const double e1 = rng.uniform(0.0, 3.0);
        const double e2 = rng.uniform(1e-3, 3.0);
        const double gamma = rng.uniform(0.1, 4.0);
        const MBarResult r = compute_m_bar(kappa, e1, e2, gamma);
        ok = ok && r.beta < 1.0;
        ok = ok && compute_m_bar_quadratic(kappa, e2, gamma) <= r.m_bar;
        ok = ok && compute_m_bar(std::min(0.999, kappa * 1.03), e1, e2, gamma).m_bar >= r.m_bar;
        ok = ok && compute_m_bar(kappa, e1 + 0.2, e2, gamma).m_bar >= r.m_bar;
        ok = ok && compute_m_bar(kappa, e1, e2 * 1.4, gamma).m_bar >= r.m_bar;
        ok = ok && compute_m_bar(kappa, e1, e2, gamma * 1.4).m_bar >= r.m_bar;
    }
    detail = ok ? "exact cases and 1000 random draws hold" : "a formula property failed";
    return ok;
}

// --- criterion 9: unbounded runs are effectively optimal ---------------------
bool criterion_zero_suboptimality(Context& ctx, std::string& detail) {
    run_sweeps(ctx);
    const double admm3 = ctx.sweep_eps3[0].delta_avg_pct;
    const double pgdm3 = ctx.sweep_eps3[2].delta_avg_pct;
    const double admm9 = ctx.sweep_eps9[0].delta_avg_pct;
    const double pgdm9 = ctx.sweep_eps9[1].delta_avg_pct;
    detail = "eps 1e-3 avg " + fmt(admm3) + "%/" + fmt(pgdm3) + "% (tol 1e-2%), eps 1e-9 avg " +
             fmt(admm9) + "%/" + fmt(pgdm9) + "% (tol 1e-4%)";
    return admm3 < 1e-2 && pgdm3 < 1e-2 && admm9 < 1e-4 && pgdm9 < 1e-4;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::fprintf(stderr, "usage: acceptance <benchmark config>\n");
        return 2;
    }
    Context ctx;
    try {
        ctx.exp = std::make_unique<Experiment>(ExperimentConfig::load(argv[1]));
    } catch (const std::exception& e) {
        std::fprintf(stderr, "failed to load benchmark config: %s\n", e.what());
        return 2;
    }

    const std::vector<std::pair<std::string, Criterion>> criteria = {
        {"1 riccati terminal penalty", criterion_riccati},
        {"2 oracle lyapunov descent", criterion_descent},
        {"3 pgdm per-iterate contraction", criterion_contraction},
        {"4 gap below certified bound", criterion_gap_bound},
        {"5 grid suboptimality of certified runs", criterion_grid_suboptimality},
        {"6 iteration reduction", criterion_reduction},
        {"7 oracle equivalence", criterion_oracle},
        {"8 stopping-criterion formula", criterion_formula},
        {"9 unbounded zero suboptimality", criterion_zero_suboptimality},
    };

    int failures = 0;
    for (const auto& [name, fn] : criteria) {
        std::string detail;
        bool ok = false;
        try {
            ok = fn(ctx, detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        std::printf("[%s] criterion %s: %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
        std::fflush(stdout);
        if (!ok) ++failures;
    }
    if (failures > 0) std::printf("%d criterion(s) failed\n", failures);
    else std::printf("all criteria passed\n");
    return failures == 0 ? 0 : 1;
}
