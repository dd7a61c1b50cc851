#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "certmpc/simulate.hpp"
#include "test_util.hpp"

using namespace certmpc;
using testutil::benchmark_spec;

namespace {

struct Bench {
    MpcSpec spec;
    CondensedQp qp;
    OracleSolver oracle;
    Bench() : spec(benchmark_spec(10)), qp(spec), oracle(qp) {}
};

BoundParams pgdm_bounds() {
    // kappa from the reference constants, eta bars from eta1=0.4, eta2=0.1
    return BoundParams{0.999375, 0.4 * std::sqrt(1.25), 0.0625, 1.0};
}

ControllerFn oracle_controller(const OracleSolver& oracle) {
    return [&oracle](const Vector& x0) {
        OracleSolver::Run run = oracle.solve_run(x0);
        return SolverRun{run.u, run.iterations, StopReason::ToleranceMet, std::nullopt};
    };
}

}  // namespace

TEST_CASE("step_plant hand-computed updates") {
    const LtiModel model = testutil::damped_integrator();
    Vector x(2), u(1);

    x << 0.0, 0.0;
    u << 0.0;
    CHECK(step_plant(model, x, u).norm() == 0.0);

    x << 1.0, 0.0;
    CHECK(step_plant(model, x, u)(0) == 1.0);
    CHECK(step_plant(model, x, u)(1) == 0.0);

    x << 0.0, 1.0;
    u << 1.0;
    const Vector next = step_plant(model, x, u);
    CHECK(next(0) == doctest::Approx(1.5));
    CHECK(next(1) == doctest::Approx(1.5));

    CHECK_THROWS_AS(step_plant(model, Vector::Zero(3), u), DimensionMismatch);
}

TEST_CASE("oracle closed loop has zero suboptimality and Lyapunov descent") {
    const Bench b;
    Vector x_init(2);
    x_init << -6.0, 2.0;
    ClosedLoopOptions opts;
    opts.n_steps = 40;
    const ClosedLoopTrace trace = run_closed_loop(b.spec.model(), b.qp, oracle_controller(b.oracle),
                                                  b.oracle, pgdm_bounds(), x_init, opts);
    REQUIRE(trace.steps.size() == 40);
    for (const StepRecord& rec : trace.steps) {
        if (rec.delta) CHECK(*rec.delta <= 1e-6);
    }
    for (std::size_t j = 0; j + 1 < trace.steps.size(); ++j) {
        const double vq = std::pow(b.qp.state_norm_q(trace.steps[j].x), 2);
        CHECK(trace.steps[j + 1].V_now <= trace.steps[j].V_now - vq + 1e-6);
    }
    CHECK(trace.x_final.norm() < 1e-3);
}

TEST_CASE("closed loop from the origin stays at the origin") {
    const Bench b;
    ClosedLoopOptions opts;
    opts.n_steps = 10;
    const ClosedLoopTrace trace = run_closed_loop(b.spec.model(), b.qp, oracle_controller(b.oracle),
                                                  b.oracle, pgdm_bounds(), Vector::Zero(2), opts);
    for (const StepRecord& rec : trace.steps) {
        CHECK(rec.x.norm() == 0.0);
        CHECK(rec.u0.norm() == 0.0);
        CHECK_FALSE(rec.delta.has_value());
    }
}

TEST_CASE("fixed-count projected gradient run converges under the bound") {
    const Bench b;
    const StopPolicy policy = StopPolicy::fixed_iterations(172);
    const double alpha = 1.0 / kappa_pgdm(b.qp).L;
    ControllerFn controller = [&](const Vector& x0) {
        return pgdm_solve(b.qp, x0, Vector::Zero(b.qp.num_vars()), alpha, policy);
    };
    Vector x_init(2);
    x_init << -6.0, 2.0;
    ClosedLoopOptions opts;
    opts.n_steps = 40;
    const BoundParams bounds = pgdm_bounds();
    const ClosedLoopTrace trace =
        run_closed_loop(b.spec.model(), b.qp, controller, b.oracle, bounds, x_init, opts);

    CHECK(trace.x_final.norm() < 1e-3);
    for (const StepRecord& rec : trace.steps) {
        CHECK(rec.iterations == 172);
        CHECK(rec.lyapunov_gap <= rec.bound_rhs + 1e-12);
        CHECK((rec.u0.array() >= -1.0 - 1e-12).all());
        CHECK((rec.u0.array() <= 1.0 + 1e-12).all());
    }

    // descent with margin 1 - beta while the state is outside the unit ball
    const double E = 2.0 * bounds.eta1_bar * bounds.gamma +
                     2.0 * bounds.eta2_bar * bounds.gamma * bounds.gamma;
    const double beta = E * std::pow(bounds.kappa, 172.0);
    REQUIRE(beta < 1.0);
    for (std::size_t j = 0; j + 1 < trace.steps.size(); ++j) {
        const double nq = b.qp.state_norm_q(trace.steps[j].x);
        if (nq > 1.0) {
            CHECK(trace.steps[j + 1].V_now <=
                  trace.steps[j].V_now - (1.0 - beta) * nq * nq + 1e-6);
        }
    }
}

TEST_CASE("iteration_reduction percentages") {
    const Bench b;
    ClosedLoopOptions opts;
    opts.n_steps = 5;
    const ClosedLoopTrace trace = run_closed_loop(b.spec.model(), b.qp, oracle_controller(b.oracle),
                                                  b.oracle, pgdm_bounds(), Vector::Ones(2), opts);
    CHECK(iteration_reduction(trace, trace) == doctest::Approx(0.0));

    CHECK(iteration_reduction(47794, 3620) ==
          doctest::Approx(100.0 * (1.0 - 3620.0 / 47794.0)).epsilon(1e-12));
    CHECK(iteration_reduction(47794, 3620) == doctest::Approx(92.4258).epsilon(1e-4));
    CHECK(iteration_reduction(466, 198) == doctest::Approx(57.5107).epsilon(1e-4));
    CHECK_THROWS_AS(iteration_reduction(0, 10), DivisionByZero);
}

TEST_CASE("sweep over one point equals the direct closed-loop statistics") {
    const Bench b;
    Vector x0(2);
    x0 << -3.0, 1.0;
    const StopPolicy policy = StopPolicy::combined(50, 1e-3);
    const double alpha = 1.0 / kappa_pgdm(b.qp).L;
    auto make = [&]() {
        return ControllerFn([&](const Vector& x) {
            return pgdm_solve(b.qp, x, Vector::Zero(b.qp.num_vars()), alpha, policy);
        });
    };
    ClosedLoopOptions opts;
    opts.n_steps = 12;

    const std::vector<SweepRow> rows = sweep_initial_conditions(
        b.spec.model(), b.qp, {{"PGDM", make, pgdm_bounds()}}, {x0}, b.oracle, opts, 2);
    REQUIRE(rows.size() == 1);

    const ClosedLoopTrace direct =
        run_closed_loop(b.spec.model(), b.qp, make(), b.oracle, pgdm_bounds(), x0, opts);
    CHECK(rows[0].total_iterations == direct.total_iterations());
    CHECK(rows[0].m_max == direct.max_iterations());
    CHECK(rows[0].n_steps == 12);

    double dmax = 0.0, dsum = 0.0;
    long dcount = 0;
    for (const StepRecord& rec : direct.steps) {
        if (rec.delta) {
            dmax = std::max(dmax, *rec.delta);
            dsum += *rec.delta;
            ++dcount;
        }
    }
    CHECK(rows[0].delta_max_pct == doctest::Approx(100.0 * dmax));
    if (dcount > 0) CHECK(rows[0].delta_avg_pct == doctest::Approx(100.0 * dsum / dcount));
}

TEST_CASE("sweep results do not depend on the worker pool size") {
    const Bench b;
    std::vector<Vector> grid;
    Rng rng(13);
    for (int i = 0; i < 4; ++i) grid.push_back(testutil::random_vector(rng, 2, -4.0, 4.0));
    const double alpha = 1.0 / kappa_pgdm(b.qp).L;
    auto make = [&]() {
        return ControllerFn([&, prev = Vector()](const Vector& x) mutable {
            SolverRun run = pgdm_solve(b.qp, x, Vector::Zero(b.qp.num_vars()), alpha,
                                       StopPolicy::combined(40, 1e-3));
            prev = run.u_final;
            return run;
        });
    };
    ClosedLoopOptions opts;
    opts.n_steps = 6;
    std::vector<SweepConfig> cfgs = {{"PGDM", make, pgdm_bounds()}};

    const auto rows1 = sweep_initial_conditions(b.spec.model(), b.qp, cfgs, grid, b.oracle, opts, 1);
    const auto rows3 = sweep_initial_conditions(b.spec.model(), b.qp, cfgs, grid, b.oracle, opts, 3);
    REQUIRE(rows1.size() == rows3.size());
    CHECK(rows1[0].total_iterations == rows3[0].total_iterations);
    CHECK(rows1[0].delta_avg_pct == rows3[0].delta_avg_pct);
    CHECK(rows1[0].delta_max_pct == rows3[0].delta_max_pct);

    CHECK_THROWS_AS(
        sweep_initial_conditions(b.spec.model(), b.qp, cfgs, {}, b.oracle, opts, 1), EmptyGrid);
}

TEST_CASE("trace export is one row per step with a nan for excluded deltas") {
    const Bench b;
    ClosedLoopOptions opts;
    opts.n_steps = 4;
    opts.v_floor = 1e300;  // force exclusion everywhere
    const ClosedLoopTrace trace = run_closed_loop(b.spec.model(), b.qp, oracle_controller(b.oracle),
                                                  b.oracle, pgdm_bounds(), Vector::Ones(2), opts);
    const std::string csv = trace_to_csv(trace);
    std::istringstream is(csv);
    std::string line;
    std::getline(is, line);
    CHECK(line ==
          "step,x0,x1,u0,iterations,V_now,V_next_opt,V_next_actual,lyapunov_gap,bound_rhs,delta");
    int rows = 0;
    while (std::getline(is, line)) {
        CHECK(line.find("nan") != std::string::npos);
        ++rows;
    }
    CHECK(rows == 4);
}

TEST_CASE("capped admm run converges and the state chain is exact") {
    const Bench b;
    const AdmmSolver solver(b.qp, 3.1231);
    const StopPolicy policy = StopPolicy::combined(14, 1e-3);
    ControllerFn controller = [&](const Vector& x0) { return solver.solve(x0, policy); };
    Vector x_init(2);
    x_init << -6.0, 2.0;
    ClosedLoopOptions opts;
    opts.n_steps = 40;
    const BoundParams bounds{0.996071, 0.2 * std::sqrt(1.25), 0.5 * 0.3 * 1.25, 1.0};
    const ClosedLoopTrace trace =
        run_closed_loop(b.spec.model(), b.qp, controller, b.oracle, bounds, x_init, opts);

    CHECK(trace.x_final.norm() < 1e-3);
    for (const StepRecord& rec : trace.steps) {
        CHECK(rec.iterations <= 14);
        CHECK(rec.lyapunov_gap <= rec.bound_rhs + 1e-12);
    }
    // x_{j+1} = A x_j + B u0_j holds bit for bit
    for (std::size_t j = 0; j + 1 < trace.steps.size(); ++j) {
        const Vector expect =
            b.spec.model().A() * trace.steps[j].x + b.spec.model().B() * trace.steps[j].u0;
        CHECK((trace.steps[j + 1].x - expect).norm() == 0.0);
    }
}
