#include "certmpc/simulate.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <mutex>
#include <sstream>
#include <string_view>
#include <thread>

namespace certmpc {

Vector step_plant(const LtiModel& model, const Vector& x, const Vector& u0) {
    if (x.size() != model.state_dim()) throw DimensionMismatch("step_plant: x has wrong length");
    if (u0.size() != model.input_dim()) throw DimensionMismatch("step_plant: u0 has wrong length");
    return model.A() * x + model.B() * u0;
}

double BoundParams::rhs(double iterations, double x_norm_q) const {
    const double km = std::pow(kappa, iterations);
    return 2.0 * eta1_bar * gamma * km * x_norm_q +
           2.0 * eta2_bar * gamma * gamma * km * km * x_norm_q * x_norm_q;
}

long ClosedLoopTrace::total_iterations() const {
    long total = 0;
    for (const StepRecord& s : steps) total += s.iterations;
    return total;
}

long ClosedLoopTrace::max_iterations() const {
    long worst = 0;
    for (const StepRecord& s : steps) worst = std::max(worst, s.iterations);
    return worst;
}

ClosedLoopTrace run_closed_loop(const LtiModel& model, const CondensedQp& qp,
                                const ControllerFn& controller, const OracleSolver& oracle,
                                const BoundParams& bounds, const Vector& x_init,
                                const ClosedLoopOptions& opts) {
    if (opts.n_steps < 1) throw InvalidSpec("run_closed_loop: n_steps must be >= 1");
    if (x_init.size() != model.state_dim()) {
        throw DimensionMismatch("run_closed_loop: x_init has wrong length");
    }
    const Index nu = model.input_dim();

    ClosedLoopTrace trace;
    trace.steps.reserve(opts.n_steps);

    Vector x = x_init;
    Vector u_star = oracle.solve(x);
    for (int j = 0; j < opts.n_steps; ++j) {
        const SolverRun run = controller(x);
        if (run.u_final.size() != qp.num_vars()) {
            throw DimensionMismatch("run_closed_loop: controller returned wrong length");
        }

        StepRecord rec;
        rec.x = x;
        rec.u0 = run.u_final.head(nu);
        rec.iterations = run.iterations;

        const Vector x_actual = step_plant(model, x, rec.u0);
        const Vector x_opt = step_plant(model, x, u_star.head(nu));
        const Vector warm = shift_sequence(u_star, nu);

        rec.V_now = 2.0 * qp.cost(u_star, x) + x.dot(qp.Q() * x);
        const Vector u_star_next = oracle.solve(x_actual, warm);
        rec.V_next_actual = 2.0 * qp.cost(u_star_next, x_actual) + x_actual.dot(qp.Q() * x_actual);
        rec.V_next_opt = oracle.value(x_opt, warm);
        rec.lyapunov_gap = std::abs(rec.V_next_actual - rec.V_next_opt);
        rec.bound_rhs = bounds.rhs(static_cast<double>(rec.iterations), qp.state_norm_q(x));
        if (std::abs(rec.V_next_opt) > opts.v_floor) {
            rec.delta = rec.lyapunov_gap / std::abs(rec.V_next_opt);
        }
        trace.steps.push_back(std::move(rec));

        x = x_actual;
        u_star = u_star_next;
    }
    trace.x_final = x;
    return trace;
}

double iteration_reduction(long unbounded_total, long bounded_total) {
    if (unbounded_total == 0) throw DivisionByZero("iteration_reduction: zero unbounded total");
    return 100.0 * (1.0 - static_cast<double>(bounded_total) / static_cast<double>(unbounded_total));
}

double iteration_reduction(const ClosedLoopTrace& unbounded, const ClosedLoopTrace& bounded) {
    return iteration_reduction(unbounded.total_iterations(), bounded.total_iterations());
}

namespace {

struct RunStats {
    long total_iterations = 0;
    long max_iterations = 0;
    double delta_sum = 0.0;
    double delta_max = 0.0;
    long delta_count = 0;
    long n_steps = 0;
};

RunStats stats_of(const ClosedLoopTrace& trace) {
    RunStats s;
    for (const StepRecord& rec : trace.steps) {
        s.total_iterations += rec.iterations;
        s.max_iterations = std::max(s.max_iterations, rec.iterations);
        ++s.n_steps;
        if (rec.delta) {
            s.delta_sum += *rec.delta;
            s.delta_max = std::max(s.delta_max, *rec.delta);
            ++s.delta_count;
        }
    }
    return s;
}

}  // namespace

std::vector<SweepRow> sweep_initial_conditions(const LtiModel& model, const CondensedQp& qp,
                                               const std::vector<SweepConfig>& configurations,
                                               const std::vector<Vector>& x0_set,
                                               const OracleSolver& oracle,
                                               const ClosedLoopOptions& opts, int n_threads) {
    if (x0_set.empty()) throw EmptyGrid("sweep_initial_conditions: empty initial-condition set");
    if (configurations.empty()) throw InvalidSpec("sweep_initial_conditions: no configurations");

    const std::size_t n_cfg = configurations.size();
    const std::size_t n_ic = x0_set.size();
    std::vector<RunStats> results(n_cfg * n_ic);

    if (n_threads <= 0) {
        n_threads = static_cast<int>(std::thread::hardware_concurrency());
        if (n_threads <= 0) n_threads = 1;
    }
    n_threads = std::min<int>(n_threads, static_cast<int>(n_cfg * n_ic));

    std::atomic<std::size_t> next_task{0};
    std::atomic<bool> failed{false};
    std::string first_error;
    std::mutex error_mutex;

    auto worker = [&]() {
        for (;;) {
            const std::size_t task = next_task.fetch_add(1);
            if (task >= n_cfg * n_ic || failed.load()) return;
            const std::size_t ci = task / n_ic;
            const std::size_t ii = task % n_ic;
            try {
                ControllerFn controller = configurations[ci].make_controller();
                const ClosedLoopTrace trace = run_closed_loop(
                    model, qp, controller, oracle, configurations[ci].bounds, x0_set[ii], opts);
                results[task] = stats_of(trace);
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!failed.exchange(true)) first_error = e.what();
                return;
            }
        }
    };

    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
    if (failed.load()) throw Error("sweep_initial_conditions: " + first_error);

    std::vector<SweepRow> rows;
    rows.reserve(n_cfg);
    for (std::size_t ci = 0; ci < n_cfg; ++ci) {
        SweepRow row;
        row.label = configurations[ci].label;
        for (std::size_t ii = 0; ii < n_ic; ++ii) {
            const RunStats& s = results[ci * n_ic + ii];
            row.total_iterations += s.total_iterations;
            row.m_max = std::max(row.m_max, s.max_iterations);
            row.n_steps += s.n_steps;
            row.delta_avg_pct += s.delta_sum;
            row.delta_max_pct = std::max(row.delta_max_pct, s.delta_max);
            row.n_delta_samples += s.delta_count;
        }
        row.m_avg = row.n_steps > 0
                        ? static_cast<double>(row.total_iterations) / static_cast<double>(row.n_steps)
                        : 0.0;
        row.delta_avg_pct = row.n_delta_samples > 0
                                ? 100.0 * row.delta_avg_pct / static_cast<double>(row.n_delta_samples)
                                : 0.0;
        row.delta_max_pct *= 100.0;
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string trace_to_csv(const ClosedLoopTrace& trace) {
    std::ostringstream os;
    if (trace.steps.empty()) return os.str();
    const Index nx = trace.steps.front().x.size();
    const Index nu = trace.steps.front().u0.size();
    os << "step";
    for (Index i = 0; i < nx; ++i) os << ",x" << i;
    for (Index i = 0; i < nu; ++i) os << ",u" << i;
    os << ",iterations,V_now,V_next_opt,V_next_actual,lyapunov_gap,bound_rhs,delta\n";
    char buf[64];
    auto put = [&](double v) {
        const auto res = std::to_chars(buf, buf + sizeof(buf), v);
        os << ',' << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf));
    };
    for (std::size_t j = 0; j < trace.steps.size(); ++j) {
        const StepRecord& rec = trace.steps[j];
        os << j;
        for (Index i = 0; i < nx; ++i) put(rec.x(i));
        for (Index i = 0; i < nu; ++i) put(rec.u0(i));
        os << ',' << rec.iterations;
        put(rec.V_now);
        put(rec.V_next_opt);
        put(rec.V_next_actual);
        put(rec.lyapunov_gap);
        put(rec.bound_rhs);
        if (rec.delta) {
            put(*rec.delta);
        } else {
            os << ",nan";
        }
        os << '\n';
    }
    return os.str();
}

}  // namespace certmpc
