#include "certmpc/experiment.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <charconv>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <memory>
#include <sstream>

#include "certmpc/rng.hpp"

namespace certmpc {

namespace {

std::string fmt(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string fmt_short(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

}  // namespace

Experiment::Experiment(ExperimentConfig config) : config_(std::move(config)) {
    spec_ = std::make_unique<MpcSpec>(config_.build_spec());
    qp_ = std::make_unique<CondensedQp>(*spec_);
    oracle_ = std::make_unique<OracleSolver>(*qp_);
    admm_ = std::make_unique<AdmmSolver>(*qp_, config_.admm.rho);

    const SpectralBounds spectrum = kappa_pgdm(*qp_);
    pgdm_alpha_ = config_.pgdm.alpha.value_or(1.0 / spectrum.L);

    // gamma: fixed by config or estimated from a seeded sample grid
    if (config_.certify.gamma) {
        gamma_ = *config_.certify.gamma;
    } else {
        const GammaEstimate est =
            estimate_gamma(*qp_, make_gamma_samples(), *oracle_, config_.certify.gamma_safety);
        gamma_ = est.gamma;
    }
    warm_ = std::make_unique<WarmStart>(*qp_, gamma_);

    Eigen::SelfAdjointEigenSolver<Matrix> es_b(spec_->model().B().transpose() *
                                               spec_->model().B());
    const double nu = es_b.eigenvalues().maxCoeff();

    // PGDM certificate: configured mu/L win over the spectrum; the spectrum
    // values are always recorded alongside.
    SpectralBounds used = spectrum;
    std::vector<std::string> notes_p;
    if (config_.pgdm.mu && config_.pgdm.L) {
        used = kappa_pgdm_from(*config_.pgdm.mu, *config_.pgdm.L);
        std::ostringstream note;
        note << "kappa from configured mu = " << fmt_short(used.mu) << ", L = " << fmt_short(used.L)
             << "; spectrum of H gives mu = " << fmt_short(spectrum.mu)
             << ", L = " << fmt_short(spectrum.L) << ", kappa = " << fmt_short(spectrum.kappa);
        notes_p.push_back(note.str());
    }
    {
        const double step_factor =
            std::max(std::abs(1.0 - pgdm_alpha_ * spectrum.mu), std::abs(1.0 - pgdm_alpha_ * spectrum.L));
        std::ostringstream note;
        note << "step alpha = " << fmt_short(pgdm_alpha_) << " contracts iterates by factor "
             << fmt_short(step_factor) << " per iteration";
        notes_p.push_back(note.str());
    }
    cert_pgdm_ = build_certificate(Method::Pgdm, used.kappa, used.mu, used.L, pgdm_alpha_, 0.0,
                                   config_.certify.pgdm.eta1, config_.certify.pgdm.eta2, nu, gamma_,
                                   config_.certify.pgdm.m_bar_override, std::move(notes_p));

    // ADMM certificate: the dual-splitting contraction factor of the
    // iteration actually run, unless the config overrides kappa. The
    // stacked-constraint formula value is recorded for comparison.
    const double kappa_dual = kappa_admm_dual(*qp_, config_.admm.rho);
    const double kappa_formula = kappa_admm(*qp_, config_.admm.rho);
    double kappa_a = config_.admm.kappa.value_or(kappa_dual);
    std::vector<std::string> notes_a;
    {
        std::ostringstream note;
        note << "dual-splitting contraction factor = " << fmt_short(kappa_dual)
             << "; stacked-constraint formula (1/2)||2M-I|| = " << fmt_short(kappa_formula);
        if (config_.admm.kappa) note << "; kappa overridden by config to " << fmt_short(*config_.admm.kappa);
        notes_a.push_back(note.str());
    }
    cert_admm_ = build_certificate(Method::Admm, kappa_a, spectrum.mu, spectrum.L, 0.0,
                                   config_.admm.rho, config_.certify.admm.eta1,
                                   config_.certify.admm.eta2, nu, gamma_,
                                   config_.certify.admm.m_bar_override, std::move(notes_a));
}

StopPolicy Experiment::unbounded_policy(Method m) const {
    if (m == Method::Pgdm) {
        return StopPolicy::combined(config_.pgdm.max_iterations, config_.pgdm.epsilon);
    }
    return StopPolicy::combined(config_.admm.max_iterations, config_.admm.epsilon);
}

StopPolicy Experiment::certified_policy(Method m) const {
    const Certificate& cert = certificate(m);
    const double eps = m == Method::Pgdm ? config_.pgdm.epsilon : config_.admm.epsilon;
    return StopPolicy::combined(cert.effective_m_bar(), eps);
}

ControllerFn Experiment::make_controller(SolverKind kind, const StopPolicy& policy,
                                         bool warm_start) const {
    if (kind == SolverKind::Oracle) {
        const OracleSolver* oracle = oracle_.get();
        auto prev = std::make_shared<Vector>();
        const Index nu = qp_->input_dim();
        return [oracle, prev, nu](const Vector& x0) {
            OracleSolver::Run run = prev->size() > 0
                                        ? [&] {
                                              Vector warm = shift_sequence(*prev, nu);
                                              return oracle->solve_run(x0, &warm);
                                          }()
                                        : oracle->solve_run(x0);
            *prev = run.u;
            return SolverRun{run.u, run.iterations, StopReason::ToleranceMet, std::nullopt};
        };
    }

    const CondensedQp* qp = qp_.get();
    const WarmStart* warm = warm_.get();
    auto prev = std::make_shared<Vector>();

    if (kind == SolverKind::Pgdm) {
        const double alpha = pgdm_alpha_;
        return [qp, warm, prev, alpha, policy, warm_start](const Vector& x0) {
            Vector u0;
            if (warm_start) {
                u0 = warm->seed(x0, prev->size() > 0 ? prev.get() : nullptr);
            } else {
                u0 = Vector::Zero(qp->num_vars());
            }
            SolverRun run = pgdm_solve(*qp, x0, u0, alpha, policy);
            *prev = run.u_final;
            return run;
        };
    }

    const AdmmSolver* admm = admm_.get();
    const double rho = config_.admm.rho;
    return [qp, warm, prev, admm, rho, policy, warm_start](const Vector& x0) {
        AdmmState state0 = AdmmState::zero(qp->num_vars(), rho);
        if (warm_start) {
            state0.v = warm->seed(x0, prev->size() > 0 ? prev.get() : nullptr);
        }
        SolverRun run = admm->solve(x0, state0, policy);
        *prev = run.u_final;
        return run;
    };
}

std::vector<Vector> Experiment::make_grid() const {
    if (!config_.simulate.grid) {
        throw EmptyGrid("experiment config has no simulate.grid section");
    }
    const GridConfig& grid = *config_.simulate.grid;
    const Index nx = qp_->state_dim();
    if (grid.lower.size() != nx) throw DimensionMismatch("grid bounds have wrong length");

    Rng rng(grid.seed);
    std::vector<Vector> points;
    points.reserve(grid.count);
    const long max_draws = 1000 * grid.count;
    for (long draw = 0; draw < max_draws && static_cast<long>(points.size()) < grid.count; ++draw) {
        Vector x(nx);
        for (Index i = 0; i < nx; ++i) x(i) = rng.uniform(grid.lower(i), grid.upper(i));
        if (qp_->state_norm_q(x) <= grid.min_norm_q) continue;
        if (grid.filter_terminal_ball) {
            const Vector u = oracle_->solve(x);
            Vector xk = x;
            for (int k = 0; k < qp_->horizon(); ++k) {
                xk = spec_->model().A() * xk + spec_->model().B() * u.segment(k * qp_->input_dim(), qp_->input_dim());
            }
            if (qp_->state_norm_q(xk) > grid.terminal_ball) continue;
        }
        points.push_back(std::move(x));
    }
    if (static_cast<long>(points.size()) < grid.count) {
        throw EmptyGrid("grid filter rejected too many candidate initial conditions");
    }
    return points;
}

std::vector<Vector> Experiment::make_gamma_samples() const {
    if (!config_.certify.gamma_grid) return {};
    const GammaGridConfig& g = *config_.certify.gamma_grid;
    const Index nx = qp_->state_dim();
    if (g.lower.size() != nx || g.upper.size() != nx) {
        throw DimensionMismatch("gamma_grid bounds have wrong length");
    }
    Rng rng(g.seed);
    std::vector<Vector> points;
    points.reserve(g.count);
    while (static_cast<long>(points.size()) < g.count) {
        Vector x(nx);
        for (Index i = 0; i < nx; ++i) x(i) = rng.uniform(g.lower(i), g.upper(i));
        if (qp_->state_norm_q(x) <= 1e-3) continue;
        points.push_back(std::move(x));
    }
    return points;
}

ExperimentConfig apply_overrides(ExperimentConfig cfg, const CliOverrides& overrides) {
    if (overrides.out_dir) cfg.output.directory = *overrides.out_dir;
    if (overrides.seed) {
        cfg.certify.seed = *overrides.seed;
        if (cfg.simulate.grid) cfg.simulate.grid->seed = *overrides.seed;
        if (cfg.certify.gamma_grid) cfg.certify.gamma_grid->seed = *overrides.seed;
    }
    if (overrides.m_bar_override) {
        cfg.certify.pgdm.m_bar_override = *overrides.m_bar_override;
        cfg.certify.admm.m_bar_override = *overrides.m_bar_override;
    }
    if (overrides.warm_start) cfg.simulate.warm_start = true;
    return cfg;
}

namespace {

std::string timestamp_utc() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::ofstream open_output(const std::filesystem::path& dir, const std::string& name,
                          const ExperimentConfig& cfg, const char* command) {
    std::filesystem::create_directories(dir);
    std::ofstream out(dir / name);
    if (!out) throw Error("cannot write output file '" + (dir / name).string() + "'");
    char hash[32];
    std::snprintf(hash, sizeof(hash), "0x%016llx", static_cast<unsigned long long>(cfg.hash));
    out << "# certmpc " << command << "\n";
    out << "# config: " << cfg.source_path << "\n";
    out << "# config_hash: " << hash << "\n";
    out << "# generated: " << timestamp_utc() << "\n";
    return out;
}

struct RunBundle {
    std::string label;
    ClosedLoopTrace trace;
};

void write_summary_rows(std::ostream& os, const std::vector<SweepRow>& rows) {
    os << "config,m_avg,m_max,delta_avg_pct,delta_max_pct,total_iterations\n";
    for (const SweepRow& row : rows) {
        os << row.label << ',' << fmt(row.m_avg) << ',' << row.m_max << ','
           << fmt(row.delta_avg_pct) << ',' << fmt(row.delta_max_pct) << ','
           << row.total_iterations << "\n";
    }
}

SweepRow stats_from_trace(const std::string& label, const ClosedLoopTrace& trace) {
    SweepRow row;
    row.label = label;
    for (const StepRecord& rec : trace.steps) {
        row.total_iterations += rec.iterations;
        row.m_max = std::max(row.m_max, rec.iterations);
        ++row.n_steps;
        if (rec.delta) {
            row.delta_avg_pct += *rec.delta;
            row.delta_max_pct = std::max(row.delta_max_pct, *rec.delta);
            ++row.n_delta_samples;
        }
    }
    row.m_avg = row.n_steps > 0 ? static_cast<double>(row.total_iterations) / row.n_steps : 0.0;
    row.delta_avg_pct =
        row.n_delta_samples > 0 ? 100.0 * row.delta_avg_pct / row.n_delta_samples : 0.0;
    row.delta_max_pct *= 100.0;
    return row;
}

}  // namespace

std::vector<std::filesystem::path> cmd_certify(const ExperimentConfig& cfg) {
    Experiment exp(cfg);
    const std::filesystem::path dir = cfg.output.directory;
    std::vector<std::filesystem::path> written;
    for (const Method m : {Method::Pgdm, Method::Admm}) {
        const std::string name =
            m == Method::Pgdm ? "certificate_pgdm.txt" : "certificate_admm.txt";
        std::ofstream out = open_output(dir, name, cfg, "certify");
        out << exp.certificate(m).report();
        written.push_back(dir / name);
    }
    return written;
}

std::vector<std::filesystem::path> cmd_run(const ExperimentConfig& cfg) {
    Experiment exp(cfg);
    const std::filesystem::path dir = cfg.output.directory;
    const Vector& x_init = cfg.simulate.x_init;
    if (x_init.size() != exp.qp().state_dim()) {
        throw DimensionMismatch("simulate.x_init has wrong length");
    }
    ClosedLoopOptions opts;
    opts.n_steps = cfg.simulate.n_steps;
    opts.v_floor = cfg.simulate.v_floor;
    const bool warm = cfg.simulate.warm_start;

    const BoundParams bp = BoundParams::from(exp.certificate(Method::Pgdm));
    const BoundParams ba = BoundParams::from(exp.certificate(Method::Admm));

    std::vector<RunBundle> runs;
    runs.push_back({"oracle", run_closed_loop(exp.spec().model(), exp.qp(),
                                              exp.make_controller(SolverKind::Oracle, StopPolicy::fixed_iterations(1), warm),
                                              exp.oracle(), bp, x_init, opts)});
    runs.push_back({"pgdm", run_closed_loop(exp.spec().model(), exp.qp(),
                                            exp.make_controller(SolverKind::Pgdm, exp.unbounded_policy(Method::Pgdm), warm),
                                            exp.oracle(), bp, x_init, opts)});
    runs.push_back({"pgdm_mbar", run_closed_loop(exp.spec().model(), exp.qp(),
                                                 exp.make_controller(SolverKind::Pgdm, exp.certified_policy(Method::Pgdm), warm),
                                                 exp.oracle(), bp, x_init, opts)});
    runs.push_back({"admm", run_closed_loop(exp.spec().model(), exp.qp(),
                                            exp.make_controller(SolverKind::Admm, exp.unbounded_policy(Method::Admm), warm),
                                            exp.oracle(), ba, x_init, opts)});
    runs.push_back({"admm_mbar", run_closed_loop(exp.spec().model(), exp.qp(),
                                                 exp.make_controller(SolverKind::Admm, exp.certified_policy(Method::Admm), warm),
                                                 exp.oracle(), ba, x_init, opts)});

    std::vector<std::filesystem::path> written;
    for (const RunBundle& run : runs) {
        const std::string name = "trace_" + run.label + ".csv";
        std::ofstream out = open_output(dir, name, cfg, "run");
        out << trace_to_csv(run.trace);
        written.push_back(dir / name);
    }

    // summary over the four solver configurations
    {
        std::ofstream out = open_output(dir, "summary.txt", cfg, "run");
        std::vector<SweepRow> rows;
        rows.push_back(stats_from_trace("ADMM", runs[3].trace));
        rows.push_back(stats_from_trace("ADMM(m_bar)", runs[4].trace));
        rows.push_back(stats_from_trace("PGDM", runs[1].trace));
        rows.push_back(stats_from_trace("PGDM(m_bar)", runs[2].trace));
        write_summary_rows(out, rows);
        out << "# reduction_admm_pct = " << fmt(iteration_reduction(runs[3].trace, runs[4].trace))
            << "\n";
        out << "# reduction_pgdm_pct = " << fmt(iteration_reduction(runs[1].trace, runs[2].trace))
            << "\n";
        written.push_back(dir / "summary.txt");
    }

    // per-step gap/bound series for both certified runs
    {
        std::ofstream out = open_output(dir, "gap_bound_series.csv", cfg, "run");
        out << "step,pgdm_gap,pgdm_bound,admm_gap,admm_bound\n";
        const ClosedLoopTrace& tp = runs[2].trace;
        const ClosedLoopTrace& ta = runs[4].trace;
        for (std::size_t j = 0; j < tp.steps.size(); ++j) {
            out << j << ',' << fmt(tp.steps[j].lyapunov_gap) << ',' << fmt(tp.steps[j].bound_rhs)
                << ',' << fmt(ta.steps[j].lyapunov_gap) << ',' << fmt(ta.steps[j].bound_rhs) << "\n";
        }
        written.push_back(dir / "gap_bound_series.csv");
    }
    return written;
}

std::vector<std::filesystem::path> cmd_sweep(const ExperimentConfig& cfg, int n_threads) {
    Experiment exp(cfg);
    const std::filesystem::path dir = cfg.output.directory;
    const std::vector<Vector> grid = exp.make_grid();
    const bool warm = cfg.simulate.warm_start;

    ClosedLoopOptions opts;
    opts.n_steps = cfg.simulate.n_steps;
    opts.v_floor = cfg.simulate.v_floor;

    const BoundParams bp = BoundParams::from(exp.certificate(Method::Pgdm));
    const BoundParams ba = BoundParams::from(exp.certificate(Method::Admm));

    std::vector<SweepConfig> configs;
    configs.push_back({"ADMM",
                       [&exp, warm] { return exp.make_controller(SolverKind::Admm, exp.unbounded_policy(Method::Admm), warm); },
                       ba});
    configs.push_back({"ADMM(m_bar)",
                       [&exp, warm] { return exp.make_controller(SolverKind::Admm, exp.certified_policy(Method::Admm), warm); },
                       ba});
    configs.push_back({"PGDM",
                       [&exp, warm] { return exp.make_controller(SolverKind::Pgdm, exp.unbounded_policy(Method::Pgdm), warm); },
                       bp});
    configs.push_back({"PGDM(m_bar)",
                       [&exp, warm] { return exp.make_controller(SolverKind::Pgdm, exp.certified_policy(Method::Pgdm), warm); },
                       bp});

    const std::vector<SweepRow> rows =
        sweep_initial_conditions(exp.spec().model(), exp.qp(), configs, grid, exp.oracle(), opts, n_threads);

    std::ofstream out = open_output(dir, "sweep_summary.csv", cfg, "sweep");
    write_summary_rows(out, rows);
    out << "# grid_points = " << grid.size() << "\n";
    out << "# reduction_admm_pct = "
        << fmt(iteration_reduction(rows[0].total_iterations, rows[1].total_iterations)) << "\n";
    out << "# reduction_pgdm_pct = "
        << fmt(iteration_reduction(rows[2].total_iterations, rows[3].total_iterations)) << "\n";
    return {dir / "sweep_summary.csv"};
}

}  // namespace certmpc
