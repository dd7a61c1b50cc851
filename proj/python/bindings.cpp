#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "certmpc/experiment.hpp"

namespace py = pybind11;
using namespace certmpc;

namespace {

/// Holds a controller closure so Python can drive closed loops built from
/// an Experiment.
struct Controller {
    ControllerFn fn;
    SolverRun operator()(const Vector& x0) const { return fn(x0); }
};

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Condensed linear-quadratic MPC with certified fixed-iteration first-order solvers";

    py::register_exception<ConfigParseError>(m, "ConfigParseError");
    py::register_exception<DimensionMismatch>(m, "DimensionMismatch");
    py::register_exception<InvalidSpec>(m, "InvalidSpec");
    static py::exception<Error> base_error(m, "CertmpcError");
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const ConfigParseError&) {
            throw;  // handled by the registered exception above
        } catch (const DimensionMismatch&) {
            throw;
        } catch (const InvalidSpec&) {
            throw;
        } catch (const Error& e) {
            py::set_error(base_error, e.what());
        }
    });

    py::class_<LtiModel>(m, "LtiModel")
        .def(py::init<Matrix, Matrix, double>(), py::arg("A"), py::arg("B"), py::arg("Ts"))
        .def_property_readonly("A", &LtiModel::A)
        .def_property_readonly("B", &LtiModel::B)
        .def_property_readonly("Ts", &LtiModel::Ts)
        .def_property_readonly("state_dim", &LtiModel::state_dim)
        .def_property_readonly("input_dim", &LtiModel::input_dim);

    m.def("solve_dare",
          [](const LtiModel& model, const Matrix& Q, const Matrix& R, double tol, long max_iter) {
              return solve_dare(model, Q, R, DareOptions{tol, max_iter});
          },
          py::arg("model"), py::arg("Q"), py::arg("R"), py::arg("tol") = 1e-12,
          py::arg("max_iter") = 1000000);
    m.def("dare_residual", &dare_residual);

    py::class_<MpcSpec>(m, "MpcSpec")
        .def(py::init([](const LtiModel& model, int N, Matrix Q, Matrix R, Matrix P, Vector lo,
                         Vector hi) { return MpcSpec(model, N, Q, R, P, lo, hi); }),
             py::arg("model"), py::arg("N"), py::arg("Q"), py::arg("R"), py::arg("P"),
             py::arg("u_lo"), py::arg("u_hi"))
        .def_static("with_riccati_terminal",
                    [](const LtiModel& model, int N, Matrix Q, Matrix R, Vector lo, Vector hi) {
                        return MpcSpec::with_riccati_terminal(model, N, Q, R, lo, hi);
                    },
                    py::arg("model"), py::arg("N"), py::arg("Q"), py::arg("R"), py::arg("u_lo"),
                    py::arg("u_hi"))
        .def_property_readonly("horizon", &MpcSpec::horizon)
        .def_property_readonly("P", &MpcSpec::P);

    py::class_<CondensedQp>(m, "CondensedQp")
        .def(py::init<const MpcSpec&>(), py::arg("spec"))
        .def_property_readonly("H", &CondensedQp::H)
        .def_property_readonly("S", &CondensedQp::S)
        .def_property_readonly("D", &CondensedQp::D)
        .def_property_readonly("G", &CondensedQp::G)
        .def_property_readonly("w", &CondensedQp::w)
        .def_property_readonly("u_lo", &CondensedQp::u_lo)
        .def_property_readonly("u_hi", &CondensedQp::u_hi)
        .def_property_readonly("num_vars", &CondensedQp::num_vars)
        .def("cost", &CondensedQp::cost, py::arg("u"), py::arg("x0"))
        .def("gradient", &CondensedQp::gradient, py::arg("u"), py::arg("x0"))
        .def("state_norm_q", &CondensedQp::state_norm_q, py::arg("x"));

    m.def("condense", &condense, py::arg("spec"));
    m.def("project_box", &project_box, py::arg("u"), py::arg("lo"), py::arg("hi"));

    py::enum_<StopReason>(m, "StopReason")
        .value("HitIterationCap", StopReason::HitIterationCap)
        .value("ToleranceMet", StopReason::ToleranceMet);

    py::class_<StopPolicy>(m, "StopPolicy")
        .def_static("fixed_iterations", &StopPolicy::fixed_iterations, py::arg("m_bar"))
        .def_static("tolerance", &StopPolicy::tolerance, py::arg("eps"),
                    py::arg("safety_cap") = 1000000)
        .def_static("combined", &StopPolicy::combined, py::arg("m_max"), py::arg("eps"))
        .def_readonly("max_iterations", &StopPolicy::max_iterations)
        .def_readonly("epsilon", &StopPolicy::epsilon);

    py::class_<SolverRun>(m, "SolverRun")
        .def_readonly("u_final", &SolverRun::u_final)
        .def_readonly("iterations", &SolverRun::iterations)
        .def_readonly("stop_reason", &SolverRun::stop_reason);

    m.def("pgdm_solve", &pgdm_solve, py::arg("qp"), py::arg("x0"), py::arg("u0"), py::arg("alpha"),
          py::arg("policy"), py::arg("record_trace") = false);

    py::class_<AdmmState>(m, "AdmmState")
        .def_static("zero", &AdmmState::zero, py::arg("n"), py::arg("rho"))
        .def_readwrite("u", &AdmmState::u)
        .def_readwrite("v", &AdmmState::v)
        .def_readwrite("lambda_", &AdmmState::lambda)
        .def_readwrite("rho", &AdmmState::rho);

    py::class_<AdmmSolver>(m, "AdmmSolver")
        .def(py::init<const CondensedQp&, double>(), py::arg("qp"), py::arg("rho"),
             py::keep_alive<1, 2>())
        .def("solve",
             [](const AdmmSolver& s, const Vector& x0, const StopPolicy& policy) {
                 return s.solve(x0, policy);
             },
             py::arg("x0"), py::arg("policy"))
        .def_property_readonly("rho", &AdmmSolver::rho);

    m.def("admm_solve", &admm_solve, py::arg("qp"), py::arg("x0"), py::arg("state0"),
          py::arg("policy"), py::arg("record_trace") = false);

    py::class_<OracleSolver>(m, "OracleSolver")
        .def(py::init<const CondensedQp&, double, long, bool>(), py::arg("qp"),
             py::arg("tol") = 1e-10, py::arg("max_iter") = 1000000,
             py::arg("interior_shortcut") = true, py::keep_alive<1, 2>())
        .def("solve", py::overload_cast<const Vector&>(&OracleSolver::solve, py::const_),
             py::arg("x0"))
        .def("value", py::overload_cast<const Vector&>(&OracleSolver::value, py::const_),
             py::arg("x0"))
        .def_property_readonly("mu", &OracleSolver::mu)
        .def_property_readonly("L", &OracleSolver::L);

    m.def("eval_value",
          [](const CondensedQp& qp, const Vector& x0, const OracleSolver& oracle) {
              return eval_value(qp, x0, [&oracle](const CondensedQp&, const Vector& x) {
                  return oracle.solve(x);
              });
          },
          py::arg("qp"), py::arg("x0"), py::arg("oracle"));

    py::enum_<Method>(m, "Method").value("Pgdm", Method::Pgdm).value("Admm", Method::Admm);

    py::class_<SpectralBounds>(m, "SpectralBounds")
        .def_readonly("mu", &SpectralBounds::mu)
        .def_readonly("L", &SpectralBounds::L)
        .def_readonly("kappa", &SpectralBounds::kappa);

    m.def("kappa_pgdm", &kappa_pgdm, py::arg("qp"));
    m.def("kappa_pgdm_from", &kappa_pgdm_from, py::arg("mu"), py::arg("L"));
    m.def("kappa_admm", &kappa_admm, py::arg("qp"), py::arg("rho"));
    m.def("kappa_admm_dual", &kappa_admm_dual, py::arg("qp"), py::arg("rho"));

    py::class_<EtaBars>(m, "EtaBars")
        .def_readonly("eta1_bar", &EtaBars::eta1_bar)
        .def_readonly("eta2_bar", &EtaBars::eta2_bar)
        .def_readonly("nu_max", &EtaBars::nu_max);
    m.def("eta_bars", &eta_bars, py::arg("eta1"), py::arg("eta2"), py::arg("model"));

    py::class_<GammaEstimate>(m, "GammaEstimate")
        .def_readonly("gamma", &GammaEstimate::gamma)
        .def_readonly("max_ratio", &GammaEstimate::max_ratio)
        .def_readonly("argmax_x0", &GammaEstimate::argmax_x0);
    m.def("estimate_gamma", &estimate_gamma, py::arg("qp"), py::arg("samples"), py::arg("oracle"),
          py::arg("safety_factor") = 1.1);

    py::class_<MBarResult>(m, "MBarResult")
        .def_readonly("m_bar", &MBarResult::m_bar)
        .def_readonly("beta", &MBarResult::beta)
        .def_readonly("threshold", &MBarResult::threshold)
        .def_readonly("E", &MBarResult::E);
    m.def("compute_m_bar", &compute_m_bar, py::arg("kappa"), py::arg("eta1_bar"),
          py::arg("eta2_bar"), py::arg("gamma"));
    m.def("compute_m_bar_quadratic", &compute_m_bar_quadratic, py::arg("kappa"),
          py::arg("eta2_bar"), py::arg("gamma"));

    py::class_<BallCheckReport>(m, "BallCheckReport")
        .def_readonly("pass_", &BallCheckReport::pass)
        .def_readonly("worst_margin", &BallCheckReport::worst_margin)
        .def_readonly("worst_x0", &BallCheckReport::worst_x0)
        .def_readonly("n_samples", &BallCheckReport::n_samples);
    m.def("check_assumption_ball", &check_assumption_ball, py::arg("qp"), py::arg("oracle"),
          py::arg("n_samples"), py::arg("seed"), py::arg("active_tol") = 1e-7);

    py::class_<EtaFit>(m, "EtaFit")
        .def_readonly("eta1", &EtaFit::eta1)
        .def_readonly("eta2", &EtaFit::eta2)
        .def_readonly("max_violation", &EtaFit::max_violation);
    m.def("estimate_eta", &estimate_eta, py::arg("qp"), py::arg("oracle"), py::arg("nu_max"),
          py::arg("gamma"), py::arg("n_pairs"), py::arg("radius"), py::arg("seed"));

    py::class_<Certificate>(m, "Certificate")
        .def_readonly("method", &Certificate::method)
        .def_readonly("kappa", &Certificate::kappa)
        .def_readonly("mu", &Certificate::mu)
        .def_readonly("L", &Certificate::L)
        .def_readonly("alpha", &Certificate::alpha)
        .def_readonly("rho", &Certificate::rho)
        .def_readonly("eta1_bar", &Certificate::eta1_bar)
        .def_readonly("eta2_bar", &Certificate::eta2_bar)
        .def_readonly("gamma", &Certificate::gamma)
        .def_readonly("E", &Certificate::E)
        .def_readonly("m_bar", &Certificate::m_bar)
        .def_readonly("beta", &Certificate::beta)
        .def_readonly("m_bar_quadratic", &Certificate::m_bar_quadratic)
        .def_readonly("notes", &Certificate::notes)
        .def("effective_m_bar", &Certificate::effective_m_bar)
        .def("beta_at", &Certificate::beta_at, py::arg("m"))
        .def("report", &Certificate::report);
    m.def("build_certificate", &build_certificate, py::arg("method"), py::arg("kappa"),
          py::arg("mu"), py::arg("L"), py::arg("alpha"), py::arg("rho"), py::arg("eta1"),
          py::arg("eta2"), py::arg("nu_max"), py::arg("gamma"),
          py::arg("m_bar_override") = std::nullopt, py::arg("notes") = std::vector<std::string>{});

    m.def("step_plant", &step_plant, py::arg("model"), py::arg("x"), py::arg("u0"));

    py::class_<BoundParams>(m, "BoundParams")
        .def(py::init([](double kappa, double e1, double e2, double gamma) {
                 return BoundParams{kappa, e1, e2, gamma};
             }),
             py::arg("kappa"), py::arg("eta1_bar"), py::arg("eta2_bar"), py::arg("gamma"))
        .def_static("from_certificate", &BoundParams::from, py::arg("certificate"))
        .def("rhs", &BoundParams::rhs, py::arg("iterations"), py::arg("x_norm_q"));

    py::class_<StepRecord>(m, "StepRecord")
        .def_readonly("x", &StepRecord::x)
        .def_readonly("u0", &StepRecord::u0)
        .def_readonly("iterations", &StepRecord::iterations)
        .def_readonly("V_now", &StepRecord::V_now)
        .def_readonly("V_next_opt", &StepRecord::V_next_opt)
        .def_readonly("V_next_actual", &StepRecord::V_next_actual)
        .def_readonly("lyapunov_gap", &StepRecord::lyapunov_gap)
        .def_readonly("bound_rhs", &StepRecord::bound_rhs)
        .def_readonly("delta", &StepRecord::delta);

    py::class_<ClosedLoopTrace>(m, "ClosedLoopTrace")
        .def_readonly("steps", &ClosedLoopTrace::steps)
        .def_readonly("x_final", &ClosedLoopTrace::x_final)
        .def("total_iterations", &ClosedLoopTrace::total_iterations)
        .def("max_iterations", &ClosedLoopTrace::max_iterations);

    py::class_<ClosedLoopOptions>(m, "ClosedLoopOptions")
        .def(py::init<>())
        .def_readwrite("n_steps", &ClosedLoopOptions::n_steps)
        .def_readwrite("v_floor", &ClosedLoopOptions::v_floor);

    py::class_<Controller>(m, "Controller").def("__call__", &Controller::operator(), py::arg("x0"));

    m.def("run_closed_loop",
          [](const LtiModel& model, const CondensedQp& qp, const Controller& controller,
             const OracleSolver& oracle, const BoundParams& bounds, const Vector& x_init,
             const ClosedLoopOptions& opts) {
              return run_closed_loop(model, qp, controller.fn, oracle, bounds, x_init, opts);
          },
          py::arg("model"), py::arg("qp"), py::arg("controller"), py::arg("oracle"),
          py::arg("bounds"), py::arg("x_init"), py::arg("opts"));

    m.def("iteration_reduction",
          py::overload_cast<long, long>(&iteration_reduction), py::arg("unbounded_total"),
          py::arg("bounded_total"));
    m.def("trace_to_csv", &trace_to_csv, py::arg("trace"));

    py::enum_<SolverKind>(m, "SolverKind")
        .value("Oracle", SolverKind::Oracle)
        .value("Pgdm", SolverKind::Pgdm)
        .value("Admm", SolverKind::Admm);

    py::class_<ExperimentConfig>(m, "ExperimentConfig")
        .def_static("load", &ExperimentConfig::load, py::arg("path"))
        .def_readonly("N", &ExperimentConfig::N)
        .def_readonly("hash", &ExperimentConfig::hash)
        .def_readwrite("output", &ExperimentConfig::output);

    py::class_<OutputSettings>(m, "OutputSettings")
        .def_readwrite("directory", &OutputSettings::directory);

    py::class_<Experiment>(m, "Experiment")
        .def(py::init<ExperimentConfig>(), py::arg("config"))
        .def_property_readonly("qp", &Experiment::qp, py::return_value_policy::reference_internal)
        .def_property_readonly("oracle", &Experiment::oracle,
                               py::return_value_policy::reference_internal)
        .def("certificate", &Experiment::certificate, py::arg("method"))
        .def("unbounded_policy", &Experiment::unbounded_policy, py::arg("method"))
        .def("certified_policy", &Experiment::certified_policy, py::arg("method"))
        .def("make_grid", &Experiment::make_grid)
        .def("make_controller",
             [](const Experiment& exp, SolverKind kind, const StopPolicy& policy, bool warm) {
                 return Controller{exp.make_controller(kind, policy, warm)};
             },
             py::arg("kind"), py::arg("policy"), py::arg("warm_start"),
             py::keep_alive<0, 1>())
        .def_property_readonly("model",
                               [](const Experiment& exp) -> const LtiModel& {
                                   return exp.spec().model();
                               },
                               py::return_value_policy::reference_internal);

    m.def("cmd_certify", &cmd_certify, py::arg("config"));
    m.def("cmd_run", &cmd_run, py::arg("config"));
    m.def("cmd_sweep", &cmd_sweep, py::arg("config"), py::arg("n_threads") = 0);
}
