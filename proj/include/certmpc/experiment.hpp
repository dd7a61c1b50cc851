#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "certmpc/certify.hpp"
#include "certmpc/config.hpp"
#include "certmpc/simulate.hpp"
#include "certmpc/solvers.hpp"

namespace certmpc {

enum class SolverKind { Oracle, Pgdm, Admm };

/// Everything assembled from one experiment file: the condensed problem,
/// the reference solver, per-method certificates and solver parameters.
class Experiment {
public:
    explicit Experiment(ExperimentConfig config);

    Experiment(const Experiment&) = delete;
    Experiment& operator=(const Experiment&) = delete;

    const ExperimentConfig& config() const { return config_; }
    const MpcSpec& spec() const { return *spec_; }
    const CondensedQp& qp() const { return *qp_; }
    const OracleSolver& oracle() const { return *oracle_; }
    const AdmmSolver& admm_solver() const { return *admm_; }
    const Certificate& certificate(Method m) const {
        return m == Method::Pgdm ? cert_pgdm_ : cert_admm_;
    }
    double pgdm_alpha() const { return pgdm_alpha_; }
    double gamma() const { return gamma_; }

    /// Unbounded (tolerance-with-cap) policy for a method.
    StopPolicy unbounded_policy(Method m) const;
    /// Certified policy: the effective iteration count, tolerance escape kept.
    StopPolicy certified_policy(Method m) const;

    /// Fresh controller closure; warm_start keeps the shifted previous
    /// solution and the clamped unconstrained seed as initial guesses.
    ControllerFn make_controller(SolverKind kind, const StopPolicy& policy, bool warm_start) const;

    /// Deterministic initial-condition grid per the config (seeded draws in
    /// the state box, small-norm and terminal-ball filters applied).
    std::vector<Vector> make_grid() const;

    /// Samples for the gamma estimate when the config requests one.
    std::vector<Vector> make_gamma_samples() const;

private:
    ExperimentConfig config_;
    std::unique_ptr<MpcSpec> spec_;
    std::unique_ptr<CondensedQp> qp_;
    std::unique_ptr<OracleSolver> oracle_;
    std::unique_ptr<AdmmSolver> admm_;
    std::unique_ptr<WarmStart> warm_;
    Certificate cert_pgdm_;
    Certificate cert_admm_;
    double pgdm_alpha_ = 0.0;
    double gamma_ = 0.0;
};

struct CliOverrides {
    std::optional<std::string> out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<long> m_bar_override;
    bool warm_start = false;
    int threads = 0;
};

ExperimentConfig apply_overrides(ExperimentConfig cfg, const CliOverrides& overrides);

/// Writes certificate_pgdm.txt and certificate_admm.txt.
std::vector<std::filesystem::path> cmd_certify(const ExperimentConfig& cfg);

/// Runs the oracle, both unbounded and both certified closed loops from
/// simulate.x_init; writes per-step traces, summary.txt and
/// gap_bound_series.csv (lyapunov gap and bound per step for both methods).
std::vector<std::filesystem::path> cmd_run(const ExperimentConfig& cfg);

/// Closed loops over the configured grid for the four solver
/// configurations; writes sweep_summary.csv.
std::vector<std::filesystem::path> cmd_sweep(const ExperimentConfig& cfg, int n_threads = 0);

}  // namespace certmpc
