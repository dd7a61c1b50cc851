#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "certmpc/model.hpp"
#include "certmpc/solvers.hpp"

namespace certmpc {

enum class Method { Pgdm, Admm };

const char* method_name(Method m);

struct SpectralBounds {
    double mu;
    double L;
    double kappa;  // 1 - mu/L
};

/// Strong convexity / smoothness of J from the spectrum of H, and the
/// projected-gradient convergence factor kappa = 1 - mu/L for step 1/L.
SpectralBounds kappa_pgdm(const CondensedQp& qp);

/// Same factor from externally supplied constants (configuration override).
SpectralBounds kappa_pgdm_from(double mu, double L);

/// Convergence factor kappa = 1/2 ||2M - I|| with
///   M = G~ - G~ (I + G~)^{-1} G~,  G~ = rho G H^{-1} G',
/// G = [I; -I] taken from the stacked box Gu <= w. Note that G~ is rank
/// deficient for this G (directions [d; d] are in its null space), which
/// pins ||2M - I|| = 1 and the formula to exactly 1/2 regardless of rho.
double kappa_admm(const CondensedQp& qp, double rho);

/// Dual contraction factor of the u = v splitting actually iterated by
/// AdmmSolver: max_i |lambda_i(H) - rho| / (lambda_i(H) + rho). Equals
/// ||2M - I|| for G~ = rho H^{-1}; this is the factor the benchmark
/// parameter set reproduces.
double kappa_admm_dual(const CondensedQp& qp, double rho);

struct EtaBars {
    double eta1_bar;  // eta1 * sqrt(nu_max)
    double eta2_bar;  // eta2 / 2 * nu_max
    double nu_max;    // lambda_max(Gamma' B'B Gamma) = lambda_max(B'B)
};

/// Input-channel scaling of the value-function Lipschitz constants. Only
/// the first input block enters through Gamma = [I 0 ... 0], so the
/// relevant eigenvalue is lambda_max(B'B).
EtaBars eta_bars(double eta1, double eta2, const LtiModel& model);

struct GammaEstimate {
    double gamma;          // safety_factor * max ratio
    double max_ratio;      // max ||u*(x0)|| / ||x0||_Q over the samples
    Vector argmax_x0;
};

/// Samples the bound ||u*(x0)|| <= gamma ||x0||_Q and returns the smallest
/// gamma consistent with the sample set, inflated by safety_factor.
GammaEstimate estimate_gamma(const CondensedQp& qp, const std::vector<Vector>& samples,
                             const OracleSolver& oracle, double safety_factor = 1.1);

struct MBarResult {
    long m_bar;
    double beta;       // E kappa^m_bar, < 1
    double threshold;  // log E / log(1/kappa)
    double E;          // 2 eta1_bar gamma + 2 eta2_bar gamma^2
};

/// Certified iteration count: the smallest integer with
/// E kappa^m < 1, i.e. m_bar = max(1, floor(log E / log(1/kappa)) + 1).
MBarResult compute_m_bar(double kappa, double eta1_bar, double eta2_bar, double gamma);

/// Small-state-regime bound m > log(2 eta2_bar gamma^2) / (2 log(1/kappa)),
/// integerized the same way; never exceeds compute_m_bar's count.
long compute_m_bar_quadratic(double kappa, double eta2_bar, double gamma);

struct BallCheckReport {
    bool pass;
    double worst_margin;  // min over samples/coordinates of distance to a bound
    Vector worst_x0;
    int n_samples;
};

/// Samples the boundary ||x0||_Q = 1 and checks that no input constraint is
/// active at the sampled optimizers. A necessary (sampling-based, not
/// exhaustive) check that the unit-Q ball sits inside the region where the
/// value function is the terminal quadratic.
BallCheckReport check_assumption_ball(const CondensedQp& qp, const OracleSolver& oracle,
                                      int n_samples, std::uint64_t seed, double active_tol = 1e-7);

struct EtaFit {
    double eta1;
    double eta2;
    double max_violation;  // residual slack of the binding sample pair
};

/// Sampling estimator for the value-function Lipschitz constants: draws
/// state pairs in the ball ||x||_Q <= radius, evaluates V with the oracle,
/// and returns the (eta1, eta2) on the feasibility frontier minimizing the
/// certified combination 2 eta1 sqrt(nu) gamma + eta2 nu gamma^2.
/// Reported for diagnostics; configured constants are never replaced.
EtaFit estimate_eta(const CondensedQp& qp, const OracleSolver& oracle, double nu_max,
                    double gamma, int n_pairs, double radius, std::uint64_t seed);

/// All offline quantities entering the stopping criterion, with the inputs
/// that produced them and provenance notes for every override.
struct Certificate {
    Method method;
    double mu = 0.0;
    double L = 0.0;
    double alpha = 0.0;  // PGDM step size (0 when not applicable)
    double rho = 0.0;    // ADMM penalty (0 when not applicable)
    double kappa = 0.0;
    double eta1 = 0.0;
    double eta2 = 0.0;
    double eta1_bar = 0.0;
    double eta2_bar = 0.0;
    double nu_max = 0.0;
    double gamma = 0.0;
    double E = 0.0;
    double threshold = 0.0;
    long m_bar = 1;
    double beta = 0.0;
    long m_bar_quadratic = 1;
    std::optional<long> m_bar_override;
    std::vector<std::string> notes;

    long effective_m_bar() const { return m_bar_override.value_or(m_bar); }
    double beta_at(long m) const;
    std::string report() const;
};

/// Assembles a certificate from the method constants; computes the eta
/// bars, E, m_bar, beta and the quadratic-regime count, and validates
/// beta < 1.
Certificate build_certificate(Method method, double kappa, double mu, double L, double alpha,
                              double rho, double eta1, double eta2, double nu_max, double gamma,
                              std::optional<long> m_bar_override = std::nullopt,
                              std::vector<std::string> notes = {});

}  // namespace certmpc
