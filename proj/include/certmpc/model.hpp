#pragma once

#include <Eigen/Dense>
#include <functional>

#include "certmpc/errors.hpp"

namespace certmpc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

struct LtiModelOptions {
    /// Controllability rank test keeps singular values above
    /// rank_tol_scale * sigma_max.
    double rank_tol_scale = 1e-10;
    bool check_controllability = true;
};

/// Discrete-time LTI plant x(t+Ts) = A x(t) + B u(t).
/// Immutable after construction; Ts is metadata only.
class LtiModel {
public:
    LtiModel(Matrix A, Matrix B, double Ts, const LtiModelOptions& opts = {});

    const Matrix& A() const { return A_; }
    const Matrix& B() const { return B_; }
    double Ts() const { return Ts_; }
    Index state_dim() const { return A_.rows(); }
    Index input_dim() const { return B_.cols(); }

private:
    Matrix A_;
    Matrix B_;
    double Ts_;
};

struct DareOptions {
    double tol = 1e-12;
    long max_iter = 1000000;
};

/// Solves the discrete algebraic Riccati equation
///   P = A'PA - (A'PB)(R + B'PB)^{-1}(B'PA) + Q
/// by iterating the backward Riccati recursion from P = Q until the
/// residual Frobenius norm drops below tol.
Matrix solve_dare(const LtiModel& model, const Matrix& Q, const Matrix& R, const DareOptions& opts = {});

/// Frobenius norm of P - (A'PA - A'PB (R+B'PB)^{-1} B'PA + Q).
double dare_residual(const LtiModel& model, const Matrix& Q, const Matrix& R, const Matrix& P);

struct MpcSpecOptions {
    /// Positive-definiteness keeps lambda_min above psd_tol_scale * ||M||.
    double psd_tol_scale = 1e-10;
    /// Accepted DARE residual for a user-supplied terminal penalty.
    double dare_residual_tol = 1e-6;
};

/// Horizon-N linear-quadratic MPC design problem with box input bounds.
/// Q, P, R must be symmetric positive definite; P must solve the DARE.
class MpcSpec {
public:
    MpcSpec(LtiModel model, int horizon, Matrix Q, Matrix R, Matrix P,
            Vector u_lo, Vector u_hi, const MpcSpecOptions& opts = {});

    /// Convenience constructor computing P from the Riccati recursion.
    static MpcSpec with_riccati_terminal(LtiModel model, int horizon, Matrix Q, Matrix R,
                                         Vector u_lo, Vector u_hi, const MpcSpecOptions& opts = {});

    const LtiModel& model() const { return model_; }
    int horizon() const { return horizon_; }
    const Matrix& Q() const { return Q_; }
    const Matrix& R() const { return R_; }
    const Matrix& P() const { return P_; }
    const Vector& u_lo() const { return u_lo_; }
    const Vector& u_hi() const { return u_hi_; }

private:
    LtiModel model_;
    int horizon_;
    Matrix Q_, R_, P_;
    Vector u_lo_, u_hi_;
};

/// Dense QP obtained by eliminating the predicted states:
///   J(u; x0) = 1/2 u'Hu + x0'Su + 1/2 x0'Dx0,  u in [u_lo, u_hi]^N,
/// with H = R~ + Phi' Q~ Phi, S = Psi' Q~ Phi, D = Psi' Q~ Psi and the
/// stacked box written as G u <= w, G = [I; -I].
class CondensedQp {
public:
    explicit CondensedQp(const MpcSpec& spec);

    const Matrix& H() const { return H_; }
    const Matrix& S() const { return S_; }
    const Matrix& D() const { return D_; }
    const Matrix& Phi() const { return Phi_; }
    const Matrix& Psi() const { return Psi_; }
    const Matrix& G() const { return G_; }
    const Vector& w() const { return w_; }
    /// Stage cost matrix Q (the constant k=0 term of the design cost).
    const Matrix& Q() const { return Q_; }
    /// Stacked input bounds over the horizon.
    const Vector& u_lo() const { return u_lo_; }
    const Vector& u_hi() const { return u_hi_; }

    int horizon() const { return horizon_; }
    Index input_dim() const { return n_u_; }
    Index state_dim() const { return Q_.rows(); }
    /// Decision vector length N * n_u.
    Index num_vars() const { return H_.rows(); }

    /// J(u; x0) = 1/2 u'Hu + x0'Su + 1/2 x0'Dx0.
    double cost(const Vector& u, const Vector& x0) const;

    /// grad_u J = Hu + S'x0.
    Vector gradient(const Vector& u, const Vector& x0) const;

    /// ||x||_Q (weighted by the stage cost matrix).
    double state_norm_q(const Vector& x) const;

private:
    int horizon_;
    Index n_u_;
    Matrix H_, S_, D_, Phi_, Psi_, G_, Q_;
    Vector w_, u_lo_, u_hi_;
};

/// Spelling of the condensation step as a free function.
inline CondensedQp condense(const MpcSpec& spec) { return CondensedQp(spec); }

/// Value function in the design-problem scaling:
///   V(x0) = 2 J(u*; x0) + x0'Q x0,
/// where u* is produced by the supplied high-accuracy solver.
double eval_value(const CondensedQp& qp, const Vector& x0,
                  const std::function<Vector(const CondensedQp&, const Vector&)>& solve);

}  // namespace certmpc
