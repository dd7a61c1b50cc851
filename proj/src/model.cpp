#include "certmpc/model.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <sstream>

namespace certmpc {

namespace {

bool is_symmetric(const Matrix& M, double tol) {
    return (M - M.transpose()).cwiseAbs().maxCoeff() <= tol * (1.0 + M.cwiseAbs().maxCoeff());
}

void require_symmetric_pd(const Matrix& M, const char* name, double tol_scale) {
    if (M.rows() != M.cols()) {
        throw DimensionMismatch(std::string(name) + " must be square");
    }
    if (!is_symmetric(M, 1e-12)) {
        throw InvalidSpec(std::string(name) + " must be symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(M);
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().cwiseAbs().maxCoeff();
    if (lo <= tol_scale * std::max(hi, 1.0)) {
        std::ostringstream msg;
        msg << name << " is not positive definite (lambda_min = " << lo << ")";
        throw NotPositiveDefinite(msg.str());
    }
}

Matrix symmetrize(const Matrix& M) { return 0.5 * (M + M.transpose()); }

}  // namespace

LtiModel::LtiModel(Matrix A, Matrix B, double Ts, const LtiModelOptions& opts)
    : A_(std::move(A)), B_(std::move(B)), Ts_(Ts) {
    if (A_.rows() != A_.cols()) throw DimensionMismatch("A must be square");
    if (B_.rows() != A_.rows()) throw DimensionMismatch("B must have as many rows as A");
    if (B_.cols() < 1) throw DimensionMismatch("B must have at least one column");
    if (!(Ts_ > 0.0)) throw InvalidSpec("sampling time must be positive");
    if (!A_.allFinite() || !B_.allFinite()) throw InvalidSpec("A, B must be finite");

    if (opts.check_controllability) {
        const Index n = A_.rows();
        Matrix ctrb(n, n * B_.cols());
        Matrix AkB = B_;
        for (Index k = 0; k < n; ++k) {
            ctrb.middleCols(k * B_.cols(), B_.cols()) = AkB;
            AkB = A_ * AkB;
        }
        Eigen::JacobiSVD<Matrix> svd(ctrb);
        const double smax = svd.singularValues()(0);
        const double smin = svd.singularValues()(svd.singularValues().size() - 1);
        if (svd.rank() < n || smin <= opts.rank_tol_scale * smax) {
            throw InvalidSpec("(A, B) is not controllable (controllability matrix is rank deficient)");
        }
    }
}

double dare_residual(const LtiModel& model, const Matrix& Q, const Matrix& R, const Matrix& P) {
    const Matrix& A = model.A();
    const Matrix& B = model.B();
    const Matrix RB = R + B.transpose() * P * B;
    Eigen::LLT<Matrix> llt(RB);
    if (llt.info() != Eigen::Success) {
        throw NotPositiveDefinite("R + B'PB is not positive definite");
    }
    const Matrix BPA = B.transpose() * P * A;
    const Matrix next = A.transpose() * P * A - BPA.transpose() * llt.solve(BPA) + Q;
    return (P - next).norm();
}

Matrix solve_dare(const LtiModel& model, const Matrix& Q, const Matrix& R, const DareOptions& opts) {
    const Matrix& A = model.A();
    const Matrix& B = model.B();
    if (Q.rows() != A.rows() || Q.cols() != A.cols()) throw DimensionMismatch("Q must be n_x x n_x");
    if (R.rows() != B.cols() || R.cols() != B.cols()) throw DimensionMismatch("R must be n_u x n_u");

    Matrix P = Q;
    for (long it = 0; it < opts.max_iter; ++it) {
        const Matrix RB = R + B.transpose() * P * B;
        Eigen::LLT<Matrix> llt(RB);
        if (llt.info() != Eigen::Success) {
            throw NotPositiveDefinite("DARE iterate lost definiteness in R + B'PB");
        }
        const Matrix BPA = B.transpose() * P * A;
        Matrix next = A.transpose() * P * A - BPA.transpose() * llt.solve(BPA) + Q;
        next = symmetrize(next);
        if (!next.allFinite()) throw NonConvergence("DARE recursion produced non-finite iterate");
        const double residual = (next - P).norm();
        P = next;
        if (residual <= opts.tol) {
            // next is the image of the previous iterate; one more check on it
            if (dare_residual(model, Q, R, P) <= opts.tol * 10.0) return P;
        }
    }
    throw NonConvergence("DARE recursion did not reach tolerance within the iteration cap");
}

MpcSpec::MpcSpec(LtiModel model, int horizon, Matrix Q, Matrix R, Matrix P,
                 Vector u_lo, Vector u_hi, const MpcSpecOptions& opts)
    : model_(std::move(model)),
      horizon_(horizon),
      Q_(std::move(Q)),
      R_(std::move(R)),
      P_(std::move(P)),
      u_lo_(std::move(u_lo)),
      u_hi_(std::move(u_hi)) {
    const Index nx = model_.state_dim();
    const Index nu = model_.input_dim();
    if (horizon_ < 1) throw InvalidSpec("horizon must be >= 1");
    if (Q_.rows() != nx || Q_.cols() != nx) throw DimensionMismatch("Q must be n_x x n_x");
    if (P_.rows() != nx || P_.cols() != nx) throw DimensionMismatch("P must be n_x x n_x");
    if (R_.rows() != nu || R_.cols() != nu) throw DimensionMismatch("R must be n_u x n_u");
    if (u_lo_.size() != nu || u_hi_.size() != nu) throw DimensionMismatch("input bounds must have length n_u");

    require_symmetric_pd(Q_, "Q", opts.psd_tol_scale);
    require_symmetric_pd(R_, "R", opts.psd_tol_scale);
    require_symmetric_pd(P_, "P", opts.psd_tol_scale);
    Q_ = symmetrize(Q_);
    R_ = symmetrize(R_);
    P_ = symmetrize(P_);

    for (Index i = 0; i < nu; ++i) {
        if (!(u_lo_(i) < 0.0 && 0.0 < u_hi_(i))) {
            throw InvalidSpec("input bounds must contain the origin in their strict interior");
        }
    }

    const double res = dare_residual(model_, Q_, R_, P_);
    if (res > opts.dare_residual_tol) {
        std::ostringstream msg;
        msg << "terminal penalty does not satisfy the Riccati equation (residual " << res << ")";
        throw InvalidSpec(msg.str());
    }
}

MpcSpec MpcSpec::with_riccati_terminal(LtiModel model, int horizon, Matrix Q, Matrix R,
                                       Vector u_lo, Vector u_hi, const MpcSpecOptions& opts) {
    Matrix P = solve_dare(model, Q, R);
    return MpcSpec(std::move(model), horizon, std::move(Q), std::move(R), std::move(P),
                   std::move(u_lo), std::move(u_hi), opts);
}

CondensedQp::CondensedQp(const MpcSpec& spec) {
    const LtiModel& model = spec.model();
    const Index nx = model.state_dim();
    const Index nu = model.input_dim();
    const int N = spec.horizon();
    horizon_ = N;
    n_u_ = nu;
    Q_ = spec.Q();
    const Index n = static_cast<Index>(N) * nu;

    // Phi row block k (k = 1..N): [A^{k-1}B, ..., AB, B, 0, ..., 0]
    Phi_ = Matrix::Zero(static_cast<Index>(N) * nx, n);
    Psi_ = Matrix::Zero(static_cast<Index>(N) * nx, nx);
    Matrix Ak = model.A();  // A^k while filling Psi
    for (int k = 1; k <= N; ++k) {
        Psi_.middleRows((k - 1) * nx, nx) = Ak;
        Matrix AjB = model.B();  // A^{k-1-j} B for j = k-1 down to 0
        for (int j = k - 1; j >= 0; --j) {
            Phi_.block((k - 1) * nx, j * nu, nx, nu) = AjB;
            AjB = model.A() * AjB;
        }
        Ak = model.A() * Ak;
    }

    // Q~ = blockdiag(Q, ..., Q, P), R~ = blockdiag(R, ..., R)
    Matrix Qt = Matrix::Zero(static_cast<Index>(N) * nx, static_cast<Index>(N) * nx);
    for (int k = 0; k < N - 1; ++k) Qt.block(k * nx, k * nx, nx, nx) = spec.Q();
    Qt.block((N - 1) * nx, (N - 1) * nx, nx, nx) = spec.P();

    Matrix Rt = Matrix::Zero(n, n);
    for (int k = 0; k < N; ++k) Rt.block(k * nu, k * nu, nu, nu) = spec.R();

    const Matrix QtPhi = Qt * Phi_;
    H_ = Rt + Phi_.transpose() * QtPhi;
    H_ = 0.5 * (H_ + H_.transpose());
    S_ = Psi_.transpose() * QtPhi;
    D_ = Psi_.transpose() * Qt * Psi_;
    D_ = 0.5 * (D_ + D_.transpose());

    u_lo_ = spec.u_lo().replicate(N, 1);
    u_hi_ = spec.u_hi().replicate(N, 1);

    G_ = Matrix::Zero(2 * n, n);
    G_.topRows(n) = Matrix::Identity(n, n);
    G_.bottomRows(n) = -Matrix::Identity(n, n);
    w_ = Vector(2 * n);
    w_.head(n) = u_hi_;
    w_.tail(n) = -u_lo_;
}

double CondensedQp::cost(const Vector& u, const Vector& x0) const {
    if (u.size() != num_vars()) throw DimensionMismatch("u has wrong length");
    if (x0.size() != state_dim()) throw DimensionMismatch("x0 has wrong length");
    return 0.5 * u.dot(H_ * u) + x0.dot(S_ * u) + 0.5 * x0.dot(D_ * x0);
}

Vector CondensedQp::gradient(const Vector& u, const Vector& x0) const {
    if (u.size() != num_vars()) throw DimensionMismatch("u has wrong length");
    if (x0.size() != state_dim()) throw DimensionMismatch("x0 has wrong length");
    return H_ * u + S_.transpose() * x0;
}

double CondensedQp::state_norm_q(const Vector& x) const {
    if (x.size() != state_dim()) throw DimensionMismatch("x has wrong length");
    return std::sqrt(x.dot(Q_ * x));
}

double eval_value(const CondensedQp& qp, const Vector& x0,
                  const std::function<Vector(const CondensedQp&, const Vector&)>& solve) {
    if (!x0.allFinite()) throw InvalidSpec("x0 must be finite");
    const Vector u_star = solve(qp, x0);
    return 2.0 * qp.cost(u_star, x0) + x0.dot(qp.Q() * x0);
}

}  // namespace certmpc
