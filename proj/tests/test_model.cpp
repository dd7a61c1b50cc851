#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>

#include "certmpc/model.hpp"
#include "certmpc/rng.hpp"
#include "certmpc/solvers.hpp"
#include "test_util.hpp"

using namespace certmpc;
using testutil::benchmark_spec;
using testutil::double_integrator;

namespace {

// Evaluates the design cost by rolling the plant forward and summing the
// stage terms; independent of the condensed matrices.
double rollout_cost(const MpcSpec& spec, const Vector& u, const Vector& x0) {
    const Index nu = spec.model().input_dim();
    Vector x = x0;
    double cost = 0.0;
    for (int k = 0; k < spec.horizon(); ++k) {
        const Vector uk = u.segment(k * nu, nu);
        cost += x.dot(spec.Q() * x) + uk.dot(spec.R() * uk);
        x = spec.model().A() * x + spec.model().B() * uk;
    }
    cost += x.dot(spec.P() * x);
    return cost;
}

}  // namespace

TEST_CASE("solve_dare reproduces the benchmark terminal penalty") {
    const LtiModel model = double_integrator();
    const Matrix P = solve_dare(model, Matrix::Identity(2, 2), Matrix::Identity(1, 1));
    CHECK(std::abs(P(0, 0) - 2.367) < 1e-3);
    CHECK(std::abs(P(0, 1) - 1.118) < 1e-3);
    CHECK(std::abs(P(1, 0) - 1.118) < 1e-3);
    CHECK(std::abs(P(1, 1) - 2.588) < 1e-3);
    CHECK(dare_residual(model, Matrix::Identity(2, 2), Matrix::Identity(1, 1), P) < 1e-10);
    CHECK((P - P.transpose()).norm() < 1e-12);
}

TEST_CASE("solve_dare on the damped variant finds a different fixed point") {
    // cross-checked against an independent Riccati solve
    const LtiModel model = testutil::damped_integrator();
    const Matrix P = solve_dare(model, Matrix::Identity(2, 2), Matrix::Identity(1, 1));
    CHECK(P(0, 0) == doctest::Approx(2.182935).epsilon(1e-5));
    CHECK(P(0, 1) == doctest::Approx(1.113919).epsilon(1e-5));
    CHECK(P(1, 1) == doctest::Approx(2.204077).epsilon(1e-5));
    CHECK(dare_residual(model, Matrix::Identity(2, 2), Matrix::Identity(1, 1), P) < 1e-10);
}

TEST_CASE("solve_dare nilpotent case reduces to Q") {
    Matrix A(1, 1), B(1, 1);
    A << 0.0;
    B << 1.0;
    const LtiModel model(A, B, 1.0);
    const Matrix P = solve_dare(model, Matrix::Identity(1, 1), Matrix::Identity(1, 1));
    CHECK(P(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("solve_dare scalar case matches the analytic quadratic root") {
    // a = 0.5, b = q = r = 1: the fixed point solves p^2 - p/4 - 1 = 0
    Matrix A(1, 1), B(1, 1);
    A << 0.5;
    B << 1.0;
    const LtiModel model(A, B, 1.0);
    DareOptions opts;
    opts.tol = 1e-12;
    const Matrix P = solve_dare(model, Matrix::Identity(1, 1), Matrix::Identity(1, 1), opts);
    const double root = (0.25 + std::sqrt(0.0625 + 4.0)) / 2.0;
    CHECK(P(0, 0) == doctest::Approx(root).epsilon(1e-10));
}

TEST_CASE("LtiModel validates shapes and controllability") {
    Matrix A2 = Matrix::Identity(2, 2);
    Matrix Bbad(2, 1);
    Bbad << 1.0, 0.0;
    CHECK_THROWS_AS(LtiModel(Matrix::Ones(2, 3), Bbad, 1.0), DimensionMismatch);
    CHECK_THROWS_AS(LtiModel(A2, Matrix::Ones(3, 1), 1.0), DimensionMismatch);
    CHECK_THROWS_AS(LtiModel(A2, Bbad, 0.0), InvalidSpec);
    // [B, AB] = [[1, 1], [0, 0]] is rank one
    CHECK_THROWS_AS(LtiModel(A2, Bbad, 1.0), InvalidSpec);
    LtiModelOptions skip;
    skip.check_controllability = false;
    CHECK_NOTHROW(LtiModel(A2, Bbad, 1.0, skip));
}

TEST_CASE("MpcSpec validates weights, bounds and the terminal penalty") {
    const LtiModel model = double_integrator();
    const Matrix Q = Matrix::Identity(2, 2);
    const Matrix R = Matrix::Identity(1, 1);
    const Matrix P = solve_dare(model, Q, R);
    Vector lo(1), hi(1);
    lo << -1.0;
    hi << 1.0;

    CHECK_NOTHROW(MpcSpec(model, 10, Q, R, P, lo, hi));
    CHECK_THROWS_AS(MpcSpec(model, 0, Q, R, P, lo, hi), InvalidSpec);
    CHECK_THROWS_AS(MpcSpec(model, 10, -Q, R, P, lo, hi), NotPositiveDefinite);
    CHECK_THROWS_AS(MpcSpec(model, 10, Q, R, Q /* not the DARE solution */, lo, hi), InvalidSpec);

    Vector lo_bad(1);
    lo_bad << 0.5;  // origin outside the box
    CHECK_THROWS_AS(MpcSpec(model, 10, Q, R, P, lo_bad, hi), InvalidSpec);
}

TEST_CASE("condense horizon one gives H = R + B'PB") {
    const MpcSpec spec = benchmark_spec(1);
    const CondensedQp qp(spec);
    REQUIRE(qp.H().rows() == 1);
    CHECK(std::abs(qp.H()(0, 0) - 5.2978) < 1e-3);
    const double direct = (spec.R() + spec.model().B().transpose() * spec.P() * spec.model().B())(0, 0);
    CHECK(qp.H()(0, 0) == doctest::Approx(direct).epsilon(1e-14));
}

TEST_CASE("condense with B = 0 reduces H to the input weight blocks") {
    LtiModelOptions skip;
    skip.check_controllability = false;
    const LtiModel model(0.5 * Matrix::Identity(2, 2), Matrix::Zero(2, 1), 1.0, skip);
    const Matrix Q = Matrix::Identity(2, 2);
    const Matrix R = 3.0 * Matrix::Identity(1, 1);
    const Matrix P = solve_dare(model, Q, R);
    Vector lo(1), hi(1);
    lo << -1.0;
    hi << 1.0;
    const CondensedQp qp(MpcSpec(model, 4, Q, R, P, lo, hi));
    CHECK((qp.H() - 3.0 * Matrix::Identity(4, 4)).norm() < 1e-12);
}

TEST_CASE("condense benchmark horizon ten is symmetric positive definite") {
    const CondensedQp qp(benchmark_spec(10));
    REQUIRE(qp.H().rows() == 10);
    CHECK((qp.H() - qp.H().transpose()).norm() < 1e-10);
    Eigen::SelfAdjointEigenSolver<Matrix> es(qp.H());
    CHECK(es.eigenvalues().minCoeff() >= 1.0 - 1e-9);  // lambda_min(R) = 1
}

TEST_CASE("condensed cost matches the rolled-out design cost") {
    const MpcSpec spec = benchmark_spec(10);
    const CondensedQp qp(spec);
    Rng rng(42);
    for (int trial = 0; trial < 100; ++trial) {
        const Vector u = testutil::random_vector(rng, qp.num_vars(), -2.0, 2.0);
        const Vector x0 = testutil::random_vector(rng, 2, -5.0, 5.0);
        const double direct = rollout_cost(spec, u, x0);
        const double condensed = 2.0 * qp.cost(u, x0) + x0.dot(spec.Q() * x0);
        CHECK(std::abs(condensed - direct) <= 1e-8 * (1.0 + std::abs(direct)));
    }
}

TEST_CASE("condensed cost matches the rollout for a two-input plant") {
    Matrix A(3, 3);
    A << 0.9, 0.2, 0.0, 0.0, 0.8, 0.1, 0.1, 0.0, 0.7;
    Matrix B(3, 2);
    B << 1.0, 0.0, 0.0, 1.0, 0.5, 0.2;
    const LtiModel model(A, B, 0.1);
    const Matrix Q = Matrix::Identity(3, 3);
    const Matrix R = Matrix::Identity(2, 2);
    const Matrix P = solve_dare(model, Q, R);
    Vector lo = Vector::Constant(2, -2.0), hi = Vector::Constant(2, 2.0);
    const MpcSpec spec(model, 5, Q, R, P, lo, hi);
    const CondensedQp qp(spec);
    REQUIRE(qp.num_vars() == 10);
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        const Vector u = testutil::random_vector(rng, 10, -1.0, 1.0);
        const Vector x0 = testutil::random_vector(rng, 3, -2.0, 2.0);
        const double direct = rollout_cost(spec, u, x0);
        const double condensed = 2.0 * qp.cost(u, x0) + x0.dot(spec.Q() * x0);
        CHECK(std::abs(condensed - direct) <= 1e-8 * (1.0 + std::abs(direct)));
    }
}

TEST_CASE("gradient matches central finite differences") {
    const CondensedQp qp(benchmark_spec(10));
    Rng rng(3);
    const Vector u = testutil::random_vector(rng, qp.num_vars(), -1.0, 1.0);
    const Vector x0 = testutil::random_vector(rng, 2, -4.0, 4.0);
    const Vector grad = qp.gradient(u, x0);
    const double h = 1e-5;
    Vector fd(qp.num_vars());
    for (Index i = 0; i < qp.num_vars(); ++i) {
        Vector up = u, um = u;
        up(i) += h;
        um(i) -= h;
        fd(i) = (qp.cost(up, x0) - qp.cost(um, x0)) / (2.0 * h);
    }
    CHECK((fd - grad).norm() <= 1e-6 * (1.0 + grad.norm()));
}

TEST_CASE("gradient vanishes at the unconstrained minimizer") {
    const CondensedQp qp(benchmark_spec(10));
    Vector x0(2);
    x0 << 3.0, -1.5;
    const Vector rhs = qp.S().transpose() * x0;
    const Vector u_star = -Eigen::LLT<Matrix>(qp.H()).solve(rhs);
    CHECK(qp.gradient(u_star, x0).norm() <= 1e-10 * rhs.norm());
}

TEST_CASE("cost and gradient validate dimensions") {
    const CondensedQp qp(benchmark_spec(10));
    CHECK_THROWS_AS(qp.cost(Vector::Zero(3), Vector::Zero(2)), DimensionMismatch);
    CHECK_THROWS_AS(qp.gradient(Vector::Zero(10), Vector::Zero(3)), DimensionMismatch);
    CHECK(qp.cost(Vector::Zero(10), Vector::Zero(2)) == 0.0);
    Vector x0(2);
    x0 << 1.0, 2.0;
    CHECK(qp.cost(Vector::Zero(10), x0) == doctest::Approx(0.5 * x0.dot(qp.D() * x0)));
}

TEST_CASE("value function identity D - S H^{-1} S' + Q = P") {
    const MpcSpec spec = benchmark_spec(10);
    const CondensedQp qp(spec);
    const Matrix closed =
        qp.D() - qp.S() * Eigen::LLT<Matrix>(qp.H()).solve(qp.S().transpose()) + spec.Q();
    CHECK((closed - spec.P()).norm() < 1e-8);
}

TEST_CASE("stacked constraint representation matches the box") {
    const CondensedQp qp(benchmark_spec(4));
    REQUIRE(qp.G().rows() == 8);
    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const Vector u = testutil::random_vector(rng, 4, -2.0, 2.0);
        const bool in_box = (u.array() >= qp.u_lo().array()).all() &&
                            (u.array() <= qp.u_hi().array()).all();
        const bool in_polytope = ((qp.G() * u - qp.w()).array() <= 1e-14).all();
        CHECK(in_box == in_polytope);
    }
}

TEST_CASE("eval_value matches the terminal quadratic in the inactive region") {
    const MpcSpec spec = benchmark_spec(10);
    const CondensedQp qp(spec);
    const OracleSolver oracle(qp);
    const auto solve = [&oracle](const CondensedQp&, const Vector& x) { return oracle.solve(x); };

    CHECK(eval_value(qp, Vector::Zero(2), solve) == 0.0);

    Vector x0(2);
    x0 << 0.08, -0.05;
    const Vector u_star = oracle.solve(x0);
    REQUIRE((u_star.array().abs() < 1.0 - 1e-9).all());  // no active constraint
    const double v = eval_value(qp, x0, solve);
    const double quad = x0.dot(spec.P() * x0);
    CHECK(std::abs(v - quad) <= 1e-6 * std::abs(quad));
}

TEST_CASE("eval_value descends along an optimal closed-loop step") {
    const MpcSpec spec = benchmark_spec(10);
    const CondensedQp qp(spec);
    const OracleSolver oracle(qp);
    const auto solve = [&oracle](const CondensedQp&, const Vector& x) { return oracle.solve(x); };

    Vector x0(2);
    x0 << -6.0, 2.0;
    const Vector u_star = oracle.solve(x0);
    const Vector x1 = spec.model().A() * x0 + spec.model().B() * u_star.head(1);
    CHECK(eval_value(qp, x1, solve) <=
          eval_value(qp, x0, solve) - x0.dot(spec.Q() * x0) + 1e-6);
}

TEST_CASE("solve_dare reports non-convergence under a tiny iteration cap") {
    DareOptions opts;
    opts.tol = 1e-14;
    opts.max_iter = 2;
    CHECK_THROWS_AS(
        solve_dare(double_integrator(), Matrix::Identity(2, 2), Matrix::Identity(1, 1), opts),
        NonConvergence);
}
