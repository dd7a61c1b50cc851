#include "certmpc/certify.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

#include "certmpc/rng.hpp"

namespace certmpc {

const char* method_name(Method m) { return m == Method::Pgdm ? "PGDM" : "ADMM"; }

SpectralBounds kappa_pgdm(const CondensedQp& qp) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(qp.H());
    const double mu = es.eigenvalues().minCoeff();
    const double L = es.eigenvalues().maxCoeff();
    if (mu <= 0.0) throw NotPositiveDefinite("kappa_pgdm: H is not positive definite");
    return SpectralBounds{mu, L, 1.0 - mu / L};
}

SpectralBounds kappa_pgdm_from(double mu, double L) {
    if (!(mu > 0.0) || !(L > 0.0) || mu > L) throw InvalidSpec("kappa_pgdm: need 0 < mu <= L");
    return SpectralBounds{mu, L, 1.0 - mu / L};
}

double kappa_admm(const CondensedQp& qp, double rho) {
    if (!(rho > 0.0)) throw InvalidSpec("kappa_admm: rho must be positive");
    const Index m = qp.G().rows();
    Eigen::LLT<Matrix> llt(qp.H());
    if (llt.info() != Eigen::Success) throw FactorizationFailure("kappa_admm: H not factorizable");
    const Matrix Gt = rho * qp.G() * llt.solve(qp.G().transpose());
    Eigen::LLT<Matrix> lltI(Matrix::Identity(m, m) + Gt);
    if (lltI.info() != Eigen::Success) throw SingularSystem("kappa_admm: I + G~ not invertible");
    const Matrix M = Gt - Gt * lltI.solve(Gt);
    Eigen::JacobiSVD<Matrix> svd(2.0 * M - Matrix::Identity(m, m));
    return 0.5 * svd.singularValues()(0);
}

double kappa_admm_dual(const CondensedQp& qp, double rho) {
    if (!(rho > 0.0)) throw InvalidSpec("kappa_admm_dual: rho must be positive");
    Eigen::SelfAdjointEigenSolver<Matrix> es(qp.H());
    double worst = 0.0;
    for (Index i = 0; i < es.eigenvalues().size(); ++i) {
        const double lam = es.eigenvalues()(i);
        worst = std::max(worst, std::abs(lam - rho) / (lam + rho));
    }
    return worst;
}

EtaBars eta_bars(double eta1, double eta2, const LtiModel& model) {
    if (eta1 < 0.0) throw InvalidSpec("eta1 must be >= 0");
    if (!(eta2 > 0.0)) throw InvalidSpec("eta2 must be > 0");
    Eigen::SelfAdjointEigenSolver<Matrix> es(model.B().transpose() * model.B());
    const double nu = es.eigenvalues().maxCoeff();
    return EtaBars{eta1 * std::sqrt(nu), 0.5 * eta2 * nu, nu};
}

GammaEstimate estimate_gamma(const CondensedQp& qp, const std::vector<Vector>& samples,
                             const OracleSolver& oracle, double safety_factor) {
    if (samples.empty()) throw EmptySampleSet("estimate_gamma: sample set is empty");
    GammaEstimate out{0.0, 0.0, Vector()};
    for (const Vector& x0 : samples) {
        const double nq = qp.state_norm_q(x0);
        if (nq <= 0.0) throw InvalidSpec("estimate_gamma: sample with ||x0||_Q = 0");
        const double ratio = oracle.solve(x0).norm() / nq;
        if (ratio > out.max_ratio) {
            out.max_ratio = ratio;
            out.argmax_x0 = x0;
        }
    }
    out.gamma = safety_factor * out.max_ratio;
    return out;
}

MBarResult compute_m_bar(double kappa, double eta1_bar, double eta2_bar, double gamma) {
    if (kappa >= 1.0) throw KappaNotContractive("compute_m_bar: kappa must be < 1");
    if (kappa < 0.0) throw InvalidSpec("compute_m_bar: kappa must be >= 0");
    if (eta1_bar < 0.0 || !(eta2_bar > 0.0) || !(gamma > 0.0)) {
        throw InvalidSpec("compute_m_bar: need eta1_bar >= 0, eta2_bar > 0, gamma > 0");
    }
    const double E = 2.0 * eta1_bar * gamma + 2.0 * eta2_bar * gamma * gamma;
    MBarResult res;
    res.E = E;
    if (kappa == 0.0) {
        res.threshold = 0.0;
        res.m_bar = 1;
        res.beta = 0.0;
        return res;
    }
    res.threshold = std::log(E) / std::log(1.0 / kappa);
    res.m_bar = std::max<long>(1, static_cast<long>(std::floor(res.threshold)) + 1);
    res.beta = E * std::pow(kappa, static_cast<double>(res.m_bar));
    if (!(res.beta < 1.0)) {
        std::ostringstream msg;
        msg << "compute_m_bar: beta = " << res.beta << " >= 1";
        throw KappaNotContractive(msg.str());
    }
    return res;
}

long compute_m_bar_quadratic(double kappa, double eta2_bar, double gamma) {
    if (kappa >= 1.0) throw KappaNotContractive("compute_m_bar_quadratic: kappa must be < 1");
    if (kappa < 0.0) throw InvalidSpec("compute_m_bar_quadratic: kappa must be >= 0");
    if (!(eta2_bar > 0.0) || !(gamma > 0.0)) {
        throw InvalidSpec("compute_m_bar_quadratic: need eta2_bar > 0, gamma > 0");
    }
    long m_q = 1;
    if (kappa > 0.0) {
        const double E2 = 2.0 * eta2_bar * gamma * gamma;
        const double threshold = std::log(E2) / (2.0 * std::log(1.0 / kappa));
        m_q = std::max<long>(1, static_cast<long>(std::floor(threshold)) + 1);
    }
    // proof's final inequality: the quadratic-regime count never exceeds the
    // full count, already with eta1_bar = 0
    const long m_full = compute_m_bar(kappa, 0.0, eta2_bar, gamma).m_bar;
    if (m_q > m_full) throw Error("compute_m_bar_quadratic: proof inequality violated");
    return m_q;
}

BallCheckReport check_assumption_ball(const CondensedQp& qp, const OracleSolver& oracle,
                                      int n_samples, std::uint64_t seed, double active_tol) {
    if (n_samples <= 0) throw EmptySampleSet("check_assumption_ball: n_samples must be >= 1");
    const Index nx = qp.state_dim();
    Eigen::SelfAdjointEigenSolver<Matrix> es(qp.Q());
    const Matrix q_inv_sqrt = es.operatorInverseSqrt();

    Rng rng(seed);
    BallCheckReport report{true, std::numeric_limits<double>::infinity(), Vector(), n_samples};
    for (int s = 0; s < n_samples; ++s) {
        Vector d(nx);
        do {
            for (Index i = 0; i < nx; ++i) d(i) = rng.gaussian();
        } while (d.norm() < 1e-12);
        const Vector x0 = q_inv_sqrt * (d / d.norm());  // ||x0||_Q = 1
        const Vector u = oracle.solve(x0);
        double margin = std::numeric_limits<double>::infinity();
        for (Index i = 0; i < u.size(); ++i) {
            margin = std::min(margin, std::min(u(i) - qp.u_lo()(i), qp.u_hi()(i) - u(i)));
        }
        if (margin < report.worst_margin) {
            report.worst_margin = margin;
            report.worst_x0 = x0;
        }
    }
    report.pass = report.worst_margin > active_tol;
    return report;
}

EtaFit estimate_eta(const CondensedQp& qp, const OracleSolver& oracle, double nu_max,
                    double gamma, int n_pairs, double radius, std::uint64_t seed) {
    if (n_pairs <= 0) throw EmptySampleSet("estimate_eta: n_pairs must be >= 1");
    if (!(radius > 0.0)) throw InvalidSpec("estimate_eta: radius must be positive");
    const Index nx = qp.state_dim();
    Eigen::SelfAdjointEigenSolver<Matrix> es(qp.Q());
    const Matrix q_inv_sqrt = es.operatorInverseSqrt();

    Rng rng(seed);
    auto draw_state = [&]() {
        Vector d(nx);
        for (Index i = 0; i < nx; ++i) d(i) = rng.gaussian();
        const double norm = d.norm();
        if (norm < 1e-12) return Vector(Vector::Zero(nx));
        const double r = radius * std::pow(rng.uniform(), 1.0 / static_cast<double>(nx));
        return Vector(q_inv_sqrt * (d * (r / norm)));
    };

    std::vector<double> a(n_pairs), b(n_pairs), c(n_pairs);
    for (int i = 0; i < n_pairs; ++i) {
        const Vector x1 = draw_state();
        const Vector x2 = draw_state();
        const double dist = (x1 - x2).norm();
        a[i] = dist;
        b[i] = 0.5 * dist * dist;
        c[i] = std::abs(oracle.value(x1) - oracle.value(x2));
        if (a[i] < 1e-12) a[i] = 1e-12;
    }

    double eta2_max = 0.0;
    for (int i = 0; i < n_pairs; ++i) {
        if (b[i] > 1e-12) eta2_max = std::max(eta2_max, c[i] / b[i]);
    }
    if (eta2_max <= 0.0) eta2_max = 1.0;

    // frontier: eta1(eta2) = max_i (c_i - eta2 b_i)_+ / a_i; scan the convex
    // objective 2 eta1 sqrt(nu) gamma + eta2 nu gamma^2 over eta2
    auto eta1_of = [&](double eta2) {
        double e1 = 0.0;
        for (int i = 0; i < n_pairs; ++i) e1 = std::max(e1, (c[i] - eta2 * b[i]) / a[i]);
        return std::max(e1, 0.0);
    };
    auto objective = [&](double eta2) {
        return 2.0 * eta1_of(eta2) * std::sqrt(nu_max) * gamma + eta2 * nu_max * gamma * gamma;
    };

    double best_eta2 = 0.0, best_obj = objective(0.0);
    const int coarse = 400;
    for (int k = 1; k <= coarse; ++k) {
        const double e2 = eta2_max * static_cast<double>(k) / coarse;
        const double obj = objective(e2);
        if (obj < best_obj) {
            best_obj = obj;
            best_eta2 = e2;
        }
    }
    double lo = std::max(0.0, best_eta2 - eta2_max / coarse);
    double hi = std::min(eta2_max, best_eta2 + eta2_max / coarse);
    for (int it = 0; it < 60; ++it) {
        const double m1 = lo + (hi - lo) / 3.0;
        const double m2 = hi - (hi - lo) / 3.0;
        if (objective(m1) <= objective(m2)) hi = m2; else lo = m1;
    }
    const double eta2 = 0.5 * (lo + hi);
    const double eta1 = eta1_of(eta2);

    double slack = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n_pairs; ++i) slack = std::min(slack, eta1 * a[i] + eta2 * b[i] - c[i]);
    return EtaFit{std::max(eta1, 0.0), std::max(eta2, 1e-12), -slack};
}

double Certificate::beta_at(long m) const { return E * std::pow(kappa, static_cast<double>(m)); }

namespace {
// shortest representation that round-trips
std::string fmt(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}
}  // namespace

std::string Certificate::report() const {
    std::ostringstream os;
    os << "[certificate " << (method == Method::Pgdm ? "pgdm" : "admm") << "]\n";
    os << "method = " << method_name(method) << "\n";
    os << "kappa = " << fmt(kappa) << "\n";
    os << "mu = " << fmt(mu) << "\n";
    os << "L = " << fmt(L) << "\n";
    if (method == Method::Pgdm) os << "alpha = " << fmt(alpha) << "\n";
    if (method == Method::Admm) os << "rho = " << fmt(rho) << "\n";
    os << "eta1 = " << fmt(eta1) << "\n";
    os << "eta2 = " << fmt(eta2) << "\n";
    os << "eta1_bar = " << fmt(eta1_bar) << "\n";
    os << "eta2_bar = " << fmt(eta2_bar) << "\n";
    os << "nu_max = " << fmt(nu_max) << "\n";
    os << "gamma = " << fmt(gamma) << "\n";
    os << "E = " << fmt(E) << "\n";
    os << "threshold = " << fmt(threshold) << "\n";
    os << "m_bar = " << m_bar << "\n";
    os << "beta = " << fmt(beta) << "\n";
    os << "m_bar_quadratic = " << m_bar_quadratic << "\n";
    if (m_bar_override) {
        os << "m_bar_override = " << *m_bar_override << "\n";
        os << "beta_at_override = " << fmt(beta_at(*m_bar_override)) << "\n";
    }
    os << "m_bar_effective = " << effective_m_bar() << "\n";
    for (const std::string& note : notes) os << "note = " << note << "\n";
    return os.str();
}

Certificate build_certificate(Method method, double kappa, double mu, double L, double alpha,
                              double rho, double eta1, double eta2, double nu_max, double gamma,
                              std::optional<long> m_bar_override, std::vector<std::string> notes) {
    Certificate cert;
    cert.method = method;
    cert.kappa = kappa;
    cert.mu = mu;
    cert.L = L;
    cert.alpha = alpha;
    cert.rho = rho;
    cert.eta1 = eta1;
    cert.eta2 = eta2;
    cert.nu_max = nu_max;
    cert.eta1_bar = eta1 * std::sqrt(nu_max);
    cert.eta2_bar = 0.5 * eta2 * nu_max;
    cert.gamma = gamma;
    const MBarResult res = compute_m_bar(kappa, cert.eta1_bar, cert.eta2_bar, gamma);
    cert.E = res.E;
    cert.threshold = res.threshold;
    cert.m_bar = res.m_bar;
    cert.beta = res.beta;
    cert.m_bar_quadratic = compute_m_bar_quadratic(kappa, cert.eta2_bar, gamma);
    cert.m_bar_override = m_bar_override;
    cert.notes = std::move(notes);
    if (m_bar_override) {
        std::ostringstream note;
        note << "m_bar overridden to " << *m_bar_override << " (formula value " << cert.m_bar
             << ", beta at override " << cert.beta_at(*m_bar_override) << ")";
        cert.notes.push_back(note.str());
    }
    return cert;
}

}  // namespace certmpc
