#pragma once

// Local stability of the proposed law around an interior equilibrium.
//
// On an interior point the congested-link set B is locally constant, the
// window equation linearizes to D J_x + X A_B J_q = I with A_B^T J_x = 0, and
// V(w) = 1/2 sum f_i(w)^2 decreases along the flow whenever the diagonal
// matrix Q below is positive definite.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tvcn/common.hpp"
#include "tvcn/control.hpp"
#include "tvcn/dense.hpp"
#include "tvcn/fluid.hpp"

namespace tvcn {

/// Users-by-congested-links 0/1 matrix A_B.
inline Matrix congested_submatrix(const FluidProblem& p, std::span<const std::size_t> congested) {
    Matrix a(p.user_count(), congested.size());
    for (std::size_t i = 0; i < p.user_count(); ++i)
        for (std::size_t k = 0; k < congested.size(); ++k)
            if (std::find(p.users[i].links.begin(), p.users[i].links.end(), congested[k]) !=
                p.users[i].links.end())
                a(i, k) = 1.0;
    return a;
}

namespace detail {

inline void check_diagonal_inputs(const Matrix& a_b, std::span<const double> x,
                                  std::span<const double> D) {
    if (x.size() != a_b.rows() || D.size() != a_b.rows())
        throw ShapeError("Jacobian inputs: user dimensions disagree");
    for (double d : D)
        if (!(d > 0.0)) throw DegenerateDelay("Jacobian needs positive total delays");
}

inline std::string combination(std::span<const std::size_t> ids, std::size_t pivot) {
    std::string s = "{";
    for (std::size_t k = 0; k < ids.size(); ++k) s += (k ? "," : "") + std::to_string(ids[k]);
    s += "}";
    if (pivot < ids.size()) s += " (pivot at link " + std::to_string(ids[pivot]) + ")";
    return s;
}

// LU of A_B^T X D^-1 A_B, reporting the congested links when it is singular.
inline LuFactorization inner_factor(const Matrix& a_b, std::span<const double> x,
                                    std::span<const double> D,
                                    std::span<const std::size_t> link_ids) {
    std::vector<double> xd(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) xd[i] = x[i] / D[i];
    const Matrix inner = a_b.transpose() * a_b.scale_rows(xd);
    try {
        return LuFactorization(inner);
    } catch (const SingularMatrix& e) {
        std::vector<std::size_t> ids(link_ids.begin(), link_ids.end());
        if (ids.size() != a_b.cols()) {
            ids.resize(a_b.cols());
            for (std::size_t k = 0; k < ids.size(); ++k) ids[k] = k;
        }
        throw SingularMatrix("congested links " + combination(ids, e.pivot_index) +
                                 " make A_B^T X D^-1 A_B singular",
                             e.pivot_index);
    }
}

inline std::vector<double> reciprocal(std::span<const double> v) {
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) r[i] = 1.0 / v[i];
    return r;
}

}  // namespace detail

/// J_q = (A_B^T D^-1 X A_B)^-1 A_B^T D^-1, a |B| x users matrix.
inline Matrix jacobian_q(const Matrix& a_b, std::span<const double> x, std::span<const double> D,
                         std::span<const std::size_t> link_ids = {}) {
    detail::check_diagonal_inputs(a_b, x, D);
    if (a_b.cols() == 0) return Matrix(0, a_b.rows());
    const auto lu = detail::inner_factor(a_b, x, D, link_ids);
    return lu.solve(a_b.transpose().scale_cols(detail::reciprocal(D)));
}

/// J_x = D^-1 (I - X A_B (A_B^T X D^-1 A_B)^-1 A_B^T D^-1).
inline Matrix jacobian_x(const Matrix& a_b, std::span<const double> x, std::span<const double> D,
                         std::span<const std::size_t> link_ids = {}) {
    detail::check_diagonal_inputs(a_b, x, D);
    const std::size_t n = a_b.rows();
    Matrix inside = Matrix::identity(n);
    if (a_b.cols() > 0) inside = inside - a_b.scale_rows(x) * jacobian_q(a_b, x, D, link_ids);
    return inside.scale_rows(detail::reciprocal(D));
}

/// J_f = (d_trans + U') D^-2 A_B (A_B^T X D^-1 A_B)^-1 A_B^T D^-1, holding
/// d_trans and U' fixed at the equilibrium values.
inline Matrix jacobian_f(const Matrix& a_b, std::span<const double> x, std::span<const double> D,
                         std::span<const double> d_trans, std::span<const double> u_prime,
                         std::span<const std::size_t> link_ids = {}) {
    detail::check_diagonal_inputs(a_b, x, D);
    const std::size_t n = a_b.rows();
    if (d_trans.size() != n || u_prime.size() != n)
        throw ShapeError("jacobian_f: user dimensions disagree");
    if (a_b.cols() == 0) return Matrix(n, n);
    std::vector<double> pre(n);
    for (std::size_t i = 0; i < n; ++i) pre[i] = (d_trans[i] + u_prime[i]) / (D[i] * D[i]);
    return (a_b * jacobian_q(a_b, x, D, link_ids)).scale_rows(pre);
}

/// max |(D J_x + X A_B J_q - I)_{ij}|; zero up to rounding on interior points.
inline double window_identity_residual(const Matrix& a_b, std::span<const double> x,
                                       std::span<const double> D, const Matrix& j_x,
                                       const Matrix& j_q) {
    Matrix lhs = j_x.scale_rows(D);
    if (a_b.cols() > 0) lhs = lhs + a_b.scale_rows(x) * j_q;
    return (lhs - Matrix::identity(a_b.rows())).max_abs();
}

/// Q = (d_trans + U') D^-2 X^-1 d_trans D^-1, all factors diagonal.
inline Matrix q_matrix(std::span<const double> d_trans, std::span<const double> u_prime,
                       std::span<const double> D, std::span<const double> x) {
    const std::size_t n = x.size();
    if (d_trans.size() != n || u_prime.size() != n || D.size() != n)
        throw ShapeError("q_matrix: input lengths differ");
    Matrix q(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        if (x[i] == 0.0) throw SingularRate("q_matrix: rate of user " + std::to_string(i) + " is zero");
        if (!(D[i] > 0.0)) throw DegenerateDelay("q_matrix: non-positive total delay");
        q(i, i) = (d_trans[i] + u_prime[i]) / (D[i] * D[i]) / x[i] * d_trans[i] / D[i];
    }
    return q;
}

struct DefinitenessResult {
    bool positive_definite = false;
    std::vector<double> eigenvalues;
};

/// Eigenvalues of a symmetric (or diagonal) matrix and whether all are > 0.
/// For diagonal input the eigenvalues are the diagonal, in order.
inline DefinitenessResult is_positive_definite(const Matrix& q) {
    if (q.rows() != q.cols())
        throw ShapeError("is_positive_definite: " + std::to_string(q.rows()) + "x" +
                         std::to_string(q.cols()) + " is not square");
    DefinitenessResult r;
    if (is_diagonal(q)) {
        for (std::size_t i = 0; i < q.rows(); ++i) r.eigenvalues.push_back(q(i, i));
    } else {
        const double scale = std::max(q.max_abs(), 1.0);
        for (std::size_t i = 0; i < q.rows(); ++i)
            for (std::size_t j = i + 1; j < q.cols(); ++j)
                if (std::abs(q(i, j) - q(j, i)) > 1e-12 * scale)
                    throw ShapeError("is_positive_definite: matrix is not symmetric");
        r.eigenvalues = symmetric_eigenvalues(q);
    }
    r.positive_definite = !r.eigenvalues.empty() &&
                          std::all_of(r.eigenvalues.begin(), r.eigenvalues.end(),
                                      [](double v) { return v > 0.0; });
    return r;
}

// ---------------------------------------------------------------------------
// Central-difference Jacobian.

/// Column j uses step eps * max(1, |w_j|).
template <class F>
Matrix fd_jacobian(F&& f, std::span<const double> w, double eps = 1e-6) {
    std::vector<double> probe(w.begin(), w.end());
    const std::vector<double> base = f(std::span<const double>(probe));
    Matrix j(base.size(), w.size());
    for (std::size_t c = 0; c < w.size(); ++c) {
        const double h = eps * std::max(1.0, std::abs(w[c]));
        probe[c] = w[c] + h;
        const std::vector<double> up = f(std::span<const double>(probe));
        probe[c] = w[c] - h;
        const std::vector<double> down = f(std::span<const double>(probe));
        probe[c] = w[c];
        if (up.size() != base.size() || down.size() != base.size())
            throw ShapeError("fd_jacobian: output length changed inside the stencil");
        for (std::size_t r = 0; r < base.size(); ++r) j(r, c) = (up[r] - down[r]) / (2.0 * h);
    }
    return j;
}

/// As above, but `regime(w)` labels the piece of a piecewise-smooth map (for
/// the fluid model: its congested-link set). A label change anywhere in the
/// stencil throws BoundaryCrossing instead of returning a meaningless slope.
template <class F, class R>
Matrix fd_jacobian(F&& f, R&& regime, std::span<const double> w, double eps = 1e-6) {
    const auto base_regime = regime(w);
    std::vector<double> probe(w.begin(), w.end());
    for (std::size_t c = 0; c < w.size(); ++c) {
        const double h = eps * std::max(1.0, std::abs(w[c]));
        for (double sign : {1.0, -1.0}) {
            probe[c] = w[c] + sign * h;
            if (regime(std::span<const double>(probe)) != base_regime)
                throw BoundaryCrossing("regime changes within the stencil of column " +
                                           std::to_string(c),
                                       c);
        }
        probe[c] = w[c];
    }
    return fd_jacobian(std::forward<F>(f), w, eps);
}

/// max |A - B| / max(max |B|, floor).
inline double relative_error(const Matrix& approx, const Matrix& exact, double floor = 1e-300) {
    if (approx.rows() != exact.rows() || approx.cols() != exact.cols())
        throw ShapeError("relative_error: shape mismatch");
    return (approx - exact).max_abs() / std::max(exact.max_abs(), floor);
}

// ---------------------------------------------------------------------------

struct StabilityReport {
    double V = 0.0;
    std::vector<double> f;
    std::vector<std::size_t> congested;
    Matrix J_x;
    Matrix J_q;
    Matrix J_f;
    Matrix Q;
    std::vector<double> eigenvalues;
    bool positive_definite = false;
    double window_identity_residual = 0.0;
    double dVdt_q_form = 0.0;      // -kappa f^T Q f
    double dVdt_jacobian = 0.0;    // -kappa f^T J_f diag(d_trans / D) f
    std::optional<double> fd_max_rel_error;
    bool boundary_flag = false;
    std::string note;
};

struct StabilityOptions {
    double kappa = 0.1;
    bool finite_difference_check = true;
    double fd_epsilon = 1e-6;
    double saturation_tol = 1e-6;
};

/// Windows -> rates through the solver with d_trans frozen, as the linearization assumes.
inline std::function<std::vector<double>(std::span<const double>)> frozen_rate_map(
    const FluidProblem& p, std::span<const double> d_trans) {
    FluidOptions opt;
    opt.model = DelayModel::Frozen;
    opt.frozen_transmission.assign(d_trans.begin(), d_trans.end());
    opt.tol = 1e-11;
    return [p, opt](std::span<const double> w) { return solve_fluid(p, w, opt).x; };
}

inline std::function<std::vector<std::size_t>(std::span<const double>)> frozen_regime_map(
    const FluidProblem& p, std::span<const double> d_trans, double saturation_tol) {
    FluidOptions opt;
    opt.model = DelayModel::Frozen;
    opt.frozen_transmission.assign(d_trans.begin(), d_trans.end());
    opt.tol = 1e-11;
    return [p, opt, saturation_tol](std::span<const double> w) {
        return bottleneck_set(p, solve_fluid(p, w, opt), saturation_tol);
    };
}

/// Assembles the Lyapunov quantities at the equilibrium `fluid` of `windows`.
inline StabilityReport build_stability_report(const FluidProblem& p, const FluidSolution& fluid,
                                              std::span<const double> windows,
                                              std::span<const UtilityParams> utilities,
                                              const StabilityOptions& opt = {}) {
    const std::size_t n = p.user_count();
    StabilityReport r;
    std::vector<double> u_prime(n);
    r.f.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        u_prime[i] = utility_prime(fluid.x[i], utilities[i]);
        r.f[i] = backlog(windows[i], fluid.x[i], fluid.d_trans[i], fluid.x[i] * u_prime[i]) /
                 windows[i];
    }
    r.V = lyapunov(r.f);
    r.congested = bottleneck_set(p, fluid, opt.saturation_tol);
    const Matrix a_b = congested_submatrix(p, r.congested);
    try {
        r.J_q = jacobian_q(a_b, fluid.x, fluid.D, r.congested);
        r.J_x = jacobian_x(a_b, fluid.x, fluid.D, r.congested);
        r.J_f = jacobian_f(a_b, fluid.x, fluid.D, fluid.d_trans, u_prime, r.congested);
        r.window_identity_residual = window_identity_residual(a_b, fluid.x, fluid.D, r.J_x, r.J_q);
        std::vector<double> damp(n);
        for (std::size_t i = 0; i < n; ++i) damp[i] = fluid.d_trans[i] / fluid.D[i] * r.f[i];
        const auto jf_damp = r.J_f.apply(damp);
        for (std::size_t i = 0; i < n; ++i) r.dVdt_jacobian -= opt.kappa * r.f[i] * jf_damp[i];
    } catch (const SingularMatrix& e) {
        r.note = e.what();
    }
    r.Q = q_matrix(fluid.d_trans, u_prime, fluid.D, fluid.x);
    const auto pd = is_positive_definite(r.Q);
    r.eigenvalues = pd.eigenvalues;
    r.positive_definite = pd.positive_definite;
    const auto qf = r.Q.apply(r.f);
    for (std::size_t i = 0; i < n; ++i) r.dVdt_q_form -= opt.kappa * r.f[i] * qf[i];

    if (opt.finite_difference_check && r.note.empty()) {
        try {
            const Matrix fd = fd_jacobian(frozen_rate_map(p, fluid.d_trans),
                                          frozen_regime_map(p, fluid.d_trans, opt.saturation_tol),
                                          windows, opt.fd_epsilon);
            r.fd_max_rel_error = relative_error(fd, r.J_x);
        } catch (const BoundaryCrossing& e) {
            r.boundary_flag = true;
            r.note = e.what();
        } catch (const SolverDivergence& e) {
            r.note = e.what();
        }
    }
    return r;
}

inline nlohmann::json matrix_to_json(const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const auto row = m.row(r);
        rows.push_back(std::vector<double>(row.begin(), row.end()));
    }
    return rows;
}

inline nlohmann::json stability_to_json(const StabilityReport& r, bool dump_matrices) {
    nlohmann::json j = {
        {"V", r.V},
        {"f", r.f},
        {"congested_links", r.congested},
        {"eigenvalues", r.eigenvalues},
        {"positive_definite", r.positive_definite},
        {"window_identity_residual", r.window_identity_residual},
        {"dVdt_q_form", r.dVdt_q_form},
        {"dVdt_jacobian", r.dVdt_jacobian},
        {"fd_max_rel_error", r.fd_max_rel_error ? nlohmann::json(*r.fd_max_rel_error)
                                                : nlohmann::json(nullptr)},
        {"boundary_flag", r.boundary_flag},
        {"note", r.note},
    };
    if (dump_matrices) {
        j["J_x"] = matrix_to_json(r.J_x);
        j["J_q"] = matrix_to_json(r.J_q);
        j["J_f"] = matrix_to_json(r.J_f);
        j["Q"] = matrix_to_json(r.Q);
    }
    return j;
}

}  // namespace tvcn
