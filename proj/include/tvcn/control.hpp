#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tvcn/common.hpp"
#include "tvcn/fluid.hpp"

namespace tvcn {

// ---------------------------------------------------------------------------
// Utility U(x) = a ln(x + b), increasing and concave.

struct UtilityParams {
    double a = 1.0;
    double b = 0.5;

    void validate() const {
        if (!(a > 0.0)) throw InvalidParameter("utility scale a must be positive");
        if (!(b >= 0.0 && b <= 1.0)) throw InvalidParameter("utility offset b must lie in [0,1]");
    }
};

inline void check_utility_domain(double x, const UtilityParams& u) {
    if (!(x + u.b > 0.0))
        throw DomainError("utility undefined at x + b = " + std::to_string(x + u.b));
}

inline double utility(double x, const UtilityParams& u) {
    check_utility_domain(x, u);
    return u.a * std::log(x + u.b);
}

inline double utility_prime(double x, const UtilityParams& u) {
    check_utility_domain(x, u);
    return u.a / (x + u.b);
}

inline double utility_double_prime(double x, const UtilityParams& u) {
    check_utility_domain(x, u);
    return -u.a / ((x + u.b) * (x + u.b));
}

/// p = x U'(x).
inline double willingness_to_pay(double x, const UtilityParams& u) {
    if (x < 0.0) throw DomainError("willingness to pay needs x >= 0");
    if (x == 0.0) return 0.0;
    return x * utility_prime(x, u);
}

/// U'(x) + x U''(x), simplified to a b / (x + b)^2 so that it is exactly zero
/// for b = 0.
inline double la_dynamic_term(double x, const UtilityParams& u) {
    check_utility_domain(x, u);
    return u.a * u.b / ((x + u.b) * (x + u.b));
}

// ---------------------------------------------------------------------------
// Window-update laws, one explicit Euler step each.

enum class Scheme { Proposed, Mo, La, LaWD };

inline std::string_view to_string(Scheme s) {
    switch (s) {
        case Scheme::Proposed: return "Proposed";
        case Scheme::Mo: return "Mo";
        case Scheme::La: return "La";
        case Scheme::LaWD: return "LaWD";
    }
    return "?";
}

inline Scheme parse_scheme(std::string_view name) {
    for (Scheme s : {Scheme::Proposed, Scheme::Mo, Scheme::La, Scheme::LaWD}) {
        std::string lower(to_string(s));
        std::string in(name);
        std::transform(lower.begin(), lower.end(), lower.begin(), ::tolower);
        std::transform(in.begin(), in.end(), in.begin(), ::tolower);
        if (lower == in) return s;
    }
    throw InvalidParameter("unknown scheme '" + std::string(name) +
                           "' (expected Proposed, Mo, La or LaWD)");
}

inline constexpr double kWindowFloor = 1e-6;

struct StepResult {
    std::vector<double> w;        // updated windows
    std::vector<double> backlog;  // s_i at the pre-step windows
    std::vector<double> f_w;      // s_i / w_i
    std::vector<double> gain;     // per-user delay factor multiplying f_w
    std::size_t floor_hits = 0;
};

namespace detail {

inline void check_delay(const FluidSolution& fluid, std::size_t i) {
    if (!(fluid.D[i] > 0.0))
        throw DegenerateDelay("total delay of user " + std::to_string(i) + " is " +
                              std::to_string(fluid.D[i]));
}

inline double clamp_window(double w, double w_min, std::size_t& hits) {
    if (w < w_min) {
        ++hits;
        return w_min;
    }
    return w;
}

inline void check_gain(double gain, double h) {
    if (!(gain > 0.0)) throw InvalidParameter("controller gain must be positive");
    if (!(h > 0.0)) throw InvalidParameter("step size must be positive");
}

}  // namespace detail

/// dw/dt = -kappa (d_trans / D) (w - x d_trans - x U'(x)) / w.
inline StepResult step_proposed(std::span<const double> w, const FluidSolution& fluid,
                                std::span<const UtilityParams> utilities, double kappa, double h,
                                double w_min = kWindowFloor) {
    detail::check_gain(kappa, h);
    StepResult r;
    const std::size_t n = w.size();
    r.w.resize(n);
    r.backlog.resize(n);
    r.f_w.resize(n);
    r.gain.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        detail::check_delay(fluid, i);
        const double x = fluid.x[i];
        const double pay = willingness_to_pay(x, utilities[i]);
        r.backlog[i] = backlog(w[i], x, fluid.d_trans[i], pay);
        r.f_w[i] = r.backlog[i] / w[i];
        r.gain[i] = fluid.d_trans[i] / fluid.D[i];
        r.w[i] = detail::clamp_window(w[i] - kappa * h * r.gain[i] * r.f_w[i], w_min, r.floor_hits);
    }
    return r;
}

/// dw/dt = -alpha (d_prop / D) (w - x d_prop - p) / w with a fixed target p.
inline StepResult step_mo(std::span<const double> w, const FluidSolution& fluid,
                          std::span<const double> target_backlog, double alpha, double h,
                          double w_min = kWindowFloor) {
    detail::check_gain(alpha, h);
    StepResult r;
    const std::size_t n = w.size();
    r.w.resize(n);
    r.backlog.resize(n);
    r.f_w.resize(n);
    r.gain.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        detail::check_delay(fluid, i);
        r.backlog[i] = mo_backlog(w[i], fluid.x[i], fluid.d_prop[i], target_backlog[i]);
        r.f_w[i] = r.backlog[i] / w[i];
        r.gain[i] = fluid.d_prop[i] / fluid.D[i];
        r.w[i] = detail::clamp_window(w[i] - alpha * h * r.gain[i] * r.f_w[i], w_min, r.floor_hits);
    }
    return r;
}

/// dw/dt = -alpha ((d_prop + U' + x U'') / D) (w - x d_prop - x U') / w.
/// With dynamic_terms off the numerator is d_prop alone.
inline StepResult step_la(std::span<const double> w, const FluidSolution& fluid,
                          std::span<const UtilityParams> utilities, double alpha, double h,
                          bool dynamic_terms, double w_min = kWindowFloor) {
    detail::check_gain(alpha, h);
    StepResult r;
    const std::size_t n = w.size();
    r.w.resize(n);
    r.backlog.resize(n);
    r.f_w.resize(n);
    r.gain.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        detail::check_delay(fluid, i);
        const double x = fluid.x[i];
        const double pay = willingness_to_pay(x, utilities[i]);
        r.backlog[i] = mo_backlog(w[i], x, fluid.d_prop[i], pay);
        r.f_w[i] = r.backlog[i] / w[i];
        const double numerator =
            fluid.d_prop[i] + (dynamic_terms ? la_dynamic_term(x, utilities[i]) : 0.0);
        if (!(numerator > 0.0))
            throw DomainError("La gain numerator is not positive for user " + std::to_string(i));
        r.gain[i] = numerator / fluid.D[i];
        r.w[i] = detail::clamp_window(w[i] - alpha * h * r.gain[i] * r.f_w[i], w_min, r.floor_hits);
    }
    return r;
}

/// V(w) = 1/2 sum f_i^2.
inline double lyapunov(std::span<const double> f) {
    double v = 0.0;
    for (double fi : f) v += fi * fi;
    return 0.5 * v;
}

// ---------------------------------------------------------------------------
// Driving a scheme to its fixed point.

struct ControllerConfig {
    Scheme scheme = Scheme::Proposed;
    double gain = 0.1;  // kappa for Proposed, alpha otherwise
    double step = 1.0;  // Euler step h
    double w_min = kWindowFloor;
    double tol = 1e-6;  // absolute window change for convergence
    std::size_t dwell = 50;
    std::size_t max_iter = 15000;
    std::size_t sample_every = 100;
    std::vector<UtilityParams> utilities;
    std::vector<double> mo_target;  // defaults to 1.0 per user when empty
};

struct TrajectorySample {
    std::size_t iteration = 0;
    std::vector<double> w;
    std::vector<double> x;
    std::vector<double> s;
    std::vector<double> f;
    double V = 0.0;
};

struct ControllerState {
    Scheme scheme = Scheme::Proposed;
    double gain = 0.1;
    double step = 1.0;
    std::vector<double> w;
    std::vector<double> pay;
    std::size_t iteration = 0;
    std::size_t floor_hits = 0;
    std::vector<TrajectorySample> trajectory;
};

struct ConvergenceResult {
    ControllerState state;
    bool converged = false;
    std::size_t iterations = 0;  // Euler steps taken
    FluidSolution fluid;         // equilibrium at the final windows
    std::vector<double> final_backlog;
    double final_V = 0.0;
    std::string diagnostics;

    const std::vector<double>& w_star() const { return state.w; }
};

/// One step of whichever law the config selects.
inline StepResult step_scheme(const ControllerConfig& cfg, std::span<const double> w,
                              const FluidSolution& fluid) {
    switch (cfg.scheme) {
        case Scheme::Proposed:
            return step_proposed(w, fluid, cfg.utilities, cfg.gain, cfg.step, cfg.w_min);
        case Scheme::Mo: {
            std::vector<double> target = cfg.mo_target;
            if (target.empty()) target.assign(w.size(), 1.0);
            return step_mo(w, fluid, target, cfg.gain, cfg.step, cfg.w_min);
        }
        case Scheme::La:
            return step_la(w, fluid, cfg.utilities, cfg.gain, cfg.step, true, cfg.w_min);
        case Scheme::LaWD:
            return step_la(w, fluid, cfg.utilities, cfg.gain, cfg.step, false, cfg.w_min);
    }
    throw InvalidParameter("unknown scheme");
}

/// Iterates {fluid solve; window step} until every window moves less than
/// cfg.tol for cfg.dwell consecutive steps, or cfg.max_iter steps are taken.
/// Running out of iterations is reported in the result, not thrown.
inline ConvergenceResult run_to_convergence(const ControllerConfig& cfg,
                                            std::span<const double> initial_windows,
                                            FluidSolver& solver) {
    const std::size_t n = initial_windows.size();
    if (n != solver.problem().user_count())
        throw ShapeError("controller: window count does not match users");
    if (cfg.utilities.size() != n) throw ShapeError("controller: one utility per user required");
    if (cfg.scheme == Scheme::Mo && !cfg.mo_target.empty() && cfg.mo_target.size() != n)
        throw ShapeError("controller: one Mo target per user required");
    for (const auto& u : cfg.utilities) u.validate();
    if (cfg.sample_every == 0) throw InvalidParameter("sample_every must be positive");

    ConvergenceResult result;
    ControllerState& st = result.state;
    st.scheme = cfg.scheme;
    st.gain = cfg.gain;
    st.step = cfg.step;
    st.w.assign(initial_windows.begin(), initial_windows.end());
    for (double& w : st.w) {
        if (!(w > 0.0)) throw InvalidParameter("initial windows must be positive");
        w = std::max(w, cfg.w_min);
    }

    auto record = [&](const StepResult& step, const FluidSolution& fluid) {
        TrajectorySample s;
        s.iteration = st.iteration;
        s.w = st.w;
        s.x = fluid.x;
        s.s = step.backlog;
        s.f = step.f_w;
        s.V = lyapunov(step.f_w);
        st.trajectory.push_back(std::move(s));
    };

    std::size_t calm = 0;
    for (;;) {
        FluidSolution fluid = solver.solve(st.w);
        StepResult step = step_scheme(cfg, st.w, fluid);
        st.pay.resize(n);
        for (std::size_t i = 0; i < n; ++i)
            st.pay[i] = cfg.scheme == Scheme::Mo
                            ? (cfg.mo_target.empty() ? 1.0 : cfg.mo_target[i])
                            : willingness_to_pay(fluid.x[i], cfg.utilities[i]);
        const bool done = result.converged || st.iteration >= cfg.max_iter;
        if (done || st.iteration % cfg.sample_every == 0) record(step, fluid);
        if (done) {
            result.fluid = std::move(fluid);
            result.final_backlog = step.backlog;
            result.final_V = lyapunov(step.f_w);
            break;
        }
        double change = 0.0;
        for (std::size_t i = 0; i < n; ++i) change = std::max(change, std::abs(step.w[i] - st.w[i]));
        st.w = std::move(step.w);
        st.floor_hits += step.floor_hits;
        ++st.iteration;
        calm = change < cfg.tol ? calm + 1 : 0;
        if (calm >= cfg.dwell) result.converged = true;
    }
    result.iterations = st.iteration;
    if (!result.converged)
        result.diagnostics = "no convergence within " + std::to_string(cfg.max_iter) +
                             " iterations (final V = " + std::to_string(result.final_V) + ")";
    if (st.floor_hits > 0)
        result.diagnostics += (result.diagnostics.empty() ? "" : "; ") +
                              std::string("window floor hit ") + std::to_string(st.floor_hits) +
                              " times";
    return result;
}

/// Initial windows as data in transit plus data queued on each route when
/// every user sends at `initial_rate`: w0 = x0 (d_prop + d_trans + sum load/c).
inline std::vector<double> initial_windows(const FluidProblem& p, double initial_rate) {
    if (!(initial_rate > 0.0)) throw InvalidParameter("initial rate must be positive");
    const std::vector<double> x(p.user_count(), initial_rate);
    const auto lambda = node_loads(p, x);
    const auto queue = queueing_ratio(p, x);
    std::vector<double> w(p.user_count());
    for (std::size_t i = 0; i < w.size(); ++i)
        w[i] = initial_rate *
               (p.propagation_delay(i) + transmission_delay(p, lambda, i) + queue[i]);
    return w;
}

}  // namespace tvcn
