#pragma once

// Multi-class fluid equilibrium for fixed windows.
//
// Given windows w, find rates x >= 0 and per-link queueing delays q >= 0 with
//
//   sum_{r uses e} x_r <= c_e                       (capacity)
//   q_e * (c_e - sum_{r uses e} x_r) = 0            (complementary slackness)
//   x_i * D_i = w_i,  D_i = d_prop_i + d_trans_i + sum_{e on route i} q_e
//
// where d_trans_i = sum_{j on route i} lambda_j / (bottleneck capacity of i)
// and lambda_j is the aggregate rate of users forwarding out of node j.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <limits>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "tvcn/common.hpp"
#include "tvcn/dense.hpp"
#include "tvcn/graph.hpp"
#include "tvcn/routing.hpp"

namespace tvcn {

/// Which transmission-delay term enters the total delay D.
enum class DelayModel {
    Dynamic,      // d_trans computed from current node loads
    Frozen,       // d_trans supplied by the caller and held constant
    Propagation,  // strict window equation: D = d_prop + queueing only
};

inline const char* to_string(DelayModel m) {
    switch (m) {
        case DelayModel::Dynamic: return "dynamic";
        case DelayModel::Frozen: return "frozen";
        case DelayModel::Propagation: return "propagation";
    }
    return "?";
}

struct FluidUser {
    std::vector<std::size_t> links;  // local link indices along the route
    std::vector<std::size_t> nodes;  // local node indices, source first, destination last
};

/// Self-contained description of the links and users a fluid solve touches.
/// Built from a snapshot and routes, or directly for synthetic instances.
struct FluidProblem {
    std::vector<double> capacity;    // per local link
    std::vector<double> link_delay;  // per local link propagation delay
    std::vector<FluidUser> users;
    std::size_t node_count = 0;

    // Provenance, filled by from_routes.
    std::vector<LinkKey> link_keys;
    std::vector<NodeId> node_ids;

    std::size_t user_count() const { return users.size(); }
    std::size_t link_count() const { return capacity.size(); }

    double propagation_delay(std::size_t user) const {
        double d = 0.0;
        for (std::size_t e : users[user].links) d += link_delay[e];
        return d;
    }

    double bottleneck(std::size_t user) const {
        double c = std::numeric_limits<double>::infinity();
        for (std::size_t e : users[user].links) c = std::min(c, capacity[e]);
        return c;
    }

    void validate() const {
        if (link_delay.size() != capacity.size())
            throw ShapeError("fluid problem: capacity and delay lengths differ");
        for (std::size_t e = 0; e < capacity.size(); ++e) {
            if (!(capacity[e] > 0.0))
                throw DegenerateCapacity("link " + std::to_string(e) + " has capacity " +
                                         std::to_string(capacity[e]));
            if (!(link_delay[e] >= 0.0))
                throw InvalidParameter("link " + std::to_string(e) +
                                       " has negative propagation delay");
        }
        for (std::size_t i = 0; i < users.size(); ++i) {
            if (users[i].links.empty())
                throw InvalidParameter("user " + std::to_string(i) + " has an empty route");
            for (std::size_t e : users[i].links)
                if (e >= capacity.size())
                    throw ConsistencyError("user " + std::to_string(i) + " references link " +
                                           std::to_string(e));
            for (std::size_t n : users[i].nodes)
                if (n >= node_count)
                    throw ConsistencyError("user " + std::to_string(i) + " references node " +
                                           std::to_string(n));
        }
    }

    /// Restricts the snapshot to the links and nodes on the given routes.
    /// Capacities are the degree products at this snapshot.
    static FluidProblem from_routes(const std::vector<Route>& routes, const NetworkSnapshot& s) {
        FluidProblem p;
        std::map<LinkKey, std::size_t> link_index;
        std::map<NodeId, std::size_t> node_index;
        for (const Route& r : routes) {
            for (const LinkKey& k : r.links) link_index.emplace(k, 0);
            for (NodeId n : r.nodes) node_index.emplace(n, 0);
        }
        for (auto& [key, idx] : link_index) {
            if (!s.has_link(key.u, key.v))
                throw ConsistencyError("route references missing link " + to_string(key));
            idx = p.link_keys.size();
            p.link_keys.push_back(key);
            p.capacity.push_back(link_capacity(s, key));
            p.link_delay.push_back(s.propagation_delay(key));
        }
        for (auto& [id, idx] : node_index) {
            idx = p.node_ids.size();
            p.node_ids.push_back(id);
        }
        p.node_count = p.node_ids.size();
        for (const Route& r : routes) {
            FluidUser u;
            for (const LinkKey& k : r.links) u.links.push_back(link_index.at(k));
            for (NodeId n : r.nodes) u.nodes.push_back(node_index.at(n));
            p.users.push_back(std::move(u));
        }
        p.validate();
        return p;
    }
};

struct FluidOptions {
    DelayModel model = DelayModel::Dynamic;
    std::vector<double> frozen_transmission;  // required for DelayModel::Frozen
    double tol = 1e-9;
    std::size_t max_iter = 100000;
};

struct FluidResiduals {
    double window = 0.0;      // max_i |x_i D_i - w_i| / w_i
    double capacity = 0.0;    // max_e max(0, load_e - c_e) / c_e
    double slackness = 0.0;   // max_e min(q_e, |c_e - load_e| / c_e)
    double negativity = 0.0;  // max(0, -min(x), -min(q))

    double max() const { return std::max({window, capacity, slackness, negativity}); }
};

struct FluidSolution {
    std::vector<double> x;          // per user rate
    std::vector<double> dQ_link;    // per local link queueing delay
    std::vector<double> d_trans;    // per user transmission delay
    std::vector<double> d_prop;     // per user propagation delay
    std::vector<double> D;          // per user total delay
    std::vector<double> node_load;  // per local node aggregate forwarding rate
    std::vector<std::size_t> congested;  // links the solver held at capacity
    FluidResiduals residuals;
    std::size_t iterations = 0;

    double queueing_delay(const FluidProblem& p, std::size_t user) const {
        double q = 0.0;
        for (std::size_t e : p.users[user].links) q += dQ_link[e];
        return q;
    }
};

/// lambda_j: aggregate rate of users that forward out of node j (route nodes
/// except each user's destination).
inline std::vector<double> node_loads(const FluidProblem& p, std::span<const double> x) {
    std::vector<double> load(p.node_count, 0.0);
    for (std::size_t i = 0; i < p.users.size(); ++i) {
        const auto& nodes = p.users[i].nodes;
        for (std::size_t k = 0; k + 1 < nodes.size(); ++k) load[nodes[k]] += x[i];
    }
    return load;
}

inline std::vector<double> link_loads(const FluidProblem& p, std::span<const double> x) {
    std::vector<double> load(p.link_count(), 0.0);
    for (std::size_t i = 0; i < p.users.size(); ++i)
        for (std::size_t e : p.users[i].links) load[e] += x[i];
    return load;
}

/// Sum of node loads over the user's route nodes divided by the route's
/// bottleneck capacity.
inline double transmission_delay(std::span<const double> node_load, std::span<const std::size_t> route_nodes,
                                 double bottleneck_capacity) {
    if (!(bottleneck_capacity > 0.0))
        throw DegenerateCapacity("transmission delay with bottleneck capacity " +
                                 std::to_string(bottleneck_capacity));
    double sum = 0.0;
    for (std::size_t j : route_nodes) sum += node_load[j];
    return sum / bottleneck_capacity;
}

inline double transmission_delay(const FluidProblem& p, std::span<const double> node_load,
                                 std::size_t user) {
    return transmission_delay(node_load, p.users[user].nodes, p.bottleneck(user));
}

/// Backlog against the transmission delay: w - x d_trans - p.
inline double backlog(double w, double x, double d_trans, double pay) {
    return w - x * d_trans - pay;
}

/// Backlog against the propagation delay: w - x d_prop - p.
inline double mo_backlog(double w, double x, double d_prop, double pay) {
    return w - x * d_prop - pay;
}

/// Per-user sum over route links of (aggregate link rate / capacity). This is
/// the rate-to-capacity form of the queueing delay, reported as a diagnostic
/// and used to estimate initial windows; the solver's q is separate.
inline std::vector<double> queueing_ratio(const FluidProblem& p, std::span<const double> x) {
    const auto load = link_loads(p, x);
    std::vector<double> out(p.user_count(), 0.0);
    for (std::size_t i = 0; i < p.user_count(); ++i)
        for (std::size_t e : p.users[i].links) out[i] += load[e] / p.capacity[e];
    return out;
}

namespace detail {

/// Coupling matrix G with d_trans = G x in the dynamic delay model.
inline Matrix transmission_coupling(const FluidProblem& p) {
    const std::size_t n = p.user_count();
    Matrix g(n, n);
    for (std::size_t z = 0; z < n; ++z) {
        std::vector<char> forwards(p.node_count, 0);
        const auto& nz = p.users[z].nodes;
        for (std::size_t k = 0; k + 1 < nz.size(); ++k) forwards[nz[k]] = 1;
        for (std::size_t i = 0; i < n; ++i) {
            double count = 0.0;
            for (std::size_t j : p.users[i].nodes) count += forwards[j];
            g(i, z) = count;
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        const double cb = p.bottleneck(i);
        if (!(cb > 0.0))
            throw DegenerateCapacity("user " + std::to_string(i) + " has zero bottleneck");
        for (std::size_t z = 0; z < n; ++z) g(i, z) /= cb;
    }
    return g;
}

class ActiveSetNewton {
public:
    ActiveSetNewton(const FluidProblem& p, std::span<const double> w, const FluidOptions& opt)
        : p_(p), w_(w.begin(), w.end()), opt_(opt), n_(p.user_count()) {
        d_prop_.resize(n_);
        for (std::size_t i = 0; i < n_; ++i) d_prop_[i] = p.propagation_delay(i);
        if (opt.model == DelayModel::Dynamic) coupling_ = transmission_coupling(p);
        if (opt.model == DelayModel::Frozen && opt.frozen_transmission.size() != n_)
            throw ShapeError("frozen transmission delays: expected " + std::to_string(n_) +
                             " values");
        link_users_.resize(p.link_count());
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t e : p.users[i].links) link_users_[e].push_back(i);
    }

    // Transmission term that enters D.
    double trans_in_delay(std::size_t i, std::span<const double> x) const {
        switch (opt_.model) {
            case DelayModel::Dynamic: {
                double t = 0.0;
                for (std::size_t z = 0; z < n_; ++z) t += coupling_(i, z) * x[z];
                return t;
            }
            case DelayModel::Frozen: return opt_.frozen_transmission[i];
            case DelayModel::Propagation: return 0.0;
        }
        return 0.0;
    }

    double delay(std::size_t i, std::span<const double> x, std::span<const double> q) const {
        double d = d_prop_[i] + trans_in_delay(i, x);
        for (std::size_t e : p_.users[i].links) d += q[e];
        return d;
    }

    // Scaled residual vector for active set `active`.
    std::vector<double> residual(std::span<const double> x, std::span<const double> q,
                                 const std::vector<std::size_t>& active) const {
        std::vector<double> f(n_ + active.size());
        for (std::size_t i = 0; i < n_; ++i) f[i] = (x[i] * delay(i, x, q) - w_[i]) / w_[i];
        for (std::size_t k = 0; k < active.size(); ++k) {
            const std::size_t e = active[k];
            double load = 0.0;
            for (std::size_t i : link_users_[e]) load += x[i];
            f[n_ + k] = (load - p_.capacity[e]) / p_.capacity[e];
        }
        return f;
    }

    static double inf_norm(std::span<const double> v) {
        double m = 0.0;
        for (double a : v) m = std::max(m, std::abs(a));
        return m;
    }

    // Newton on (x, q_active) with backtracking. Returns false if it stalls.
    bool newton(std::vector<double>& x, std::vector<double>& q,
                const std::vector<std::size_t>& active, std::size_t& budget) {
        const std::size_t m = active.size();
        auto f = residual(x, q, active);
        double norm = inf_norm(f);
        for (int it = 0; it < 100; ++it) {
            if (norm < 1e-15) return true;
            if (budget == 0) return false;
            --budget;
            Matrix jac(n_ + m, n_ + m);
            for (std::size_t i = 0; i < n_; ++i) {
                const double d = delay(i, x, q);
                jac(i, i) += d / w_[i];
                if (opt_.model == DelayModel::Dynamic)
                    for (std::size_t z = 0; z < n_; ++z)
                        jac(i, z) += x[i] * coupling_(i, z) / w_[i];
            }
            for (std::size_t k = 0; k < m; ++k) {
                const std::size_t e = active[k];
                for (std::size_t i : link_users_[e]) {
                    jac(i, n_ + k) = x[i] / w_[i];
                    jac(n_ + k, i) = 1.0 / p_.capacity[e];
                }
            }
            std::vector<double> rhs(f.size());
            for (std::size_t r = 0; r < f.size(); ++r) rhs[r] = -f[r];
            const auto step = LuFactorization(jac, 1e-14).solve(rhs);

            // Keep rates positive.
            double alpha = 1.0;
            for (std::size_t i = 0; i < n_; ++i)
                if (step[i] < 0.0) alpha = std::min(alpha, -0.9 * x[i] / step[i]);

            bool improved = false;
            for (int ls = 0; ls < 60; ++ls) {
                std::vector<double> xt = x;
                std::vector<double> qt = q;
                for (std::size_t i = 0; i < n_; ++i) xt[i] += alpha * step[i];
                for (std::size_t k = 0; k < m; ++k) qt[active[k]] += alpha * step[n_ + k];
                bool positive_delay = true;
                for (std::size_t i = 0; i < n_ && positive_delay; ++i)
                    positive_delay = delay(i, xt, qt) > 0.0;
                if (positive_delay) {
                    auto ft = residual(xt, qt, active);
                    const double nt = inf_norm(ft);
                    if (nt < norm || (nt == norm && alpha == 1.0 && nt < 1e-13)) {
                        x = std::move(xt);
                        q = std::move(qt);
                        f = std::move(ft);
                        improved = nt < norm;
                        norm = nt;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if (!improved) return norm < 1e-12;
        }
        return norm < 1e-12;
    }

    // A newly added constraint made the system singular: try releasing one of
    // the older ones instead, smallest multiplier first. Negative multipliers
    // left behind are dropped by the main loop.
    bool swap_out(std::vector<double>& x, std::vector<double>& q, std::vector<std::size_t>& active,
                  std::size_t added, std::size_t& budget) {
        std::vector<std::size_t> order;
        for (std::size_t e : active)
            if (e != added) order.push_back(e);
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return q[a] < q[b]; });
        for (std::size_t f : order) {
            std::vector<std::size_t> trial;
            for (std::size_t e : active)
                if (e != f) trial.push_back(e);
            auto xt = initial_rates();
            auto qt = q;
            qt[f] = 0.0;
            bool ok = false;
            try {
                ok = newton(xt, qt, trial, budget);
            } catch (const SingularMatrix&) {
            }
            if (!ok) continue;
            x = std::move(xt);
            q = std::move(qt);
            active = std::move(trial);
            return true;
        }
        return false;
    }

    // Uncongested starting point.
    std::vector<double> initial_rates() const {
        std::vector<double> x(n_);
        for (std::size_t i = 0; i < n_; ++i) {
            const double base = d_prop_[i] + (opt_.model == DelayModel::Frozen
                                                  ? opt_.frozen_transmission[i]
                                                  : 0.0);
            x[i] = base > 0.0 ? w_[i] / base : w_[i];
            x[i] = std::min(x[i], p_.bottleneck(i));
        }
        return x;
    }

    FluidSolution solve(std::vector<double> x, std::vector<double> q,
                        std::vector<std::size_t> active) {
        for (std::size_t i = 0; i < n_; ++i)
            if (!(w_[i] > 0.0) || !std::isfinite(w_[i]))
                throw InvalidParameter("window of user " + std::to_string(i) +
                                       " must be positive and finite");
        if (x.size() != n_) x = initial_rates();
        if (q.size() != p_.link_count()) q.assign(p_.link_count(), 0.0);
        for (std::size_t e = 0; e < q.size(); ++e)
            if (std::find(active.begin(), active.end(), e) == active.end()) q[e] = 0.0;

        std::size_t budget = opt_.max_iter;
        if (!active_set(x, q, active, budget)) {
            // Fall back to damped price sweeps for a starting point and active set.
            damped_sweeps(x, q, budget);
            active.clear();
            const double qmax = q.empty() ? 0.0 : *std::max_element(q.begin(), q.end());
            for (std::size_t e = 0; e < q.size(); ++e) {
                if (q[e] > 1e-9 * qmax) active.push_back(e);
                else q[e] = 0.0;
            }
            last_added_.reset();
            if (!active_set(x, q, active, budget)) {
                FluidSolution partial = finish(std::move(x), std::move(q), std::move(active),
                                               opt_.max_iter - budget);
                throw SolverDivergence("fluid solver did not converge", partial.residuals.window,
                                       partial.residuals.capacity, partial.residuals.slackness);
            }
        }
        return finish(std::move(x), std::move(q), std::move(active), opt_.max_iter - budget);
    }

    // Primal-dual active-set iteration. Leaves the last iterate in place and
    // reports whether it is an equilibrium.
    bool active_set(std::vector<double>& x, std::vector<double>& q, std::vector<std::size_t>& active,
                    std::size_t& budget) {
        std::set<std::size_t> blocked;
        const std::size_t max_rounds = 8 * p_.link_count() + 32;
        for (std::size_t round = 0; round < max_rounds; ++round) {
            std::sort(active.begin(), active.end());
            bool converged = false;
            try {
                converged = newton(x, q, active, budget);
            } catch (const SingularMatrix&) {
                converged = false;
            }
            if (!converged) {
                if (budget == 0) break;
                if (active.empty()) {
                    // Restart from the uncongested guess once.
                    x = initial_rates();
                    std::fill(q.begin(), q.end(), 0.0);
                    if (!newton(x, q, active, budget)) break;
                } else {
                    // The equality system drifted toward a negative multiplier;
                    // release it. Otherwise the newest constraint is redundant.
                    std::optional<std::size_t> neg;
                    for (std::size_t e : active)
                        if (q[e] < 0.0 && (!neg || q[e] < q[*neg])) neg = e;
                    for (double& v : q) v = std::max(v, 0.0);
                    if (!neg && last_added_ && swap_out(x, q, active, *last_added_, budget)) {
                        last_added_.reset();
                        continue;
                    }
                    const std::size_t e = neg.value_or(last_added_.value_or(active.back()));
                    if (!neg) blocked.insert(e);
                    active.erase(std::find(active.begin(), active.end(), e));
                    q[e] = 0.0;
                    last_added_.reset();
                    x = initial_rates();
                    continue;
                }
            }

            // Drop the most negative queueing delay.
            std::optional<std::size_t> drop;
            for (std::size_t e : active)
                if (q[e] < 0.0 && (!drop || q[e] < q[*drop])) drop = e;
            if (drop) {
                active.erase(std::find(active.begin(), active.end(), *drop));
                q[*drop] = 0.0;
                continue;
            }

            // Add the most overloaded link.
            const auto load = link_loads(p_, x);
            std::optional<std::size_t> add;
            double worst = 1e-12;
            for (std::size_t e = 0; e < p_.link_count(); ++e) {
                if (blocked.contains(e) ||
                    std::find(active.begin(), active.end(), e) != active.end())
                    continue;
                const double excess = (load[e] - p_.capacity[e]) / p_.capacity[e];
                if (excess > worst) {
                    worst = excess;
                    add = e;
                }
            }
            if (add) {
                active.push_back(*add);
                last_added_ = *add;
                continue;
            }
            // A blocked link left overloaded means the set is wrong.
            for (std::size_t e : blocked)
                if (load[e] > p_.capacity[e] * (1.0 + 1e-12)) return false;
            return true;
        }
        return false;
    }

    // Rates implied by queueing delays q with transmission delays taken at xt.
    std::vector<double> rates_at(std::span<const double> q, std::span<const double> xt) const {
        std::vector<double> x(n_);
        for (std::size_t i = 0; i < n_; ++i) {
            double d = d_prop_[i] + trans_in_delay(i, xt);
            for (std::size_t e : p_.users[i].links) d += q[e];
            x[i] = w_[i] / d;
        }
        return x;
    }

    // Gauss-Seidel over links: move each q_e halfway toward the value that
    // puts its load at capacity (or to 0 if the link is slack at 0).
    void damped_sweeps(std::vector<double>& x, std::vector<double>& q, std::size_t& budget) {
        std::fill(q.begin(), q.end(), 0.0);
        x = rates_at(q, std::vector<double>(n_, 0.0));
        for (std::size_t sweep = 0; sweep < 20000 && budget > 0; ++sweep, --budget) {
            double moved = 0.0;
            for (std::size_t e = 0; e < q.size(); ++e) {
                if (link_users_[e].empty()) continue;
                auto excess = [&](double v) {
                    std::vector<double> trial = q;
                    trial[e] = v;
                    const auto xr = rates_at(trial, x);
                    double load = 0.0;
                    for (std::size_t i : link_users_[e]) load += xr[i];
                    return load - p_.capacity[e];
                };
                double target = 0.0;
                if (excess(0.0) > 0.0) {
                    double lo = 0.0, hi = std::max(q[e], 1.0);
                    while (excess(hi) > 0.0) hi *= 2.0;
                    for (int k = 0; k < 100 && hi - lo > 1e-15 * hi; ++k) {
                        const double mid = 0.5 * (lo + hi);
                        (excess(mid) > 0.0 ? lo : hi) = mid;
                    }
                    target = hi;
                }
                const double next = q[e] + 0.5 * (target - q[e]);
                moved = std::max(moved, std::abs(next - q[e]));
                q[e] = next;
            }
            x = rates_at(q, x);
            if (moved < 1e-12) break;
        }
    }

    FluidSolution finish(std::vector<double> x, std::vector<double> q,
                         std::vector<std::size_t> active, std::size_t iterations) const {
        FluidSolution s;
        for (double& v : q) v = std::max(v, 0.0);
        s.node_load = node_loads(p_, x);
        s.d_prop = d_prop_;
        s.d_trans.resize(n_);
        s.D.resize(n_);
        for (std::size_t i = 0; i < n_; ++i) {
            s.d_trans[i] = opt_.model == DelayModel::Frozen
                               ? opt_.frozen_transmission[i]
                               : transmission_delay(p_, s.node_load, i);
            s.D[i] = delay(i, x, q);
        }
        s.x = std::move(x);
        s.dQ_link = std::move(q);
        std::sort(active.begin(), active.end());
        s.congested = std::move(active);
        s.iterations = iterations;
        return s;
    }

private:
    const FluidProblem& p_;
    std::vector<double> w_;
    const FluidOptions& opt_;
    std::size_t n_;
    std::vector<double> d_prop_;
    Matrix coupling_;
    std::vector<std::vector<std::size_t>> link_users_;
    std::optional<std::size_t> last_added_;
};

}  // namespace detail

/// Recomputes the equilibrium conditions from (x, q) alone.
inline FluidResiduals fluid_residuals(const FluidProblem& p, std::span<const double> w,
                                      std::span<const double> x, std::span<const double> q,
                                      const FluidOptions& opt) {
    FluidResiduals r;
    const auto lambda = node_loads(p, x);
    const auto load = link_loads(p, x);
    for (std::size_t i = 0; i < p.user_count(); ++i) {
        double d = p.propagation_delay(i);
        if (opt.model == DelayModel::Dynamic) d += transmission_delay(p, lambda, i);
        if (opt.model == DelayModel::Frozen) d += opt.frozen_transmission.at(i);
        for (std::size_t e : p.users[i].links) d += q[e];
        r.window = std::max(r.window, std::abs(x[i] * d - w[i]) / w[i]);
        r.negativity = std::max(r.negativity, -x[i]);
    }
    for (std::size_t e = 0; e < p.link_count(); ++e) {
        const double rel = (load[e] - p.capacity[e]) / p.capacity[e];
        r.capacity = std::max(r.capacity, rel);
        r.slackness = std::max(r.slackness, std::min(q[e], std::abs(rel)));
        r.negativity = std::max(r.negativity, -q[e]);
    }
    return r;
}

/// Solves the fluid equilibrium for the given windows.
/// Throws SolverDivergence if the residuals cannot be brought below opt.tol.
inline FluidSolution solve_fluid(const FluidProblem& p, std::span<const double> windows,
                                 const FluidOptions& opt = {}) {
    p.validate();
    if (windows.size() != p.user_count())
        throw ShapeError("solve_fluid: expected " + std::to_string(p.user_count()) + " windows");
    detail::ActiveSetNewton solver(p, windows, opt);
    FluidSolution s = solver.solve({}, {}, {});
    s.residuals = fluid_residuals(p, windows, s.x, s.dQ_link, opt);
    if (s.residuals.max() > opt.tol)
        throw SolverDivergence("fluid residuals above tolerance", s.residuals.window,
                               s.residuals.capacity, s.residuals.slackness);
    return s;
}

/// Fluid solver that warm-starts from its previous equilibrium; used by the
/// controllers, whose windows move little between iterations.
class FluidSolver {
public:
    FluidSolver(FluidProblem problem, FluidOptions options)
        : problem_(std::move(problem)), options_(std::move(options)) {
        problem_.validate();
    }

    const FluidProblem& problem() const { return problem_; }
    const FluidOptions& options() const { return options_; }

    FluidSolution solve(std::span<const double> windows) {
        if (windows.size() != problem_.user_count())
            throw ShapeError("FluidSolver: expected " + std::to_string(problem_.user_count()) +
                             " windows");
        detail::ActiveSetNewton solver(problem_, windows, options_);
        FluidSolution s = last_ ? solver.solve(last_->x, last_->dQ_link, last_->congested)
                                : solver.solve({}, {}, {});
        s.residuals = fluid_residuals(problem_, windows, s.x, s.dQ_link, options_);
        if (s.residuals.max() > options_.tol) {
            // A stale warm start can trap the active set; retry cold once.
            detail::ActiveSetNewton cold(problem_, windows, options_);
            s = cold.solve({}, {}, {});
            s.residuals = fluid_residuals(problem_, windows, s.x, s.dQ_link, options_);
            if (s.residuals.max() > options_.tol)
                throw SolverDivergence("fluid residuals above tolerance", s.residuals.window,
                                       s.residuals.capacity, s.residuals.slackness);
        }
        last_ = s;
        return s;
    }

private:
    FluidProblem problem_;
    FluidOptions options_;
    std::optional<FluidSolution> last_;
};

/// Links whose aggregate rate is within tol*c of capacity.
inline std::vector<std::size_t> bottleneck_set(const FluidProblem& p, const FluidSolution& s,
                                               double tol = 1e-6) {
    const auto load = link_loads(p, s.x);
    std::vector<std::size_t> b;
    for (std::size_t e = 0; e < p.link_count(); ++e) {
        bool used = false;
        for (const auto& u : p.users)
            if (std::find(u.links.begin(), u.links.end(), e) != u.links.end()) used = true;
        if (used && std::abs(load[e] - p.capacity[e]) <= tol * p.capacity[e]) b.push_back(e);
    }
    return b;
}

/// CSV: user,x,d_prop,d_trans,dQ_sum,D,w
inline std::string solution_to_csv(const FluidProblem& p, const FluidSolution& s,
                                   std::span<const double> windows) {
    std::string out = "user,x,d_prop,d_trans,dQ_sum,D,w\n";
    char buf[256];
    for (std::size_t i = 0; i < p.user_count(); ++i) {
        std::snprintf(buf, sizeof buf, "%zu,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g\n", i, s.x[i],
                      s.d_prop[i], s.d_trans[i], s.queueing_delay(p, i), s.D[i], windows[i]);
        out += buf;
    }
    return out;
}

}  // namespace tvcn
