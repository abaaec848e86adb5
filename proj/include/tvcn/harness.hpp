#pragma once

// End-to-end comparison runs: evolve a network through a list of sizes, keep
// the same users throughout, and drive every scheme to its fixed point at
// each size.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <future>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "tvcn/common.hpp"
#include "tvcn/control.hpp"
#include "tvcn/evolution.hpp"
#include "tvcn/fluid.hpp"
#include "tvcn/graph.hpp"
#include "tvcn/rng.hpp"
#include "tvcn/routing.hpp"

namespace tvcn {

struct Scenario {
    EvolutionParams evolution;
    std::vector<std::size_t> sizes{500};
    std::size_t users = 4;
    std::vector<Scheme> schemes{Scheme::Proposed, Scheme::Mo, Scheme::La, Scheme::LaWD};
    double kappa = 0.1;  // Proposed gain
    double alpha = 0.1;  // Mo / La gain
    double step = 1.0;
    std::size_t max_iter = 15000;
    double tol = 1e-6;
    std::size_t dwell = 50;
    std::size_t sample_every = 100;
    std::optional<std::size_t> table1_size;  // defaults to the last size
    UtilityParams utility;
    double initial_rate = 10.0;
    double mo_target = 1.0;
    DelayModel delay_model = DelayModel::Dynamic;  // shared by every scheme
    std::size_t power_law_kmin = 6;
    std::size_t fairness_samples = 200;
    bool parallel = true;

    void validate() const {
        evolution.validate();
        if (sizes.empty()) throw InvalidParameter("sizes must not be empty");
        if (sizes.front() < evolution.n0)
            throw InvalidParameter("sizes must be at least n0 = " + std::to_string(evolution.n0));
        for (std::size_t k = 1; k < sizes.size(); ++k)
            if (sizes[k] <= sizes[k - 1]) throw InvalidParameter("sizes must be strictly increasing");
        if (users < 1) throw InvalidParameter("users must be at least 1");
        if (schemes.empty()) throw InvalidParameter("schemes must not be empty");
        if (!(kappa > 0.0) || !(alpha > 0.0) || !(step > 0.0))
            throw InvalidParameter("gains and step must be positive");
        if (max_iter < 1) throw InvalidParameter("max_iter must be at least 1");
        if (!(tol > 0.0)) throw InvalidParameter("tol must be positive");
        if (sample_every == 0) throw InvalidParameter("sample_every must be positive");
        if (!(initial_rate > 0.0)) throw InvalidParameter("initial_rate must be positive");
        if (!(mo_target > 0.0)) throw InvalidParameter("mo_target must be positive");
        if (power_law_kmin < 1) throw InvalidParameter("power_law_kmin must be at least 1");
        utility.validate();
        if (table1_size && std::find(sizes.begin(), sizes.end(), *table1_size) == sizes.end())
            throw InvalidParameter("table1_size must be one of sizes");
    }

    std::size_t table1() const { return table1_size.value_or(sizes.back()); }
};

struct SchemeRun {
    Scheme scheme = Scheme::Proposed;
    DelayModel model = DelayModel::Dynamic;
    bool converged = false;
    std::size_t iterations = 0;
    double seconds = 0.0;
    std::vector<double> w0;
    std::vector<double> w_star;
    std::vector<double> x_star;
    std::vector<double> backlog;  // the scheme's own s at w*
    double final_V = 0.0;
    double fixed_point_residual = 0.0;  // max |s_i| at w*
    std::vector<TrajectorySample> trajectory;
    std::string diagnostics;
    std::string error;  // non-empty when the cell failed
};

struct FairnessResult {
    std::vector<double> aggregates;
    double worst = 0.0;
    bool pass = false;
};

struct SizeResult {
    std::size_t size = 0;
    std::size_t link_count = 0;
    std::optional<double> alpha_hat;
    std::string alpha_note;
    std::vector<Route> routes;
    NetworkSnapshot snapshot;
    std::vector<SchemeRun> runs;  // one per scenario scheme, in order
    std::optional<FairnessResult> fairness;  // on the La rates, when La ran
    std::string error;
};

struct ComparisonReport {
    Scenario scenario;
    std::vector<std::pair<NodeId, NodeId>> endpoints;
    std::vector<SizeResult> sizes;
};

// ---------------------------------------------------------------------------

/// Sum_i (x_i - x*_i) / x*_i for each alternative; all must respect capacities.
inline FairnessResult proportional_fairness_check(const FluidProblem& p,
                                                  std::span<const double> x_star,
                                                  const std::vector<std::vector<double>>& alternatives,
                                                  double tol = 1e-9) {
    if (x_star.size() != p.user_count()) throw ShapeError("fairness: x* length differs from users");
    for (std::size_t i = 0; i < x_star.size(); ++i)
        if (!(x_star[i] > 0.0))
            throw InvalidParameter("fairness: x*_" + std::to_string(i) + " must be positive");
    FairnessResult r;
    r.worst = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < alternatives.size(); ++k) {
        const auto& alt = alternatives[k];
        if (alt.size() != x_star.size())
            throw ShapeError("fairness: alternative " + std::to_string(k) + " has wrong length");
        const auto load = link_loads(p, alt);
        for (std::size_t e = 0; e < p.link_count(); ++e)
            if (load[e] > p.capacity[e] * (1.0 + 1e-12))
                throw InvalidParameter("fairness: alternative " + std::to_string(k) +
                                       " exceeds capacity of link " + std::to_string(e) + " (" +
                                       std::to_string(load[e]) + " > " +
                                       std::to_string(p.capacity[e]) + ")");
        for (double v : alt)
            if (v < 0.0)
                throw InvalidParameter("fairness: alternative " + std::to_string(k) +
                                       " has a negative rate");
        double agg = 0.0;
        for (std::size_t i = 0; i < alt.size(); ++i) agg += (alt[i] - x_star[i]) / x_star[i];
        r.aggregates.push_back(agg);
        r.worst = std::max(r.worst, agg);
    }
    r.pass = alternatives.empty() || r.worst <= tol;
    if (alternatives.empty()) r.worst = 0.0;
    return r;
}

/// Random feasible rate vectors: uniform in [0, 2x*] and scaled back onto the
/// feasible set when any link is overloaded.
inline std::vector<std::vector<double>> sample_feasible_rates(const FluidProblem& p,
                                                              std::span<const double> x_star,
                                                              std::size_t count, Rng& rng) {
    std::vector<std::vector<double>> out;
    for (std::size_t k = 0; k < count; ++k) {
        std::vector<double> x(x_star.size());
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(0.0, 2.0 * x_star[i]);
        const auto load = link_loads(p, x);
        double worst = 0.0;
        for (std::size_t e = 0; e < p.link_count(); ++e) worst = std::max(worst, load[e] / p.capacity[e]);
        if (worst > 1.0)
            for (double& v : x) v /= worst;
        out.push_back(std::move(x));
    }
    return out;
}

/// Mean wall-clock time of each scheme divided by the Proposed mean, over
/// cells that finished without error. Informational only.
inline std::map<Scheme, double> speedup_summary(const ComparisonReport& report) {
    std::map<Scheme, std::pair<double, std::size_t>> totals;
    for (const auto& size : report.sizes)
        for (const auto& run : size.runs)
            if (run.error.empty()) {
                auto& t = totals[run.scheme];
                t.first += run.seconds;
                ++t.second;
            }
    std::map<Scheme, double> ratios;
    const auto base = totals.find(Scheme::Proposed);
    if (base == totals.end() || base->second.second == 0) return ratios;
    const double base_mean = base->second.first / static_cast<double>(base->second.second);
    for (const auto& [scheme, t] : totals) {
        if (t.second == 0) continue;
        const double mean = t.first / static_cast<double>(t.second);
        ratios[scheme] = base_mean > 0.0 ? mean / base_mean : (mean > 0.0 ? std::numeric_limits<double>::infinity() : 1.0);
    }
    return ratios;
}

// ---------------------------------------------------------------------------

/// 2*users distinct nodes of degree >= 2, drawn uniformly without replacement.
inline std::vector<std::pair<NodeId, NodeId>> place_users(const NetworkSnapshot& s,
                                                          std::size_t users, Rng& rng) {
    std::vector<NodeId> pool;
    for (NodeId n = 0; n < s.node_count(); ++n)
        if (s.degree(n) >= 2) pool.push_back(n);
    if (pool.size() < 2 * users)
        throw InvalidParameter("only " + std::to_string(pool.size()) +
                               " nodes of degree >= 2 for " + std::to_string(users) + " users");
    std::vector<NodeId> picked;
    for (std::size_t k = 0; k < 2 * users; ++k) {
        const std::size_t j = k + rng.below(pool.size() - k);
        std::swap(pool[k], pool[j]);
        picked.push_back(pool[k]);
    }
    std::vector<std::pair<NodeId, NodeId>> endpoints;
    for (std::size_t u = 0; u < users; ++u) endpoints.emplace_back(picked[2 * u], picked[2 * u + 1]);
    return endpoints;
}

inline ControllerConfig controller_config(const Scenario& sc, Scheme scheme) {
    ControllerConfig cfg;
    cfg.scheme = scheme;
    cfg.gain = scheme == Scheme::Proposed ? sc.kappa : sc.alpha;
    cfg.step = sc.step;
    cfg.tol = sc.tol;
    cfg.dwell = sc.dwell;
    cfg.max_iter = sc.max_iter;
    cfg.sample_every = sc.sample_every;
    cfg.utilities.assign(sc.users, sc.utility);
    cfg.mo_target.assign(sc.users, sc.mo_target);
    return cfg;
}

/// One (size, scheme) cell. Errors are captured, never thrown.
inline SchemeRun run_cell(const Scenario& sc, Scheme scheme, const FluidProblem& problem,
                          std::span<const double> w0) {
    SchemeRun run;
    run.scheme = scheme;
    run.model = sc.delay_model;
    run.w0.assign(w0.begin(), w0.end());
    try {
        FluidOptions opt;
        opt.model = run.model;
        FluidSolver solver(problem, opt);
        const ControllerConfig cfg = controller_config(sc, scheme);
        const auto start = std::chrono::steady_clock::now();
        ConvergenceResult res = run_to_convergence(cfg, w0, solver);
        run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        run.converged = res.converged;
        run.iterations = res.iterations;
        run.w_star = res.state.w;
        run.x_star = res.fluid.x;
        run.backlog = res.final_backlog;
        run.final_V = res.final_V;
        for (double s : run.backlog) run.fixed_point_residual = std::max(run.fixed_point_residual, std::abs(s));
        run.trajectory = std::move(res.state.trajectory);
        run.diagnostics = std::move(res.diagnostics);
    } catch (const std::exception& e) {
        run.error = e.what();
    }
    return run;
}

inline ComparisonReport run_scenario(const Scenario& sc) {
    sc.validate();
    ComparisonReport report;
    report.scenario = sc;

    Rng rng(sc.evolution.rng_seed);
    NetworkSnapshot net = new_seed_network(sc.evolution.n0, sc.evolution.topology, rng);
    std::string placement_error;

    for (std::size_t size : sc.sizes) {
        SizeResult sr;
        sr.size = size;
        try {
            net = evolve_to_size(net, sc.evolution, size, rng);
        } catch (const std::exception& e) {
            sr.error = std::string("evolution: ") + e.what();
            report.sizes.push_back(std::move(sr));
            break;  // later sizes cannot be reached
        }
        sr.snapshot = net;
        sr.link_count = net.link_count();
        try {
            sr.alpha_hat = fit_power_law_exponent(net, sc.power_law_kmin);
        } catch (const InsufficientData& e) {
            sr.alpha_note = e.what();
        }

        if (report.endpoints.empty() && placement_error.empty()) {
            try {
                report.endpoints = place_users(net, sc.users, rng);
            } catch (const std::exception& e) {
                placement_error = std::string("placement: ") + e.what();
            }
        }
        if (!placement_error.empty()) {
            sr.error = placement_error;
            report.sizes.push_back(std::move(sr));
            continue;
        }

        FluidProblem problem;
        std::vector<double> w0;
        try {
            for (std::size_t u = 0; u < sc.users; ++u)
                sr.routes.push_back(
                    shortest_route(net, report.endpoints[u].first, report.endpoints[u].second, u));
            problem = FluidProblem::from_routes(sr.routes, net);
            w0 = initial_windows(problem, sc.initial_rate);
        } catch (const std::exception& e) {
            sr.error = std::string("routing: ") + e.what();
            report.sizes.push_back(std::move(sr));
            continue;
        }

        if (sc.parallel) {
            std::vector<std::future<SchemeRun>> cells;
            for (Scheme scheme : sc.schemes)
                cells.push_back(std::async(std::launch::async, [&, scheme] {
                    return run_cell(sc, scheme, problem, w0);
                }));
            for (auto& c : cells) sr.runs.push_back(c.get());
        } else {
            for (Scheme scheme : sc.schemes) sr.runs.push_back(run_cell(sc, scheme, problem, w0));
        }

        for (const auto& run : sr.runs)
            if (run.scheme == Scheme::La && run.error.empty()) {
                try {
                    Rng fair_rng(sc.evolution.rng_seed ^ (0x9e3779b97f4a7c15ULL * (size + 1)));
                    const auto alts =
                        sample_feasible_rates(problem, run.x_star, sc.fairness_samples, fair_rng);
                    sr.fairness = proportional_fairness_check(problem, run.x_star, alts);
                } catch (const std::exception&) {
                    sr.fairness.reset();
                }
            }
        report.sizes.push_back(std::move(sr));
    }
    return report;
}

// ---------------------------------------------------------------------------
// Serialization.

inline nlohmann::json scenario_to_json(const Scenario& sc) {
    nlohmann::json schemes = nlohmann::json::array();
    for (Scheme s : sc.schemes) schemes.push_back(std::string(to_string(s)));
    return {
        {"n0", sc.evolution.n0},
        {"M", sc.evolution.M},
        {"beta", sc.evolution.beta},
        {"gamma", sc.evolution.gamma},
        {"seed", sc.evolution.rng_seed},
        {"topology", sc.evolution.topology == SeedTopology::Complete ? "complete" : "ring"},
        {"sizes", sc.sizes},
        {"users", sc.users},
        {"schemes", schemes},
        {"kappa", sc.kappa},
        {"alpha", sc.alpha},
        {"step", sc.step},
        {"max_iter", sc.max_iter},
        {"tol", sc.tol},
        {"dwell", sc.dwell},
        {"sample_every", sc.sample_every},
        {"table1_size", sc.table1()},
        {"utility", {{"a", sc.utility.a}, {"b", sc.utility.b}}},
        {"initial_rate", sc.initial_rate},
        {"mo_target", sc.mo_target},
        {"delay_model", to_string(sc.delay_model)},
        {"power_law_kmin", sc.power_law_kmin},
        {"fairness_samples", sc.fairness_samples},
        {"parallel", sc.parallel},
    };
}

inline nlohmann::json run_to_json(const SchemeRun& run, bool include_timing) {
    nlohmann::json j = {
        {"scheme", std::string(to_string(run.scheme))},
        {"delay_model", to_string(run.model)},
        {"converged", run.converged},
        {"iterations", run.iterations},
        {"w0", run.w0},
        {"w_star", run.w_star},
        {"x_star", run.x_star},
        {"backlog", run.backlog},
        {"final_V", run.final_V},
        {"fixed_point_residual", run.fixed_point_residual},
        {"diagnostics", run.diagnostics},
        {"error", run.error},
    };
    nlohmann::json v = nlohmann::json::array();
    for (const auto& s : run.trajectory) v.push_back({s.iteration, s.V});
    j["V_trajectory"] = v;
    if (include_timing) j["seconds"] = run.seconds;
    return j;
}

inline nlohmann::json report_to_json(const ComparisonReport& report, bool include_timing = true) {
    nlohmann::json endpoints = nlohmann::json::array();
    for (const auto& [s, d] : report.endpoints) endpoints.push_back({s, d});
    nlohmann::json sizes = nlohmann::json::array();
    for (const auto& sr : report.sizes) {
        nlohmann::json runs = nlohmann::json::array();
        for (const auto& run : sr.runs) runs.push_back(run_to_json(run, include_timing));
        nlohmann::json routes = nlohmann::json::array();
        for (const auto& r : sr.routes) routes.push_back(route_to_json(r));
        nlohmann::json j = {
            {"size", sr.size},
            {"links", sr.link_count},
            {"alpha_hat", sr.alpha_hat ? nlohmann::json(*sr.alpha_hat) : nlohmann::json(nullptr)},
            {"alpha_note", sr.alpha_note},
            {"routes", routes},
            {"runs", runs},
            {"error", sr.error},
        };
        if (sr.fairness)
            j["fairness"] = {{"samples", sr.fairness->aggregates.size()},
                             {"worst_aggregate", sr.fairness->worst},
                             {"pass", sr.fairness->pass}};
        sizes.push_back(std::move(j));
    }
    nlohmann::json out = {
        {"scenario", scenario_to_json(report.scenario)},
        {"endpoints", endpoints},
        {"sizes", sizes},
    };
    if (include_timing) {
        nlohmann::json ratios = nlohmann::json::object();
        for (const auto& [s, r] : speedup_summary(report)) ratios[std::string(to_string(s))] = r;
        out["speedup_vs_proposed"] = ratios;
    }
    return out;
}

}  // namespace tvcn
