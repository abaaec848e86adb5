// tvcn: command-line front end.
//
//   tvcn generate  --config cfg.json --out dir      evolve and save snapshots
//   tvcn simulate  --config cfg.json --scheme La    one scheme, all sizes
//   tvcn compare   --config cfg.json --out dir      every scheme, all sizes
//   tvcn stability --state state.json              Lyapunov report at a state
//   tvcn fitdist   --snapshot snap.json --kmin 6    power-law exponent
//
// Exit codes: 0 ok, 1 configuration error, 2 a cell did not converge, 3 I/O.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "tvcn/tvcn.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kNotConverged = 2;
constexpr int kIoError = 3;

struct Overrides {
    std::string config;
    std::string out = "out";
    std::optional<std::uint64_t> seed;
    std::optional<std::string> scheme;
    std::optional<double> gain;
    std::optional<double> tol;
    std::optional<std::size_t> max_iter;
};

tvcn::ParsedConfig load_scenario(const Overrides& o) {
    tvcn::ParsedConfig cfg;
    if (!o.config.empty()) {
        cfg = tvcn::parse_config_file(o.config);
    } else {
        cfg = tvcn::parse_config(json::object());
    }
    auto& sc = cfg.scenario;
    if (o.seed) {
        sc.evolution.rng_seed = *o.seed;
        cfg.seed_generated = false;
    }
    if (o.scheme) sc.schemes = {tvcn::parse_scheme(*o.scheme)};
    if (o.gain) sc.kappa = sc.alpha = *o.gain;
    if (o.tol) sc.tol = *o.tol;
    if (o.max_iter) sc.max_iter = *o.max_iter;
    sc.validate();
    if (cfg.seed_generated) std::cerr << "seed: " << sc.evolution.rng_seed << " (generated)\n";
    return cfg;
}

json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw tvcn::EmissionError(path + ": cannot open");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw tvcn::ParseError(path + ": " + e.what());
    }
}

void write_text(const fs::path& path, const std::string& body) {
    std::error_code ec;
    if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw tvcn::EmissionError(path.string() + ": cannot open for writing");
    out << body;
    if (!out) throw tvcn::EmissionError(path.string() + ": write failed");
}

int report_exit(const tvcn::ComparisonReport& report) {
    bool all_ok = true;
    for (const auto& sr : report.sizes) {
        if (!sr.error.empty()) {
            std::cerr << "size " << sr.size << ": " << sr.error << "\n";
            all_ok = false;
        }
        for (const auto& run : sr.runs) {
            if (!run.error.empty())
                std::cerr << "size " << sr.size << " " << tvcn::to_string(run.scheme)
                          << ": error: " << run.error << "\n";
            else if (!run.converged)
                std::cerr << "size " << sr.size << " " << tvcn::to_string(run.scheme) << ": "
                          << run.diagnostics << "\n";
            all_ok = all_ok && run.error.empty() && run.converged;
        }
    }
    return all_ok ? kOk : kNotConverged;
}

// state.json: {snapshot, users: [[src, dst], ...], windows?: [...],
// utility?: {a, b}, delay_model?: "dynamic"}.
json state_json(const tvcn::ComparisonReport& report, const tvcn::SchemeRun& run,
                const tvcn::SizeResult& sr) {
    json users = json::array();
    for (const auto& [s, d] : report.endpoints) users.push_back({s, d});
    return {{"snapshot", tvcn::snapshot_to_json(sr.snapshot)},
            {"users", users},
            {"windows", run.w_star},
            {"scheme", std::string(tvcn::to_string(run.scheme))},
            {"utility", {{"a", report.scenario.utility.a}, {"b", report.scenario.utility.b}}},
            {"delay_model", tvcn::to_string(report.scenario.delay_model)}};
}

int cmd_generate(const Overrides& o) {
    const auto cfg = load_scenario(o);
    const auto& sc = cfg.scenario;
    tvcn::Rng rng(sc.evolution.rng_seed);
    auto net = tvcn::new_seed_network(sc.evolution.n0, sc.evolution.topology, rng);
    write_text(fs::path(o.out) / "scenario.json", tvcn::scenario_to_json(sc).dump(2) + "\n");
    json summary = json::array();
    for (std::size_t size : sc.sizes) {
        net = tvcn::evolve_to_size(net, sc.evolution, size, rng);
        const fs::path file = fs::path(o.out) / "snapshots" / ("size" + std::to_string(size) + ".json");
        write_text(file, tvcn::snapshot_to_json(net).dump() + "\n");
        json row = {{"size", size}, {"links", net.link_count()}, {"file", file.string()}};
        try {
            row["alpha_hat"] = tvcn::fit_power_law_exponent(net, sc.power_law_kmin);
        } catch (const tvcn::InsufficientData& e) {
            row["alpha_hat"] = nullptr;
            row["note"] = e.what();
        }
        summary.push_back(row);
    }
    std::cout << json({{"seed", sc.evolution.rng_seed}, {"sizes", summary}}).dump(2) << "\n";
    return kOk;
}

int cmd_run(const Overrides& o, bool single) {
    if (single && !o.scheme) throw tvcn::InvalidParameter("simulate needs --scheme");
    const auto cfg = load_scenario(o);
    const auto report = tvcn::run_scenario(cfg.scenario);
    const auto manifest = tvcn::emit_outputs(report, o.out);
    json out = {{"seed", cfg.scenario.evolution.rng_seed}, {"files", manifest.to_json()}};
    if (single && !report.sizes.empty() && !report.sizes.back().runs.empty() &&
        report.sizes.back().runs.front().error.empty()) {
        const fs::path state = fs::path(o.out) / "state.json";
        write_text(state, state_json(report, report.sizes.back().runs.front(), report.sizes.back()).dump() + "\n");
        out["state"] = state.string();
    }
    std::cout << out.dump(2) << "\n";
    return report_exit(report);
}

int cmd_stability(const Overrides& o, const std::string& state_path, bool dump) {
    const json doc = read_json(state_path);
    tvcn::NetworkSnapshot net;
    std::vector<tvcn::Route> routes;
    tvcn::UtilityParams util;
    tvcn::DelayModel model = tvcn::DelayModel::Dynamic;
    std::vector<double> windows;
    try {
        net = tvcn::snapshot_from_json(doc.at("snapshot"));
        std::size_t u = 0;
        for (const auto& pair : doc.at("users"))
            routes.push_back(tvcn::shortest_route(net, pair.at(0).get<tvcn::NodeId>(),
                                                  pair.at(1).get<tvcn::NodeId>(), u++));
        if (doc.contains("utility")) {
            util.a = doc["utility"].value("a", util.a);
            util.b = doc["utility"].value("b", util.b);
        }
        if (doc.value("delay_model", "dynamic") == "propagation") model = tvcn::DelayModel::Propagation;
        if (doc.contains("windows")) windows = doc.at("windows").get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw tvcn::ParseError(state_path + ": " + e.what());
    }
    const auto problem = tvcn::FluidProblem::from_routes(routes, net);
    const std::vector<tvcn::UtilityParams> utils(routes.size(), util);
    tvcn::FluidOptions opt;
    opt.model = model;

    bool converged = true;
    if (windows.empty()) {
        // No windows saved: drive the proposed law to its fixed point first.
        tvcn::ControllerConfig cc;
        cc.utilities = utils;
        if (o.gain) cc.gain = *o.gain;
        if (o.tol) cc.tol = *o.tol;
        if (o.max_iter) cc.max_iter = *o.max_iter;
        tvcn::FluidSolver solver(problem, opt);
        const auto res = tvcn::run_to_convergence(cc, tvcn::initial_windows(problem, 10.0), solver);
        windows = res.state.w;
        converged = res.converged;
    }
    if (windows.size() != routes.size())
        throw tvcn::ParseError(state_path + ": windows: expected one per user");
    const auto fluid = tvcn::solve_fluid(problem, windows, opt);
    tvcn::StabilityOptions so;
    if (o.gain) so.kappa = *o.gain;
    const auto rep = tvcn::build_stability_report(problem, fluid, windows, utils, so);
    json out = tvcn::stability_to_json(rep, dump);
    out["windows"] = windows;
    out["x"] = fluid.x;
    const std::string body = out.dump(2) + "\n";
    if (!o.out.empty() && o.out != "-") write_text(fs::path(o.out) / "stability.json", body);
    std::cout << body;
    return converged ? kOk : kNotConverged;
}

int cmd_fitdist(const Overrides& o, const std::string& snapshot_path, std::optional<std::size_t> k) {
    tvcn::NetworkSnapshot net;
    std::size_t kmin = k.value_or(tvcn::Scenario{}.power_law_kmin);
    if (!snapshot_path.empty()) {
        net = tvcn::snapshot_from_json(read_json(snapshot_path));
    } else {
        const auto cfg = load_scenario(o);
        kmin = k.value_or(cfg.scenario.power_law_kmin);
        tvcn::Rng rng(cfg.scenario.evolution.rng_seed);
        net = tvcn::new_seed_network(cfg.scenario.evolution.n0, cfg.scenario.evolution.topology, rng);
        net = tvcn::evolve_to_size(net, cfg.scenario.evolution, cfg.scenario.sizes.back(), rng);
    }
    const double alpha = tvcn::fit_power_law_exponent(net, kmin);
    std::cout << json({{"nodes", net.node_count()}, {"k_min", kmin}, {"alpha_hat", alpha}}).dump(2)
              << "\n";
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Congestion control on time-varying communication networks"};
    app.require_subcommand(1);
    Overrides o;
    std::string state_path;
    std::string snapshot_path;
    std::optional<std::size_t> kmin;
    bool dump = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "Scenario JSON file")->check(CLI::ExistingFile);
        sub->add_option("--out", o.out, "Output directory");
        sub->add_option("--seed", o.seed, "RNG seed override");
        sub->add_option("--gain", o.gain, "kappa / alpha override")->check(CLI::PositiveNumber);
        sub->add_option("--tol", o.tol, "Convergence tolerance")->check(CLI::PositiveNumber);
        sub->add_option("--max-iter", o.max_iter, "Iteration budget")->check(CLI::PositiveNumber);
    };
    auto* gen = app.add_subcommand("generate", "Evolve the network and save snapshots");
    add_common(gen);
    auto* sim = app.add_subcommand("simulate", "Run one scheme over the scenario");
    add_common(sim);
    sim->add_option("--scheme", o.scheme, "Proposed, Mo, La or LaWD")->required();
    auto* cmp = app.add_subcommand("compare", "Run every scheme over the scenario");
    add_common(cmp);
    cmp->add_option("--scheme", o.scheme, "Restrict to one scheme");
    auto* stab = app.add_subcommand("stability", "Stability report on a saved state");
    add_common(stab);
    stab->add_option("--state", state_path, "state.json from simulate")->required()->check(CLI::ExistingFile);
    stab->add_flag("--dump-matrices", dump, "Include J_x, J_q, J_f and Q");
    auto* fit = app.add_subcommand("fitdist", "Power-law exponent of a degree distribution");
    add_common(fit);
    fit->add_option("--snapshot", snapshot_path, "Snapshot JSON (otherwise evolve from --config)")
        ->check(CLI::ExistingFile);
    fit->add_option("--kmin", kmin, "Smallest degree in the tail")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kConfigError;
    }

    try {
        if (*gen) return cmd_generate(o);
        if (*sim) return cmd_run(o, true);
        if (*cmp) return cmd_run(o, false);
        if (*stab) return cmd_stability(o, state_path, dump);
        if (*fit) return cmd_fitdist(o, snapshot_path, kmin);
    } catch (const tvcn::EmissionError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kIoError;
    } catch (const tvcn::ParseError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const tvcn::InvalidParameter& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kNotConverged;
    }
    return kOk;
}
