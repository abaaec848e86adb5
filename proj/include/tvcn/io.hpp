#pragma once

// Scenario configuration files and report emission.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "tvcn/common.hpp"
#include "tvcn/control.hpp"
#include "tvcn/graph.hpp"
#include "tvcn/harness.hpp"

namespace tvcn {

struct ParsedConfig {
    Scenario scenario;
    bool seed_generated = false;
};

namespace detail {

template <class T>
T field(const nlohmann::json& doc, const std::string& key, const T& fallback) {
    if (!doc.contains(key)) return fallback;
    try {
        return doc.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(key + ": " + e.what());
    }
}

inline std::uint64_t fresh_seed() {
    std::random_device rd;
    return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

inline DelayModel parse_delay_model(const std::string& name) {
    for (DelayModel m : {DelayModel::Dynamic, DelayModel::Frozen, DelayModel::Propagation})
        if (name == to_string(m)) return m;
    throw InvalidParameter("unknown delay model '" + name + "'");
}

}  // namespace detail

/// Builds a validated Scenario from a JSON object. Missing fields take their
/// defaults; a missing seed is drawn fresh and flagged so it can be echoed.
inline ParsedConfig parse_config(const nlohmann::json& doc) {
    if (!doc.is_object()) throw ParseError("config: expected a JSON object");
    static const std::set<std::string> known = {
        "n0", "M", "beta", "gamma", "seed", "topology", "sizes", "users", "schemes",
        "kappa", "alpha", "step", "max_iter", "tol", "dwell", "sample_every", "table1_size",
        "utility", "initial_rate", "mo_target", "delay_model", "power_law_kmin",
        "fairness_samples", "parallel"};
    for (const auto& [key, value] : doc.items())
        if (!known.contains(key)) throw ParseError(key + ": unknown field");

    ParsedConfig out;
    Scenario& sc = out.scenario;
    auto& ev = sc.evolution;
    ev.n0 = detail::field(doc, "n0", ev.n0);
    ev.M = detail::field(doc, "M", ev.M);
    ev.beta = detail::field(doc, "beta", ev.beta);
    ev.gamma = detail::field(doc, "gamma", ev.gamma);
    if (doc.contains("seed")) {
        ev.rng_seed = detail::field<std::uint64_t>(doc, "seed", 0);
    } else {
        ev.rng_seed = detail::fresh_seed();
        out.seed_generated = true;
    }
    const auto topology = detail::field<std::string>(doc, "topology", "complete");
    if (topology == "complete") ev.topology = SeedTopology::Complete;
    else if (topology == "ring") ev.topology = SeedTopology::Ring;
    else throw ParseError("topology: expected \"complete\" or \"ring\", got \"" + topology + "\"");

    sc.sizes = detail::field(doc, "sizes", sc.sizes);
    sc.users = detail::field(doc, "users", sc.users);
    if (doc.contains("schemes")) {
        sc.schemes.clear();
        const auto names = detail::field<std::vector<std::string>>(doc, "schemes", {});
        for (std::size_t k = 0; k < names.size(); ++k) {
            try {
                sc.schemes.push_back(parse_scheme(names[k]));
            } catch (const Error& e) {
                throw ParseError("schemes[" + std::to_string(k) + "]: " + e.what());
            }
        }
    }
    sc.kappa = detail::field(doc, "kappa", sc.kappa);
    sc.alpha = detail::field(doc, "alpha", sc.alpha);
    sc.step = detail::field(doc, "step", sc.step);
    sc.max_iter = detail::field(doc, "max_iter", sc.max_iter);
    sc.tol = detail::field(doc, "tol", sc.tol);
    sc.dwell = detail::field(doc, "dwell", sc.dwell);
    sc.sample_every = detail::field(doc, "sample_every", sc.sample_every);
    if (doc.contains("table1_size")) sc.table1_size = detail::field<std::size_t>(doc, "table1_size", 0);
    if (doc.contains("utility")) {
        const auto& u = doc.at("utility");
        if (!u.is_object()) throw ParseError("utility: expected an object with a and b");
        for (const auto& [key, value] : u.items())
            if (key != "a" && key != "b") throw ParseError("utility." + key + ": unknown field");
        try {
            sc.utility.a = detail::field(u, "a", sc.utility.a);
            sc.utility.b = detail::field(u, "b", sc.utility.b);
        } catch (const ParseError& e) {
            throw ParseError(std::string("utility.") + e.what());
        }
    }
    sc.initial_rate = detail::field(doc, "initial_rate", sc.initial_rate);
    sc.mo_target = detail::field(doc, "mo_target", sc.mo_target);
    if (doc.contains("delay_model")) {
        try {
            sc.delay_model = detail::parse_delay_model(detail::field<std::string>(doc, "delay_model", ""));
        } catch (const InvalidParameter& e) {
            throw ParseError(std::string("delay_model: ") + e.what());
        }
        if (sc.delay_model == DelayModel::Frozen)
            throw ParseError("delay_model: \"frozen\" needs per-user delays and is not a scenario option");
    }
    sc.power_law_kmin = detail::field(doc, "power_law_kmin", sc.power_law_kmin);
    sc.fairness_samples = detail::field(doc, "fairness_samples", sc.fairness_samples);
    sc.parallel = detail::field(doc, "parallel", sc.parallel);

    try {
        sc.validate();
    } catch (const InvalidParameter& e) {
        throw ParseError(std::string("config: ") + e.what());
    }
    return out;
}

inline ParsedConfig parse_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path.string() + ": cannot open");
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": malformed JSON: " + e.what());
    }
    return parse_config(doc);
}

// ---------------------------------------------------------------------------
// Emission.

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string format_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

struct ManifestEntry {
    std::string path;  // relative to the output directory
    std::size_t bytes = 0;
    std::string checksum;
};

struct Manifest {
    std::vector<ManifestEntry> files;

    nlohmann::json to_json() const {
        nlohmann::json j = nlohmann::json::array();
        for (const auto& f : files)
            j.push_back({{"path", f.path}, {"bytes", f.bytes}, {"fnv1a64", f.checksum}});
        return j;
    }
};

inline std::string table1_csv(const ComparisonReport& report) {
    const std::size_t target = report.scenario.table1();
    std::ostringstream out;
    out << "size,user,w0";
    for (Scheme s : report.scenario.schemes) out << ",w_star_" << to_string(s);
    for (Scheme s : report.scenario.schemes) out << ",iterations_" << to_string(s);
    out << "\n";
    for (const auto& sr : report.sizes) {
        if (sr.size != target || sr.runs.empty()) continue;
        for (std::size_t u = 0; u < report.scenario.users; ++u) {
            out << sr.size << "," << u + 1 << ","
                << (sr.runs.front().w0.size() > u ? format_number(sr.runs.front().w0[u]) : "");
            for (const auto& run : sr.runs)
                out << "," << (run.error.empty() && run.w_star.size() > u ? format_number(run.w_star[u]) : "");
            for (const auto& run : sr.runs)
                out << "," << (run.error.empty() ? std::to_string(run.iterations) : "");
            out << "\n";
        }
    }
    return out.str();
}

inline std::string table3_csv(const ComparisonReport& report) {
    std::ostringstream out;
    out << "user,scheme";
    for (const auto& sr : report.sizes) out << "," << sr.size;
    out << "\n";
    for (std::size_t u = 0; u < report.scenario.users; ++u)
        for (std::size_t k = 0; k < report.scenario.schemes.size(); ++k) {
            out << u + 1 << "," << to_string(report.scenario.schemes[k]);
            for (const auto& sr : report.sizes) {
                out << ",";
                if (k < sr.runs.size() && sr.runs[k].error.empty() && sr.runs[k].w_star.size() > u)
                    out << format_number(sr.runs[k].w_star[u]);
            }
            out << "\n";
        }
    return out.str();
}

inline std::string table4_csv(const ComparisonReport& report) {
    std::ostringstream out;
    out << "size";
    for (Scheme s : report.scenario.schemes) out << "," << to_string(s);
    out << "\n";
    for (const auto& sr : report.sizes) {
        out << sr.size;
        for (const auto& run : sr.runs) out << "," << (run.error.empty() ? format_number(run.seconds) : "");
        out << "\n";
    }
    return out.str();
}

/// iteration,user,w,x,s,V_contrib with V_contrib = f_i^2 / 2.
inline std::string trajectory_csv(const SchemeRun& run) {
    std::ostringstream out;
    out << "iteration,user,w,x,s,V_contrib\n";
    for (const auto& smp : run.trajectory)
        for (std::size_t u = 0; u < smp.w.size(); ++u)
            out << smp.iteration << "," << u + 1 << "," << format_number(smp.w[u]) << ","
                << format_number(smp.x[u]) << "," << format_number(smp.s[u]) << ","
                << format_number(0.5 * smp.f[u] * smp.f[u]) << "\n";
    return out.str();
}

/// Writes report.json, the three tables, per-cell trajectories and the
/// snapshot at each size. On any failure every file written so far is
/// removed and EmissionError is thrown.
inline Manifest emit_outputs(const ComparisonReport& report, const std::filesystem::path& dir,
                             bool include_timing = true) {
    namespace fs = std::filesystem;
    std::vector<std::pair<std::string, std::string>> files;
    files.emplace_back("report.json", report_to_json(report, include_timing).dump(2) + "\n");
    if (!report.sizes.empty()) {
        files.emplace_back("table1.csv", table1_csv(report));
        files.emplace_back("table3.csv", table3_csv(report));
        files.emplace_back("table4.csv", table4_csv(report));
        for (const auto& sr : report.sizes) {
            if (sr.snapshot.node_count() > 0)
                files.emplace_back("snapshots/size" + std::to_string(sr.size) + ".json",
                                   snapshot_to_json(sr.snapshot).dump() + "\n");
            for (const auto& run : sr.runs)
                if (run.error.empty())
                    files.emplace_back("trajectories/size" + std::to_string(sr.size) + "_" +
                                           std::string(to_string(run.scheme)) + ".csv",
                                       trajectory_csv(run));
        }
    }

    Manifest manifest;
    std::vector<fs::path> written;
    std::vector<fs::path> created_dirs;
    auto rollback = [&] {
        std::error_code ec;
        for (const auto& p : written) fs::remove(p, ec);
        for (auto it = created_dirs.rbegin(); it != created_dirs.rend(); ++it) fs::remove(*it, ec);
    };
    try {
        for (const auto& [rel, body] : files) {
            const fs::path target = dir / rel;
            for (fs::path parent = target.parent_path(); !parent.empty() && !fs::exists(parent);
                 parent = parent.parent_path())
                created_dirs.insert(created_dirs.begin(), parent);
            std::error_code ec;
            fs::create_directories(target.parent_path(), ec);
            if (ec) throw EmissionError(target.parent_path().string() + ": " + ec.message());
            std::ofstream out(target, std::ios::binary | std::ios::trunc);
            if (!out) throw EmissionError(target.string() + ": cannot open for writing");
            written.push_back(target);
            out << body;
            out.close();
            if (!out) throw EmissionError(target.string() + ": write failed");
            char hex[17];
            std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(fnv1a(body)));
            manifest.files.push_back({rel, body.size(), hex});
        }
    } catch (...) {
        rollback();
        throw;
    }
    return manifest;
}

}  // namespace tvcn
