#include "catch_amalgamated.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "tvcn/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using tvcn::Scheme;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("tvcn_io_" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

tvcn::ComparisonReport four_users() {
    auto parsed = tvcn::parse_config(json{{"seed", 3}, {"sizes", {40}}, {"users", 4},
                                          {"schemes", {"Proposed", "Mo", "La"}}, {"max_iter", 300}});
    return tvcn::run_scenario(parsed.scenario);
}

}  // namespace

TEST_CASE("minimal config takes defaults") {
    const auto parsed =
        tvcn::parse_config(json{{"n0", 5}, {"M", 5}, {"beta", 0.6}, {"gamma", 0.8}, {"sizes", {500}}, {"users", 4}});
    const auto& sc = parsed.scenario;
    CHECK(parsed.seed_generated);
    CHECK(sc.kappa == 0.1);
    CHECK(sc.alpha == 0.1);
    CHECK(sc.max_iter == 15000);
    CHECK(sc.tol == 1e-6);
    CHECK(sc.users == 4);
    CHECK(sc.sizes == std::vector<std::size_t>{500});
    CHECK(sc.schemes.size() == 4);
    CHECK(sc.delay_model == tvcn::DelayModel::Dynamic);
    CHECK(tvcn::scenario_to_json(sc).at("seed") == sc.evolution.rng_seed);
}

TEST_CASE("explicit seed is kept") {
    const auto parsed = tvcn::parse_config(json{{"seed", 42}});
    CHECK_FALSE(parsed.seed_generated);
    CHECK(parsed.scenario.evolution.rng_seed == 42);
}

TEST_CASE("config errors name the field") {
    auto message = [](const json& doc) {
        try {
            tvcn::parse_config(doc);
        } catch (const tvcn::ParseError& e) {
            return std::string(e.what());
        }
        return std::string("no error");
    };
    CHECK_THAT(message({{"beta", 1.2}}), Catch::Matchers::ContainsSubstring("beta must lie in (0,1)"));
    CHECK_THAT(message({{"bogus", 1}}), Catch::Matchers::ContainsSubstring("bogus: unknown field"));
    CHECK_THAT(message({{"sizes", "many"}}), Catch::Matchers::StartsWith("sizes:"));
    CHECK_THAT(message({{"schemes", {"La", "Reno"}}}), Catch::Matchers::StartsWith("schemes[1]:"));
    CHECK_THAT(message({{"utility", {{"c", 1}}}}), Catch::Matchers::StartsWith("utility.c"));
    CHECK_THAT(message({{"utility", {{"a", "x"}}}}), Catch::Matchers::StartsWith("utility.a"));
    CHECK_THAT(message({{"delay_model", "frozen"}}), Catch::Matchers::StartsWith("delay_model:"));
    CHECK_THAT(message({{"delay_model", "warp"}}), Catch::Matchers::StartsWith("delay_model:"));
    CHECK_THAT(message({{"topology", "mesh"}}), Catch::Matchers::StartsWith("topology:"));
    CHECK_THAT(message({{"sizes", {4}}}), Catch::Matchers::ContainsSubstring("n0"));
    CHECK_THAT(message(json::array()), Catch::Matchers::ContainsSubstring("object"));
}

TEST_CASE("config files") {
    TempDir dir("config");
    const auto good = dir.path / "good.json";
    std::ofstream(good) << R"({"seed": 9, "sizes": [20], "users": 1, "delay_model": "propagation"})";
    const auto parsed = tvcn::parse_config_file(good);
    CHECK(parsed.scenario.evolution.rng_seed == 9);
    CHECK(parsed.scenario.delay_model == tvcn::DelayModel::Propagation);

    const auto bad = dir.path / "bad.json";
    std::ofstream(bad) << R"({"seed": 9,)";
    CHECK_THROWS_WITH(tvcn::parse_config_file(bad), Catch::Matchers::ContainsSubstring("malformed JSON"));
    CHECK_THROWS_AS(tvcn::parse_config_file(dir.path / "missing.json"), tvcn::ParseError);
}

TEST_CASE("number formatting and checksums") {
    CHECK(tvcn::format_number(1.0) == "1");
    CHECK(tvcn::format_number(0.63291139) == "0.632911");
    CHECK(tvcn::format_number(123456789.0) == "1.23457e+08");
    CHECK(tvcn::fnv1a("") == 0xcbf29ce484222325ULL);
    CHECK(tvcn::fnv1a("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("empty report emits report.json only") {
    TempDir dir("empty");
    tvcn::ComparisonReport report;
    report.scenario.sizes = {10};
    const auto m = tvcn::emit_outputs(report, dir.path);
    REQUIRE(m.files.size() == 1);
    CHECK(m.files[0].path == "report.json");
    CHECK(m.files[0].bytes == fs::file_size(dir.path / "report.json"));
    CHECK(std::distance(fs::directory_iterator(dir.path), fs::directory_iterator{}) == 1);
}

TEST_CASE("tables for a four-user, three-scheme run") {
    const auto report = four_users();
    REQUIRE(report.sizes.size() == 1);
    REQUIRE(report.sizes[0].error.empty());
    const auto csv = tvcn::table1_csv(report);
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    CHECK(line ==
          "size,user,w0,w_star_Proposed,w_star_Mo,w_star_La,iterations_Proposed,iterations_Mo,iterations_La");
    int rows = 0;
    while (std::getline(in, line)) {
        ++rows;
        CHECK(std::count(line.begin(), line.end(), ',') == 8);
        CHECK(line.find(",,") == std::string::npos);
    }
    CHECK(rows == 4);
    CHECK(tvcn::table3_csv(report).rfind("user,scheme,40\n", 0) == 0);
    CHECK(tvcn::table4_csv(report).rfind("size,Proposed,Mo,La\n40,", 0) == 0);
}

TEST_CASE("outputs are reproducible apart from timing") {
    const auto a = four_users();
    const auto b = four_users();
    TempDir da("rerun_a"), db("rerun_b");
    const auto ma = tvcn::emit_outputs(a, da.path, false);
    const auto mb = tvcn::emit_outputs(b, db.path, false);
    REQUIRE(ma.files.size() == mb.files.size());
    std::map<std::string, std::string> sums;
    for (const auto& f : ma.files) sums[f.path] = f.checksum;
    CHECK(sums.count("table1.csv") == 1);
    CHECK(sums.count("snapshots/size40.json") == 1);
    CHECK(sums.count("trajectories/size40_Mo.csv") == 1);
    for (const auto& f : mb.files) {
        if (f.path == "table4.csv") continue;  // wall-clock seconds
        INFO(f.path);
        CHECK(sums.at(f.path) == f.checksum);
    }
    const auto traj = read_file(da.path / "trajectories/size40_La.csv");
    CHECK(traj.rfind("iteration,user,w,x,s,V_contrib\n0,1,", 0) == 0);
}

TEST_CASE("failed emission removes partial files") {
    const auto report = four_users();
    TempDir dir("rollback");
    // A plain file where the snapshots directory should go.
    std::ofstream(dir.path / "snapshots") << "occupied";
    CHECK_THROWS_AS(tvcn::emit_outputs(report, dir.path), tvcn::EmissionError);
    std::vector<std::string> left;
    for (const auto& e : fs::recursive_directory_iterator(dir.path))
        left.push_back(fs::relative(e.path(), dir.path).string());
    CHECK(left == std::vector<std::string>{"snapshots"});
}
