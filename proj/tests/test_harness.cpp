#include "catch_amalgamated.hpp"

#include "oracles.hpp"
#include "tvcn/harness.hpp"

using Catch::Approx;
using tvcn::Scheme;

namespace {

tvcn::Scenario tiny() {
    tvcn::Scenario sc;
    sc.evolution.n0 = 3;
    sc.evolution.M = 3;
    sc.evolution.rng_seed = 5;
    sc.sizes = {3};
    sc.users = 1;
    sc.schemes = {Scheme::Proposed, Scheme::Mo, Scheme::La, Scheme::LaWD};
    sc.max_iter = 20000;
    return sc;
}

tvcn::Scenario small() {
    tvcn::Scenario sc;
    sc.evolution.rng_seed = 17;
    sc.sizes = {40, 80};
    sc.users = 2;
    sc.schemes = {Scheme::Mo, Scheme::La};
    sc.max_iter = 3000;
    return sc;
}

tvcn::FluidProblem shared_link(double c) {
    tvcn::FluidProblem p;
    p.capacity = {c};
    p.link_delay = {0.5};
    p.node_count = 4;
    p.users = {{{0}, {0, 1}}, {{0}, {2, 3}}};
    return p;
}

}  // namespace

TEST_CASE("single user on a triangle") {
    const auto report = tvcn::run_scenario(tiny());
    REQUIRE(report.sizes.size() == 1);
    const auto& sr = report.sizes[0];
    REQUIRE(sr.error.empty());
    CHECK(sr.link_count == 3);
    REQUIRE(sr.routes.size() == 1);
    CHECK(sr.routes[0].hop_count() == 1);
    REQUIRE(sr.runs.size() == 4);
    for (const auto& run : sr.runs) {
        INFO(tvcn::to_string(run.scheme) << ": " << run.error << run.diagnostics);
        CHECK(run.error.empty());
        CHECK(run.converged);
        CHECK(run.w_star.size() == 1);
        CHECK(run.final_V < 1e-6);
    }
}

TEST_CASE("same seed, same report") {
    auto sc = small();
    const auto a = tvcn::report_to_json(tvcn::run_scenario(sc), false).dump();
    const auto b = tvcn::report_to_json(tvcn::run_scenario(sc), false).dump();
    CHECK(a == b);
    sc.parallel = false;
    auto serial = tvcn::report_to_json(tvcn::run_scenario(sc), false);
    serial["scenario"]["parallel"] = true;
    CHECK(serial.dump() == a);
    sc.evolution.rng_seed = 18;
    CHECK(tvcn::report_to_json(tvcn::run_scenario(sc), false).dump() != a);
}

TEST_CASE("report covers every size and scheme") {
    const auto report = tvcn::run_scenario(small());
    REQUIRE(report.sizes.size() == 2);
    CHECK(report.endpoints.size() == 2);
    for (const auto& sr : report.sizes) {
        CHECK(sr.snapshot.node_count() == sr.size);
        CHECK(sr.runs.size() == 2);
        CHECK(sr.routes.size() == 2);
        for (const auto& run : sr.runs) CHECK(run.w0.size() == 2);
    }
    const auto j = tvcn::report_to_json(report);
    CHECK(j.at("sizes").size() == 2);
    CHECK(j.contains("speedup_vs_proposed"));
    CHECK(j.at("scenario").at("seed") == 17);
}

TEST_CASE("evolution failure stops later sizes") {
    auto sc = small();
    sc.evolution.beta = 0.2;
    sc.evolution.gamma = 0.6;
    sc.sizes = {60, 500};
    const auto report = tvcn::run_scenario(sc);
    REQUIRE_FALSE(report.sizes.empty());
    CHECK(report.sizes.back().error.find("evolution") == 0);
}

TEST_CASE("too few usable nodes for the users") {
    auto sc = tiny();
    sc.users = 2;
    const auto report = tvcn::run_scenario(sc);
    REQUIRE(report.sizes.size() == 1);
    CHECK(report.sizes[0].error.find("placement") == 0);
    CHECK(report.sizes[0].runs.empty());
}

TEST_CASE("scenario validation") {
    auto sc = small();
    sc.sizes = {80, 40};
    CHECK_THROWS_AS(sc.validate(), tvcn::InvalidParameter);
    sc = small();
    sc.sizes = {4};
    CHECK_THROWS_AS(sc.validate(), tvcn::InvalidParameter);
    sc = small();
    sc.schemes.clear();
    CHECK_THROWS_AS(sc.validate(), tvcn::InvalidParameter);
    sc = small();
    sc.table1_size = 50;
    CHECK_THROWS_AS(sc.validate(), tvcn::InvalidParameter);
    sc.table1_size = 40;
    CHECK_NOTHROW(sc.validate());
}

TEST_CASE("proportional fairness aggregates") {
    const auto p = shared_link(4.0);
    const std::vector<double> x_star{2.0, 2.0};
    const auto same = tvcn::proportional_fairness_check(p, x_star, {{2.0, 2.0}});
    CHECK(same.aggregates[0] == 0.0);
    CHECK(same.pass);
    const auto half = tvcn::proportional_fairness_check(p, x_star, {{1.0, 1.0}});
    CHECK(half.aggregates[0] == Approx(-1.0));
    const auto skew = tvcn::proportional_fairness_check(p, x_star, {{3.0, 1.0}});
    CHECK(skew.aggregates[0] == Approx(0.0).margin(1e-15));
    const auto unfair = tvcn::proportional_fairness_check(p, std::vector<double>{3.0, 1.0}, {{2.0, 2.0}});
    CHECK_FALSE(unfair.pass);
    CHECK(unfair.worst == Approx(2.0 / 3.0 - 1.0 + 1.0));
    CHECK_THROWS_WITH(tvcn::proportional_fairness_check(p, x_star, {{3.0, 3.0}}),
                      Catch::Matchers::ContainsSubstring("capacity of link 0"));
    CHECK_THROWS_AS(tvcn::proportional_fairness_check(p, std::vector<double>{0.0, 2.0}, {}),
                    tvcn::InvalidParameter);
}

TEST_CASE("sampled alternatives are feasible") {
    const auto p = shared_link(3.0);
    tvcn::Rng rng(3);
    const auto alts = tvcn::sample_feasible_rates(p, std::vector<double>{1.5, 1.5}, 500, rng);
    REQUIRE(alts.size() == 500);
    for (const auto& a : alts) {
        REQUIRE(a[0] + a[1] <= 3.0 * (1.0 + 1e-12));
        REQUIRE(a[0] >= 0.0);
    }
    CHECK_NOTHROW(tvcn::proportional_fairness_check(p, std::vector<double>{1.5, 1.5}, alts));
}

TEST_CASE("speedup ratios") {
    tvcn::ComparisonReport r;
    tvcn::SizeResult sr;
    for (Scheme s : {Scheme::Proposed, Scheme::Mo, Scheme::La}) {
        tvcn::SchemeRun run;
        run.scheme = s;
        run.seconds = 2.0;
        sr.runs.push_back(run);
    }
    r.sizes.push_back(sr);
    auto ratios = tvcn::speedup_summary(r);
    CHECK(ratios.at(Scheme::Mo) == 1.0);
    CHECK(ratios.at(Scheme::La) == 1.0);

    // A failed cell does not count toward the mean.
    tvcn::SizeResult more = sr;
    more.runs[1].seconds = 100.0;
    more.runs[1].error = "boom";
    more.runs[2].seconds = 4.0;
    r.sizes.push_back(more);
    ratios = tvcn::speedup_summary(r);
    CHECK(ratios.at(Scheme::Mo) == 1.0);
    CHECK(ratios.at(Scheme::La) == Approx(1.5));
    CHECK(tvcn::speedup_summary(tvcn::ComparisonReport{}).empty());
}
