#include "catch_amalgamated.hpp"

#include "oracles.hpp"
#include "tvcn/evolution.hpp"
#include "tvcn/routing.hpp"

using tvcn::LinkKey;
using tvcn::NetworkSnapshot;
using tvcn::NodeId;

namespace {

NetworkSnapshot from_links(std::size_t n, const std::vector<std::pair<NodeId, NodeId>>& links) {
    NetworkSnapshot s(n);
    for (auto [a, b] : links) s.add_link(a, b, 0.5);
    return s;
}

tvcn::Route manual_route(std::size_t user, std::vector<NodeId> nodes) {
    tvcn::Route r;
    r.user = user;
    r.nodes = nodes;
    for (std::size_t k = 0; k + 1 < nodes.size(); ++k) r.links.emplace_back(nodes[k], nodes[k + 1]);
    return r;
}

}  // namespace

TEST_CASE("a direct link is the route") {
    const auto s = from_links(3, {{0, 1}, {1, 2}, {0, 2}});
    const auto r = tvcn::shortest_route(s, 0, 2, 4);
    CHECK(r.nodes == std::vector<NodeId>{0, 2});
    CHECK(r.hop_count() == 1);
    CHECK(r.user == 4);
    CHECK(r.bottleneck_capacity == 4.0);
}

TEST_CASE("diamond prefers the wider two-hop path") {
    // s=0, a=1, b=2, t=3; leaves 4 (on s), 5 (on t), 6 and 7 (on b).
    // Through a: min(3*2, 2*3) = 6. Through b: min(3*4, 4*3) = 12.
    const auto s = from_links(8, {{0, 1}, {1, 3}, {0, 2}, {2, 3}, {0, 4}, {3, 5}, {2, 6}, {2, 7}});
    const auto r = tvcn::shortest_route(s, 0, 3);
    CHECK(r.nodes == std::vector<NodeId>{0, 2, 3});
    CHECK(r.bottleneck_capacity == 12.0);
    CHECK(oracle::best_path(s, 0, 3) == r.nodes);
}

TEST_CASE("equal paths break ties lexicographically") {
    const auto s = from_links(4, {{0, 1}, {0, 2}, {1, 3}, {2, 3}});
    CHECK(tvcn::shortest_route(s, 0, 3).nodes == std::vector<NodeId>{0, 1, 3});
}

TEST_CASE("routing errors") {
    const auto s = from_links(4, {{0, 1}, {2, 3}});
    CHECK_THROWS_AS(tvcn::shortest_route(s, 0, 3), tvcn::UnreachableError);
    CHECK_THROWS_AS(tvcn::shortest_route(s, 0, 0), tvcn::InvalidParameter);
    CHECK_THROWS_AS(tvcn::shortest_route(s, 0, 9), tvcn::LookupError);
}

TEST_CASE("routes match exhaustive enumeration on small evolved graphs") {
    for (std::uint64_t seed = 1; seed <= 15; ++seed) {
        tvcn::EvolutionParams params;
        params.rng_seed = seed;
        tvcn::Rng rng(seed);
        auto g = tvcn::new_seed_network(5, tvcn::SeedTopology::Ring, rng);
        g = tvcn::evolve_to_size(g, params, 10, rng);
        for (NodeId a = 0; a < g.node_count(); ++a)
            for (NodeId b = 0; b < g.node_count(); ++b) {
                if (a == b) continue;
                const auto r = tvcn::shortest_route(g, a, b);
                REQUIRE(r.nodes == oracle::best_path(g, a, b));
                double width = 1e300;
                for (const auto& l : r.links) width = std::min(width, tvcn::link_capacity(g, l));
                REQUIRE(r.bottleneck_capacity == width);
                REQUIRE(r.hop_count() + 1 == r.nodes.size());
                REQUIRE(tvcn::shortest_route(g, a, b).nodes == r.nodes);
            }
    }
}

TEST_CASE("routing matrix for the three-user fixture") {
    // Nodes 1..6 relabelled 0..5: routes 3-1-6, 1-4 and 6-5-4-2.
    const auto s = from_links(6, {{2, 0}, {0, 5}, {0, 3}, {5, 4}, {4, 3}, {3, 1}});
    const std::vector<tvcn::Route> routes{manual_route(0, {2, 0, 5}), manual_route(1, {0, 3}),
                                          manual_route(2, {5, 4, 3, 1})};
    const auto a = tvcn::build_routing_matrix(routes, s);
    CHECK(a.users() == 3);
    CHECK(a.links() == 6);
    CHECK(a.row_sum(0) == 2);
    CHECK(a.row_sum(1) == 1);
    CHECK(a.row_sum(2) == 3);
    CHECK(a(2, a.column_of({3, 4})) == 1);
    CHECK(a(0, a.column_of({3, 4})) == 0);
    for (std::size_t u = 0; u < 3; ++u)
        for (std::size_t c = 0; c < 6; ++c) CHECK((a(u, c) == 0 || a(u, c) == 1));
    CHECK(a.used_columns().size() == 6);
}

TEST_CASE("routing matrix edge cases") {
    const auto s = from_links(3, {{0, 1}, {1, 2}});
    const auto empty = tvcn::build_routing_matrix({}, s);
    CHECK(empty.users() == 0);
    CHECK(empty.links() == 2);
    const std::vector<tvcn::Route> stale{manual_route(0, {0, 2})};
    CHECK_THROWS_AS(tvcn::build_routing_matrix(stale, s), tvcn::ConsistencyError);
    CHECK_THROWS_AS(empty.column_of({0, 2}), tvcn::ConsistencyError);
}

TEST_CASE("route JSON lines") {
    const auto s = from_links(3, {{0, 1}, {1, 2}});
    const auto r = tvcn::shortest_route(s, 0, 2);
    const auto line = tvcn::routes_to_json_lines({r});
    const auto j = nlohmann::json::parse(line);
    CHECK(j.at("nodes") == nlohmann::json({0, 1, 2}));
    CHECK(j.at("bottleneck") == 2.0);
    CHECK(j.at("links")[1] == nlohmann::json({1, 2}));
}
