#include "catch_amalgamated.hpp"

#include "tvcn/graph.hpp"

using tvcn::LinkKey;
using tvcn::NetworkSnapshot;

namespace {

NetworkSnapshot star(std::size_t leaves) {
    NetworkSnapshot s(leaves + 1);
    for (tvcn::NodeId k = 1; k <= leaves; ++k) s.add_link(0, k, 0.5);
    return s;
}

}  // namespace

TEST_CASE("link keys are normalized") {
    CHECK(LinkKey(5, 2) == LinkKey(2, 5));
    CHECK(LinkKey(5, 2).u == 2);
}

TEST_CASE("degrees follow mutations") {
    NetworkSnapshot s = star(4);
    CHECK(s.degree(0) == 4);
    CHECK(s.degree(3) == 1);
    CHECK(s.total_degree() == 8);
    s.add_link(1, 2, 0.3);
    CHECK(s.degree(1) == 2);
    CHECK(s.remove_link(2, 1) == 0.3);
    CHECK(s.degree(1) == 1);
    CHECK(s.link_count() == 4);
}

TEST_CASE("simple-graph rules") {
    NetworkSnapshot s(3);
    s.add_link(0, 1, 0.2);
    CHECK_THROWS_AS(s.add_link(1, 1, 0.2), tvcn::InvalidParameter);
    CHECK_THROWS_AS(s.add_link(1, 0, 0.2), tvcn::InvalidParameter);
    CHECK_THROWS_AS(s.add_link(1, 2, 0.0), tvcn::InvalidParameter);
    CHECK_THROWS_AS(s.remove_link(0, 2), tvcn::LookupError);
}

TEST_CASE("capacity is the degree product") {
    // node 0 degree 3, node 1 degree 4
    NetworkSnapshot s(7);
    s.add_link(0, 1, 0.5);
    s.add_link(0, 2, 0.5);
    s.add_link(0, 3, 0.5);
    s.add_link(1, 4, 0.5);
    s.add_link(1, 5, 0.5);
    s.add_link(1, 6, 0.5);
    CHECK(tvcn::link_capacity(s, {0, 1}) == 12.0);
    CHECK(tvcn::link_capacity(s, {1, 4}) == 4.0);
    CHECK_THROWS_AS(tvcn::link_capacity(s, {2, 3}), tvcn::LookupError);

    NetworkSnapshot pair(2);
    pair.add_link(0, 1, 0.5);
    CHECK(tvcn::link_capacity(pair, {0, 1}) == 1.0);
}

TEST_CASE("connectivity") {
    NetworkSnapshot s(4);
    s.add_link(0, 1, 0.5);
    s.add_link(2, 3, 0.5);
    CHECK_FALSE(s.is_connected());
    CHECK(s.reachable(0, 1));
    CHECK_FALSE(s.reachable(0, 3));
    s.add_link(1, 2, 0.5);
    CHECK(s.is_connected());
}

TEST_CASE("snapshot JSON round trip") {
    NetworkSnapshot s = star(3);
    s.set_time_index(7);
    const auto j = tvcn::snapshot_to_json(s);
    CHECK(j.at("links").size() == 3);
    CHECK_FALSE(j.at("links")[0].contains("capacity"));
    const NetworkSnapshot back = tvcn::snapshot_from_json(j);
    CHECK(back == s);
    CHECK(back.time_index() == 7);
}

TEST_CASE("snapshot JSON errors name the field") {
    auto j = tvcn::snapshot_to_json(star(2));
    j["links"][1]["v"] = 0;
    j["links"][1]["u"] = 0;
    try {
        tvcn::snapshot_from_json(j);
        FAIL("expected ParseError");
    } catch (const tvcn::ParseError& e) {
        CHECK(std::string(e.what()).find("links[1]") != std::string::npos);
    }
    auto gap = tvcn::snapshot_to_json(star(2));
    gap["nodes"] = {0, 1, 5};
    CHECK_THROWS_AS(tvcn::snapshot_from_json(gap), tvcn::ParseError);
    CHECK_THROWS_AS(tvcn::snapshot_from_json(nlohmann::json::object()), tvcn::ParseError);
}
