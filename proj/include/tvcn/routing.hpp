#pragma once

#include <algorithm>
#include <cstddef>
#include <deque>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "tvcn/common.hpp"
#include "tvcn/graph.hpp"

namespace tvcn {

struct Route {
    std::size_t user = 0;
    std::vector<NodeId> nodes;  // source first, destination last
    std::vector<LinkKey> links;
    double bottleneck_capacity = 0.0;

    std::size_t hop_count() const { return links.size(); }
    NodeId source() const { return nodes.front(); }
    NodeId destination() const { return nodes.back(); }
};

namespace detail {

inline std::vector<std::size_t> hop_distances(const NetworkSnapshot& s, NodeId from) {
    constexpr auto kInf = std::numeric_limits<std::size_t>::max();
    std::vector<std::size_t> dist(s.node_count(), kInf);
    std::deque<NodeId> frontier{from};
    dist[from] = 0;
    while (!frontier.empty()) {
        const NodeId n = frontier.front();
        frontier.pop_front();
        for (NodeId m : s.neighbors(n))
            if (dist[m] == kInf) {
                dist[m] = dist[n] + 1;
                frontier.push_back(m);
            }
    }
    return dist;
}

}  // namespace detail

/// Minimum-hop route; among minimum-hop routes the one with the largest
/// bottleneck capacity; remaining ties go to the lexicographically smallest
/// node sequence.
inline Route shortest_route(const NetworkSnapshot& s, NodeId source, NodeId dest,
                            std::size_t user = 0) {
    if (!s.has_node(source) || !s.has_node(dest))
        throw LookupError("route endpoints " + std::to_string(source) + "->" +
                          std::to_string(dest) + " not in snapshot");
    if (source == dest) throw InvalidParameter("route source equals destination");

    constexpr auto kInf = std::numeric_limits<std::size_t>::max();
    const auto from_src = detail::hop_distances(s, source);
    if (from_src[dest] == kInf)
        throw UnreachableError("no path from " + std::to_string(source) + " to " +
                               std::to_string(dest));
    const auto to_dst = detail::hop_distances(s, dest);
    const std::size_t hops = from_src[dest];
    auto on_shortest = [&](NodeId n) {
        return from_src[n] != kInf && to_dst[n] != kInf && from_src[n] + to_dst[n] == hops;
    };

    // best[n]: largest bottleneck achievable from n to dest along a shortest path.
    std::vector<double> best(s.node_count(), 0.0);
    std::vector<std::vector<NodeId>> layers(hops + 1);
    for (NodeId n = 0; n < s.node_count(); ++n)
        if (on_shortest(n)) layers[from_src[n]].push_back(n);
    best[dest] = std::numeric_limits<double>::infinity();
    for (std::size_t layer = hops; layer-- > 0;)
        for (NodeId n : layers[layer])
            for (NodeId m : s.neighbors(n))
                if (on_shortest(m) && from_src[m] == layer + 1)
                    best[n] = std::max(best[n], std::min(link_capacity(s, {n, m}), best[m]));

    const double target = best[source];
    Route route;
    route.user = user;
    route.bottleneck_capacity = target;
    route.nodes.push_back(source);
    NodeId at = source;
    while (at != dest) {
        NodeId next = at;
        for (NodeId m : s.neighbors(at))  // ascending ids -> lexicographic tie-break
            if (on_shortest(m) && from_src[m] == from_src[at] + 1 &&
                link_capacity(s, {at, m}) >= target && best[m] >= target) {
                next = m;
                break;
            }
        route.links.emplace_back(at, next);
        route.nodes.push_back(next);
        at = next;
    }
    return route;
}

/// Dense user-by-link 0/1 matrix; columns follow the snapshot's link order.
class RoutingMatrix {
public:
    RoutingMatrix() = default;
    RoutingMatrix(std::size_t users, std::vector<LinkKey> columns)
        : users_(users), columns_(std::move(columns)), cells_(users_ * columns_.size(), 0) {
        for (std::size_t c = 0; c < columns_.size(); ++c) index_.emplace(columns_[c], c);
    }

    std::size_t users() const { return users_; }
    std::size_t links() const { return columns_.size(); }
    const std::vector<LinkKey>& columns() const { return columns_; }

    int operator()(std::size_t user, std::size_t link) const {
        return cells_[user * columns_.size() + link];
    }
    void set(std::size_t user, std::size_t link) { cells_[user * columns_.size() + link] = 1; }

    std::size_t column_of(const LinkKey& key) const {
        const auto it = index_.find(key);
        if (it == index_.end()) throw ConsistencyError("link " + to_string(key) + " not in matrix");
        return it->second;
    }

    std::size_t row_sum(std::size_t user) const {
        std::size_t sum = 0;
        for (std::size_t c = 0; c < columns_.size(); ++c) sum += (*this)(user, c);
        return sum;
    }

    /// Columns with at least one nonzero entry.
    std::vector<std::size_t> used_columns() const {
        std::vector<std::size_t> used;
        for (std::size_t c = 0; c < columns_.size(); ++c)
            for (std::size_t u = 0; u < users_; ++u)
                if ((*this)(u, c)) {
                    used.push_back(c);
                    break;
                }
        return used;
    }

private:
    std::size_t users_ = 0;
    std::vector<LinkKey> columns_;
    std::map<LinkKey, std::size_t> index_;
    std::vector<unsigned char> cells_;
};

inline RoutingMatrix build_routing_matrix(const std::vector<Route>& routes,
                                          const NetworkSnapshot& s) {
    std::vector<LinkKey> columns;
    columns.reserve(s.link_count());
    for (const auto& [key, delay] : s.links()) columns.push_back(key);
    RoutingMatrix a(routes.size(), std::move(columns));
    for (std::size_t r = 0; r < routes.size(); ++r)
        for (const LinkKey& key : routes[r].links) {
            if (!s.has_link(key.u, key.v))
                throw ConsistencyError("route of user " + std::to_string(r) +
                                       " references missing link " + to_string(key));
            a.set(r, a.column_of(key));
        }
    return a;
}

/// One JSON object per route: {user, nodes, links, bottleneck}.
inline nlohmann::json route_to_json(const Route& route) {
    nlohmann::json links = nlohmann::json::array();
    for (const auto& l : route.links) links.push_back({l.u, l.v});
    return {{"user", route.user},
            {"nodes", route.nodes},
            {"links", links},
            {"bottleneck", route.bottleneck_capacity}};
}

inline std::string routes_to_json_lines(const std::vector<Route>& routes) {
    std::string out;
    for (const auto& r : routes) out += route_to_json(r).dump() + "\n";
    return out;
}

}  // namespace tvcn
