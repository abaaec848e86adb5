#pragma once

#include <algorithm>
#include <cstddef>
#include <deque>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tvcn/common.hpp"

namespace tvcn {

/// One snapshot of a time-varying network: a simple undirected graph on the
/// dense node ids 0..N-1 with a frozen propagation delay per link.
///
/// Degrees and capacities are derived from the link set and never stored
/// separately, so they cannot drift out of sync with mutations. Snapshots are
/// treated as values: evolution copies and returns a new one.
class NetworkSnapshot {
public:
    NetworkSnapshot() = default;
    explicit NetworkSnapshot(std::size_t nodes, std::size_t time_index = 0)
        : time_index_(time_index), adjacency_(nodes) {}

    std::size_t time_index() const { return time_index_; }
    void set_time_index(std::size_t t) { time_index_ = t; }

    std::size_t node_count() const { return adjacency_.size(); }
    std::size_t link_count() const { return links_.size(); }
    bool has_node(NodeId n) const { return n < adjacency_.size(); }

    std::size_t degree(NodeId n) const { return adjacency_.at(n).size(); }
    std::size_t total_degree() const { return 2 * links_.size(); }

    /// Neighbors of `n`, sorted ascending.
    std::span<const NodeId> neighbors(NodeId n) const { return adjacency_.at(n); }

    bool has_link(NodeId a, NodeId b) const {
        if (a == b || !has_node(a) || !has_node(b)) return false;
        return links_.contains(LinkKey(a, b));
    }

    /// Links ordered by (u, v); this order defines routing-matrix columns.
    const std::map<LinkKey, double>& links() const { return links_; }

    double propagation_delay(const LinkKey& key) const {
        const auto it = links_.find(key);
        if (it == links_.end()) throw LookupError("unknown link " + to_string(key));
        return it->second;
    }

    NodeId add_node() {
        adjacency_.emplace_back();
        return static_cast<NodeId>(adjacency_.size() - 1);
    }

    void add_link(NodeId a, NodeId b, double propagation_delay) {
        if (a == b) throw InvalidParameter("self-loop on node " + std::to_string(a));
        if (!has_node(a) || !has_node(b))
            throw LookupError("link endpoint outside node set: " + to_string(LinkKey(a, b)));
        if (!(propagation_delay > 0.0))
            throw InvalidParameter("propagation delay must be positive on " +
                                   to_string(LinkKey(a, b)));
        const auto [it, inserted] = links_.emplace(LinkKey(a, b), propagation_delay);
        if (!inserted) throw InvalidParameter("duplicate link " + to_string(LinkKey(a, b)));
        insert_sorted(adjacency_[a], b);
        insert_sorted(adjacency_[b], a);
    }

    /// Removes a link and returns its propagation delay.
    double remove_link(NodeId a, NodeId b) {
        const auto it = links_.find(LinkKey(a, b));
        if (it == links_.end()) throw LookupError("unknown link " + to_string(LinkKey(a, b)));
        const double delay = it->second;
        links_.erase(it);
        erase_sorted(adjacency_[a], b);
        erase_sorted(adjacency_[b], a);
        return delay;
    }

    bool is_connected() const {
        if (adjacency_.empty()) return true;
        std::vector<char> seen(adjacency_.size(), 0);
        std::deque<NodeId> frontier{0};
        seen[0] = 1;
        std::size_t reached = 1;
        while (!frontier.empty()) {
            const NodeId n = frontier.front();
            frontier.pop_front();
            for (NodeId m : adjacency_[n])
                if (!seen[m]) {
                    seen[m] = 1;
                    ++reached;
                    frontier.push_back(m);
                }
        }
        return reached == adjacency_.size();
    }

    /// True if `to` can be reached from `from`; stops as soon as it is found.
    bool reachable(NodeId from, NodeId to) const {
        if (from == to) return true;
        std::vector<char> seen(adjacency_.size(), 0);
        std::deque<NodeId> frontier{from};
        seen[from] = 1;
        while (!frontier.empty()) {
            const NodeId n = frontier.front();
            frontier.pop_front();
            for (NodeId m : adjacency_[n]) {
                if (m == to) return true;
                if (!seen[m]) {
                    seen[m] = 1;
                    frontier.push_back(m);
                }
            }
        }
        return false;
    }

    friend bool operator==(const NetworkSnapshot&, const NetworkSnapshot&) = default;

private:
    static void insert_sorted(std::vector<NodeId>& v, NodeId x) {
        v.insert(std::lower_bound(v.begin(), v.end(), x), x);
    }
    static void erase_sorted(std::vector<NodeId>& v, NodeId x) {
        v.erase(std::lower_bound(v.begin(), v.end(), x));
    }

    std::size_t time_index_ = 0;
    std::vector<std::vector<NodeId>> adjacency_;
    std::map<LinkKey, double> links_;
};

/// Capacity of a link: product of its endpoint degrees at this snapshot.
inline double link_capacity(const NetworkSnapshot& snapshot, const LinkKey& link) {
    if (!snapshot.has_link(link.u, link.v))
        throw LookupError("capacity of unknown link " + to_string(link));
    return static_cast<double>(snapshot.degree(link.u)) *
           static_cast<double>(snapshot.degree(link.v));
}

inline std::vector<std::size_t> degree_sequence(const NetworkSnapshot& snapshot) {
    std::vector<std::size_t> k(snapshot.node_count());
    for (NodeId n = 0; n < k.size(); ++n) k[n] = snapshot.degree(n);
    return k;
}

// JSON form: {time_index, nodes:[id], links:[{u,v,prop_delay}]}.

inline nlohmann::json snapshot_to_json(const NetworkSnapshot& snapshot) {
    nlohmann::json nodes = nlohmann::json::array();
    for (NodeId n = 0; n < snapshot.node_count(); ++n) nodes.push_back(n);
    nlohmann::json links = nlohmann::json::array();
    for (const auto& [key, delay] : snapshot.links())
        links.push_back({{"u", key.u}, {"v", key.v}, {"prop_delay", delay}});
    return {{"time_index", snapshot.time_index()}, {"nodes", nodes}, {"links", links}};
}

inline NetworkSnapshot snapshot_from_json(const nlohmann::json& doc) {
    try {
        const auto& nodes = doc.at("nodes");
        if (!nodes.is_array()) throw ParseError("nodes: expected array");
        std::vector<NodeId> ids;
        for (const auto& n : nodes) ids.push_back(n.get<NodeId>());
        std::sort(ids.begin(), ids.end());
        for (std::size_t i = 0; i < ids.size(); ++i)
            if (ids[i] != i)
                throw ParseError("nodes: ids must be exactly 0..N-1 (found " +
                                 std::to_string(ids[i]) + " at position " + std::to_string(i) +
                                 ")");
        NetworkSnapshot snapshot(ids.size(), doc.at("time_index").get<std::size_t>());
        std::size_t index = 0;
        for (const auto& link : doc.at("links")) {
            const std::string where = "links[" + std::to_string(index++) + "]";
            try {
                snapshot.add_link(link.at("u").get<NodeId>(), link.at("v").get<NodeId>(),
                                  link.at("prop_delay").get<double>());
            } catch (const Error& e) {
                throw ParseError(where + ": " + e.what());
            }
        }
        return snapshot;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("snapshot: ") + e.what());
    }
}

}  // namespace tvcn
