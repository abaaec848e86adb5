#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tvcn/common.hpp"
#include "tvcn/graph.hpp"
#include "tvcn/rng.hpp"

namespace tvcn {

enum class SeedTopology { Complete, Ring };

inline constexpr double kMinPropagationDelay = 0.1;
inline constexpr double kMaxPropagationDelay = 1.0;
inline constexpr int kEvolutionRetries = 10;

struct EvolutionParams {
    std::size_t n0 = 5;
    std::size_t M = 5;
    double beta = 0.6;
    double gamma = 0.8;
    std::uint64_t rng_seed = 1;
    SeedTopology topology = SeedTopology::Complete;

    void validate() const {
        if (n0 < 3) throw InvalidParameter("n0 must be at least 3, got " + std::to_string(n0));
        if (!(beta > 0.0 && beta < 1.0))
            throw InvalidParameter("beta must lie in (0,1), got " + std::to_string(beta));
        if (!(gamma > 0.5 && gamma <= 1.0))
            throw InvalidParameter("gamma must lie in (0.5,1], got " + std::to_string(gamma));
        if (M < 1 || M > n0)
            throw InvalidParameter("M must satisfy 1 <= M <= n0, got " + std::to_string(M));
    }
};

/// Integer split of the per-step link budget M.
struct LinkBudget {
    std::size_t add = 0;
    std::size_t rewire = 0;
    std::size_t remove = 0;
};

/// round(beta*M) new links, round(gamma*(M - add)) rewirings and the rest as
/// deletions, so the three always sum to M. At least one new link is kept so
/// the new node is attached. Only the arithmetic ranges are checked here.
inline LinkBudget link_budget(std::size_t M, double beta, double gamma) {
    if (M < 1) throw InvalidParameter("M must be at least 1");
    if (!(beta > 0.0 && beta < 1.0))
        throw InvalidParameter("beta must lie in (0,1), got " + std::to_string(beta));
    if (!(gamma >= 0.0 && gamma <= 1.0))
        throw InvalidParameter("gamma must lie in [0,1], got " + std::to_string(gamma));
    LinkBudget b;
    b.add = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(beta * static_cast<double>(M))), 1, M);
    b.rewire = static_cast<std::size_t>(std::lround(gamma * static_cast<double>(M - b.add)));
    b.remove = M - b.add - b.rewire;
    return b;
}

inline LinkBudget link_budget(const EvolutionParams& params) {
    params.validate();
    return link_budget(params.M, params.beta, params.gamma);
}

struct EvolutionLog {
    NodeId new_node = 0;
    std::vector<LinkKey> added;
    std::vector<std::pair<LinkKey, LinkKey>> rewired;  // old link -> new link
    std::vector<LinkKey> deleted;

    std::size_t total() const { return added.size() + rewired.size() + deleted.size(); }
};

inline NetworkSnapshot new_seed_network(std::size_t n0, SeedTopology topology, Rng& rng) {
    if (n0 < 3) throw InvalidParameter("seed network needs n0 >= 3, got " + std::to_string(n0));
    NetworkSnapshot s(n0, 0);
    const auto n = static_cast<NodeId>(n0);
    if (topology == SeedTopology::Complete) {
        for (NodeId a = 0; a < n; ++a)
            for (NodeId b = a + 1; b < n; ++b)
                s.add_link(a, b, rng.uniform(kMinPropagationDelay, kMaxPropagationDelay));
    } else {
        for (NodeId a = 0; a < n; ++a)
            s.add_link(a, (a + 1) % n, rng.uniform(kMinPropagationDelay, kMaxPropagationDelay));
    }
    return s;
}

namespace detail {

inline std::vector<char> exclusion_mask(std::size_t n, std::span<const NodeId> exclude) {
    std::vector<char> mask(n, 0);
    for (NodeId e : exclude)
        if (e < n) mask[e] = 1;
    return mask;
}

// Draws index i with probability weight[i] / sum(weight). All weights >= 0
// and the sum is positive.
inline NodeId draw_weighted(std::span<const double> weight, Rng& rng) {
    double total = 0.0;
    for (double w : weight) total += w;
    const double r = rng.uniform() * total;
    double cum = 0.0;
    NodeId last_positive = 0;
    for (std::size_t i = 0; i < weight.size(); ++i) {
        if (weight[i] <= 0.0) continue;
        cum += weight[i];
        last_positive = static_cast<NodeId>(i);
        if (r < cum) return last_positive;
    }
    return last_positive;
}

inline std::vector<double> preferential_weights(const NetworkSnapshot& s,
                                                const std::vector<char>& excluded) {
    std::vector<double> w(s.node_count(), 0.0);
    for (NodeId i = 0; i < w.size(); ++i)
        if (!excluded[i]) w[i] = static_cast<double>(s.degree(i));
    return w;
}

inline std::vector<double> anti_preferential_weights(const NetworkSnapshot& s,
                                                     const std::vector<char>& excluded) {
    std::size_t candidates = 0;
    double degree_sum = 0.0;
    for (NodeId i = 0; i < s.node_count(); ++i)
        if (!excluded[i]) {
            ++candidates;
            degree_sum += static_cast<double>(s.degree(i));
        }
    if (candidates < 2)
        throw SelectionError("anti-preferential selection needs at least 2 candidates, got " +
                             std::to_string(candidates));
    std::vector<double> w(s.node_count(), 0.0);
    for (NodeId i = 0; i < w.size(); ++i)
        if (!excluded[i])
            w[i] = degree_sum > 0.0 ? 1.0 - static_cast<double>(s.degree(i)) / degree_sum : 1.0;
    return w;
}

}  // namespace detail

/// Selection probabilities k_i / sum_j k_j over the non-excluded nodes.
inline std::vector<double> preferential_probabilities(const NetworkSnapshot& s,
                                                      std::span<const NodeId> exclude = {}) {
    auto w = detail::preferential_weights(s, detail::exclusion_mask(s.node_count(), exclude));
    double total = 0.0;
    for (double v : w) total += v;
    if (total <= 0.0) throw SelectionError("preferential selection: all candidate degrees are zero");
    for (double& v : w) v /= total;
    return w;
}

/// Selection probabilities proportional to 1 - k_i / sum_j k_j over the
/// non-excluded nodes; with no exclusions this is (1 - k_i/sum k)/(N - 1).
inline std::vector<double> anti_preferential_probabilities(const NetworkSnapshot& s,
                                                           std::span<const NodeId> exclude = {}) {
    auto w = detail::anti_preferential_weights(s, detail::exclusion_mask(s.node_count(), exclude));
    double total = 0.0;
    for (double v : w) total += v;
    for (double& v : w) v /= total;
    return w;
}

inline NodeId preferential_select(const NetworkSnapshot& s, Rng& rng,
                                  std::span<const NodeId> exclude = {}) {
    const auto w = detail::preferential_weights(s, detail::exclusion_mask(s.node_count(), exclude));
    for (double v : w)
        if (v > 0.0) return detail::draw_weighted(w, rng);
    throw SelectionError("preferential selection: all candidate degrees are zero");
}

inline NodeId anti_preferential_select(const NetworkSnapshot& s, Rng& rng,
                                       std::span<const NodeId> exclude = {}) {
    const auto w =
        detail::anti_preferential_weights(s, detail::exclusion_mask(s.node_count(), exclude));
    double total = 0.0;
    for (double v : w) total += v;
    if (total <= 0.0) throw SelectionError("anti-preferential selection: no positive weight");
    return detail::draw_weighted(w, rng);
}

namespace detail {

inline double fresh_delay(Rng& rng) {
    return rng.uniform(kMinPropagationDelay, kMaxPropagationDelay);
}

inline void grow(NetworkSnapshot& s, std::size_t count, Rng& rng, EvolutionLog& log) {
    // Targets are drawn from the network as it stood before the new node.
    std::vector<NodeId> targets;
    for (std::size_t i = 0; i < count; ++i) targets.push_back(preferential_select(s, rng, targets));
    const NodeId fresh = s.add_node();
    log.new_node = fresh;
    for (NodeId t : targets) {
        s.add_link(fresh, t, fresh_delay(rng));
        log.added.emplace_back(fresh, t);
    }
}

// Detach a heavily loaded node from a lightly loaded neighbor and reattach it
// to a heavily loaded non-neighbor.
inline void rewire_once(NetworkSnapshot& s, Rng& rng, EvolutionLog& log) {
    const std::size_t n = s.node_count();
    for (int attempt = 0; attempt < kEvolutionRetries; ++attempt) {
        std::vector<NodeId> saturated;
        for (NodeId i = 0; i < n; ++i)
            if (s.degree(i) + 1 >= n) saturated.push_back(i);
        const NodeId pivot = preferential_select(s, rng, saturated);

        const auto nbrs = s.neighbors(pivot);
        NodeId far = nbrs.front();
        if (nbrs.size() > 1) {
            std::vector<char> non_neighbor(n, 1);
            for (NodeId m : nbrs) non_neighbor[m] = 0;
            std::vector<NodeId> exclude;
            for (NodeId i = 0; i < n; ++i)
                if (non_neighbor[i]) exclude.push_back(i);
            far = anti_preferential_select(s, rng, exclude);
        }

        std::vector<NodeId> exclude(nbrs.begin(), nbrs.end());
        exclude.push_back(pivot);
        const NodeId target = preferential_select(s, rng, exclude);

        const double old_delay = s.remove_link(pivot, far);
        s.add_link(pivot, target, fresh_delay(rng));
        if (s.reachable(pivot, far)) {
            log.rewired.emplace_back(LinkKey(pivot, far), LinkKey(pivot, target));
            return;
        }
        s.remove_link(pivot, target);
        s.add_link(pivot, far, old_delay);
    }
    throw EvolutionStalled("rewiring kept disconnecting the network after " +
                           std::to_string(kEvolutionRetries) + " attempts");
}

// Remove the lowest-capacity link of a lightly loaded node that is not a
// bridge. Each retry draws a node not tried before.
inline void delete_once(NetworkSnapshot& s, Rng& rng, EvolutionLog& log) {
    std::vector<NodeId> tried;
    for (int attempt = 0; attempt < kEvolutionRetries && tried.size() + 2 <= s.node_count(); ++attempt) {
        const NodeId node = anti_preferential_select(s, rng, tried);
        tried.push_back(node);
        const auto span = s.neighbors(node);
        std::vector<NodeId> nbrs(span.begin(), span.end());
        // capacity ~ degree of the far end
        std::stable_sort(nbrs.begin(), nbrs.end(),
                         [&](NodeId a, NodeId b) { return s.degree(a) < s.degree(b); });
        for (NodeId victim : nbrs) {
            const double delay = s.remove_link(node, victim);
            if (s.reachable(node, victim)) {
                log.deleted.emplace_back(node, victim);
                return;
            }
            s.add_link(node, victim, delay);
        }
    }
    throw EvolutionStalled("no connectivity-preserving deletion found after " +
                           std::to_string(kEvolutionRetries) + " attempts");
}

inline EvolutionLog evolve_in_place(NetworkSnapshot& s, const EvolutionParams& params, Rng& rng) {
    const LinkBudget budget = link_budget(params);
    EvolutionLog log;
    grow(s, budget.add, rng, log);
    for (std::size_t i = 0; i < budget.rewire; ++i) rewire_once(s, rng, log);
    for (std::size_t i = 0; i < budget.remove; ++i) delete_once(s, rng, log);
    s.set_time_index(s.time_index() + 1);
    return log;
}

}  // namespace detail

/// One evolution step: growth by one node, preferential rewiring and
/// anti-preferential deletion. The input snapshot is never modified; on
/// EvolutionStalled no new snapshot is produced.
inline std::pair<NetworkSnapshot, EvolutionLog> evolve_step(const NetworkSnapshot& snapshot,
                                                            const EvolutionParams& params,
                                                            Rng& rng) {
    NetworkSnapshot next = snapshot;
    EvolutionLog log = detail::evolve_in_place(next, params, rng);
    return {std::move(next), std::move(log)};
}

/// Evolves until the network has `target_nodes` nodes.
inline NetworkSnapshot evolve_to_size(const NetworkSnapshot& snapshot,
                                      const EvolutionParams& params, std::size_t target_nodes,
                                      Rng& rng) {
    if (target_nodes < snapshot.node_count())
        throw InvalidParameter("cannot evolve from " + std::to_string(snapshot.node_count()) +
                               " down to " + std::to_string(target_nodes) + " nodes");
    NetworkSnapshot next = snapshot;
    while (next.node_count() < target_nodes) detail::evolve_in_place(next, params, rng);
    return next;
}

/// Discrete power-law exponent by the approximate maximum-likelihood
/// estimator 1 + n / sum ln(k_i / (k_min - 1/2)) over the tail k_i >= k_min.
inline double fit_power_law_exponent(std::span<const std::size_t> degrees, std::size_t k_min,
                                     std::size_t min_tail = 50) {
    if (k_min < 1) throw InvalidParameter("k_min must be at least 1");
    std::size_t n = 0;
    double log_sum = 0.0;
    std::size_t first = 0;
    bool spread = false;
    const double shift = static_cast<double>(k_min) - 0.5;
    for (std::size_t k : degrees) {
        if (k < k_min) continue;
        if (n == 0) first = k;
        else if (k != first) spread = true;
        ++n;
        log_sum += std::log(static_cast<double>(k) / shift);
    }
    if (n < min_tail)
        throw InsufficientData("power-law fit needs at least " + std::to_string(min_tail) +
                               " tail nodes with degree >= " + std::to_string(k_min) + ", got " +
                               std::to_string(n));
    if (!spread)
        throw InsufficientData("power-law fit: every tail degree equals " + std::to_string(first) +
                               ", the exponent is not identifiable");
    return 1.0 + static_cast<double>(n) / log_sum;
}

inline double fit_power_law_exponent(const NetworkSnapshot& snapshot, std::size_t k_min) {
    const auto k = degree_sequence(snapshot);
    return fit_power_law_exponent(k, k_min);
}

}  // namespace tvcn
