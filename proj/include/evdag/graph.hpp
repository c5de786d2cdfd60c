#pragma once

#include <algorithm>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace evdag {

/// A topological ordering: permutation of 0..d-1 in visit order.
using Ordering = std::vector<int>;

using EdgeList = std::vector<std::pair<int, int>>;

namespace detail {

inline void check_node(int k, int d, const char* what) {
    if (k < 0 || k >= d) {
        throw std::invalid_argument(std::string(what) + ": node " + std::to_string(k) +
                                    " out of range [0, " + std::to_string(d) + ")");
    }
}

/// Kahn's algorithm, always removing the smallest-index source next.
/// Returns nullopt if the graph has a cycle.
inline std::optional<Ordering> kahn_order(int d, const std::vector<std::vector<int>>& children,
                                          std::vector<int> in_degree) {
    Ordering order;
    order.reserve(static_cast<std::size_t>(d));
    std::vector<char> placed(static_cast<std::size_t>(d), 0);
    for (int step = 0; step < d; ++step) {
        int next = -1;
        for (int k = 0; k < d; ++k) {
            if (!placed[static_cast<std::size_t>(k)] && in_degree[static_cast<std::size_t>(k)] == 0) {
                next = k;
                break;
            }
        }
        if (next < 0) return std::nullopt;
        placed[static_cast<std::size_t>(next)] = 1;
        order.push_back(next);
        for (int c : children[static_cast<std::size_t>(next)]) --in_degree[static_cast<std::size_t>(c)];
    }
    return order;
}

}  // namespace detail

/// Directed acyclic graph over nodes 0..d-1. Immutable after construction;
/// the constructor rejects self-loops, duplicate edges and cycles.
class Dag {
  public:
    Dag() = default;

    Dag(int d, EdgeList edges) : d_(d), edges_(std::move(edges)) {
        if (d_ < 0) throw std::invalid_argument("Dag: negative node count");
        parents_.resize(static_cast<std::size_t>(d_));
        children_.resize(static_cast<std::size_t>(d_));
        for (const auto& [u, v] : edges_) {
            detail::check_node(u, d_, "Dag edge");
            detail::check_node(v, d_, "Dag edge");
            if (u == v) {
                throw std::invalid_argument("Dag: self-loop at node " + std::to_string(u));
            }
        }
        std::sort(edges_.begin(), edges_.end());
        if (std::adjacent_find(edges_.begin(), edges_.end()) != edges_.end()) {
            throw std::invalid_argument("Dag: duplicate edge");
        }
        std::vector<int> in_degree(static_cast<std::size_t>(d_), 0);
        for (const auto& [u, v] : edges_) {
            parents_[static_cast<std::size_t>(v)].push_back(u);
            children_[static_cast<std::size_t>(u)].push_back(v);
            ++in_degree[static_cast<std::size_t>(v)];
        }
        if (!detail::kahn_order(d_, children_, in_degree)) {
            throw std::invalid_argument("Dag: edge set contains a cycle");
        }
    }

    int node_count() const { return d_; }
    int edge_count() const { return static_cast<int>(edges_.size()); }

    /// Edges sorted lexicographically as (parent, child) pairs.
    const EdgeList& edges() const { return edges_; }

    const std::vector<int>& parents(int k) const {
        detail::check_node(k, d_, "parents");
        return parents_[static_cast<std::size_t>(k)];
    }

    const std::vector<int>& children(int k) const {
        detail::check_node(k, d_, "children");
        return children_[static_cast<std::size_t>(k)];
    }

    int in_degree(int k) const { return static_cast<int>(parents(k).size()); }

    bool has_edge(int u, int v) const {
        return std::binary_search(edges_.begin(), edges_.end(), std::make_pair(u, v));
    }

    /// Exact structural equality: same node count and identical edge set.
    friend bool operator==(const Dag& a, const Dag& b) {
        return a.d_ == b.d_ && a.edges_ == b.edges_;
    }

  private:
    int d_ = 0;
    EdgeList edges_;
    std::vector<std::vector<int>> parents_;
    std::vector<std::vector<int>> children_;
};

/// Undirected graph; edges normalized to (u, v) with u < v.
class UndirectedGraph {
  public:
    UndirectedGraph() = default;

    UndirectedGraph(int d, EdgeList edges) : d_(d) {
        if (d_ < 0) throw std::invalid_argument("UndirectedGraph: negative node count");
        edges_.reserve(edges.size());
        for (auto [u, v] : edges) {
            detail::check_node(u, d_, "UndirectedGraph edge");
            detail::check_node(v, d_, "UndirectedGraph edge");
            if (u == v) {
                throw std::invalid_argument("UndirectedGraph: self-loop at node " + std::to_string(u));
            }
            if (u > v) std::swap(u, v);
            edges_.emplace_back(u, v);
        }
        std::sort(edges_.begin(), edges_.end());
        edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());
        neighbors_.resize(static_cast<std::size_t>(d_));
        for (const auto& [u, v] : edges_) {
            neighbors_[static_cast<std::size_t>(u)].push_back(v);
            neighbors_[static_cast<std::size_t>(v)].push_back(u);
        }
        for (auto& nb : neighbors_) std::sort(nb.begin(), nb.end());
    }

    int node_count() const { return d_; }
    int edge_count() const { return static_cast<int>(edges_.size()); }
    const EdgeList& edges() const { return edges_; }

    const std::vector<int>& neighbors(int k) const {
        detail::check_node(k, d_, "neighbors");
        return neighbors_[static_cast<std::size_t>(k)];
    }

    int degree(int k) const { return static_cast<int>(neighbors(k).size()); }

    /// Maximum neighborhood size (0 for an empty graph).
    int max_degree() const {
        int s = 0;
        for (int k = 0; k < d_; ++k) s = std::max(s, degree(k));
        return s;
    }

    bool has_edge(int u, int v) const {
        if (u > v) std::swap(u, v);
        return std::binary_search(edges_.begin(), edges_.end(), std::make_pair(u, v));
    }

    friend bool operator==(const UndirectedGraph& a, const UndirectedGraph& b) {
        return a.d_ == b.d_ && a.edges_ == b.edges_;
    }

  private:
    int d_ = 0;
    EdgeList edges_;
    std::vector<std::vector<int>> neighbors_;
};

/// Deterministic topological sort (smallest-index source first).
inline Ordering topological_sort(const Dag& g) {
    const int d = g.node_count();
    std::vector<std::vector<int>> children(static_cast<std::size_t>(d));
    std::vector<int> in_degree(static_cast<std::size_t>(d), 0);
    for (const auto& [u, v] : g.edges()) {
        children[static_cast<std::size_t>(u)].push_back(v);
        ++in_degree[static_cast<std::size_t>(v)];
    }
    auto order = detail::kahn_order(d, children, std::move(in_degree));
    if (!order) throw std::logic_error("topological_sort: graph has a cycle");
    return *order;
}

/// True iff t is a permutation of 0..d-1 placing every parent before its child.
inline bool is_valid_ordering(const Dag& g, const Ordering& t) {
    const int d = g.node_count();
    if (static_cast<int>(t.size()) != d) {
        throw std::invalid_argument("is_valid_ordering: ordering length " +
                                    std::to_string(t.size()) + " != node count " +
                                    std::to_string(d));
    }
    std::vector<int> position(static_cast<std::size_t>(d), -1);
    for (int i = 0; i < d; ++i) {
        const int k = t[static_cast<std::size_t>(i)];
        if (k < 0 || k >= d || position[static_cast<std::size_t>(k)] >= 0) return false;
        position[static_cast<std::size_t>(k)] = i;
    }
    for (const auto& [u, v] : g.edges()) {
        if (position[static_cast<std::size_t>(u)] >= position[static_cast<std::size_t>(v)]) return false;
    }
    return true;
}

struct InducedSubgraph {
    Dag dag;
    /// original_label[new_index] = index in the parent graph.
    std::vector<int> original_label;
};

/// Subgraph on `keep`, nodes relabeled to 0..|keep|-1 in ascending original order.
inline InducedSubgraph induced_subgraph(const Dag& g, std::vector<int> keep) {
    const int d = g.node_count();
    std::sort(keep.begin(), keep.end());
    keep.erase(std::unique(keep.begin(), keep.end()), keep.end());
    std::vector<int> new_label(static_cast<std::size_t>(d), -1);
    for (std::size_t i = 0; i < keep.size(); ++i) {
        detail::check_node(keep[i], d, "induced_subgraph");
        new_label[static_cast<std::size_t>(keep[i])] = static_cast<int>(i);
    }
    EdgeList edges;
    for (const auto& [u, v] : g.edges()) {
        const int nu = new_label[static_cast<std::size_t>(u)];
        const int nv = new_label[static_cast<std::size_t>(v)];
        if (nu >= 0 && nv >= 0) edges.emplace_back(nu, nv);
    }
    return InducedSubgraph{Dag(static_cast<int>(keep.size()), std::move(edges)), std::move(keep)};
}

/// Moral graph: undirected skeleton plus an edge between every pair of
/// parents sharing a child.
inline UndirectedGraph moralize(const Dag& g) {
    EdgeList edges;
    for (const auto& [u, v] : g.edges()) edges.emplace_back(u, v);
    for (int k = 0; k < g.node_count(); ++k) {
        const auto& pa = g.parents(k);
        for (std::size_t i = 0; i < pa.size(); ++i) {
            for (std::size_t j = i + 1; j < pa.size(); ++j) {
                edges.emplace_back(pa[i], pa[j]);
            }
        }
    }
    return UndirectedGraph(g.node_count(), std::move(edges));
}

/// Largest parent-set size; 0 for an empty graph.
inline int max_in_degree(const Dag& g) {
    int q = 0;
    for (int k = 0; k < g.node_count(); ++k) q = std::max(q, g.in_degree(k));
    return q;
}

inline void to_json(nlohmann::json& j, const Dag& g) {
    auto edges = nlohmann::json::array();
    for (const auto& [u, v] : g.edges()) edges.push_back({u, v});
    j = nlohmann::json{{"d", g.node_count()}, {"edges", std::move(edges)}};
}

inline void from_json(const nlohmann::json& j, Dag& g) {
    EdgeList edges;
    for (const auto& e : j.at("edges")) edges.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
    g = Dag(j.at("d").get<int>(), std::move(edges));
}

inline void to_json(nlohmann::json& j, const UndirectedGraph& g) {
    auto edges = nlohmann::json::array();
    for (const auto& [u, v] : g.edges()) edges.push_back({u, v});
    j = nlohmann::json{{"d", g.node_count()}, {"edges", std::move(edges)}};
}

inline void from_json(const nlohmann::json& j, UndirectedGraph& g) {
    EdgeList edges;
    for (const auto& e : j.at("edges")) edges.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
    g = UndirectedGraph(j.at("d").get<int>(), std::move(edges));
}

}  // namespace evdag
