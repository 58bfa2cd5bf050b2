#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "t2sg/errors.hpp"

namespace t2sg {

enum class GraphKind { Scene, Text };

// Axis-aligned box in meters.
struct Box {
    double min[3] = {0, 0, 0};
    double max[3] = {0, 0, 0};

    bool valid() const {
        return min[0] <= max[0] && min[1] <= max[1] && min[2] <= max[2];
    }
};

struct GraphNode {
    int node_id = 0;
    std::string label;                    // lowercase, whitespace-normalized
    std::vector<std::string> attributes;  // may be empty
    std::optional<Box> bbox;              // scene graphs only
};

struct GraphEdge {
    int source = 0;
    int target = 0;
    std::string relation;  // lowercase, e.g. "next to"
};

struct SemanticGraph {
    std::string graph_id;
    GraphKind kind = GraphKind::Scene;
    std::vector<GraphNode> nodes;
    std::vector<GraphEdge> edges;

    const GraphNode* find_node(int id) const {
        for (const auto& n : nodes) {
            if (n.node_id == id) return &n;
        }
        return nullptr;
    }
};

inline std::string normalize_token(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    bool pending_space = false;
    for (unsigned char c : s) {
        if (std::isspace(c)) {
            if (!out.empty()) pending_space = true;
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        out.push_back(char(std::tolower(c)));
    }
    return out;
}

// Throws if the graph violates the stored-graph invariants.
inline void validate_graph(const SemanticGraph& g) {
    if (g.nodes.empty()) throw MalformedDocument("graph '" + g.graph_id + "' has no nodes");
    std::unordered_set<int> ids;
    for (const auto& n : g.nodes) {
        if (!ids.insert(n.node_id).second) {
            throw MalformedDocument("duplicate node id " + std::to_string(n.node_id));
        }
        if (n.label.empty()) {
            throw MalformedDocument("node " + std::to_string(n.node_id) + " has empty label");
        }
        if (n.bbox) {
            if (g.kind == GraphKind::Text) {
                throw MalformedDocument("text graph node " + std::to_string(n.node_id) +
                                        " carries a bounding box");
            }
            if (!n.bbox->valid()) {
                throw MalformedDocument("node " + std::to_string(n.node_id) +
                                        " bbox has min > max");
            }
        }
    }
    std::set<std::tuple<int, int, std::string>> triples;
    for (const auto& e : g.edges) {
        if (!ids.count(e.source)) {
            throw DanglingEdge("edge references unknown node id " + std::to_string(e.source));
        }
        if (!ids.count(e.target)) {
            throw DanglingEdge("edge references unknown node id " + std::to_string(e.target));
        }
        if (e.source == e.target) {
            throw MalformedDocument("self-loop edge on node " + std::to_string(e.source));
        }
        if (e.relation.empty()) throw MalformedDocument("edge has empty relation");
        if (!triples.insert({e.source, e.target, e.relation}).second) {
            throw MalformedDocument("duplicate edge triple (" + std::to_string(e.source) + ", " +
                                    e.relation + ", " + std::to_string(e.target) + ")");
        }
    }
}

// Euclidean distance between the closest points of two axis-aligned boxes;
// zero when they touch or intersect. Symmetric.
inline double bbox_distance(const Box& a, const Box& b) {
    double sq = 0.0;
    for (int k = 0; k < 3; ++k) {
        double gap = std::max({0.0, a.min[k] - b.max[k], b.min[k] - a.max[k]});
        sq += gap * gap;
    }
    return std::sqrt(sq);
}

struct FilterResult {
    SemanticGraph graph;
    int dropped_by_distance = 0;
    int dropped_missing_bbox = 0;  // edges with a bbox-less endpoint
};

// Keeps exactly the edges whose endpoint boxes are within tau meters.
// Nodes are never removed. Idempotent and monotone in tau.
inline FilterResult filter_edges(const SemanticGraph& g, double tau) {
    if (tau < 0.0) throw InvalidThreshold("distance threshold must be >= 0, got " + std::to_string(tau));
    FilterResult res;
    res.graph.graph_id = g.graph_id;
    res.graph.kind = g.kind;
    res.graph.nodes = g.nodes;
    std::unordered_map<int, const GraphNode*> by_id;
    for (const auto& n : g.nodes) by_id[n.node_id] = &n;
    for (const auto& e : g.edges) {
        const GraphNode* s = by_id.at(e.source);
        const GraphNode* t = by_id.at(e.target);
        if (!s->bbox || !t->bbox) {
            ++res.dropped_missing_bbox;
            continue;
        }
        if (bbox_distance(*s->bbox, *t->bbox) <= tau) {
            res.graph.edges.push_back(e);
        } else {
            ++res.dropped_by_distance;
        }
    }
    return res;
}

}  // namespace t2sg
