#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "t2sg/graph.hpp"
#include "t2sg/linalg.hpp"
#include "t2sg/word_vectors.hpp"

namespace t2sg {

// Graph with fixed-length feature vectors, the network input. Node order
// follows the source graph's node list; edges are index pairs into it.
struct FeaturizedGraph {
    std::string graph_id;
    GraphKind kind = GraphKind::Scene;
    Mat node_features;                          // N x dim
    std::vector<std::pair<int, int>> edge_list; // (src_index, dst_index)
    Mat edge_features;                          // E x dim
};

// Node feature: label vector plus the average attribute vector (zero when a
// node has no attributes). Edge feature: relation vector.
inline FeaturizedGraph featurize(const WordVectorTable& table, const SemanticGraph& g) {
    validate_graph(g);
    FeaturizedGraph f;
    f.graph_id = g.graph_id;
    f.kind = g.kind;
    const int n = int(g.nodes.size());
    const int m = int(g.edges.size());
    f.node_features = Mat(n, table.dim);
    f.edge_features = Mat(m, table.dim);

    std::unordered_map<int, int> index_of;
    for (int i = 0; i < n; ++i) {
        const auto& node = g.nodes[i];
        index_of[node.node_id] = i;
        Vec row = token_vector(table, node.label);
        if (!node.attributes.empty()) {
            Vec attr_mean(table.dim, 0.0);
            for (const auto& a : node.attributes) {
                Vec av = token_vector(table, a);
                for (int k = 0; k < table.dim; ++k) attr_mean[k] += av[k];
            }
            const double t = double(node.attributes.size());
            for (int k = 0; k < table.dim; ++k) row[k] += attr_mean[k] / t;
        }
        std::copy(row.begin(), row.end(), f.node_features.row(i));
    }
    for (int e = 0; e < m; ++e) {
        const auto& edge = g.edges[e];
        f.edge_list.emplace_back(index_of.at(edge.source), index_of.at(edge.target));
        Vec row = token_vector(table, edge.relation);
        std::copy(row.begin(), row.end(), f.edge_features.row(e));
    }
    return f;
}

}  // namespace t2sg
