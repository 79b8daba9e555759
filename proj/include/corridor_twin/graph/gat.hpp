#pragma once

#include "corridor_twin/nn/layers.hpp"

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace ctwin::graph {

using ad::Parameter;
using ad::Tape;
using ad::Value;

enum class Direction { eastbound, westbound };

struct Edge {
    std::size_t source;
    std::size_t target;
    Direction direction;

    bool operator==(const Edge&) const = default;
};

/// Directed graph over node indices [0, num_nodes). Edge order is kept as given;
/// `corridor` builds the canonical chain (eastbound west->east, then westbound east->west).
class GraphTopology {
public:
    GraphTopology(std::size_t num_nodes, std::vector<Edge> edges);

    static GraphTopology corridor(std::size_t k);

    std::size_t num_nodes() const noexcept { return nodes_; }
    std::size_t num_edges() const noexcept { return edges_.size(); }
    const std::vector<Edge>& edges() const noexcept { return edges_; }
    std::size_t count(Direction d) const;

    bool operator==(const GraphTopology&) const = default;

private:
    std::size_t nodes_;
    std::vector<Edge> edges_;
};

/// `copies` disjoint replicas of a topology in one index space, with a self edge
/// per node appended after the real edges. Replica c owns node rows
/// [c*k, (c+1)*k) and edge rows [c*E, (c+1)*E).
struct GraphBatch {
    GraphBatch(const GraphTopology& topology, std::size_t copies);

    const GraphTopology* topology;
    std::size_t copies;
    std::size_t nodes;
    std::size_t real_edges;
    std::vector<std::size_t> source;  // real edges then self edges
    std::vector<std::size_t> target;
};

/// Multi-head graph attention with edge features in the score.
class GatLayer {
public:
    GatLayer(std::string name, std::size_t in_width, std::size_t edge_width, std::size_t heads, std::size_t head_width,
             Rng& rng);

    struct Output {
        Value nodes;      // [nodes x heads*head_width]
        Value attention;  // [real_edges + nodes x heads], rows ordered as GraphBatch
    };

    /// `edge_features` is [real_edges x edge_width]; omit it only for edgeless graphs.
    Output forward_with_attention(Tape& tape, const GraphBatch& graph, Value node_features,
                                  std::optional<Value> edge_features);
    Value forward(Tape& tape, const GraphBatch& graph, Value node_features, std::optional<Value> edge_features)
    {
        return forward_with_attention(tape, graph, node_features, edge_features).nodes;
    }

    std::size_t heads() const noexcept { return heads_; }
    std::size_t head_width() const noexcept { return head_width_; }
    std::size_t in_width() const { return node_projection.value.dim(1); }
    std::size_t edge_width() const { return edge_projection.value.dim(1); }
    std::size_t out_width() const noexcept { return heads_ * head_width_; }
    std::vector<Parameter*> parameters();

    Parameter node_projection;  // [heads*head_width x in]
    Parameter edge_projection;  // [heads*head_width x edge_in]
    Parameter attend_target;    // [heads x head_width]
    Parameter attend_source;
    Parameter attend_edge;

private:
    std::size_t heads_;
    std::size_t head_width_;
};

/// MLP over concat(static edge features, edge series) with ReLU throughout.
class EdgeMlp {
public:
    static constexpr std::size_t embedding_width = 64;

    EdgeMlp(std::string name, std::size_t static_width, std::size_t series_width, Rng& rng);

    Value forward(Tape& tape, Value static_features, Value series);

    std::size_t static_width() const noexcept { return static_width_; }
    std::size_t series_width() const noexcept { return series_width_; }
    std::vector<Parameter*> parameters() { return mlp.parameters(); }

    nn::MlpBlock mlp;

private:
    std::size_t static_width_;
    std::size_t series_width_;
};

struct DirectionalPool {
    Value eastbound;  // [copies x width]
    Value westbound;
};

/// Mean of edge embeddings per direction tag, per replica.
DirectionalPool directional_pool(const GraphBatch& graph, Value edge_embeddings);

/// concat(mean over each replica's nodes, eastbound, westbound) -> [copies x 3*width].
Value fuse_embeddings(const GraphBatch& graph, Value node_embeddings, const DirectionalPool& pools);

}  // namespace ctwin::graph
