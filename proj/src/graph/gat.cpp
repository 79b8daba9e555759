#include "corridor_twin/graph/gat.hpp"

#include "corridor_twin/errors.hpp"

#include <set>
#include <utility>

namespace ctwin::graph {

GraphTopology::GraphTopology(std::size_t num_nodes, std::vector<Edge> edges) : nodes_(num_nodes), edges_(std::move(edges))
{
    if (num_nodes == 0)
        throw ContractError("graph needs at least one node");
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (const auto& e : edges_) {
        if (e.source >= nodes_ || e.target >= nodes_)
            throw ContractError("edge (" + std::to_string(e.source) + " -> " + std::to_string(e.target) +
                                ") references a node outside [0, " + std::to_string(nodes_) + ")");
        if (e.source == e.target)
            throw ContractError("explicit self edge on node " + std::to_string(e.source) + "; self edges are implicit");
        if (!seen.emplace(e.source, e.target).second)
            throw ContractError("duplicate edge (" + std::to_string(e.source) + " -> " + std::to_string(e.target) + ")");
    }
}

GraphTopology GraphTopology::corridor(std::size_t k)
{
    if (k < 2)
        throw ContractError("corridor needs at least 2 intersections, got " + std::to_string(k));
    std::vector<Edge> edges;
    for (std::size_t i = 0; i + 1 < k; ++i)
        edges.push_back({i, i + 1, Direction::eastbound});
    for (std::size_t i = k - 1; i > 0; --i)
        edges.push_back({i, i - 1, Direction::westbound});
    return GraphTopology(k, std::move(edges));
}

std::size_t GraphTopology::count(Direction d) const
{
    std::size_t n = 0;
    for (const auto& e : edges_)
        n += e.direction == d;
    return n;
}

GraphBatch::GraphBatch(const GraphTopology& topo, std::size_t copies_)
    : topology(&topo), copies(copies_), nodes(topo.num_nodes() * copies_), real_edges(topo.num_edges() * copies_)
{
    if (copies_ == 0)
        throw ContractError("graph batch needs at least one copy");
    const std::size_t k = topo.num_nodes();
    source.reserve(real_edges + nodes);
    target.reserve(real_edges + nodes);
    for (std::size_t c = 0; c < copies; ++c)
        for (const auto& e : topo.edges()) {
            source.push_back(c * k + e.source);
            target.push_back(c * k + e.target);
        }
    for (std::size_t n = 0; n < nodes; ++n) {
        source.push_back(n);
        target.push_back(n);
    }
}

GatLayer::GatLayer(std::string name, std::size_t in_width, std::size_t edge_width, std::size_t heads,
                   std::size_t head_width, Rng& rng)
    : node_projection(name + ".node_projection",
                      nn::glorot_uniform({heads * head_width, in_width}, in_width, heads * head_width, rng)),
      edge_projection(name + ".edge_projection",
                      nn::glorot_uniform({heads * head_width, edge_width}, edge_width, heads * head_width, rng)),
      attend_target(name + ".attend_target", nn::glorot_uniform({heads, head_width}, 3 * head_width, 1, rng)),
      attend_source(name + ".attend_source", nn::glorot_uniform({heads, head_width}, 3 * head_width, 1, rng)),
      attend_edge(name + ".attend_edge", nn::glorot_uniform({heads, head_width}, 3 * head_width, 1, rng)),
      heads_(heads),
      head_width_(head_width)
{
    if (heads == 0 || head_width == 0 || in_width == 0 || edge_width == 0)
        throw ContractError("gat '" + name + "': heads and widths must be positive");
}

GatLayer::Output GatLayer::forward_with_attention(Tape& tape, const GraphBatch& graph, Value node_features,
                                                  std::optional<Value> edge_features)
{
    const auto& ns = node_features.shape();
    if (ns.size() != 2 || ns[0] != graph.nodes || ns[1] != in_width())
        throw ContractError("gat '" + node_projection.name + "': node features " + ad::shape_string(ns) +
                            ", expected [" + std::to_string(graph.nodes) + ", " + std::to_string(in_width()) + "]");
    if (edge_features.has_value() != (graph.real_edges > 0))
        throw ContractError("gat '" + node_projection.name + "': edge features must be given exactly when the graph has edges");
    if (edge_features) {
        const auto& es = edge_features->shape();
        if (es.size() != 2 || es[0] != graph.real_edges || es[1] != edge_width())
            throw ContractError("gat '" + node_projection.name + "': edge features " + ad::shape_string(es) +
                                ", expected [" + std::to_string(graph.real_edges) + ", " +
                                std::to_string(edge_width()) + "]");
    }

    Value z = ad::matmul_bt(node_features, tape.param(node_projection));
    // Self edges carry zero edge features, so their projection is zero too.
    Value z_edge = tape.constant(ad::Tensor({graph.nodes, out_width()}));
    if (edge_features) {
        const std::vector<Value> edge_parts{ad::matmul_bt(*edge_features, tape.param(edge_projection)), z_edge};
        z_edge = ad::concat(edge_parts, 0);
    }

    Value z_src = ad::gather_rows(z, graph.source);
    Value z_dst = ad::gather_rows(z, graph.target);
    Value score = ad::add(ad::add(ad::grouped_dot(z_dst, tape.param(attend_target)),
                                  ad::grouped_dot(z_src, tape.param(attend_source))),
                          ad::grouped_dot(z_edge, tape.param(attend_edge)));
    Value alpha = ad::segment_softmax(ad::leaky_relu(score, 0.2), graph.target, graph.nodes);
    Value messages = ad::grouped_scale(z_src, alpha);
    Value out = ad::relu(ad::scatter_add_rows(messages, graph.target, graph.nodes));
    return {out, alpha};
}

std::vector<Parameter*> GatLayer::parameters()
{
    return {&node_projection, &edge_projection, &attend_target, &attend_source, &attend_edge};
}

EdgeMlp::EdgeMlp(std::string name, std::size_t static_width, std::size_t series_width, Rng& rng)
    : mlp(std::move(name), {static_width + series_width, embedding_width, embedding_width}, nn::Activation::relu,
          nn::Activation::relu, rng),
      static_width_(static_width),
      series_width_(series_width)
{
}

Value EdgeMlp::forward(Tape& tape, Value static_features, Value series)
{
    const auto& ss = static_features.shape();
    const auto& ts = series.shape();
    if (ss.size() != 2 || ts.size() != 2 || ss[1] != static_width_ || ts[1] != series_width_ || ss[0] != ts[0])
        throw ContractError("edge mlp: expected [E x " + std::to_string(static_width_) + "] and [E x " +
                            std::to_string(series_width_) + "], got " + ad::shape_string(ss) + " and " +
                            ad::shape_string(ts));
    const std::vector<Value> parts{static_features, series};
    return mlp.forward(tape, ad::concat(parts, 1));
}

DirectionalPool directional_pool(const GraphBatch& graph, Value edge_embeddings)
{
    const auto& topo = *graph.topology;
    const auto& shape = edge_embeddings.shape();
    if (shape.size() != 2 || shape[0] != graph.real_edges)
        throw ContractError("directional pool: expected [" + std::to_string(graph.real_edges) + " x width], got " +
                            ad::shape_string(shape));
    const std::size_t east = topo.count(Direction::eastbound);
    const std::size_t west = topo.count(Direction::westbound);
    if (east == 0 || west == 0)
        throw ContractError("directional pool: topology has no " + std::string(east == 0 ? "eastbound" : "westbound") +
                            " edges");

    const std::size_t width = shape[1];
    std::vector<std::size_t> bucket;
    bucket.reserve(graph.real_edges);
    for (std::size_t c = 0; c < graph.copies; ++c)
        for (const auto& e : topo.edges())
            bucket.push_back(2 * c + (e.direction == Direction::eastbound ? 0 : 1));

    Tape& tape = *edge_embeddings.tape;
    ad::Tensor inverse_counts({2 * graph.copies, width});
    for (std::size_t r = 0; r < 2 * graph.copies; ++r)
        for (std::size_t j = 0; j < width; ++j)
            inverse_counts[r * width + j] = 1.0 / static_cast<double>(r % 2 == 0 ? east : west);
    Value means = ad::mul(ad::scatter_add_rows(edge_embeddings, bucket, 2 * graph.copies),
                          tape.constant(std::move(inverse_counts)));

    std::vector<std::size_t> even, odd;
    for (std::size_t c = 0; c < graph.copies; ++c) {
        even.push_back(2 * c);
        odd.push_back(2 * c + 1);
    }
    return {ad::gather_rows(means, even), ad::gather_rows(means, odd)};
}

Value fuse_embeddings(const GraphBatch& graph, Value node_embeddings, const DirectionalPool& pools)
{
    const auto& shape = node_embeddings.shape();
    const std::size_t k = graph.topology->num_nodes();
    if (shape.size() != 2 || shape[0] != graph.nodes)
        throw ContractError("fuse: expected [" + std::to_string(graph.nodes) + " x width] node embeddings, got " +
                            ad::shape_string(shape));
    const std::size_t width = shape[1];
    for (const Value* pool : {&pools.eastbound, &pools.westbound})
        if (pool->shape() != ad::Shape{graph.copies, width})
            throw ContractError("fuse: pool shape " + ad::shape_string(pool->shape()) + " does not match [" +
                                std::to_string(graph.copies) + ", " + std::to_string(width) + "]");
    Value node_mean = ad::reduce_mean(ad::reshape(node_embeddings, {graph.copies, k, width}), 1);
    const std::vector<Value> parts{node_mean, pools.eastbound, pools.westbound};
    return ad::concat(parts, 1);
}

}  // namespace ctwin::graph
