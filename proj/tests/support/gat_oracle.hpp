#pragma once

#include "corridor_twin/graph/gat.hpp"
#include "gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

namespace ctwin::testing {

/// Dense adjacency-mask evaluation of one GAT layer on a single graph: every
/// (target, source) pair is scored, then masked to in-neighbours plus self.
struct DenseGatResult {
    std::vector<double> nodes;      // [k x heads*d]
    std::vector<double> attention;  // [k x k x heads], attention[i][j][h] = alpha of j -> i
};

inline DenseGatResult dense_gat(const graph::GatLayer& layer, const graph::GraphTopology& topo,
                                const ad::Tensor& x, const ad::Tensor& edge_features)
{
    const std::size_t k = topo.num_nodes(), heads = layer.heads(), d = layer.head_width();
    const std::size_t hd = heads * d, in = layer.in_width(), ein = layer.edge_width();
    const auto& w = layer.node_projection.value;
    const auto& we = layer.edge_projection.value;

    std::vector<double> z(k * hd, 0.0);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t o = 0; o < hd; ++o)
            for (std::size_t c = 0; c < in; ++c)
                z[i * hd + o] += w[o * in + c] * x[i * in + c];

    // Projected edge features per (target, source); zero for self and non-edges.
    std::vector<double> ze(k * k * hd, 0.0);
    std::vector<char> mask(k * k, 0);
    for (std::size_t i = 0; i < k; ++i)
        mask[i * k + i] = 1;
    for (std::size_t e = 0; e < topo.num_edges(); ++e) {
        const auto& edge = topo.edges()[e];
        mask[edge.target * k + edge.source] = 1;
        for (std::size_t o = 0; o < hd; ++o)
            for (std::size_t c = 0; c < ein; ++c)
                ze[(edge.target * k + edge.source) * hd + o] += we[o * ein + c] * edge_features[e * ein + c];
    }

    DenseGatResult r{std::vector<double>(k * hd, 0.0), std::vector<double>(k * k * heads, 0.0)};
    for (std::size_t h = 0; h < heads; ++h) {
        for (std::size_t i = 0; i < k; ++i) {
            std::vector<double> score(k, -INFINITY);
            for (std::size_t j = 0; j < k; ++j) {
                if (!mask[i * k + j])
                    continue;
                double s = 0.0;
                for (std::size_t t = 0; t < d; ++t) {
                    s += layer.attend_target.value[h * d + t] * z[i * hd + h * d + t];
                    s += layer.attend_source.value[h * d + t] * z[j * hd + h * d + t];
                    s += layer.attend_edge.value[h * d + t] * ze[(i * k + j) * hd + h * d + t];
                }
                score[j] = s > 0 ? s : 0.2 * s;
            }
            const double top = *std::max_element(score.begin(), score.end());
            double total = 0.0;
            for (std::size_t j = 0; j < k; ++j)
                total += mask[i * k + j] ? std::exp(score[j] - top) : 0.0;
            for (std::size_t j = 0; j < k; ++j) {
                if (!mask[i * k + j])
                    continue;
                const double a = std::exp(score[j] - top) / total;
                r.attention[(i * k + j) * heads + h] = a;
                for (std::size_t t = 0; t < d; ++t)
                    r.nodes[i * hd + h * d + t] += a * z[j * hd + h * d + t];
            }
        }
    }
    for (auto& v : r.nodes)
        v = std::max(v, 0.0);
    return r;
}

/// Every graph on n nodes whose edges come in opposite pairs (both directions or neither).
inline std::vector<graph::GraphTopology> all_bidirectional_topologies(std::size_t n)
{
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = a + 1; b < n; ++b)
            pairs.emplace_back(a, b);
    std::vector<graph::GraphTopology> out;
    for (std::size_t bits = 0; bits < (std::size_t{1} << pairs.size()); ++bits) {
        std::vector<graph::Edge> edges;
        for (std::size_t p = 0; p < pairs.size(); ++p)
            if (bits >> p & 1)
                edges.push_back({pairs[p].first, pairs[p].second, graph::Direction::eastbound});
        for (std::size_t p = pairs.size(); p-- > 0;)
            if (bits >> p & 1)
                edges.push_back({pairs[p].second, pairs[p].first, graph::Direction::westbound});
        out.emplace_back(n, std::move(edges));
    }
    return out;
}

/// Calls fn on every directed graph without self loops on n nodes, one at a time.
template <typename Fn>
void for_each_directed_topology(std::size_t n, Fn&& fn)
{
    std::vector<std::pair<std::size_t, std::size_t>> arcs;
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b)
            if (a != b)
                arcs.emplace_back(a, b);
    std::vector<graph::Edge> edges;
    for (std::size_t bits = 0; bits < (std::size_t{1} << arcs.size()); ++bits) {
        edges.clear();
        for (std::size_t p = 0; p < arcs.size(); ++p)
            if (bits >> p & 1)
                edges.push_back({arcs[p].first, arcs[p].second,
                                 arcs[p].first < arcs[p].second ? graph::Direction::eastbound : graph::Direction::westbound});
        fn(graph::GraphTopology(n, edges));
    }
}

/// Every directed graph without self loops on n nodes.
inline std::vector<graph::GraphTopology> all_directed_topologies(std::size_t n)
{
    std::vector<std::pair<std::size_t, std::size_t>> arcs;
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b)
            if (a != b)
                arcs.emplace_back(a, b);
    std::vector<graph::GraphTopology> out;
    for (std::size_t bits = 0; bits < (std::size_t{1} << arcs.size()); ++bits) {
        std::vector<graph::Edge> edges;
        for (std::size_t p = 0; p < arcs.size(); ++p)
            if (bits >> p & 1)
                edges.push_back({arcs[p].first, arcs[p].second,
                                 arcs[p].first < arcs[p].second ? graph::Direction::eastbound : graph::Direction::westbound});
        out.emplace_back(n, std::move(edges));
    }
    return out;
}

/// Runs the layer and the dense oracle on random inputs over `topo` and reports the worst deviations.
struct Compared {
    double max_node_diff = 0.0;
    double max_attention_diff = 0.0;
    double max_row_sum_error = 0.0;
};

inline Compared compare_with_oracle(graph::GatLayer& layer, const graph::GraphTopology& topo, Rng& rng)
{
    const std::size_t k = topo.num_nodes();
    const std::size_t edges = topo.num_edges();
    ad::Tensor x = random_tensor({k, layer.in_width()}, rng);
    ad::Tensor r = random_tensor({std::max<std::size_t>(edges, 1), layer.edge_width()}, rng);

    graph::GraphBatch batch(topo, 1);
    ad::Tape tape;
    std::optional<ad::Value> edge_input;
    if (edges > 0)
        edge_input = tape.constant(r);
    auto out = layer.forward_with_attention(tape, batch, tape.constant(x), edge_input);
    auto dense = dense_gat(layer, topo, x, r);

    Compared c;
    const auto& nodes = out.nodes.val();
    for (std::size_t i = 0; i < nodes.size(); ++i)
        c.max_node_diff = std::max(c.max_node_diff, std::abs(nodes[i] - dense.nodes[i]));
    const auto& alpha = out.attention.val();
    const std::size_t heads = layer.heads();
    std::vector<double> row_sums(k * heads, 0.0);
    for (std::size_t e = 0; e < batch.source.size(); ++e)
        for (std::size_t h = 0; h < heads; ++h) {
            const double a = alpha[e * heads + h];
            const double expect = dense.attention[(batch.target[e] * k + batch.source[e]) * heads + h];
            c.max_attention_diff = std::max(c.max_attention_diff, std::abs(a - expect));
            row_sums[batch.target[e] * heads + h] += a;
        }
    for (double s : row_sums)
        c.max_row_sum_error = std::max(c.max_row_sum_error, std::abs(s - 1.0));
    return c;
}

}  // namespace ctwin::testing
