#pragma once

#include "corridor_twin/autodiff/tape.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace ctwin::ad {

// Elementwise; shapes must match exactly.
Value add(Value a, Value b);
Value sub(Value a, Value b);
Value mul(Value a, Value b);
Value relu(Value x);
Value leaky_relu(Value x, double slope);
Value scale(Value x, double factor);

/// x[..., C] + b[C], broadcasting the bias over all leading axes.
Value add_bias(Value x, Value bias);

Value concat(std::span<const Value> parts, std::size_t axis);
Value reshape(Value x, Shape shape);

/// Removes `axis` from the shape.
Value reduce_sum(Value x, std::size_t axis);
Value reduce_mean(Value x, std::size_t axis);
Value sum_all(Value x);

/// mean((pred - target)^2) over all elements, as a scalar.
Value mse_loss(Value pred, Value target);

Value matmul(Value a, Value b);     // [m x k] . [k x n]
Value matmul_bt(Value a, Value b);  // [m x k] . [n x k]^T

/// Batched product over the leading axis: [B x m x k] . [B x k x n], or with
/// `transpose_b` the second operand is [B x n x k].
Value bmm(Value a, Value b, bool transpose_b = false);

/// Softmax along `axis` with per-slice max subtraction.
Value softmax(Value x, std::size_t axis);

/// Row gather over the leading axis: out[i, ...] = x[index[i], ...].
Value gather_rows(Value x, std::span<const std::size_t> index);

/// Row scatter-add over the leading axis into `rows` output rows.
Value scatter_add_rows(Value x, std::span<const std::size_t> index, std::size_t rows);

/// Softmax of scores[E x H] within each segment of rows sharing `segment[e]`,
/// independently per column.
Value segment_softmax(Value scores, std::span<const std::size_t> segment, std::size_t segments);

/// x[N x G*d] . a[G x d] per group: out[n, g] = sum_j x[n, g*d + j] * a[g, j].
Value grouped_dot(Value x, Value a);

/// out[n, g*d + j] = x[n, g*d + j] * s[n, g].
Value grouped_scale(Value x, Value s);

/// Cross-correlation of x[N x C x L] with w[O x C x K], bias[O].
Value conv1d(Value x, Value w, Value bias, std::size_t stride, std::size_t padding);

/// Transposed convolution of x[N x C x L] with w[C x O x K], bias[O];
/// output length (L - 1) * stride + K.
Value conv_transpose1d(Value x, Value w, Value bias, std::size_t stride);

/// Max over windows along the last axis of x[N x C x L]; ties route to the first index.
Value maxpool1d(Value x, std::size_t window, std::size_t stride);

// Uniform entry point over the named primitive set.
enum class PrimitiveKind {
    add,
    subtract,
    multiply,
    relu,
    leaky_relu,
    concat,
    reshape,
    reduce_sum,
    reduce_mean,
    mse_loss,
};

struct Primitive {
    PrimitiveKind kind;
    double slope = 0.2;
    std::size_t axis = 0;
    Shape shape{};
};

Value apply_primitive(const Primitive& prim, std::span<const Value> inputs);

namespace kernels {
/// C = op(A) . op(B) (+ C when accumulate). Row-major, op = transpose when flagged.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
          const double* b, double* c, bool accumulate);
}  // namespace kernels

}  // namespace ctwin::ad
