#include "corridor_twin/autodiff/ops.hpp"

#include "corridor_twin/errors.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>

namespace ctwin::ad {

namespace kernels {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
          const double* b, double* c, bool accumulate)
{
    const auto M = static_cast<Eigen::Index>(m);
    const auto N = static_cast<Eigen::Index>(n);
    const auto K = static_cast<Eigen::Index>(k);
    MutMap C(c, M, N);
    auto run = [&](const auto& A, const auto& B) {
        if (accumulate)
            C.noalias() += A * B;
        else
            C.noalias() = A * B;
    };
    if (!trans_a && !trans_b)
        run(ConstMap(a, M, K), ConstMap(b, K, N));
    else if (!trans_a && trans_b)
        run(ConstMap(a, M, K), ConstMap(b, N, K).transpose());
    else if (trans_a && !trans_b)
        run(ConstMap(a, K, M).transpose(), ConstMap(b, K, N));
    else
        run(ConstMap(a, K, M).transpose(), ConstMap(b, N, K).transpose());
}

}  // namespace kernels

namespace {

using kernels::gemm;

Tape& tape_of(std::initializer_list<Value> values)
{
    Tape* t = values.begin()->tape;
    if (!t)
        throw ContractError("value is detached from any tape");
    for (const auto& v : values) {
        if (v.tape != t)
            throw ContractError("operands live on different tapes");
        t->check(v);
    }
    return *t;
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b)
{
    if (a.shape() != b.shape())
        throw ContractError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                            shape_string(b.shape()));
}

void require_rank(const char* op, const Tensor& t, std::size_t rank)
{
    if (t.rank() != rank)
        throw ContractError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                            shape_string(t.shape()));
}

void require_axis(const char* op, const Tensor& t, std::size_t axis)
{
    if (axis >= t.rank())
        throw ContractError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for shape " +
                            shape_string(t.shape()));
}

void accumulate(Tensor* dst, const Tensor& src)
{
    if (!dst)
        return;
    auto d = dst->data();
    auto s = src.data();
    for (std::size_t i = 0; i < d.size(); ++i)
        d[i] += s[i];
}

struct AxisSplit {
    std::size_t outer = 1, n = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis)
{
    AxisSplit s;
    for (std::size_t i = 0; i < axis; ++i)
        s.outer *= shape[i];
    s.n = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i)
        s.inner *= shape[i];
    return s;
}

std::size_t row_width(const Tensor& t)
{
    return t.rank() == 0 ? 1 : t.size() / t.dim(0);
}

}  // namespace

Value add(Value a, Value b)
{
    auto& tape = tape_of({a, b});
    const auto& av = a.val();
    const auto& bv = b.val();
    require_same_shape("add", av, bv);
    Tensor out = av;
    auto o = out.data();
    auto bd = bv.data();
    for (std::size_t i = 0; i < o.size(); ++i)
        o[i] += bd[i];
    Value in[] = {a, b};
    return tape.record("add", std::move(out), in, [](const Tape&, const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
        accumulate(gi[0], g);
        accumulate(gi[1], g);
    });
}

Value sub(Value a, Value b)
{
    auto& tape = tape_of({a, b});
    const auto& av = a.val();
    const auto& bv = b.val();
    require_same_shape("subtract", av, bv);
    Tensor out = av;
    auto o = out.data();
    auto bd = bv.data();
    for (std::size_t i = 0; i < o.size(); ++i)
        o[i] -= bd[i];
    Value in[] = {a, b};
    return tape.record("subtract", std::move(out), in,
                       [](const Tape&, const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
                           accumulate(gi[0], g);
                           if (gi[1]) {
                               auto d = gi[1]->data();
                               auto s = g.data();
                               for (std::size_t i = 0; i < d.size(); ++i)
                                   d[i] -= s[i];
                           }
                       });
}

Value mul(Value a, Value b)
{
    auto& tape = tape_of({a, b});
    const auto& av = a.val();
    const auto& bv = b.val();
    require_same_shape("multiply", av, bv);
    Tensor out = av;
    auto o = out.data();
    auto bd = bv.data();
    for (std::size_t i = 0; i < o.size(); ++i)
        o[i] *= bd[i];
    Value in[] = {a, b};
    return tape.record("multiply", std::move(out), in,
                       [a, b](const Tape& t, const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
                           auto gd = g.data();
                           if (gi[0]) {
                               auto d = gi[0]->data();
                               auto other = t.value(b).data();
                               for (std::size_t i = 0; i < d.size(); ++i)
                                   d[i] += gd[i] * other[i];
                           }
                           if (gi[1]) {
                               auto d = gi[1]->data();
                               auto other = t.value(a).data();
                               for (std::size_t i = 0; i < d.size(); ++i)
                                   d[i] += gd[i] * other[i];
                           }
                       });
}

Value leaky_relu(Value x, double slope)
{
    auto& tape = tape_of({x});
    Tensor out = x.val();
    for (auto& v : out.data())
        v = v > 0.0 ? v : slope * v;
    Value in[] = {x};
    return tape.record(slope == 0.0 ? "relu" : "leaky_relu", std::move(out), in,
                       [x, slope](const Tape& t, const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
                           if (!gi[0])
                               return;
                           auto d = gi[0]->data();
                           auto xv = t.value(x).data();
                           auto gd = g.data();
                           for (std::size_t i = 0; i < d.size(); ++i)
                               d[i] += xv[i] > 0.0 ? gd[i] : slope * gd[i];
                       });
}

Value relu(Value x)
{
    return leaky_relu(x, 0.0);
}

Value scale(Value x, double factor)
{
    auto& tape = tape_of({x});
    Tensor out = x.val();
    for (auto& v : out.data())
        v *= factor;
    Value in[] = {x};
    return tape.record("scale", std::move(out), in,
                       [factor](const Tape&, const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
                           if (!gi[0])
                               return;
                           auto d = gi[0]->data();
                           auto gd = g.data();
                           for (std::size_t i = 0; i < d.size(); ++i)
                               d[i] += factor * gd[i];
                       });
}

Value add_bias(Value x, Value bias)
{
    auto& tape = tape_of({x, bias});
    const auto& xv = x.val();
    const auto& bv = bias.val();
    require_rank("add_bias", bv, 1);
    if (xv.rank() == 0 || xv.shape().back() != bv.dim(0))
        throw ContractError("add_bias: bias " + shape_string(bv.shape()) + " does not match trailing axis of " +
                            shape_string(xv.shape()));
    const std::size_t c = bv.dim(0);
    Tensor out = xv;
    auto o = out.data();
    auto b = bv.data();
    for (std::size_t i = 0; i < o.size(); ++i)
        o[i] += b[i % c];
    Value in[] = {x, bias};
    return tape.record("add_bias", std::move(out), in,
                       [c](const Tape&, const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
                           accumulate(gi[0], g);
                           if (gi[1]) {
                               auto d = gi[1]->data();
                               auto gd = g.data();
                               for (std::size_t i = 0; i < gd.size(); ++i)
                                   d[i % c] += gd[i];
                           }
                       });
}

Value concat(std::span<const Value> parts, std::size_t axis)
{
    if (parts.empty())
        throw ContractError("concat: no inputs");
    Tape* tp = parts[0].tape;
    if (!tp)
        throw ContractError("value is detached from any tape");
    for (const auto& p : parts) {
        if (p.tape != tp)
            throw ContractError("operands live on different tapes");
        tp->check(p);
    }
    const auto& first = parts[0].val();
    require_axis("concat", first, axis);
    Shape out_shape = first.shape();
    std::size_t total = 0;
    std::vector<std::size_t> extents;
    for (const auto& p : parts) {
        const auto& s = p.val().shape();
        if (s.size() != out_shape.size())
            throw ContractError("concat: rank mismatch " + shape_string(first.shape()) + " vs " + shape_string(s));
        for (std::size_t i = 0; i < s.size(); ++i)
            if (i != axis && s[i] != out_shape[i])
                throw ContractError("concat: shape mismatch " + shape_string(first.shape()) + " vs " +
                                    shape_string(s) + " off axis " + std::to_string(axis));
        extents.push_back(s[axis]);
        total += s[axis];
    }
    out_shape[axis] = total;
    const auto split = split_axis(out_shape, axis);
    Tensor out(out_shape);
    auto o = out.data();
    std::size_t offset = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
        auto src = parts[p].val().data();
        const std::size_t block = extents[p] * split.inner;
        for (std::size_t r = 0; r < split.outer; ++r)
            std::copy_n(src.begin() + r * block, block, o.begin() + r * total * split.inner + offset * split.inner);
        offset += extents[p];
    }
    return tp->record("concat", std::move(out), parts,
                      [extents, split, total](const Tape&, const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
                          auto gd = g.data();
                          std::size_t offset = 0;
                          for (std::size_t p = 0; p < extents.size(); ++p) {
                              const std::size_t block = extents[p] * split.inner;
                              if (gi[p]) {
                                  auto d = gi[p]->data();
                                  for (std::size_t r = 0; r < split.outer; ++r) {
                                      const auto* s = gd.data() + r * total * split.inner + offset * split.inner;
                                      auto* dd = d.data() + r * block;
                                      for (std::size_t j = 0; j < block; ++j)
                                          dd[j] += s[j];
                                  }
                              }
                              offset += extents[p];
                          }
                      });
}

Value reshape(Value x, Shape shape)
{
    auto& tape = tape_of({x});
    Tensor out = x.val();
    out.reshape(std::move(shape));
    Value in[] = {x};
    return tape.record("reshape", std::move(out), in, [](const Tape&, const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
        if (!gi[0])
            return;
        auto d = gi[0]->data();
        auto gd = g.data();
        for (std::size_t i = 0; i < d.size(); ++i)
            d[i] += gd[i];
    });
}

namespace {

Value reduce_impl(Value x, std::size_t axis, bool mean)
{
    auto& tape = tape_of({x});
    const auto& xv = x.val();
    require_axis(mean ? "reduce_mean" : "reduce_sum", xv, axis);
    const auto s = split_axis(xv.shape(), axis);
    Shape out_shape = xv.shape();
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
    Tensor out(out_shape);
    auto o = out.data();
    auto xd = xv.data();
    const double f = mean ? 1.0 / static_cast<double>(s.n) : 1.0;
    for (std::size_t r = 0; r < s.outer; ++r)
        for (std::size_t j = 0; j < s.n; ++j)
            for (std::size_t i = 0; i < s.inner; ++i)
                o[r * s.inner + i] += xd[(r * s.n + j) * s.inner + i];
    if (mean)
        for (auto& v : o)
            v *= f;
    Value in[] = {x};
    return tape.record(mean ? "reduce_mean" : "reduce_sum", std::move(out), in,
                       [s, f](const Tape&, const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
                           if (!gi[0])
                               return;
                           auto d = gi[0]->data();
                           auto gd = g.data();
                           for (std::size_t r = 0; r < s.outer; ++r)
                               for (std::size_t j = 0; j < s.n; ++j)
                                   for (std::size_t i = 0; i < s.inner; ++i)
                                       d[(r * s.n + j) * s.inner + i] += f * gd[r * s.inner + i];
                       });
}

}  // namespace

Value reduce_sum(Value x, std::size_t axis)
{
    return reduce_impl(x, axis, false);
}

Value reduce_mean(Value x, std::size_t axis)
{
    return reduce_impl(x, axis, true);
}

Value sum_all(Value x)
{
    auto& tape = tape_of({x});
    double acc = 0.0;
    for (double v : x.val().data())
        acc += v;
    Value in[] = {x};
    return tape.record("sum_all", Tensor::scalar(acc), in,
                       [](const Tape&, const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
                           if (!gi[0])
                               return;
                           const double gv = g[0];
                           for (auto& v : gi[0]->data())
                               v += gv;
                       });
}

Value mse_loss(Value pred, Value target)
{
    auto& tape = tape_of({pred, target});
    const auto& p = pred.val();
    const auto& t = target.val();
    require_same_shape("mse_loss", p, t);
    const double n = static_cast<double>(p.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double r = p[i] - t[i];
        acc += r * r;
    }
    Value in[] = {pred, target};
    return tape.record("mse_loss", Tensor::scalar(acc / n), in,
                       [pred, target, n](const Tape& tp, const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
                           auto pv = tp.value(pred).data();
                           auto tv = tp.value(target).data();
                           const double f = 2.0 * g[0] / n;
                           for (std::size_t i = 0; i < pv.size(); ++i) {
                               const double r = f * (pv[i] - tv[i]);
                               if (gi[0])
                                   (*gi[0])[i] += r;
                               if (gi[1])
                                   (*gi[1])[i] -= r;
                           }
                       });
}

Value matmul(Value a, Value b)
{
    auto& tape = tape_of({a, b});
    const auto& av = a.val();
    const auto& bv = b.val();
    require_rank("matmul", av, 2);
    require_rank("matmul", bv, 2);
    const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
    if (bv.dim(0) != k)
        throw ContractError("matmul: inner dimensions disagree " + shape_string(av.shape()) + " . " +
                            shape_string(bv.shape()));
    Tensor out(Shape{m, n});
    gemm(false, false, m, n, k, av.raw(), bv.raw(), out.raw(), false);
    Value in[] = {a, b};
    return tape.record("matmul", std::move(out), in,
                       [a, b, m, n, k](const Tape& t, const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
                           if (gi[0])
                               gemm(false, true, m, k, n, g.raw(), t.value(b).raw(), gi[0]->raw(), true);
                           if (gi[1])
                               gemm(true, false, k, n, m, t.value(a).raw(), g.raw(), gi[1]->raw(), true);
                       });
}

Value matmul_bt(Value a, Value b)
{
    auto& tape = tape_of({a, b});
    const auto& av = a.val();
    const auto& bv = b.val();
    require_rank("matmul_bt", av, 2);
    require_rank("matmul_bt", bv, 2);
    const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(0);
    if (bv.dim(1) != k)
        throw ContractError("matmul_bt: inner dimensions disagree " + shape_string(av.shape()) + " . " +
                            shape_string(bv.shape()) + "^T");
    Tensor out(Shape{m, n});
    gemm(false, true, m, n, k, av.raw(), bv.raw(), out.raw(), false);
    Value in[] = {a, b};
    return tape.record("matmul_bt", std::move(out), in,
                       [a, b, m, n, k](const Tape& t, const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
                           if (gi[0])
                               gemm(false, false, m, k, n, g.raw(), t.value(b).raw(), gi[0]->raw(), true);
                           if (gi[1])
                               gemm(true, false, n, k, m, g.raw(), t.value(a).raw(), gi[1]->raw(), true);
                       });
}

Value bmm(Value a, Value b, bool transpose_b)
{
    auto& tape = tape_of({a, b});
    const auto& av = a.val();
    const auto& bv = b.val();
    require_rank("bmm", av, 3);
    require_rank("bmm", bv, 3);
    const std::size_t batch = av.dim(0), m = av.dim(1), k = av.dim(2);
    const std::size_t n = transpose_b ? bv.dim(1) : bv.dim(2);
    const std::size_t bk = transpose_b ? bv.dim(2) : bv.dim(1);
    if (bv.dim(0) != batch || bk != k)
        throw ContractError("bmm: operand shapes disagree " + shape_string(av.shape()) + " . " +
                            shape_string(bv.shape()) + (transpose_b ? "^T" : ""));
    Tensor out(Shape{batch, m, n});
    for (std::size_t i = 0; i < batch; ++i)
        gemm(false, transpose_b, m, n, k, av.raw() + i * m * k, bv.raw() + i * k * n, out.raw() + i * m * n, false);
    Value in[] = {a, b};
    return tape.record(
        "bmm", std::move(out), in,
        [a, b, batch, m, n, k, transpose_b](const Tape& t, const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
            const double* ad = t.value(a).raw();
            const double* bd = t.value(b).raw();
            for (std::size_t i = 0; i < batch; ++i) {
                const double* gp = g.raw() + i * m * n;
                if (gi[0]) {
                    // dA = dC . op(B)^T
                    gemm(false, !transpose_b, m, k, n, gp, bd + i * k * n, gi[0]->raw() + i * m * k, true);
                }
                if (gi[1]) {
                    if (transpose_b)  // B is n x k: dB = dC^T . A
                        gemm(true, false, n, k, m, gp, ad + i * m * k, gi[1]->raw() + i * k * n, true);
                    else  // B is k x n: dB = A^T . dC
                        gemm(true, false, k, n, m, ad + i * m * k, gp, gi[1]->raw() + i * k * n, true);
                }
            }
        });
}

Value softmax(Value x, std::size_t axis)
{
    auto& tape = tape_of({x});
    const auto& xv = x.val();
    require_axis("softmax", xv, axis);
    const auto s = split_axis(xv.shape(), axis);
    Tensor out(xv.shape());
    auto xd = xv.data();
    auto o = out.data();
    for (std::size_t r = 0; r < s.outer; ++r)
        for (std::size_t i = 0; i < s.inner; ++i) {
            const std::size_t base = r * s.n * s.inner + i;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < s.n; ++j)
                mx = std::max(mx, xd[base + j * s.inner]);
            double z = 0.0;
            for (std::size_t j = 0; j < s.n; ++j) {
                const double e = std::exp(xd[base + j * s.inner] - mx);
                o[base + j * s.inner] = e;
                z += e;
            }
            for (std::size_t j = 0; j < s.n; ++j)
                o[base + j * s.inner] /= z;
        }
    Value in[] = {x};
    return tape.record("softmax", std::move(out), in,
                       [s](const Tape&, const Tensor& y, const Tensor& g, std::span<Tensor* const> gi) {
                           if (!gi[0])
                               return;
                           auto yd = y.data();
                           auto gd = g.data();
                           auto d = gi[0]->data();
                           for (std::size_t r = 0; r < s.outer; ++r)
                               for (std::size_t i = 0; i < s.inner; ++i) {
                                   const std::size_t base = r * s.n * s.inner + i;
                                   double dot = 0.0;
                                   for (std::size_t j = 0; j < s.n; ++j)
                                       dot += gd[base + j * s.inner] * yd[base + j * s.inner];
                                   for (std::size_t j = 0; j < s.n; ++j) {
                                       const std::size_t at = base + j * s.inner;
                                       d[at] += yd[at] * (gd[at] - dot);
                                   }
                               }
                       });
}

Value gather_rows(Value x, std::span<const std::size_t> index)
{
    auto& tape = tape_of({x});
    const auto& xv = x.val();
    if (xv.rank() == 0)
        throw ContractError("gather_rows: input must have a leading axis");
    const std::size_t rows = xv.dim(0);
    const std::size_t width = row_width(xv);
    Shape out_shape = xv.shape();
    out_shape[0] = index.size();
    Tensor out(out_shape);
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] >= rows)
            throw ContractError("gather_rows: index " + std::to_string(index[i]) + " out of range for " +
                                std::to_string(rows) + " rows");
        std::copy_n(xv.raw() + index[i] * width, width, out.raw() + i * width);
    }
    std::vector<std::size_t> idx(index.begin(), index.end());
    Value in[] = {x};
    return tape.record("gather_rows", std::move(out), in,
                       [idx = std::move(idx), width](const Tape&, const Tensor&, const Tensor& g,
                                                     std::span<Tensor* const> gi) {
                           if (!gi[0])
                               return;
                           double* d = gi[0]->raw();
                           const double* gd = g.raw();
                           for (std::size_t i = 0; i < idx.size(); ++i)
                               for (std::size_t j = 0; j < width; ++j)
                                   d[idx[i] * width + j] += gd[i * width + j];
                       });
}

Value scatter_add_rows(Value x, std::span<const std::size_t> index, std::size_t rows)
{
    auto& tape = tape_of({x});
    const auto& xv = x.val();
    if (xv.rank() == 0 || xv.dim(0) != index.size())
        throw ContractError("scatter_add_rows: " + std::to_string(index.size()) + " indices for input " +
                            shape_string(xv.shape()));
    const std::size_t width = row_width(xv);
    Shape out_shape = xv.shape();
    out_shape[0] = rows;
    Tensor out(out_shape);
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] >= rows)
            throw ContractError("scatter_add_rows: index " + std::to_string(index[i]) + " out of range for " +
                                std::to_string(rows) + " rows");
        const double* s = xv.raw() + i * width;
        double* d = out.raw() + index[i] * width;
        for (std::size_t j = 0; j < width; ++j)
            d[j] += s[j];
    }
    std::vector<std::size_t> idx(index.begin(), index.end());
    Value in[] = {x};
    return tape.record("scatter_add_rows", std::move(out), in,
                       [idx = std::move(idx), width](const Tape&, const Tensor&, const Tensor& g,
                                                     std::span<Tensor* const> gi) {
                           if (!gi[0])
                               return;
                           double* d = gi[0]->raw();
                           const double* gd = g.raw();
                           for (std::size_t i = 0; i < idx.size(); ++i)
                               for (std::size_t j = 0; j < width; ++j)
                                   d[i * width + j] += gd[idx[i] * width + j];
                       });
}

Value segment_softmax(Value scores, std::span<const std::size_t> segment, std::size_t segments)
{
    auto& tape = tape_of({scores});
    const auto& sv = scores.val();
    require_rank("segment_softmax", sv, 2);
    const std::size_t e = sv.dim(0), h = sv.dim(1);
    if (segment.size() != e)
        throw ContractError("segment_softmax: " + std::to_string(segment.size()) + " segment ids for " +
                            std::to_string(e) + " rows");
    std::vector<double> mx(segments * h, -std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < e; ++i) {
        if (segment[i] >= segments)
            throw ContractError("segment_softmax: segment id out of range");
        for (std::size_t c = 0; c < h; ++c)
            mx[segment[i] * h + c] = std::max(mx[segment[i] * h + c], sv.at(i, c));
    }
    std::vector<double> z(segments * h, 0.0);
    Tensor out(sv.shape());
    for (std::size_t i = 0; i < e; ++i)
        for (std::size_t c = 0; c < h; ++c) {
            const double ev = std::exp(sv.at(i, c) - mx[segment[i] * h + c]);
            out.at(i, c) = ev;
            z[segment[i] * h + c] += ev;
        }
    for (std::size_t i = 0; i < e; ++i)
        for (std::size_t c = 0; c < h; ++c)
            out.at(i, c) /= z[segment[i] * h + c];
    std::vector<std::size_t> seg(segment.begin(), segment.end());
    Value in[] = {scores};
    return tape.record("segment_softmax", std::move(out), in,
                       [seg = std::move(seg), segments, h](const Tape&, const Tensor& y, const Tensor& g,
                                                           std::span<Tensor* const> gi) {
                           if (!gi[0])
                               return;
                           std::vector<double> dot(segments * h, 0.0);
                           for (std::size_t i = 0; i < seg.size(); ++i)
                               for (std::size_t c = 0; c < h; ++c)
                                   dot[seg[i] * h + c] += g.at(i, c) * y.at(i, c);
                           for (std::size_t i = 0; i < seg.size(); ++i)
                               for (std::size_t c = 0; c < h; ++c)
                                   gi[0]->at(i, c) += y.at(i, c) * (g.at(i, c) - dot[seg[i] * h + c]);
                       });
}

Value grouped_dot(Value x, Value a)
{
    auto& tape = tape_of({x, a});
    const auto& xv = x.val();
    const auto& av = a.val();
    require_rank("grouped_dot", xv, 2);
    require_rank("grouped_dot", av, 2);
    const std::size_t n = xv.dim(0), groups = av.dim(0), d = av.dim(1);
    if (xv.dim(1) != groups * d)
        throw ContractError("grouped_dot: input " + shape_string(xv.shape()) + " does not split into groups " +
                            shape_string(av.shape()));
    Tensor out(Shape{n, groups});
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t g = 0; g < groups; ++g) {
            double acc = 0.0;
            for (std::size_t j = 0; j < d; ++j)
                acc += xv.at(r, g * d + j) * av.at(g, j);
            out.at(r, g) = acc;
        }
    Value in[] = {x, a};
    return tape.record("grouped_dot", std::move(out), in,
                       [x, a, n, groups, d](const Tape& t, const Tensor&, const Tensor& go,
                                            std::span<Tensor* const> gi) {
                           const auto& xv = t.value(x);
                           const auto& av = t.value(a);
                           for (std::size_t r = 0; r < n; ++r)
                               for (std::size_t g = 0; g < groups; ++g) {
                                   const double gv = go.at(r, g);
                                   for (std::size_t j = 0; j < d; ++j) {
                                       if (gi[0])
                                           gi[0]->at(r, g * d + j) += gv * av.at(g, j);
                                       if (gi[1])
                                           gi[1]->at(g, j) += gv * xv.at(r, g * d + j);
                                   }
                               }
                       });
}

Value grouped_scale(Value x, Value s)
{
    auto& tape = tape_of({x, s});
    const auto& xv = x.val();
    const auto& sv = s.val();
    require_rank("grouped_scale", xv, 2);
    require_rank("grouped_scale", sv, 2);
    const std::size_t n = xv.dim(0), groups = sv.dim(1);
    if (sv.dim(0) != n || xv.dim(1) % groups != 0)
        throw ContractError("grouped_scale: scale " + shape_string(sv.shape()) + " does not match input " +
                            shape_string(xv.shape()));
    const std::size_t d = xv.dim(1) / groups;
    Tensor out(xv.shape());
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t g = 0; g < groups; ++g)
            for (std::size_t j = 0; j < d; ++j)
                out.at(r, g * d + j) = xv.at(r, g * d + j) * sv.at(r, g);
    Value in[] = {x, s};
    return tape.record("grouped_scale", std::move(out), in,
                       [x, s, n, groups, d](const Tape& t, const Tensor&, const Tensor& go,
                                            std::span<Tensor* const> gi) {
                           const auto& xv = t.value(x);
                           const auto& sv = t.value(s);
                           for (std::size_t r = 0; r < n; ++r)
                               for (std::size_t g = 0; g < groups; ++g) {
                                   double acc = 0.0;
                                   for (std::size_t j = 0; j < d; ++j) {
                                       const double gv = go.at(r, g * d + j);
                                       if (gi[0])
                                           gi[0]->at(r, g * d + j) += gv * sv.at(r, g);
                                       acc += gv * xv.at(r, g * d + j);
                                   }
                                   if (gi[1])
                                       gi[1]->at(r, g) += acc;
                               }
                       });
}

Value conv1d(Value x, Value w, Value bias, std::size_t stride, std::size_t padding)
{
    auto& tape = tape_of({x, w, bias});
    const auto& xv = x.val();
    const auto& wv = w.val();
    const auto& bv = bias.val();
    require_rank("conv1d", xv, 3);
    require_rank("conv1d", wv, 3);
    require_rank("conv1d", bv, 1);
    if (stride == 0)
        throw ContractError("conv1d: stride must be positive");
    const std::size_t n = xv.dim(0), c = xv.dim(1), len = xv.dim(2);
    const std::size_t o = wv.dim(0), k = wv.dim(2);
    if (wv.dim(1) != c || bv.dim(0) != o)
        throw ContractError("conv1d: kernel " + shape_string(wv.shape()) + " / bias " + shape_string(bv.shape()) +
                            " do not match input " + shape_string(xv.shape()));
    if (len + 2 * padding < k)
        throw ContractError("conv1d: input length " + std::to_string(len) + " too short; minimum is " +
                            std::to_string(k > 2 * padding ? k - 2 * padding : 1));
    const std::size_t lout = (len + 2 * padding - k) / stride + 1;
    const std::size_t ck = c * k;
    std::vector<double> cols(n * lout * ck, 0.0);
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t l = 0; l < lout; ++l) {
            double* row = cols.data() + (b * lout + l) * ck;
            for (std::size_t ci = 0; ci < c; ++ci)
                for (std::size_t j = 0; j < k; ++j) {
                    const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(l * stride + j) -
                                               static_cast<std::ptrdiff_t>(padding);
                    if (pos >= 0 && pos < static_cast<std::ptrdiff_t>(len))
                        row[ci * k + j] = xv.raw()[(b * c + ci) * len + static_cast<std::size_t>(pos)];
                }
        }
    std::vector<double> y(n * lout * o);
    gemm(false, true, n * lout, o, ck, cols.data(), wv.raw(), y.data(), false);
    Tensor out(Shape{n, o, lout});
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t l = 0; l < lout; ++l)
            for (std::size_t oc = 0; oc < o; ++oc)
                out.raw()[(b * o + oc) * lout + l] = y[(b * lout + l) * o + oc] + bv[oc];
    Value in[] = {x, w, bias};
    return tape.record(
        "conv1d", std::move(out), in,
        [w, cols = std::move(cols), n, c, len, o, k, lout, ck, stride, padding](
            const Tape& t, const Tensor&, const Tensor& g, std::span<Tensor* const> gi) {
            std::vector<double> gy(n * lout * o);
            for (std::size_t b = 0; b < n; ++b)
                for (std::size_t oc = 0; oc < o; ++oc)
                    for (std::size_t l = 0; l < lout; ++l) {
                        const double gv = g.raw()[(b * o + oc) * lout + l];
                        gy[(b * lout + l) * o + oc] = gv;
                        if (gi[2])
                            (*gi[2])[oc] += gv;
                    }
            if (gi[1])
                gemm(true, false, o, ck, n * lout, gy.data(), cols.data(), gi[1]->raw(), true);
            if (gi[0]) {
                std::vector<double> gcols(n * lout * ck);
                gemm(false, false, n * lout, ck, o, gy.data(), t.value(w).raw(), gcols.data(), false);
                for (std::size_t b = 0; b < n; ++b)
                    for (std::size_t l = 0; l < lout; ++l) {
                        const double* row = gcols.data() + (b * lout + l) * ck;
                        for (std::size_t ci = 0; ci < c; ++ci)
                            for (std::size_t j = 0; j < k; ++j) {
                                const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(l * stride + j) -
                                                           static_cast<std::ptrdiff_t>(padding);
                                if (pos >= 0 && pos < static_cast<std::ptrdiff_t>(len))
                                    gi[0]->raw()[(b * c + ci) * len + static_cast<std::size_t>(pos)] +=
                                        row[ci * k + j];
                            }
                    }
            }
        });
}

Value conv_transpose1d(Value x, Value w, Value bias, std::size_t stride)
{
    auto& tape = tape_of({x, w, bias});
    const auto& xv = x.val();
    const auto& wv = w.val();
    const auto& bv = bias.val();
    require_rank("conv_transpose1d", xv, 3);
    require_rank("conv_transpose1d", wv, 3);
    require_rank("conv_transpose1d", bv, 1);
    if (stride == 0)
        throw ContractError("conv_transpose1d: stride must be positive");
    const std::size_t n = xv.dim(0), c = xv.dim(1), len = xv.dim(2);
    const std::size_t o = wv.dim(1), k = wv.dim(2);
    if (wv.dim(0) != c || bv.dim(0) != o)
        throw ContractError("conv_transpose1d: kernel " + shape_string(wv.shape()) + " / bias " +
                            shape_string(bv.shape()) + " do not match input " + shape_string(xv.shape()));
    const std::size_t lout = (len - 1) * stride + k;
    const std::size_t ok = o * k;
    // xr[(b, l), ci] = x[b, ci, l]
    std::vector<double> xr(n * len * c);
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t ci = 0; ci < c; ++ci)
            for (std::size_t l = 0; l < len; ++l)
                xr[(b * len + l) * c + ci] = xv.raw()[(b * c + ci) * len + l];
    std::vector<double> y(n * len * ok);
    gemm(false, false, n * len, ok, c, xr.data(), wv.raw(), y.data(), false);
    Tensor out(Shape{n, o, lout});
    for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t oc = 0; oc < o; ++oc)
            for (std::size_t p = 0; p < lout; ++p)
                out.raw()[(b * o + oc) * lout + p] = bv[oc];
        for (std::size_t l = 0; l < len; ++l) {
            const double* row = y.data() + (b * len + l) * ok;
            for (std::size_t oc = 0; oc < o; ++oc)
                for (std::size_t j = 0; j < k; ++j)
                    out.raw()[(b * o + oc) * lout + l * stride + j] += row[oc * k + j];
        }
    }
    Value in[] = {x, w, bias};
    return tape.record(
        "conv_transpose1d", std::move(out), in,
        [w, xr = std::move(xr), n, c, len, o, k, lout, ok, stride](const Tape& t, const Tensor&, const Tensor& g,
                                                                   std::span<Tensor* const> gi) {
            std::vector<double> gy(n * len * ok);
            for (std::size_t b = 0; b < n; ++b)
                for (std::size_t l = 0; l < len; ++l)
                    for (std::size_t oc = 0; oc < o; ++oc)
                        for (std::size_t j = 0; j < k; ++j)
                            gy[(b * len + l) * ok + oc * k + j] = g.raw()[(b * o + oc) * lout + l * stride + j];
            if (gi[2])
                for (std::size_t b = 0; b < n; ++b)
                    for (std::size_t oc = 0; oc < o; ++oc)
                        for (std::size_t p = 0; p < lout; ++p)
                            (*gi[2])[oc] += g.raw()[(b * o + oc) * lout + p];
            if (gi[1])
                gemm(true, false, c, ok, n * len, xr.data(), gy.data(), gi[1]->raw(), true);
            if (gi[0]) {
                std::vector<double> gxr(n * len * c);
                gemm(false, true, n * len, c, ok, gy.data(), t.value(w).raw(), gxr.data(), false);
                for (std::size_t b = 0; b < n; ++b)
                    for (std::size_t ci = 0; ci < c; ++ci)
                        for (std::size_t l = 0; l < len; ++l)
                            gi[0]->raw()[(b * c + ci) * len + l] += gxr[(b * len + l) * c + ci];
            }
        });
}

Value maxpool1d(Value x, std::size_t window, std::size_t stride)
{
    auto& tape = tape_of({x});
    const auto& xv = x.val();
    require_rank("maxpool1d", xv, 3);
    if (window == 0 || stride == 0)
        throw ContractError("maxpool1d: window and stride must be positive");
    const std::size_t n = xv.dim(0), c = xv.dim(1), len = xv.dim(2);
    if (len < window)
        throw ContractError("maxpool1d: input length " + std::to_string(len) + " shorter than window " +
                            std::to_string(window));
    const std::size_t lout = (len - window) / stride + 1;
    Tensor out(Shape{n, c, lout});
    std::vector<std::size_t> arg(n * c * lout);
    for (std::size_t r = 0; r < n * c; ++r)
        for (std::size_t l = 0; l < lout; ++l) {
            std::size_t best = r * len + l * stride;
            for (std::size_t j = 1; j < window; ++j) {
                const std::size_t at = r * len + l * stride + j;
                if (xv.raw()[at] > xv.raw()[best])
                    best = at;
            }
            arg[r * lout + l] = best;
            out.raw()[r * lout + l] = xv.raw()[best];
        }
    Value in[] = {x};
    return tape.record("maxpool1d", std::move(out), in,
                       [arg = std::move(arg)](const Tape&, const Tensor&, const Tensor& g,
                                              std::span<Tensor* const> gi) {
                           if (!gi[0])
                               return;
                           for (std::size_t i = 0; i < arg.size(); ++i)
                               gi[0]->raw()[arg[i]] += g.raw()[i];
                       });
}

Value apply_primitive(const Primitive& prim, std::span<const Value> inputs)
{
    auto need = [&](std::size_t count, const char* name) {
        if (inputs.size() != count)
            throw ContractError(std::string(name) + ": expected " + std::to_string(count) + " inputs, got " +
                                std::to_string(inputs.size()));
    };
    switch (prim.kind) {
    case PrimitiveKind::add:
        need(2, "add");
        return add(inputs[0], inputs[1]);
    case PrimitiveKind::subtract:
        need(2, "subtract");
        return sub(inputs[0], inputs[1]);
    case PrimitiveKind::multiply:
        need(2, "multiply");
        return mul(inputs[0], inputs[1]);
    case PrimitiveKind::relu:
        need(1, "relu");
        return relu(inputs[0]);
    case PrimitiveKind::leaky_relu:
        need(1, "leaky_relu");
        return leaky_relu(inputs[0], prim.slope);
    case PrimitiveKind::concat:
        return concat(inputs, prim.axis);
    case PrimitiveKind::reshape:
        need(1, "reshape");
        return reshape(inputs[0], prim.shape);
    case PrimitiveKind::reduce_sum:
        need(1, "reduce_sum");
        return reduce_sum(inputs[0], prim.axis);
    case PrimitiveKind::reduce_mean:
        need(1, "reduce_mean");
        return reduce_mean(inputs[0], prim.axis);
    case PrimitiveKind::mse_loss:
        need(2, "mse_loss");
        return mse_loss(inputs[0], inputs[1]);
    }
    throw ContractError("unknown primitive");
}

}  // namespace ctwin::ad
