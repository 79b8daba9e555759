#include "corridor_twin/errors.hpp"
#include "corridor_twin/nn/layers.hpp"
#include "gradcheck.hpp"

#include <doctest.h>

#include <cmath>

using namespace ctwin;
using ad::Shape;
using ad::Tape;
using ad::Tensor;
using ad::Value;
using testing::gradient_check;
using testing::random_tensor;

namespace {

Value probe_loss(Tape& tape, Value y, std::uint64_t seed)
{
    Rng rng(seed * 7 + 1);
    return ad::sum_all(ad::mul(y, tape.constant(random_tensor(y.shape(), rng))));
}

double inner(const Tensor& a, const Tensor& b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += a[i] * b[i];
    return s;
}

}  // namespace

TEST_CASE("dense identity and bias-only")
{
    Rng rng(1);
    nn::DenseLayer layer("d", 3, 3, nn::Activation::none, rng);
    layer.weight.value = Tensor::matrix(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    Tape tape;
    Tensor x = Tensor::matrix(2, 3, {1, -2, 3, 0.5, 0, -4});
    CHECK(layer.forward(tape, tape.constant(x)).val().values() == x.values());

    nn::DenseLayer ones("o", 3, 4, nn::Activation::relu, rng);
    ones.weight.value.fill(0.0);
    ones.bias.value.fill(1.0);
    for (double v : ones.forward(tape, tape.constant(x)).val().data())
        CHECK(v == 1.0);
    CHECK_THROWS_AS(ones.forward(tape, tape.constant(Tensor::matrix(1, 2, {1, 2}))), ContractError);
}

TEST_CASE("glorot bounds and zero bias")
{
    Rng rng(2);
    nn::DenseLayer layer("d", 30, 10, nn::Activation::none, rng);
    const double limit = std::sqrt(6.0 / 40.0);
    for (double v : layer.weight.value.data())
        CHECK(std::abs(v) <= limit);
    for (double v : layer.bias.value.data())
        CHECK(v == 0.0);
}

TEST_CASE("conv1d examples")
{
    Rng rng(3);
    Tape tape;
    nn::TemporalConvLayer conv("c", 1, 1, 2, rng);
    conv.kernels.value = Tensor({1, 1, 2}, {1, 1});
    auto y = conv.forward(tape, tape.constant(Tensor({1, 3}, {1, 2, 3}))).val();
    CHECK(y.values() == std::vector<double>{3, 5});
    CHECK(y.shape() == Shape{1, 2});

    nn::TemporalConvLayer unit("u", 1, 1, 1, rng);
    unit.kernels.value = Tensor({1, 1, 1}, {2.5});
    CHECK(unit.forward(tape, tape.constant(Tensor({1, 3}, {1, 2, 3}))).val().values() == std::vector<double>{2.5, 5, 7.5});

    nn::TemporalConvLayer wide("w", 1, 1, 5, rng);
    CHECK_THROWS_WITH_AS(wide.forward(tape, tape.constant(Tensor({1, 3}, {1, 2, 3}))), doctest::Contains("minimum"),
                         ContractError);
}

TEST_CASE("deconv examples")
{
    Rng rng(4);
    Tape tape;
    nn::TemporalDeconvLayer deconv("t", 1, 1, 3, rng);
    deconv.kernels.value = Tensor({1, 1, 3}, {1, 2, 3});
    CHECK(deconv.forward(tape, tape.constant(Tensor({1, 1}, {1}))).val().values() == std::vector<double>{1, 2, 3});

    nn::TemporalDeconvLayer up("u", 4, 2, 10, rng);
    CHECK(up.forward(tape, tape.constant(random_tensor({4, 1}, rng))).val().shape() == Shape{2, 10});
}

TEST_CASE("maxpool examples")
{
    Tape tape;
    nn::TemporalPoolLayer pool(2, 2);
    CHECK(pool.forward(tape, tape.constant(Tensor({1, 4}, {1, 3, 2, 4}))).val().values() == std::vector<double>{3, 4});
    nn::TemporalPoolLayer slide(2, 1);
    CHECK(slide.forward(tape, tape.constant(Tensor({1, 4}, {7, 7, 7, 7}))).val().values() ==
          std::vector<double>{7, 7, 7});
    CHECK_THROWS_AS(nn::TemporalPoolLayer(5, 1).forward(tape, tape.constant(Tensor({1, 4}, {1, 2, 3, 4}))),
                    ContractError);

    // Gradient of sum(pool(x)) lands on each window's first argmax.
    Tape grad_tape;
    Value x = grad_tape.variable(Tensor({1, 6}, {1, 5, 5, 2, 0, 9}));
    grad_tape.backward(ad::sum_all(slide.forward(grad_tape, x)));
    // windows: (1,5)->1  (5,5)->1  (5,2)->2  (2,0)->3  (0,9)->5
    CHECK(grad_tape.grad(x).values() == std::vector<double>{0, 2, 1, 1, 0, 1});
}

TEST_CASE("length formulas over random configurations")
{
    Rng rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t c = 1 + rng.below(3), o = 1 + rng.below(3), k = 1 + rng.below(4);
        const std::size_t stride = 1 + rng.below(3), pad = rng.below(3);
        const std::size_t len = std::max<std::size_t>(1, k > 2 * pad ? k - 2 * pad : 1) + rng.below(6);
        Tape tape;
        Value x = tape.constant(random_tensor({c, len}, rng));
        nn::TemporalConvLayer conv("c", c, o, k, rng, stride, pad);
        auto y = conv.forward(tape, x).val();
        CHECK(y.dim(1) == (len + 2 * pad - k) / stride + 1);
        nn::TemporalDeconvLayer deconv("d", c, o, k, rng, stride);
        CHECK(deconv.forward(tape, x).val().dim(1) == (len - 1) * stride + k);
        if (len >= k) {
            nn::TemporalPoolLayer pool(k, stride);
            CHECK(pool.forward(tape, x).val().dim(1) == (len - k) / stride + 1);
        }
    }
}

TEST_CASE("conv and deconv are adjoint")
{
    Rng rng(6);
    for (int trial = 0; trial < 25; ++trial) {
        const std::size_t c = 1 + rng.below(3), o = 1 + rng.below(3), k = 1 + rng.below(4);
        const std::size_t stride = 1 + rng.below(3), len = k + rng.below(6);
        nn::TemporalConvLayer conv("c", c, o, k, rng, stride);
        nn::TemporalDeconvLayer deconv("d", o, c, k, rng, stride);
        // Deconv kernels [o x c x k] hold the same numbers as conv kernels [o x c x k].
        deconv.kernels.value = conv.kernels.value;
        Tape tape;
        Tensor x = random_tensor({c, len}, rng);
        auto cx = conv.forward(tape, tape.constant(x)).val();
        Tensor y = random_tensor(cx.shape(), rng);
        auto dy = deconv.forward(tape, tape.constant(y)).val();
        // The transpose covers the first (L'-1)*stride + k positions of x; the rest read zero.
        Tensor dy_cut({c, len});
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t i = 0; i < std::min(len, dy.dim(1)); ++i)
                dy_cut[ch * len + i] = dy[ch * dy.dim(1) + i];
        CHECK(std::abs(inner(cx, y) - inner(x, dy_cut)) <= 1e-9);
    }
}

TEST_CASE("self-attention examples")
{
    Rng rng(7);
    nn::SelfAttentionBlock block("sa", 3, 4, rng);
    Tape tape;
    Value one = tape.constant(random_tensor({1, 3}, rng));
    auto out = block.forward_with_weights(tape, one);
    CHECK(out.weights.val().item() == 1.0);
    auto v = block.value.forward(tape, one).val();
    CHECK(out.values.val().values() == v.values());

    Tensor same({2, 3}, {0.3, -1, 2, 0.3, -1, 2});
    auto pair = block.forward_with_weights(tape, tape.constant(same)).weights.val();
    for (double a : pair.data())
        CHECK(a == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("self-attention matches a direct evaluation of the formula")
{
    Rng rng(8);
    for (int trial = 0; trial < 10; ++trial) {
        nn::SelfAttentionBlock block("sa", 5, 4, rng);
        Tensor x = random_tensor({3, 5}, rng);
        Tape tape;
        auto out = block.forward_with_weights(tape, tape.constant(x));
        auto project = [&](const nn::DenseLayer& layer) {
            std::vector<double> p(3 * 4);
            for (std::size_t t = 0; t < 3; ++t)
                for (std::size_t j = 0; j < 4; ++j) {
                    double s = layer.bias.value[j];
                    for (std::size_t i = 0; i < 5; ++i)
                        s += x[t * 5 + i] * layer.weight.value[j * 5 + i];
                    p[t * 4 + j] = s;
                }
            return p;
        };
        auto q = project(block.query), k = project(block.key), v = project(block.value);
        for (std::size_t t = 0; t < 3; ++t) {
            double score[3], total = 0.0;
            for (std::size_t u = 0; u < 3; ++u) {
                double s = 0.0;
                for (std::size_t j = 0; j < 4; ++j)
                    s += q[t * 4 + j] * k[u * 4 + j];
                score[u] = std::exp(s / 2.0);
                total += score[u];
            }
            double row = 0.0;
            for (std::size_t u = 0; u < 3; ++u) {
                CHECK(std::abs(out.weights.val()[t * 3 + u] - score[u] / total) <= 1e-9);
                row += out.weights.val()[t * 3 + u];
            }
            CHECK(std::abs(row - 1.0) <= 1e-9);
            for (std::size_t j = 0; j < 4; ++j) {
                double expect = 0.0;
                for (std::size_t u = 0; u < 3; ++u)
                    expect += score[u] / total * v[u * 4 + j];
                CHECK(std::abs(out.values.val()[t * 4 + j] - expect) <= 1e-9);
            }
        }
    }
}

TEST_CASE("layers pass the finite-difference check")
{
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed + 40);
        ad::Parameter x("x", random_tensor({3, 4}, rng));
        ad::Parameter seq("seq", random_tensor({2, 3, 6}, rng));

        nn::DenseLayer dense("dense", 4, 5, nn::Activation::relu, rng);
        auto pd = dense.parameters();
        pd.push_back(&x);
        CHECK(gradient_check(pd, [&](Tape& t) { return probe_loss(t, dense.forward(t, t.param(x)), seed); }, seed) <= 1e-4);

        nn::MlpBlock mlp("mlp", {4, 6, 3}, nn::Activation::relu, nn::Activation::none, rng);
        auto pm = mlp.parameters();
        pm.push_back(&x);
        CHECK(gradient_check(pm, [&](Tape& t) { return probe_loss(t, mlp.forward(t, t.param(x)), seed); }, seed) <= 1e-4);

        nn::TemporalConvLayer conv("conv", 3, 2, 3, rng, 1, 1);
        auto pc = conv.parameters();
        pc.push_back(&seq);
        CHECK(gradient_check(pc, [&](Tape& t) { return probe_loss(t, conv.forward(t, t.param(seq)), seed); }, seed) <= 1e-4);

        nn::TemporalDeconvLayer deconv("deconv", 3, 2, 4, rng, 2);
        auto pt = deconv.parameters();
        pt.push_back(&seq);
        CHECK(gradient_check(pt, [&](Tape& t) { return probe_loss(t, deconv.forward(t, t.param(seq)), seed); }, seed) <= 1e-4);

        nn::TemporalPoolLayer pool(2, 1);
        std::vector<ad::Parameter*> pp{&seq};
        CHECK(gradient_check(pp, [&](Tape& t) { return probe_loss(t, pool.forward(t, t.param(seq)), seed); }, seed) <= 1e-4);

        nn::SelfAttentionBlock attention("sa", 4, 3, rng);
        auto pa = attention.parameters();
        pa.push_back(&x);
        CHECK(gradient_check(pa, [&](Tape& t) { return probe_loss(t, attention.forward(t, t.param(x)), seed); }, seed) <= 1e-4);
    }
}
