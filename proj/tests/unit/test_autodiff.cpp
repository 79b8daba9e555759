#include "corridor_twin/autodiff/adam.hpp"
#include "corridor_twin/autodiff/ops.hpp"
#include "corridor_twin/errors.hpp"
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

std::vector<double> values_of(const Value& v)
{
    return v.val().values();
}

// Weighted sum so every output coordinate contributes a distinct gradient.
Value weighted_sum(Tape& tape, Value x, std::uint64_t seed)
{
    Rng rng(seed ^ 0xABCDu);
    Value w = tape.constant(random_tensor(x.shape(), rng));
    return ad::sum_all(ad::mul(x, w));
}

}  // namespace

TEST_CASE("relu and mse examples")
{
    Tape tape;
    Value x = tape.constant(Tensor::vector({-1, 0, 2}));
    CHECK(values_of(ad::relu(x)) == std::vector<double>{0, 0, 2});

    Value a = tape.constant(Tensor::vector({1, 2}));
    CHECK(ad::mse_loss(a, a).val().item() == 0.0);

    Value y = tape.variable(Tensor::vector({3, 4}));
    Value zero = tape.constant(Tensor::vector({0, 0}));
    tape.backward(ad::mse_loss(y, zero));
    CHECK(tape.grad(y)[0] == doctest::Approx(3.0));
    CHECK(tape.grad(y)[1] == doctest::Approx(4.0));

    // Same gradient by central differences.
    auto mse_at = [](double u, double v) {
        Tape t;
        return ad::mse_loss(t.constant(Tensor::vector({u, v})), t.constant(Tensor::vector({0, 0}))).val().item();
    };
    const double h = 1e-6;
    CHECK((mse_at(3 + h, 4) - mse_at(3 - h, 4)) / (2 * h) == doctest::Approx(3.0).epsilon(1e-6));
    CHECK((mse_at(3, 4 + h) - mse_at(3, 4 - h)) / (2 * h) == doctest::Approx(4.0).epsilon(1e-6));
}

TEST_CASE("matmul examples")
{
    Tape tape;
    Value eye = tape.constant(Tensor::matrix(2, 2, {1, 0, 0, 1}));
    Value m = tape.constant(Tensor::matrix(2, 2, {1.5, -2, 3, 0.25}));
    CHECK(ad::matmul(eye, m).val() == m.val());
    Value r = tape.constant(Tensor::matrix(1, 2, {1, 2}));
    Value c = tape.constant(Tensor::matrix(2, 1, {3, 4}));
    CHECK(ad::matmul(r, c).val().item() == 11.0);
    CHECK_THROWS_AS(ad::matmul(r, r), ContractError);
}

TEST_CASE("softmax examples")
{
    Tape tape;
    auto sm = [&](std::initializer_list<double> v) { return values_of(ad::softmax(tape.constant(Tensor::vector(v)), 0)); };
    auto half = sm({0, 0});
    CHECK(half[0] == 0.5);
    CHECK(half[1] == 0.5);
    for (double x : {-7.0, 0.0, 3.5, 1e4}) {
        for (double v : sm({x, x, x}))
            CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    }
    auto big = sm({1000, 1000});
    CHECK(big[0] == 0.5);
    CHECK(big[1] == 0.5);
}

TEST_CASE("softmax slices sum to one and are shift invariant")
{
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        Tape tape;
        Tensor x = random_tensor({3, 4, 5}, rng, -20, 20);
        for (std::size_t axis = 0; axis < 3; ++axis) {
            Tensor shifted = x;
            for (auto& v : shifted.data())
                v += 123.25;
            auto y = ad::softmax(tape.constant(x), axis).val();
            auto ys = ad::softmax(tape.constant(shifted), axis).val();
            Value sums = ad::reduce_sum(tape.constant(y), axis);
            for (double s : sums.val().data())
                CHECK(std::abs(s - 1.0) <= 1e-9);
            for (std::size_t i = 0; i < y.size(); ++i) {
                CHECK(y[i] > 0.0);
                CHECK(std::abs(y[i] - ys[i]) <= 1e-9);
            }
        }
    }
}

TEST_CASE("backward examples")
{
    {
        Tape tape;
        Value x = tape.variable(Tensor::scalar(3));
        tape.backward(ad::mul(x, x));
        CHECK(tape.grad(x).item() == 6.0);
    }
    {
        Tape tape;
        Value x = tape.variable(Tensor::vector({-1, 2}));
        tape.backward(ad::sum_all(ad::relu(x)));
        CHECK(tape.grad(x).values() == std::vector<double>{0, 1});
    }
}

TEST_CASE("backward contract errors")
{
    Tape tape;
    Value x = tape.variable(Tensor::vector({1, 2}));
    CHECK_THROWS_AS(tape.backward(x), ContractError);
    Tape other;
    Value y = other.variable(Tensor::scalar(1));
    CHECK_THROWS_AS(tape.backward(y), ContractError);
    CHECK_THROWS_AS(ad::add(x, y), ContractError);
    CHECK_THROWS_AS(ad::add(x, tape.constant(Tensor::vector({1, 2, 3}))), ContractError);
    CHECK_THROWS_AS(ad::reduce_sum(x, 1), ContractError);
    CHECK_THROWS_WITH_AS(ad::sub(x, tape.constant(Tensor::vector({1}))), doctest::Contains("sub"), ContractError);
}

TEST_CASE("value used twice accumulates both branches")
{
    Rng rng(11);
    Tensor x0 = random_tensor({4}, rng);
    auto grad_of = [&](int branches) {
        Tape tape;
        Value x = tape.variable(x0);
        Value a = ad::sum_all(ad::mul(x, x));
        Value b = ad::sum_all(ad::scale(x, 3.0));
        Value loss = branches == 0 ? a : branches == 1 ? b : ad::add(a, b);
        tape.backward(loss);
        return tape.grad(x).values();
    };
    auto ga = grad_of(0), gb = grad_of(1), both = grad_of(2);
    for (std::size_t i = 0; i < both.size(); ++i)
        CHECK(both[i] == doctest::Approx(ga[i] + gb[i]).epsilon(1e-15));
}

TEST_CASE("tape replay is deterministic")
{
    Rng rng(3);
    Tensor a0 = random_tensor({5, 3}, rng), b0 = random_tensor({3, 4}, rng);
    auto run = [&] {
        Tape tape;
        Value a = tape.variable(a0), b = tape.variable(b0);
        tape.backward(ad::sum_all(ad::softmax(ad::relu(ad::matmul(a, b)), 1)));
        return std::pair{tape.grad(a), tape.grad(b)};
    };
    CHECK(run() == run());
}

TEST_SUITE("finite differences")
{
    TEST_CASE("elementwise and structural primitives")
    {
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            Rng rng(seed);
            const std::size_t r = 1 + rng.below(4), c = 1 + rng.below(5);
            ad::Parameter a("a", random_tensor({r, c}, rng)), b("b", random_tensor({r, c}, rng));
            ad::Parameter bias("bias", random_tensor({c}, rng));
            std::vector<ad::Parameter*> ps{&a, &b, &bias};
            auto check = [&](const char* name, auto&& build) {
                CAPTURE(name);
                CAPTURE(seed);
                CHECK(gradient_check(ps, [&](Tape& t) { return weighted_sum(t, build(t, t.param(a), t.param(b)), seed); },
                                     seed) <= 1e-4);
            };
            check("add", [](Tape&, Value x, Value y) { return ad::add(x, y); });
            check("sub", [](Tape&, Value x, Value y) { return ad::sub(x, y); });
            check("mul", [](Tape&, Value x, Value y) { return ad::mul(x, y); });
            check("relu", [](Tape&, Value x, Value) { return ad::relu(x); });
            check("leaky_relu", [](Tape&, Value x, Value) { return ad::leaky_relu(x, 0.2); });
            check("scale", [](Tape&, Value x, Value) { return ad::scale(x, -1.7); });
            check("add_bias", [&](Tape& t, Value x, Value) { return ad::add_bias(x, t.param(bias)); });
            check("concat0", [](Tape&, Value x, Value y) { std::vector<Value> v{x, y}; return ad::concat(v, 0); });
            check("concat1", [](Tape&, Value x, Value y) { std::vector<Value> v{x, y, x}; return ad::concat(v, 1); });
            check("reshape", [&](Tape&, Value x, Value) { return ad::reshape(x, {c, r}); });
            check("reduce_sum0", [](Tape&, Value x, Value) { return ad::reduce_sum(x, 0); });
            check("reduce_mean1", [](Tape&, Value x, Value) { return ad::reduce_mean(x, 1); });
            check("softmax0", [](Tape&, Value x, Value) { return ad::softmax(x, 0); });
            check("softmax1", [](Tape&, Value x, Value) { return ad::softmax(ad::scale(x, 4.0), 1); });
            check("mse", [](Tape&, Value x, Value y) { return ad::mse_loss(x, y); });
        }
    }

    TEST_CASE("products")
    {
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            Rng rng(100 + seed);
            ad::Parameter a("a", random_tensor({3, 4}, rng)), b("b", random_tensor({4, 2}, rng));
            ad::Parameter bt("bt", random_tensor({2, 4}, rng));
            ad::Parameter ba("ba", random_tensor({2, 3, 4}, rng)), bb("bb", random_tensor({2, 4, 5}, rng));
            ad::Parameter bbt("bbt", random_tensor({2, 5, 4}, rng));
            std::vector<ad::Parameter*> mm{&a, &b}, mbt{&a, &bt}, bm{&ba, &bb}, bmt{&ba, &bbt};
            CHECK(gradient_check(mm, [&](Tape& t) { return weighted_sum(t, ad::matmul(t.param(a), t.param(b)), seed); }, seed) <= 1e-4);
            CHECK(gradient_check(mbt, [&](Tape& t) { return weighted_sum(t, ad::matmul_bt(t.param(a), t.param(bt)), seed); }, seed) <= 1e-4);
            CHECK(gradient_check(bm, [&](Tape& t) { return weighted_sum(t, ad::bmm(t.param(ba), t.param(bb)), seed); }, seed) <= 1e-4);
            CHECK(gradient_check(bmt, [&](Tape& t) { return weighted_sum(t, ad::bmm(t.param(ba), t.param(bbt), true), seed); }, seed) <= 1e-4);
        }
    }

    TEST_CASE("graph primitives")
    {
        const std::vector<std::size_t> index{2, 0, 1, 2, 2, 3};
        const std::vector<std::size_t> segment{0, 1, 1, 0, 2, 1};
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            Rng rng(200 + seed);
            ad::Parameter x("x", random_tensor({4, 6}, rng)), e("e", random_tensor({6, 6}, rng));
            ad::Parameter s("s", random_tensor({6, 3}, rng)), att("att", random_tensor({3, 2}, rng));
            std::vector<ad::Parameter*> px{&x}, pe{&e}, ps{&s}, pa{&e, &att};
            CHECK(gradient_check(px, [&](Tape& t) { return weighted_sum(t, ad::gather_rows(t.param(x), index), seed); }, seed) <= 1e-4);
            CHECK(gradient_check(pe, [&](Tape& t) { return weighted_sum(t, ad::scatter_add_rows(t.param(e), index, 5), seed); }, seed) <= 1e-4);
            CHECK(gradient_check(ps, [&](Tape& t) { return weighted_sum(t, ad::segment_softmax(t.param(s), segment, 3), seed); }, seed) <= 1e-4);
            CHECK(gradient_check(pa, [&](Tape& t) { return weighted_sum(t, ad::grouped_dot(t.param(e), t.param(att)), seed); }, seed) <= 1e-4);
            std::vector<ad::Parameter*> pg{&e, &s};
            CHECK(gradient_check(pg, [&](Tape& t) { return weighted_sum(t, ad::grouped_scale(t.param(e), t.param(s)), seed); }, seed) <= 1e-4);
        }
    }

    TEST_CASE("temporal primitives")
    {
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            Rng rng(300 + seed);
            const std::size_t n = 1 + rng.below(2), c = 1 + rng.below(3), o = 1 + rng.below(3);
            const std::size_t k = 1 + rng.below(3), len = k + rng.below(4), stride = 1 + rng.below(2);
            const std::size_t pad = rng.below(2);
            ad::Parameter x("x", random_tensor({n, c, len}, rng)), w("w", random_tensor({o, c, k}, rng));
            ad::Parameter wt("wt", random_tensor({c, o, k}, rng)), b("b", random_tensor({o}, rng));
            std::vector<ad::Parameter*> conv{&x, &w, &b}, deconv{&x, &wt, &b}, pool{&x};
            CAPTURE(seed);
            CHECK(gradient_check(conv, [&](Tape& t) { return weighted_sum(t, ad::conv1d(t.param(x), t.param(w), t.param(b), stride, pad), seed); }, seed) <= 1e-4);
            CHECK(gradient_check(deconv, [&](Tape& t) { return weighted_sum(t, ad::conv_transpose1d(t.param(x), t.param(wt), t.param(b), stride), seed); }, seed) <= 1e-4);
            CHECK(gradient_check(pool, [&](Tape& t) { return weighted_sum(t, ad::maxpool1d(t.param(x), k, stride), seed); }, seed) <= 1e-4);
        }
    }
}

TEST_CASE("apply_primitive dispatches the named set")
{
    Tape tape;
    Value a = tape.constant(Tensor::matrix(2, 2, {1, -2, 3, 4}));
    Value b = tape.constant(Tensor::matrix(2, 2, {1, 1, 1, 1}));
    std::vector<Value> ab{a, b}, only_a{a};
    using K = ad::PrimitiveKind;
    CHECK(ad::apply_primitive({K::add}, ab).val().values() == std::vector<double>{2, -1, 4, 5});
    CHECK(ad::apply_primitive({K::subtract}, ab).val().values() == std::vector<double>{0, -3, 2, 3});
    CHECK(ad::apply_primitive({K::multiply}, ab).val().values() == std::vector<double>{1, -2, 3, 4});
    CHECK(ad::apply_primitive({K::relu}, only_a).val().values() == std::vector<double>{1, 0, 3, 4});
    CHECK(ad::apply_primitive({K::leaky_relu, 0.5}, only_a).val().values() == std::vector<double>{1, -1, 3, 4});
    CHECK(ad::apply_primitive({.kind = K::concat, .axis = 1}, ab).val().shape() == Shape{2, 4});
    CHECK(ad::apply_primitive({.kind = K::reshape, .shape = {4}}, only_a).val().shape() == Shape{4});
    CHECK(ad::apply_primitive({.kind = K::reduce_sum, .axis = 0}, only_a).val().values() == std::vector<double>{4, 2});
    CHECK(ad::apply_primitive({.kind = K::reduce_mean, .axis = 1}, only_a).val().values() == std::vector<double>{-0.5, 3.5});
    CHECK(ad::apply_primitive({K::mse_loss}, ab).val().item() == doctest::Approx((0 + 9 + 4 + 9) / 4.0));
    CHECK_THROWS_AS(ad::apply_primitive({K::add}, only_a), ContractError);
}

TEST_CASE("adam closed-form first step")
{
    ad::Parameter theta("theta", Tensor::scalar(1.0));
    ad::Adam adam({&theta}, {.learning_rate = 0.1});
    {
        Tape tape;
        Value t = tape.param(theta);
        tape.backward(ad::mul(t, t));
    }
    adam.step();
    // m_hat = g, v_hat = g^2 after one step.
    const double g = 2.0;
    CHECK(theta.value.item() == doctest::Approx(1.0 - 0.1 * g / (std::sqrt(g * g) + 1e-8)).epsilon(1e-14));
    CHECK(adam.step_count() == 1);
    CHECK_FALSE(theta.has_grad);
}

TEST_CASE("adam zero gradient leaves parameters and counts the step")
{
    ad::Parameter theta("theta", Tensor::vector({0.5, -2}));
    ad::Adam adam({&theta}, {});
    theta.has_grad = true;
    adam.step();
    CHECK(theta.value.values() == std::vector<double>{0.5, -2});
    CHECK(adam.step_count() == 1);
}

TEST_CASE("adam missing gradient names the parameter")
{
    ad::Parameter theta("encoder.weight", Tensor::scalar(1.0));
    ad::Adam adam({&theta}, {});
    CHECK_THROWS_WITH_AS(adam.step(), doctest::Contains("encoder.weight"), ContractError);
}

TEST_CASE("adam converges on a shifted quadratic")
{
    // Scalar reference recursion, written out independently of the optimizer class.
    double ref = 0.0, m = 0.0, v = 0.0;
    for (int t = 1; t <= 200; ++t) {
        const double g = 2.0 * (ref - 5.0);
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        const double mh = m / (1.0 - std::pow(0.9, t));
        const double vh = v / (1.0 - std::pow(0.999, t));
        ref -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
    }
    CHECK(std::abs(ref - 5.0) < 0.1);

    ad::Parameter theta("theta", Tensor::scalar(0.0));
    ad::Adam adam({&theta}, {.learning_rate = 0.1});
    for (int t = 0; t < 200; ++t) {
        Tape tape;
        Value d = ad::sub(tape.param(theta), tape.constant(Tensor::scalar(5.0)));
        tape.backward(ad::mul(d, d));
        adam.step();
    }
    CHECK(std::abs(theta.value.item() - 5.0) < 0.1);
    CHECK(theta.value.item() == doctest::Approx(ref).epsilon(1e-12));
}

TEST_CASE("adam rejects invalid configuration")
{
    ad::Parameter theta("theta", Tensor::scalar(0.0));
    CHECK_THROWS_AS(ad::Adam({&theta}, {.learning_rate = -1}), ContractError);
    CHECK_THROWS_AS(ad::Adam({&theta}, {.beta1 = 1.0}), ContractError);
}
