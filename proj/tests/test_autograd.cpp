#include <doctest.h>

#include "drn/params.hpp"
#include "support.hpp"

using namespace drn;
using drn::test::gradient_check;
using drn::test::random_tensor;

namespace {

/// Projects an op output onto a fixed random direction so every output element matters.
Var<double> probe(const Var<double>& y, std::uint64_t seed)
{
    Rng rng(seed);
    return sum(mul(y, constant(random_tensor<double>(y.shape(), rng))));
}

Tensor<double> naive_conv(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>* b, int stride,
                          int pad)
{
    const Index k = w.h();
    const Index ho = (x.h() + 2 * pad - k) / stride + 1;
    const Index wo = (x.w() + 2 * pad - k) / stride + 1;
    Tensor<double> y(Shape{x.n(), w.n(), ho, wo});
    for (Index n = 0; n < x.n(); ++n)
        for (Index o = 0; o < w.n(); ++o)
            for (Index i = 0; i < ho; ++i)
                for (Index j = 0; j < wo; ++j) {
                    double acc = b ? (*b)(0, o, 0, 0) : 0.0;
                    for (Index c = 0; c < x.c(); ++c)
                        for (Index u = 0; u < k; ++u)
                            for (Index v = 0; v < k; ++v) {
                                const Index yy = i * stride + u - pad, xx = j * stride + v - pad;
                                if (yy < 0 || yy >= x.h() || xx < 0 || xx >= x.w()) continue;
                                acc += x(n, c, yy, xx) * w(o, c, u, v);
                            }
                    y(n, o, i, j) = acc;
                }
    return y;
}

}  // namespace

TEST_CASE("conv2d matches a direct loop for several strides and paddings")
{
    Rng rng(1);
    for (int stride : {1, 2})
        for (int pad : {0, 1})
            for (int k : {1, 3, 4}) {
                const auto x = random_tensor<double>(Shape{2, 3, 7, 6}, rng);
                const auto w = random_tensor<double>(Shape{4, 3, k, k}, rng);
                const auto b = random_tensor<double>(Shape{1, 4, 1, 1}, rng);
                const auto got = conv2d(constant(x), constant(w), constant(b), stride, pad).value();
                const auto want = naive_conv(x, w, &b, stride, pad);
                REQUIRE(got.shape() == want.shape());
                CHECK((got.array() - want.array()).abs().maxCoeff() < 1e-12);
            }
}

TEST_CASE("elementwise op gradients match finite differences")
{
    Rng rng(2);
    const Shape s{2, 3, 4, 5};
    Var<double> a(random_tensor<double>(s, rng));
    Var<double> b(random_tensor<double>(s, rng));
    const std::vector<std::pair<const char*, std::function<Var<double>(const Var<double>&)>>> unary = {
        {"abs", [](const Var<double>& x) { return abs(x); }},
        {"square", [](const Var<double>& x) { return square(x); }},
        {"tanh", [](const Var<double>& x) { return tanh(x); }},
        {"sigmoid", [](const Var<double>& x) { return sigmoid(x); }},
        {"leaky_relu", [](const Var<double>& x) { return leaky_relu(x, 0.2); }},
        {"clamp", [](const Var<double>& x) { return clamp(x, -0.5, 0.5); }},
        {"scale", [](const Var<double>& x) { return scale(x, 3.0); }},
        {"add_scalar", [](const Var<double>& x) { return add_scalar(x, 2.0); }},
        {"mean", [](const Var<double>& x) { return mean(x); }},
        {"upsample", [](const Var<double>& x) { return upsample_nearest(x, 2); }},
        {"avg_pool", [](const Var<double>& x) { return global_avg_pool(x); }},
        {"slice", [](const Var<double>& x) { return slice_channels(x, 1, 2); }},
        {"gram", [](const Var<double>& x) { return gram(x); }},
        {"instance_norm", [](const Var<double>& x) { return instance_norm(x, 1e-5); }},
    };
    for (const auto& [name, op] : unary) {
        CAPTURE(name);
        CHECK(gradient_check(a, [&] { return probe(op(a), 5); }) < 1e-6);
    }
    CHECK(gradient_check(a, [&] { return probe(add(a, b), 6); }) < 1e-6);
    CHECK(gradient_check(a, [&] { return probe(sub(b, a), 6); }) < 1e-6);
    CHECK(gradient_check(a, [&] { return probe(mul(a, b), 6); }) < 1e-6);
    CHECK(gradient_check(a, [&] { return probe(concat_channels(b, a), 6); }) < 1e-6);
}

TEST_CASE("layer op gradients match finite differences for every input")
{
    Rng rng(3);
    Var<double> x(random_tensor<double>(Shape{2, 3, 6, 5}, rng));
    Var<double> w(random_tensor<double>(Shape{4, 3, 3, 3}, rng));
    Var<double> b(random_tensor<double>(Shape{1, 4, 1, 1}, rng));
    for (int stride : {1, 2}) {
        const auto f = [&] { return probe(conv2d(x, w, b, stride, 1), 9); };
        CHECK(gradient_check(x, f) < 1e-6);
        CHECK(gradient_check(w, f) < 1e-6);
        CHECK(gradient_check(b, f) < 1e-6);
    }

    Var<double> v(random_tensor<double>(Shape{2, 5, 1, 1}, rng));
    Var<double> lw(random_tensor<double>(Shape{3, 5, 1, 1}, rng));
    Var<double> lb(random_tensor<double>(Shape{1, 3, 1, 1}, rng));
    const auto fl = [&] { return probe(linear(v, lw, lb), 10); };
    CHECK(gradient_check(v, fl) < 1e-6);
    CHECK(gradient_check(lw, fl) < 1e-6);
    CHECK(gradient_check(lb, fl) < 1e-6);

    Var<double> sc(random_tensor<double>(Shape{2, 3, 1, 1}, rng));
    Var<double> sh(random_tensor<double>(Shape{2, 3, 1, 1}, rng));
    const auto fa = [&] { return probe(channel_affine(x, sc, sh), 11); };
    CHECK(gradient_check(x, fa) < 1e-6);
    CHECK(gradient_check(sc, fa) < 1e-6);
    CHECK(gradient_check(sh, fa) < 1e-6);
}

TEST_CASE("gradients accumulate over shared subexpressions")
{
    Var<double> x(Tensor<double>(Shape{1, 1, 1, 2}, Tensor<double>::Array::LinSpaced(2, 1.0, 2.0)), true);
    const Var<double> y = sum(add(mul(x, x), x));  // d/dx = 2x + 1
    backward(y);
    CHECK(x.grad()(0, 0, 0, 0) == doctest::Approx(3.0));
    CHECK(x.grad()(0, 0, 0, 1) == doctest::Approx(5.0));
}

TEST_CASE("no-grad guard records no history and restores the previous mode")
{
    Var<double> x(Tensor<double>(Shape{1, 1, 2, 2}, 1.0), true);
    CHECK(grad_enabled());
    {
        NoGradGuard guard;
        CHECK_FALSE(grad_enabled());
        const Var<double> y = square(x);
        CHECK_FALSE(y.requires_grad());
        CHECK(y.node()->parents.empty());
    }
    CHECK(grad_enabled());
    CHECK(square(x).requires_grad());
}

TEST_CASE("shape mismatches raise dimension errors")
{
    const Var<double> a(Tensor<double>(Shape{1, 2, 3, 3}));
    const Var<double> b(Tensor<double>(Shape{1, 2, 3, 4}));
    CHECK_THROWS_AS(add(a, b), DimensionError);
    CHECK_THROWS_AS(mul(a, b), DimensionError);
    CHECK_THROWS_AS(a.value().item(), DimensionError);
}

TEST_CASE("parameter sets checksum values and reject mismatched assignments")
{
    Rng rng(4);
    ParamSet<float> p;
    p.add("w", random_tensor<float>(Shape{2, 2, 1, 1}, rng));
    const auto before = p.checksum();
    CHECK(p.checksum() == before);
    p.get("w").value().array()[0] += 1.0f;
    CHECK(p.checksum() != before);
    CHECK_THROWS_AS(p.add("w", Tensor<float>(Shape{1, 1, 1, 1})), ConfigError);
    CHECK_THROWS(p.assign({{"w", Tensor<float>(Shape{1, 1, 1, 1})}}));
    CHECK_THROWS(p.assign({{"missing", Tensor<float>(Shape{2, 2, 1, 1})}}));
}
