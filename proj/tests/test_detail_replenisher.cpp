#include <doctest.h>

#include <cmath>

#include "drn/detail_replenisher.hpp"
#include "support.hpp"

using namespace drn;
using drn::test::gradient_check;
using drn::test::random_tensor;

namespace {

Tensor<double> naive_adain(const Tensor<double>& f, const Tensor<double>& sw, const Tensor<double>& sb, double eps)
{
    Tensor<double> out(f.shape());
    for (Index n = 0; n < f.n(); ++n)
        for (Index c = 0; c < f.c(); ++c) {
            const Index mn = sw.n() == 1 ? 0 : n;
            double m = 0, v = 0;
            for (Index y = 0; y < f.h(); ++y)
                for (Index x = 0; x < f.w(); ++x) m += f(n, c, y, x);
            m /= static_cast<double>(f.h() * f.w());
            for (Index y = 0; y < f.h(); ++y)
                for (Index x = 0; x < f.w(); ++x) v += (f(n, c, y, x) - m) * (f(n, c, y, x) - m);
            v /= static_cast<double>(f.h() * f.w());
            for (Index y = 0; y < f.h(); ++y)
                for (Index x = 0; x < f.w(); ++x)
                    out(n, c, y, x) = sw(mn, c, 0, 0) * (f(n, c, y, x) - m) / std::sqrt(v + eps) + sb(mn, c, 0, 0);
        }
    return out;
}

Var<double> random_var(const Shape& s, Rng& rng, double lo = -1, double hi = 1)
{
    return Var<double>(random_tensor<double>(s, rng, lo, hi));
}

}  // namespace

TEST_CASE("adain on a hand-computed channel")
{
    const Var<double> f(Tensor<double>(Shape{1, 1, 1, 4}, Tensor<double>::Array::LinSpaced(4, 1.0, 4.0)));
    const Var<double> sw(Tensor<double>(Shape{1, 1, 1, 1}, 2.0));
    const Var<double> sb(Tensor<double>(Shape{1, 1, 1, 1}, 1.0));
    const auto out = adain(f, sw, sb, 0.0).value();
    const double want[] = {-1.683281573, 0.105572809, 1.894427191, 3.683281573};
    for (int i = 0; i < 4; ++i) CHECK(out(0, 0, 0, i) == doctest::Approx(want[i]).epsilon(1e-8));
}

TEST_CASE("adain matches a direct implementation for shared and per-sample modulation")
{
    Rng rng(1);
    for (int trial = 0; trial < 20; ++trial) {
        const Shape s{2, 3, 5, 4};
        const auto f = random_tensor<double>(s, rng, -4, 4);
        const Index mn = trial % 2 == 0 ? 1 : 2;
        const auto sw = random_tensor<double>(Shape{mn, 3, 1, 1}, rng, 0.1, 3);
        const auto sb = random_tensor<double>(Shape{mn, 3, 1, 1}, rng, -2, 2);
        const auto got = adain(Var<double>(f), Var<double>(sw), Var<double>(sb), 1e-5).value();
        CHECK((got.array() - naive_adain(f, sw, sb, 1e-5).array()).abs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("adain output statistics follow the modulation")
{
    Rng rng(2);
    const auto f = random_var(Shape{1, 2, 6, 6}, rng, -5, 5);
    const Var<double> sw(Tensor<double>(Shape{1, 2, 1, 1}, Tensor<double>::Array::LinSpaced(2, 0.5, 2.0)));
    const Var<double> sb(Tensor<double>(Shape{1, 2, 1, 1}, Tensor<double>::Array::LinSpaced(2, -1.0, 3.0)));
    const auto out = adain(f, sw, sb, 0.0).value();
    for (Index c = 0; c < 2; ++c) {
        const Eigen::ArrayXd p = out.plane(0, c).reshaped().array();
        const double m = p.mean();
        const double sd = std::sqrt((p - m).square().mean());
        CHECK(m == doctest::Approx(sb.value()(0, c, 0, 0)).epsilon(1e-10));
        CHECK(sd == doctest::Approx(sw.value()(0, c, 0, 0)).epsilon(1e-10));
    }
}

TEST_CASE("adain gradients match finite differences")
{
    Rng rng(3);
    Var<double> f = random_var(Shape{2, 3, 4, 4}, rng);
    Var<double> sw = random_var(Shape{2, 3, 1, 1}, rng, 0.5, 2);
    Var<double> sb = random_var(Shape{2, 3, 1, 1}, rng);
    const auto dir = random_tensor<double>(Shape{2, 3, 4, 4}, rng);
    const auto fn = [&] { return sum(mul(adain(f, sw, sb, 1e-5), constant(dir))); };
    CHECK(gradient_check(f, fn) < 1e-6);
    CHECK(gradient_check(sw, fn) < 1e-6);
    CHECK(gradient_check(sb, fn) < 1e-6);
}

TEST_CASE("adain rejects modulation with the wrong channel count")
{
    Rng rng(4);
    CHECK_THROWS_AS(adain(random_var(Shape{1, 3, 2, 2}, rng), random_var(Shape{1, 2, 1, 1}, rng),
                          random_var(Shape{1, 2, 1, 1}, rng)),
                    DimensionError);
}

TEST_CASE("style codes and residuals have the planned shapes and range")
{
    const NetConfig net = test::tiny_net(16, 12);
    const DetailBranch<double> branch(net, 5);
    Rng rng(6);
    const auto source = random_var(Shape{2, 3, 16, 12}, rng);
    const auto guidance = random_var(Shape{2, net.guidance_channels(), 4, 3}, rng);
    const auto z = branch.encode_style(source);
    CHECK(z.shape() == Shape{2, net.style_dim, 1, 1});
    const auto r = branch.generate_residual(z, guidance);
    CHECK(r.shape() == Shape{2, 3, 16, 12});
    CHECK(r.value().array().abs().maxCoeff() <= 1.0);

    const auto& dec = branch.decoder();
    REQUIRE(dec.n_stages() == net.n_down);
    for (int i = 0; i < dec.n_stages(); ++i) CHECK(dec.stage_channels(i) == net.guidance_channels() >> i);
    CHECK_THROWS_AS(branch.style_mlp(z, net.n_down), ConfigError);
    CHECK_THROWS_AS(branch.generate_residual(z, random_var(Shape{2, 3, 4, 3}, rng)), DimensionError);
}

TEST_CASE("identity-initialized modulation starts as plain instance norm")
{
    const NetConfig net = test::tiny_net();
    const DetailBranch<double> branch(net, 7);
    Rng rng(8);
    const auto z = branch.encode_style(random_var(Shape{1, 3, 16, 16}, rng));
    for (int i = 0; i < net.n_down; ++i) {
        const auto m = branch.style_mlp(z, i);
        CHECK((m.scale.value().array() - 1.0).abs().maxCoeff() == 0.0);
        CHECK(m.shift.value().array().abs().maxCoeff() == 0.0);
    }
    const auto g = random_var(Shape{1, net.guidance_channels(), 4, 4}, rng);
    const auto with = branch.generate_residual(z, g).value();
    const auto without = branch.decoder().forward_without_style(g).value();
    CHECK((with.array() - without.array()).abs().maxCoeff() < 1e-12);
}

TEST_CASE("randomly initialized modulation makes the residual depend on the style")
{
    NetConfig net = test::tiny_net();
    net.identity_modulation_init = false;
    const DetailBranch<double> branch(net, 9);
    Rng rng(10);
    const auto g = random_var(Shape{1, net.guidance_channels(), 4, 4}, rng);
    const auto a = branch.forward(random_var(Shape{1, 3, 16, 16}, rng), g).value();
    const auto b = branch.forward(random_var(Shape{1, 3, 16, 16}, rng), g).value();
    CHECK((a.array() - b.array()).abs().maxCoeff() > 1e-6);
}

TEST_CASE("detail branch parameter gradients match finite differences")
{
    NetConfig net = test::tiny_net(8, 8);
    net.identity_modulation_init = false;
    DetailBranch<double> branch(net, 11);
    Rng rng(12);
    const auto source = random_var(Shape{1, 3, 8, 8}, rng);
    const auto guidance = random_var(Shape{1, net.guidance_channels(), 2, 2}, rng);
    const auto dir = random_tensor<double>(Shape{1, 3, 8, 8}, rng);
    const auto f = [&] { return sum(mul(branch.forward(source, guidance), constant(dir))); };
    for (const auto& e : branch.params().entries()) {
        CAPTURE(e.name);
        Var<double> p = e.var;
        CHECK(gradient_check(p, f, 1e-6, 8) < 1e-4);
    }
    Var<double> gv = guidance;
    CHECK(gradient_check(gv, f) < 1e-4);
}

TEST_CASE("face module generates faces under a sketch and is inactive without one")
{
    const NetConfig net = test::tiny_net();
    const FaceModule<double> face(net, 13);
    const DetailBranch<double> branch(net, 13);
    Rng rng(14);
    const auto crop = random_var(Shape{1, 3, net.face_size, net.face_size}, rng);
    const auto z = face.encode_style(crop);
    const auto sketch = random_var(Shape{1, 1, net.face_size, net.face_size}, rng, 0, 1);
    const auto out = face.generate_face(z, sketch);
    CHECK(out.shape() == Shape{1, 3, net.face_size, net.face_size});
    CHECK(out.value().array().abs().maxCoeff() <= 1.0);
    CHECK_THROWS_AS(face.generate_face(z, Var<double>()), FaceModuleInactive);
    CHECK_THROWS_AS(face.generate_face(z, random_var(Shape{1, 1, 8, 8}, rng)), DimensionError);

    for (const auto& fe : face.params().entries())
        for (const auto& be : branch.params().entries()) CHECK(fe.var.node() != be.var.node());
}

TEST_CASE("composition at mask extremes")
{
    Rng rng(15);
    const Shape s{1, 3, 6, 5};
    const auto coarse = random_var(s, rng);
    const auto residual = random_var(s, rng);
    const auto face = random_var(s, rng);
    const Tensor<double> zero(Shape{1, 1, 6, 5});
    const Tensor<double> one(Shape{1, 1, 6, 5}, 1.0);

    const auto plain = compose_blend(coarse, residual, std::optional<Var<double>>(face), zero).value();
    CHECK((plain.array() - (coarse.value().array() + residual.value().array())).abs().maxCoeff() < 1e-15);
    const auto full = compose_blend(coarse, residual, std::optional<Var<double>>(face), one).value();
    CHECK((full.array() - face.value().array()).abs().maxCoeff() < 1e-15);
    const auto no_face = compose_blend(coarse, residual, std::optional<Var<double>>(), zero).value();
    CHECK((no_face.array() - plain.array()).abs().maxCoeff() == 0.0);
    CHECK_THROWS_AS(compose_blend(coarse, residual, std::optional<Var<double>>(), one), DimensionError);

    const auto clamped = compose_final(coarse, residual, std::optional<Var<double>>(face), zero).value();
    CHECK(clamped.array().abs().maxCoeff() <= 1.0);
    CHECK((clamped.array() - plain.array().max(-1.0).min(1.0)).abs().maxCoeff() == 0.0);
}

TEST_CASE("composition blends linearly for intermediate masks")
{
    Rng rng(16);
    const Shape s{2, 3, 4, 4};
    const auto coarse = random_var(s, rng);
    const auto residual = random_var(s, rng);
    const auto face = random_var(s, rng);
    const auto mask = random_tensor<double>(Shape{1, 1, 4, 4}, rng, 0, 1);
    const auto got = compose_blend(coarse, residual, std::optional<Var<double>>(face), mask).value();
    for (Index n = 0; n < 2; ++n)
        for (Index c = 0; c < 3; ++c)
            for (Index y = 0; y < 4; ++y)
                for (Index x = 0; x < 4; ++x) {
                    const double m = mask(0, 0, y, x);
                    const double want = (1 - m) * (coarse.value()(n, c, y, x) + residual.value()(n, c, y, x)) +
                                        m * face.value()(n, c, y, x);
                    CHECK(got(n, c, y, x) == doctest::Approx(want).epsilon(1e-12));
                }
}
