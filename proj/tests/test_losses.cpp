#include <doctest.h>

#include <cmath>
#include <limits>

#include "drn/losses.hpp"
#include "support.hpp"

using namespace drn;
using drn::test::gradient_check;
using drn::test::random_tensor;

namespace {

Var<double> random_var(const Shape& s, Rng& rng, double lo = -1, double hi = 1)
{
    return Var<double>(random_tensor<double>(s, rng, lo, hi));
}

Var<double> scalar(double v)
{
    return Var<double>(Tensor<double>::scalar(v));
}

/// Direct Gram-matrix style distance on raw feature maps.
double naive_style(const Tensor<double>& a, const Tensor<double>& b)
{
    const double chw = static_cast<double>(a.c() * a.h() * a.w());
    double total = 0;
    for (Index n = 0; n < a.n(); ++n)
        for (Index i = 0; i < a.c(); ++i)
            for (Index j = 0; j < a.c(); ++j) {
                double ga = 0, gb = 0;
                for (Index y = 0; y < a.h(); ++y)
                    for (Index x = 0; x < a.w(); ++x) {
                        ga += a(n, i, y, x) * a(n, j, y, x);
                        gb += b(n, i, y, x) * b(n, j, y, x);
                    }
                total += (ga / chw - gb / chw) * (ga / chw - gb / chw);
            }
    return total / chw / static_cast<double>(a.n());
}

}  // namespace

TEST_CASE("reconstruction loss is the mean absolute difference")
{
    Rng rng(1);
    const auto a = random_var(Shape{2, 3, 4, 5}, rng);
    const auto b = random_var(Shape{2, 3, 4, 5}, rng);
    double want = 0;
    for (Index i = 0; i < a.value().numel(); ++i) want += std::fabs(a.value().array()[i] - b.value().array()[i]);
    want /= static_cast<double>(a.value().numel());
    CHECK(recon_loss(a, b).item() == doctest::Approx(want).epsilon(1e-12));
    CHECK(recon_loss(a, a).item() == 0.0);
}

TEST_CASE("perceptual loss sums per-layer mean absolute feature differences")
{
    Rng rng(2);
    const auto a = random_var(Shape{2, 3, 16, 16}, rng);
    const auto b = random_var(Shape{2, 3, 16, 16}, rng);
    const auto id = FeatureExtractor<double>::identity();
    CHECK(perceptual_loss(a, b, id).item() == doctest::Approx(recon_loss(a, b).item()).epsilon(1e-12));

    const auto fx = FeatureExtractor<double>::fixed_random(7, 3, 4);
    REQUIRE(fx.n_layers() == 3);
    const auto fa = fx.features(a), fb = fx.features(b);
    double l1 = 0, l2 = 0;
    for (std::size_t l = 0; l < fa.size(); ++l) {
        l1 += (fa[l].value().array() - fb[l].value().array()).abs().mean();
        l2 += (fa[l].value().array() - fb[l].value().array()).square().mean();
    }
    CHECK(perceptual_loss(a, b, fx).item() == doctest::Approx(l1).epsilon(1e-12));
    CHECK(perceptual_loss(a, b, fx, FeatureNorm::L2).item() == doctest::Approx(l2).epsilon(1e-12));
}

TEST_CASE("style loss equals the direct Gram distance")
{
    Rng rng(3);
    const auto a = random_var(Shape{2, 3, 6, 5}, rng);
    const auto b = random_var(Shape{2, 3, 6, 5}, rng);
    CHECK(style_loss(a, b, FeatureExtractor<double>::identity()).item() ==
          doctest::Approx(naive_style(a.value(), b.value())).epsilon(1e-12));

    const auto fx = FeatureExtractor<double>::fixed_random(7, 2, 4);
    const auto fa = fx.features(a), fb = fx.features(b);
    double want = 0;
    for (std::size_t l = 0; l < fa.size(); ++l) want += naive_style(fa[l].value(), fb[l].value());
    CHECK(style_loss(a, b, fx).item() == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("feature losses are non-negative, symmetric and zero on identical inputs")
{
    Rng rng(4);
    const auto fx = FeatureExtractor<double>::fixed_random(7, 2, 4);
    for (int trial = 0; trial < 10; ++trial) {
        const auto a = random_var(Shape{1, 3, 8, 8}, rng);
        const auto b = random_var(Shape{1, 3, 8, 8}, rng);
        for (const auto& f : std::vector<std::function<double(const Var<double>&, const Var<double>&)>>{
                 [&](const Var<double>& x, const Var<double>& y) { return perceptual_loss(x, y, fx).item(); },
                 [&](const Var<double>& x, const Var<double>& y) { return style_loss(x, y, fx).item(); }}) {
            CHECK(f(a, b) >= 0.0);
            CHECK(f(a, b) == doctest::Approx(f(b, a)).epsilon(1e-12));
            CHECK(f(a, a) == 0.0);
        }
    }
}

TEST_CASE("loss gradients match finite differences")
{
    Rng rng(5);
    Var<double> a = random_var(Shape{1, 3, 8, 8}, rng);
    const auto b = random_var(Shape{1, 3, 8, 8}, rng);
    const auto fx = FeatureExtractor<double>::fixed_random(7, 2, 4);
    CHECK(gradient_check(a, [&] { return recon_loss(a, b); }) < 1e-6);
    CHECK(gradient_check(a, [&] { return perceptual_loss(a, b, fx); }) < 1e-5);
    CHECK(gradient_check(a, [&] { return perceptual_loss(a, b, fx, FeatureNorm::L2); }) < 1e-6);
    CHECK(gradient_check(a, [&] { return style_loss(a, b, fx); }) < 1e-6);
}

TEST_CASE("fixed random extractors are reproducible from their provenance")
{
    Rng rng(6);
    const auto x = random_var(Shape{1, 3, 16, 16}, rng);
    const auto a = FeatureExtractor<double>::fixed_random(7, 4, 16);
    const auto b = FeatureExtractor<double>::from_provenance(a.provenance());
    const auto c = FeatureExtractor<double>::fixed_random(8, 4, 16);
    const auto fa = a.features(x), fb = b.features(x), fc = c.features(x);
    REQUIRE(fa.size() == 4);
    for (std::size_t l = 0; l < fa.size(); ++l) {
        CHECK(fa[l].shape() == Shape{1, Index(16) << std::min<std::size_t>(l, 2), 16 >> (l + 1), 16 >> (l + 1)});
        CHECK((fa[l].value().array() == fb[l].value().array()).all());
    }
    CHECK((fa[0].value().array() != fc[0].value().array()).any());
    CHECK_THROWS_AS(a.features(random_var(Shape{1, 3, 8, 16}, rng)), ConfigError);
}

TEST_CASE("least-squares adversarial objectives on score maps")
{
    const Shape s{1, 1, 2, 2};
    const Var<double> ones(Tensor<double>(s, 1.0)), zeros(Tensor<double>(s, 0.0)), half(Tensor<double>(s, 0.5));
    CHECK(lsgan_d_loss_scores(ones, zeros).item() == 0.0);
    CHECK(lsgan_d_loss_scores(zeros, ones).item() == doctest::Approx(1.0));
    CHECK(lsgan_d_loss_scores(half, half).item() == doctest::Approx(0.25));
    CHECK(lsgan_g_loss_scores(ones, ones).item() == 0.0);
    CHECK(lsgan_g_loss_scores(zeros, ones).item() == doctest::Approx(0.5));
    CHECK(lsgan_g_loss_scores(half, zeros).item() == doctest::Approx(0.125 + 0.5));
}

TEST_CASE("discriminators score patches and check their condition")
{
    Rng rng(7);
    const Discriminator<double> da(DiscriminatorKind::Appearance, 3, 4, 1);
    const Discriminator<double> ds(DiscriminatorKind::Shape, 18, 4, 2);
    const auto img = random_var(Shape{2, 3, 32, 16}, rng);
    CHECK(da.score(img, img).shape() == Shape{2, 1, 2, 1});
    CHECK(ds.score(random_var(Shape{2, 18, 32, 16}, rng), img).shape() == Shape{2, 1, 2, 1});
    CHECK_THROWS_AS(da.score(random_var(Shape{2, 18, 32, 16}, rng), img), ConfigError);
}

TEST_CASE("the discriminator objective does not reach the generator output")
{
    Rng rng(8);
    Discriminator<double> d(DiscriminatorKind::Appearance, 3, 4, 3);
    d.params().set_requires_grad(true);
    const auto cond = random_var(Shape{1, 3, 16, 16}, rng);
    const auto real = random_var(Shape{1, 3, 16, 16}, rng);
    Var<double> fake(random_tensor<double>(Shape{1, 3, 16, 16}, rng), true);
    const auto loss = lsgan_d_loss(d, cond, real, cond, fake);
    const double want = lsgan_d_loss_scores(d.score(cond, real), d.score(cond, fake)).item();
    CHECK(loss.item() == doctest::Approx(want).epsilon(1e-12));
    backward(loss);
    CHECK(fake.grad().array().abs().maxCoeff() == 0.0);
    CHECK(d.params().grad_norm() > 0.0);
}

TEST_CASE("weighted aggregates combine their terms with the configured weights")
{
    Rng rng(9);
    const LossWeights w;
    CHECK(w.gan == 1.0);
    CHECK(w.per == 5.0);
    CHECK(w.recon == 10.0);
    CHECK(w.sty == 5.0);
    const auto fx = FeatureExtractor<double>::fixed_random(7, 2, 4);
    const auto coarse = random_var(Shape{1, 3, 16, 16}, rng);
    const auto target = random_var(Shape{1, 3, 16, 16}, rng);
    const auto l1 = loss_l1(coarse, target, fx, w);
    CHECK(l1.recon.item() == doctest::Approx(recon_loss(coarse, target).item()).epsilon(1e-12));
    CHECK(l1.per.item() == doctest::Approx(perceptual_loss(coarse, target, fx).item()).epsilon(1e-12));
    CHECK(l1.total.item() == doctest::Approx(10 * l1.recon.item() + 5 * l1.per.item()).epsilon(1e-12));

    const Discriminator<double> da(DiscriminatorKind::Appearance, 3, 4, 1);
    const Discriminator<double> ds(DiscriminatorKind::Shape, 18, 4, 2);
    const auto pose = random_var(Shape{1, 18, 16, 16}, rng, 0, 1);
    const auto l2 = loss_l2(coarse, target, target, pose, fx, da, ds, w);
    CHECK(l2.adv.item() == doctest::Approx(lsgan_g_loss(da, ds, target, pose, coarse).item()).epsilon(1e-12));
    CHECK(l2.sty.item() == doctest::Approx(style_loss(coarse, target, fx).item()).epsilon(1e-12));
    CHECK(l2.total.item() == doctest::Approx(10 * l2.recon.item() + 5 * l2.per.item() + 5 * l2.sty.item() +
                                             l2.adv.item())
                                 .epsilon(1e-12));
}

TEST_CASE("weighted sums skip zero-weight terms")
{
    const double nan = std::numeric_limits<double>::quiet_NaN();
    CHECK(weighted_sum<double>({{2.0, scalar(3.0)}, {0.0, scalar(nan)}, {0.5, scalar(4.0)}}).item() == 8.0);
    LossWeights bad;
    bad.per = -1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}
