#include "drn/losses.hpp"

namespace drn {

void LossWeights::validate() const
{
    if (gan < 0 || per < 0 || recon < 0 || sty < 0) throw ConfigError("loss weights must be non-negative");
}

void to_json(nlohmann::json& j, const LossWeights& w)
{
    j = nlohmann::json{{"gan", w.gan}, {"per", w.per}, {"recon", w.recon}, {"sty", w.sty}};
}

void from_json(const nlohmann::json& j, LossWeights& w)
{
    for (const auto& [key, _] : j.items())
        if (key != "gan" && key != "per" && key != "recon" && key != "sty")
            throw ConfigError("unknown loss weight '" + key + "'");
    LossWeights d;
    w.gan = j.value("gan", d.gan);
    w.per = j.value("per", d.per);
    w.recon = j.value("recon", d.recon);
    w.sty = j.value("sty", d.sty);
    w.validate();
}

void to_json(nlohmann::json& j, const ExtractorProvenance& p)
{
    j = nlohmann::json{{"tag", p.tag}, {"seed", p.seed}, {"layers", p.layers}, {"base_channels", p.base_channels}};
}

void from_json(const nlohmann::json& j, ExtractorProvenance& p)
{
    for (const auto& [key, _] : j.items())
        if (key != "tag" && key != "seed" && key != "layers" && key != "base_channels")
            throw ConfigError("unknown extractor key '" + key + "'");
    ExtractorProvenance d;
    p.tag = j.value("tag", d.tag);
    p.seed = j.value("seed", d.seed);
    p.layers = j.value("layers", d.layers);
    p.base_channels = j.value("base_channels", d.base_channels);
}

template <typename T>
FeatureExtractor<T> FeatureExtractor<T>::identity()
{
    FeatureExtractor fx;
    fx.provenance_ = ExtractorProvenance{"identity", 0, 1, 0};
    return fx;
}

template <typename T>
FeatureExtractor<T> FeatureExtractor<T>::fixed_random(std::uint64_t seed, int layers, Index base_channels,
                                                      Index in_channels)
{
    if (layers < 1) throw ConfigError("extractor needs at least one layer");
    FeatureExtractor fx;
    fx.provenance_ = ExtractorProvenance{"fixed-random", seed, layers, base_channels};
    Rng rng(seed);
    Index ch = in_channels;
    for (int l = 0; l < layers; ++l) {
        const Index out = base_channels << std::min(l, 2);
        fx.weights_.push_back(constant(he_normal<T>(Shape{out, ch, 3, 3}, ch * 9, kLeakySlope, rng)));
        ch = out;
    }
    return fx;
}

template <typename T>
FeatureExtractor<T> FeatureExtractor<T>::from_provenance(const ExtractorProvenance& p)
{
    if (p.tag == "identity") return identity();
    if (p.tag == "fixed-random") return fixed_random(p.seed, p.layers, p.base_channels);
    throw ConfigError("extractor provenance '" + p.tag + "' is not available in this build");
}

template <typename T>
std::vector<Var<T>> FeatureExtractor<T>::features(const Var<T>& image) const
{
    if (weights_.empty()) return {image};
    const Index min_size = Index{1} << weights_.size();
    if (image.shape().h < min_size || image.shape().w < min_size)
        throw ConfigError("extractor with " + std::to_string(weights_.size()) + " layers is undefined for " +
                          std::to_string(image.shape().h) + "x" + std::to_string(image.shape().w) + " images");
    std::vector<Var<T>> out;
    Var<T> x = image;
    for (const auto& w : weights_) {
        x = lrelu(conv2d(x, w, Var<T>(), 2, 1));
        out.push_back(x);
    }
    return out;
}

template <typename T>
Discriminator<T>::Discriminator(DiscriminatorKind kind, Index condition_channels, Index base_channels,
                                std::uint64_t seed)
    : kind_(kind), condition_channels_(condition_channels)
{
    Rng rng(seed);
    const Index widths[] = {condition_channels + 3, base_channels, 2 * base_channels, 4 * base_channels, 1};
    for (int i = 0; i < 4; ++i)
        layers_.emplace_back(params_, "conv" + std::to_string(i), widths[i], widths[i + 1], 4, 2, 1, true, rng,
                             i == 3 ? 1.0 : kLeakySlope);
}

template <typename T>
Var<T> Discriminator<T>::score(const Var<T>& condition, const Var<T>& image) const
{
    if (condition.shape().c != condition_channels_)
        throw ConfigError(std::string(kind_ == DiscriminatorKind::Appearance ? "appearance" : "shape") +
                          " discriminator expects a " + std::to_string(condition_channels_) +
                          "-channel condition, got " + std::to_string(condition.shape().c));
    if (image.shape().c != 3) throw DimensionError("discriminator image must have 3 channels");
    Var<T> x = concat_channels(condition, image);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        x = layers_[i](x);
        if (i + 1 < layers_.size()) x = lrelu(x);
    }
    return x;
}

template <typename T>
Var<T> recon_loss(const Var<T>& a, const Var<T>& b)
{
    require_same_shape(a.shape(), b.shape(), "recon_loss");
    return mean(abs(sub(a, b)));
}

template <typename T>
Var<T> perceptual_loss(const Var<T>& a, const Var<T>& b, const FeatureExtractor<T>& fx, FeatureNorm norm)
{
    require_same_shape(a.shape(), b.shape(), "perceptual_loss");
    const auto fa = fx.features(a);
    const auto fb = fx.features(b);
    Var<T> total;
    for (std::size_t l = 0; l < fa.size(); ++l) {
        const Var<T> d = sub(fa[l], fb[l]);
        const Var<T> term = mean(norm == FeatureNorm::L1 ? abs(d) : square(d));
        total = total.defined() ? add(total, term) : term;
    }
    return total;
}

template <typename T>
Var<T> style_loss(const Var<T>& a, const Var<T>& b, const FeatureExtractor<T>& fx)
{
    require_same_shape(a.shape(), b.shape(), "style_loss");
    const auto fa = fx.features(a);
    const auto fb = fx.features(b);
    Var<T> total;
    for (std::size_t l = 0; l < fa.size(); ++l) {
        const Shape s = fa[l].shape();
        const T norm = T(1) / static_cast<T>(s.c * s.h * s.w * s.n);
        const Var<T> term = scale(sum(square(sub(gram(fa[l]), gram(fb[l])))), norm);
        total = total.defined() ? add(total, term) : term;
    }
    return total;
}

template <typename T>
Var<T> lsgan_d_loss_scores(const Var<T>& real_scores, const Var<T>& fake_scores)
{
    return add(scale(mean(square(add_scalar(real_scores, T(-1)))), T(0.5)), scale(mean(square(fake_scores)), T(0.5)));
}

template <typename T>
Var<T> lsgan_g_loss_scores(const Var<T>& appearance_scores, const Var<T>& shape_scores)
{
    return add(scale(mean(square(add_scalar(appearance_scores, T(-1)))), T(0.5)),
               scale(mean(square(add_scalar(shape_scores, T(-1)))), T(0.5)));
}

template <typename T>
Var<T> lsgan_d_loss(const Discriminator<T>& d, const Var<T>& real_condition, const Var<T>& real_image,
                    const Var<T>& fake_condition, const Var<T>& fake_image)
{
    return lsgan_d_loss_scores(d.score(real_condition, real_image), d.score(fake_condition, detach(fake_image)));
}

template <typename T>
Var<T> lsgan_g_loss(const Discriminator<T>& d_appearance, const Discriminator<T>& d_shape, const Var<T>& source,
                    const Var<T>& pose, const Var<T>& fake)
{
    if (d_appearance.kind() != DiscriminatorKind::Appearance || d_shape.kind() != DiscriminatorKind::Shape)
        throw ConfigError("lsgan_g_loss: discriminators passed in the wrong roles");
    return lsgan_g_loss_scores(d_appearance.score(source, fake), d_shape.score(pose, fake));
}

template <typename T>
Var<T> weighted_sum(const std::vector<std::pair<double, Var<T>>>& terms)
{
    Var<T> total;
    for (const auto& [w, v] : terms) {
        if (w == 0.0) continue;
        const Var<T> term = scale(v, static_cast<T>(w));
        total = total.defined() ? add(total, term) : term;
    }
    return total.defined() ? total : constant(Tensor<T>::scalar(T(0)));
}

template <typename T>
L1Terms<T> loss_l1(const Var<T>& coarse, const Var<T>& target, const FeatureExtractor<T>& fx, const LossWeights& w)
{
    L1Terms<T> t;
    t.recon = recon_loss(coarse, target);
    t.per = perceptual_loss(coarse, target, fx);
    t.total = weighted_sum<T>({{w.recon, t.recon}, {w.per, t.per}});
    return t;
}

template <typename T>
L2Terms<T> loss_l2(const Var<T>& final_image, const Var<T>& target, const Var<T>& source, const Var<T>& pose,
                   const FeatureExtractor<T>& fx, const Discriminator<T>& d_appearance,
                   const Discriminator<T>& d_shape, const LossWeights& w)
{
    L2Terms<T> t;
    t.recon = recon_loss(final_image, target);
    t.per = perceptual_loss(final_image, target, fx);
    t.sty = style_loss(final_image, target, fx);
    t.adv = lsgan_g_loss(d_appearance, d_shape, source, pose, final_image);
    t.total = weighted_sum<T>({{w.recon, t.recon}, {w.per, t.per}, {w.sty, t.sty}, {w.gan, t.adv}});
    return t;
}

#define DRN_INSTANTIATE_LOSSES(T)                                                                          \
    template class FeatureExtractor<T>;                                                                    \
    template class Discriminator<T>;                                                                       \
    template Var<T> recon_loss(const Var<T>&, const Var<T>&);                                              \
    template Var<T> perceptual_loss(const Var<T>&, const Var<T>&, const FeatureExtractor<T>&, FeatureNorm); \
    template Var<T> style_loss(const Var<T>&, const Var<T>&, const FeatureExtractor<T>&);                  \
    template Var<T> lsgan_d_loss_scores(const Var<T>&, const Var<T>&);                                     \
    template Var<T> lsgan_g_loss_scores(const Var<T>&, const Var<T>&);                                     \
    template Var<T> lsgan_d_loss(const Discriminator<T>&, const Var<T>&, const Var<T>&, const Var<T>&,     \
                                 const Var<T>&);                                                           \
    template Var<T> lsgan_g_loss(const Discriminator<T>&, const Discriminator<T>&, const Var<T>&,          \
                                 const Var<T>&, const Var<T>&);                                            \
    template Var<T> weighted_sum(const std::vector<std::pair<double, Var<T>>>&);                           \
    template L1Terms<T> loss_l1(const Var<T>&, const Var<T>&, const FeatureExtractor<T>&, const LossWeights&); \
    template L2Terms<T> loss_l2(const Var<T>&, const Var<T>&, const Var<T>&, const Var<T>&,                \
                                const FeatureExtractor<T>&, const Discriminator<T>&, const Discriminator<T>&, \
                                const LossWeights&);

DRN_INSTANTIATE_LOSSES(float)
DRN_INSTANTIATE_LOSSES(double)

#undef DRN_INSTANTIATE_LOSSES

}  // namespace drn
