#include "drn/detail_replenisher.hpp"

#include <algorithm>

namespace drn {

template <typename T>
Var<T> adain(const Var<T>& features, const Var<T>& scale, const Var<T>& shift, T eps)
{
    if (scale.shape().c != features.shape().c || shift.shape().c != features.shape().c)
        throw DimensionError("adain: modulation has " + std::to_string(scale.shape().c) + "/" +
                             std::to_string(shift.shape().c) + " channels, features have " +
                             std::to_string(features.shape().c));
    return channel_affine(instance_norm(features, eps), scale, shift);
}

template <typename T>
StyleEncoder<T>::StyleEncoder(ParamSet<T>& params, const std::string& name, const NetConfig& config, Rng& rng)
{
    const Index base = config.base_channels;
    const Index cap = config.guidance_channels();
    stem_ = Conv2d<T>(params, name + ".stem", 3, base, 3, 1, 1, true, rng);
    Index ch = base;
    for (int i = 0; i < config.n_down; ++i) {
        const Index out = std::min(base << (i + 1), cap);
        const std::string prefix = name + ".down" + std::to_string(i);
        down_.emplace_back(params, prefix, ch, out, 3, 2, 1, true, rng);
        blocks_.push_back({Conv2d<T>(params, prefix + ".res_a", out, out, 3, 1, 1, true, rng),
                           Conv2d<T>(params, prefix + ".res_b", out, out, 3, 1, 1, true, rng)});
        ch = out;
    }
    head_ = Conv2d<T>(params, name + ".head", ch, config.style_dim, 1, 1, 0, true, rng, 1.0);
}

template <typename T>
Var<T> StyleEncoder<T>::feature_map(const Var<T>& image) const
{
    if (!image.value().all_finite()) throw NumericError("style encoder input contains non-finite values");
    Var<T> x = lrelu(stem_(image));
    for (std::size_t i = 0; i < down_.size(); ++i) {
        x = lrelu(down_[i](x));
        x = add(x, blocks_[i].b(lrelu(blocks_[i].a(x))));
    }
    return head_(x);
}

template <typename T>
Var<T> StyleEncoder<T>::encode(const Var<T>& image) const
{
    return global_avg_pool(feature_map(image));
}

template <typename T>
StyleMlp<T>::StyleMlp(ParamSet<T>& params, const std::string& name, Index style_dim, Index hidden, Index channels,
                      bool identity_init, Rng& rng)
    : l1_(params, name + ".fc1", style_dim, hidden, rng),
      l2_(params, name + ".fc2", hidden, hidden, rng),
      l3_(params, name + ".fc3", hidden, 2 * channels, rng, identity_init),
      channels_(channels)
{
}

template <typename T>
AdaINParams<T> StyleMlp<T>::operator()(const Var<T>& style) const
{
    const Var<T> raw = l3_(lrelu(l2_(lrelu(l1_(style)))));
    return {add_scalar(slice_channels(raw, 0, channels_), T(1)), slice_channels(raw, channels_, channels_)};
}

template <typename T>
ModulatedDecoder<T>::ModulatedDecoder(ParamSet<T>& params, const std::string& name, const NetConfig& config,
                                      Rng& rng)
    : input_channels_(config.guidance_channels())
{
    const Index cg = input_channels_;
    for (int i = 0; i < config.n_res_blocks; ++i) {
        const std::string prefix = name + ".res" + std::to_string(i);
        blocks_.push_back({Conv2d<T>(params, prefix + ".a", cg, cg, 3, 1, 1, false, rng),
                           Conv2d<T>(params, prefix + ".b", cg, cg, 3, 1, 1, false, rng)});
    }
    Index ch = cg;
    for (int i = 0; i < config.n_down; ++i) {
        const std::string prefix = name + ".up" + std::to_string(i);
        mlps_.emplace_back(params, prefix + ".mlp", config.style_dim, config.mlp_hidden, ch,
                           config.identity_modulation_init, rng);
        const Index out = std::max<Index>(1, ch / 2);
        // Every stage but the last feeds another AdaIN, which cancels a bias.
        up_.emplace_back(params, prefix + ".conv", ch, out, 3, 1, 1, i + 1 == config.n_down, rng);
        ch = out;
    }
    to_rgb_ = Conv2d<T>(params, name + ".to_rgb", ch, 3, 3, 1, 1, true, rng, 1.0);
}

template <typename T>
AdaINParams<T> ModulatedDecoder<T>::style_mlp(const Var<T>& style, int layer_index) const
{
    if (layer_index < 0 || layer_index >= n_stages())
        throw ConfigError("style_mlp: layer index " + std::to_string(layer_index) + " outside [0, " +
                          std::to_string(n_stages()) + ")");
    return mlps_[static_cast<std::size_t>(layer_index)](style);
}

template <typename T>
Var<T> ModulatedDecoder<T>::run(const Var<T>* style, const Var<T>& guidance) const
{
    if (guidance.shape().c != input_channels_)
        throw DimensionError("guidance map has " + std::to_string(guidance.shape().c) + " channels, expected " +
                             std::to_string(input_channels_));
    Var<T> x = guidance;
    for (const auto& block : blocks_)
        x = add(x, instance_norm(block.b(norm_act(block.a(x))), T(kNormEps)));
    for (int i = 0; i < n_stages(); ++i) {
        const Index ch = stage_channels(i);
        if (style) {
            const auto p = style_mlp(*style, i);
            x = adain(x, p.scale, p.shift);
        } else {
            const Shape ms{1, ch, 1, 1};
            x = adain(x, constant(Tensor<T>(ms, T(1))), constant(Tensor<T>(ms, T(0))));
        }
        x = up_[static_cast<std::size_t>(i)](upsample_nearest(lrelu(x), 2));
    }
    return tanh(to_rgb_(lrelu(x)));
}

template <typename T>
Var<T> ModulatedDecoder<T>::forward(const Var<T>& style, const Var<T>& guidance) const
{
    if (style.shape().n != guidance.shape().n)
        throw DimensionError("style batch " + std::to_string(style.shape().n) + " vs guidance batch " +
                             std::to_string(guidance.shape().n));
    return run(&style, guidance);
}

template <typename T>
Var<T> ModulatedDecoder<T>::forward_without_style(const Var<T>& guidance) const
{
    return run(nullptr, guidance);
}

namespace {

NetConfig validated(const NetConfig& config)
{
    config.validate();
    return config;
}

}  // namespace

template <typename T>
DetailBranch<T>::DetailBranch(const NetConfig& config, std::uint64_t seed) : DetailBranch(config, Rng(seed))
{
}

template <typename T>
DetailBranch<T>::DetailBranch(const NetConfig& config, Rng&& rng)
    : config_(validated(config)),
      encoder_(params_, "style", config_, rng),
      decoder_(params_, "gen", config_, rng)
{
}

template <typename T>
Var<T> DetailBranch<T>::encode_style(const Var<T>& source) const
{
    return encoder_.encode(source);
}

template <typename T>
Var<T> DetailBranch<T>::generate_residual(const Var<T>& style, const Var<T>& guidance) const
{
    const Shape g = guidance.shape();
    if (g.h != config_.guidance_height() || g.w != config_.guidance_width())
        throw DimensionError("guidance map " + g.str() + " does not match the up-sampling plan for " +
                             std::to_string(config_.height) + "x" + std::to_string(config_.width));
    return decoder_.forward(style, guidance);
}

template <typename T>
FaceModule<T>::FaceModule(const NetConfig& config, std::uint64_t seed) : FaceModule(config, Rng(seed))
{
}

template <typename T>
FaceModule<T>::FaceModule(const NetConfig& config, Rng&& rng)
    : config_(validated(config)),
      encoder_(params_, "face_style", config_, rng),
      decoder_(params_, "face_gen", config_, rng)
{
    Index ch = 1;
    for (int i = 0; i < config_.n_down; ++i) {
        const Index out = config_.base_channels << i;
        sketch_down_.emplace_back(params_, "sketch_down" + std::to_string(i), ch, out, 3, 2, 1, false, rng);
        ch = out;
    }
}

template <typename T>
Var<T> FaceModule<T>::encode_style(const Var<T>& face_crop) const
{
    return encoder_.encode(face_crop);
}

template <typename T>
Var<T> FaceModule<T>::generate_face(const Var<T>& style, const Var<T>& sketch) const
{
    if (!sketch.defined()) throw FaceModuleInactive("no landmark sketch; face module inactive");
    const Shape s = sketch.shape();
    if (s.c != 1 || s.h != config_.face_size || s.w != config_.face_size)
        throw DimensionError("sketch must be (N,1," + std::to_string(config_.face_size) + "," +
                             std::to_string(config_.face_size) + "), got " + s.str());
    Var<T> x = sketch;
    for (const auto& down : sketch_down_) x = norm_act(down(x));
    return decoder_.forward(style, x);
}

template <typename T>
Var<T> compose_blend(const Var<T>& coarse, const Var<T>& residual, const std::optional<Var<T>>& face,
                     const Tensor<T>& mask)
{
    const Shape s = coarse.shape();
    require_same_shape(residual.shape(), s, "compose residual");
    const Shape ms = mask.shape();
    if (ms.c != 1 || ms.h != s.h || ms.w != s.w || (ms.n != 1 && ms.n != s.n))
        throw DimensionError("compose mask " + ms.str() + " for image " + s.str());

    const Var<T> base = add(coarse, residual);
    if (!face) {
        if ((mask.array() != T(0)).any()) throw DimensionError("compose: non-zero blend mask without a face image");
        return base;
    }
    require_same_shape(face->shape(), s, "compose face");

    Tensor<T> m(s);
    for (Index n = 0; n < s.n; ++n)
        for (Index c = 0; c < s.c; ++c) m.plane(n, c) = mask.plane(ms.n == 1 ? 0 : n, 0);
    Tensor<T> keep(s, T(1) - m.array());
    return add(mul(constant(std::move(keep)), base), mul(constant(std::move(m)), *face));
}

template <typename T>
Var<T> compose_final(const Var<T>& coarse, const Var<T>& residual, const std::optional<Var<T>>& face,
                     const Tensor<T>& mask)
{
    return clamp(compose_blend(coarse, residual, face, mask), T(-1), T(1));
}

#define DRN_INSTANTIATE_DETAIL(T)                                                                    \
    template Var<T> adain(const Var<T>&, const Var<T>&, const Var<T>&, T);                           \
    template class StyleEncoder<T>;                                                                  \
    template class StyleMlp<T>;                                                                      \
    template class ModulatedDecoder<T>;                                                              \
    template class DetailBranch<T>;                                                                  \
    template class FaceModule<T>;                                                                    \
    template Var<T> compose_blend(const Var<T>&, const Var<T>&, const std::optional<Var<T>>&, const Tensor<T>&); \
    template Var<T> compose_final(const Var<T>&, const Var<T>&, const std::optional<Var<T>>&, const Tensor<T>&);

DRN_INSTANTIATE_DETAIL(float)
DRN_INSTANTIATE_DETAIL(double)

#undef DRN_INSTANTIATE_DETAIL

}  // namespace drn
