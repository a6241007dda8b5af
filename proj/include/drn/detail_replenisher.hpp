#pragma once

/// \file detail_replenisher.hpp
/// \brief Style-guided detail synthesis: style encoding, AdaIN modulation,
/// residual-map generation, the regional face module and final composition.

#include <optional>
#include <string>
#include <vector>

#include "drn/net_config.hpp"
#include "drn/params.hpp"

namespace drn {

/// Adaptive instance normalization:
/// out = scale · (F - mean) / sqrt(var + eps) + shift, statistics per sample and channel.
/// scale and shift are (N, C, 1, 1) or (1, C, 1, 1).
template <typename T>
Var<T> adain(const Var<T>& features, const Var<T>& scale, const Var<T>& shift, T eps = T(kNormEps));

template <typename T>
struct AdaINParams {
    Var<T> scale;
    Var<T> shift;
};

/// Residual convolution encoder ending in global average pooling.
template <typename T>
class StyleEncoder {
public:
    StyleEncoder(ParamSet<T>& params, const std::string& name, const NetConfig& config, Rng& rng);

    /// Feature map before pooling, (N, style_dim, h, w).
    Var<T> feature_map(const Var<T>& image) const;
    /// (N, style_dim, 1, 1) style code.
    Var<T> encode(const Var<T>& image) const;

private:
    struct ResBlock {
        Conv2d<T> a, b;
    };
    Conv2d<T> stem_;
    std::vector<Conv2d<T>> down_;
    std::vector<ResBlock> blocks_;
    Conv2d<T> head_;
};

/// Per-layer 3-layer MLP producing (scale, shift); scale = 1 + raw output.
template <typename T>
class StyleMlp {
public:
    StyleMlp(ParamSet<T>& params, const std::string& name, Index style_dim, Index hidden, Index channels,
             bool identity_init, Rng& rng);

    AdaINParams<T> operator()(const Var<T>& style) const;
    Index channels() const { return channels_; }

private:
    Linear<T> l1_, l2_, l3_;
    Index channels_;
};

/// Residual blocks at guidance resolution followed by AdaIN-modulated
/// up-sampling stages and a tanh RGB head.
template <typename T>
class ModulatedDecoder {
public:
    ModulatedDecoder(ParamSet<T>& params, const std::string& name, const NetConfig& config, Rng& rng);

    AdaINParams<T> style_mlp(const Var<T>& style, int layer_index) const;
    Var<T> forward(const Var<T>& style, const Var<T>& guidance) const;
    /// Same as forward but every AdaIN uses scale = 1, shift = 0 (injection removed).
    Var<T> forward_without_style(const Var<T>& guidance) const;

    int n_stages() const { return static_cast<int>(mlps_.size()); }
    Index stage_channels(int i) const { return mlps_.at(static_cast<std::size_t>(i)).channels(); }
    Index input_channels() const { return input_channels_; }

private:
    struct ResBlock {
        Conv2d<T> a, b;
    };
    Var<T> run(const Var<T>* style, const Var<T>& guidance) const;

    Index input_channels_;
    std::vector<ResBlock> blocks_;
    std::vector<StyleMlp<T>> mlps_;
    std::vector<Conv2d<T>> up_;
    Conv2d<T> to_rgb_;
};

/// Global detail branch: style encoder for the source image plus the residual generator.
template <typename T>
class DetailBranch {
public:
    DetailBranch(const NetConfig& config, std::uint64_t seed);
    DetailBranch(const DetailBranch&) = delete;
    DetailBranch& operator=(const DetailBranch&) = delete;

    Var<T> encode_style(const Var<T>& source) const;
    AdaINParams<T> style_mlp(const Var<T>& style, int layer_index) const { return decoder_.style_mlp(style, layer_index); }
    /// Residual image from a style code and a guidance map, bounded to [-1, 1].
    Var<T> generate_residual(const Var<T>& style, const Var<T>& guidance) const;
    Var<T> forward(const Var<T>& source, const Var<T>& guidance) const
    {
        return generate_residual(encode_style(source), guidance);
    }
    const ModulatedDecoder<T>& decoder() const { return decoder_; }

    ParamSet<T>& params() { return params_; }
    const ParamSet<T>& params() const { return params_; }
    const NetConfig& config() const { return config_; }

private:
    DetailBranch(const NetConfig& config, Rng&& rng);

    NetConfig config_;
    ParamSet<T> params_;
    StyleEncoder<T> encoder_;
    ModulatedDecoder<T> decoder_;
};

class FaceModuleInactive : public Error {
public:
    using Error::Error;
};

/// Regional face module: encodes the source face crop and synthesizes the
/// target face under a landmark sketch. Shares no parameters with DetailBranch.
template <typename T>
class FaceModule {
public:
    FaceModule(const NetConfig& config, std::uint64_t seed);
    FaceModule(const FaceModule&) = delete;
    FaceModule& operator=(const FaceModule&) = delete;

    Var<T> encode_style(const Var<T>& face_crop) const;
    /// (N, 3, S, S) face for a (N, 1, S, S) sketch. Throws FaceModuleInactive for an undefined sketch.
    Var<T> generate_face(const Var<T>& style, const Var<T>& sketch) const;

    ParamSet<T>& params() { return params_; }
    const ParamSet<T>& params() const { return params_; }
    const NetConfig& config() const { return config_; }

private:
    FaceModule(const NetConfig& config, Rng&& rng);

    NetConfig config_;
    ParamSet<T> params_;
    StyleEncoder<T> encoder_;
    ModulatedDecoder<T> decoder_;
    std::vector<Conv2d<T>> sketch_down_;
};

/// (1 - M)(coarse + R) + M · face, before clamping. mask is (N or 1, 1, H, W) and
/// constant; face is a full-frame pasted image or absent (then mask must be zero).
template <typename T>
Var<T> compose_blend(const Var<T>& coarse, const Var<T>& residual, const std::optional<Var<T>>& face,
                     const Tensor<T>& mask);

/// compose_blend clamped to [-1, 1].
template <typename T>
Var<T> compose_final(const Var<T>& coarse, const Var<T>& residual, const std::optional<Var<T>>& face,
                     const Tensor<T>& mask);

}  // namespace drn
