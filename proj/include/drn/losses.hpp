#pragma once

/// \file losses.hpp
/// \brief Training objectives: pixel reconstruction, perceptual and Gram-style
/// feature losses, least-squares conditional adversarial losses and the two
/// weighted aggregates used by the alternating optimizer.

#include <string>
#include <vector>

#include <json.hpp>

#include "drn/net_config.hpp"
#include "drn/params.hpp"

namespace drn {

struct LossWeights {
    double gan = 1.0;
    double per = 5.0;
    double recon = 10.0;
    double sty = 5.0;

    void validate() const;
};

void to_json(nlohmann::json& j, const LossWeights& w);
void from_json(const nlohmann::json& j, LossWeights& w);

/// Where an extractor's weights came from; recorded in checkpoints and reports.
struct ExtractorProvenance {
    std::string tag = "fixed-random";  // fixed-random | identity | pretrained
    std::uint64_t seed = 7;
    int layers = 4;
    Index base_channels = 16;

    friend bool operator==(const ExtractorProvenance&, const ExtractorProvenance&) = default;
};

void to_json(nlohmann::json& j, const ExtractorProvenance& p);
void from_json(const nlohmann::json& j, ExtractorProvenance& p);

/// Fixed feature pyramid. The fixed-random kind stacks stride-2 3×3
/// convolutions with LeakyReLU and reports every stage output; the identity
/// kind has a single layer equal to the input.
template <typename T>
class FeatureExtractor {
public:
    static FeatureExtractor identity();
    static FeatureExtractor fixed_random(std::uint64_t seed, int layers, Index base_channels = 16,
                                         Index in_channels = 3);
    static FeatureExtractor from_provenance(const ExtractorProvenance& p);

    /// Throws ConfigError if the input is smaller than 2^layers in either dimension.
    std::vector<Var<T>> features(const Var<T>& image) const;
    std::size_t n_layers() const { return weights_.empty() ? 1 : weights_.size(); }
    const ExtractorProvenance& provenance() const { return provenance_; }

private:
    ExtractorProvenance provenance_;
    std::vector<Var<T>> weights_;
};

enum class DiscriminatorKind { Appearance, Shape };

/// Patch discriminator scoring (condition, image) pairs with four stride-2 convolutions.
template <typename T>
class Discriminator {
public:
    Discriminator(DiscriminatorKind kind, Index condition_channels, Index base_channels, std::uint64_t seed);
    Discriminator(const Discriminator&) = delete;
    Discriminator& operator=(const Discriminator&) = delete;

    /// Real-valued score map. Throws ConfigError on a condition of the wrong kind.
    Var<T> score(const Var<T>& condition, const Var<T>& image) const;

    DiscriminatorKind kind() const { return kind_; }
    Index condition_channels() const { return condition_channels_; }
    ParamSet<T>& params() { return params_; }
    const ParamSet<T>& params() const { return params_; }

private:
    DiscriminatorKind kind_;
    Index condition_channels_;
    ParamSet<T> params_;
    std::vector<Conv2d<T>> layers_;
};

enum class FeatureNorm { L1, L2 };

/// Mean absolute pixel difference.
template <typename T>
Var<T> recon_loss(const Var<T>& a, const Var<T>& b);

/// Sum over layers of the mean absolute feature difference (mean squared for FeatureNorm::L2).
template <typename T>
Var<T> perceptual_loss(const Var<T>& a, const Var<T>& b, const FeatureExtractor<T>& fx,
                       FeatureNorm norm = FeatureNorm::L1);

/// Sum over layers of the squared Frobenius distance between Gram matrices divided by
/// C·H·W of that layer, averaged over the batch.
template <typename T>
Var<T> style_loss(const Var<T>& a, const Var<T>& b, const FeatureExtractor<T>& fx);

/// Discriminator objective ½·mean((D(real) - 1)^2) + ½·mean(D(fake)^2); the fake image is detached.
template <typename T>
Var<T> lsgan_d_loss(const Discriminator<T>& d, const Var<T>& real_condition, const Var<T>& real_image,
                    const Var<T>& fake_condition, const Var<T>& fake_image);

/// LSGAN objective on precomputed score maps.
template <typename T>
Var<T> lsgan_d_loss_scores(const Var<T>& real_scores, const Var<T>& fake_scores);
template <typename T>
Var<T> lsgan_g_loss_scores(const Var<T>& appearance_scores, const Var<T>& shape_scores);

/// Generator objective ½·mean((appearance(source, fake) - 1)^2) + ½·mean((shape(pose, fake) - 1)^2).
template <typename T>
Var<T> lsgan_g_loss(const Discriminator<T>& d_appearance, const Discriminator<T>& d_shape, const Var<T>& source,
                    const Var<T>& pose, const Var<T>& fake);

template <typename T>
struct L1Terms {
    Var<T> total;
    Var<T> recon;
    Var<T> per;
};

template <typename T>
struct L2Terms {
    Var<T> total;
    Var<T> recon;
    Var<T> per;
    Var<T> sty;
    Var<T> adv;
};

/// recon·reconstruction + per·perceptual on the coarse estimate; no adversarial term.
template <typename T>
L1Terms<T> loss_l1(const Var<T>& coarse, const Var<T>& target, const FeatureExtractor<T>& fx, const LossWeights& w);

/// Weighted reconstruction, perceptual, style and adversarial terms on the final image.
template <typename T>
L2Terms<T> loss_l2(const Var<T>& final_image, const Var<T>& target, const Var<T>& source, const Var<T>& pose,
                   const FeatureExtractor<T>& fx, const Discriminator<T>& d_appearance,
                   const Discriminator<T>& d_shape, const LossWeights& w);

/// Weighted sum of scalar Vars, skipping zero weights.
template <typename T>
Var<T> weighted_sum(const std::vector<std::pair<double, Var<T>>>& terms);

}  // namespace drn
