#pragma once

/// \file transfer_branch.hpp
/// \brief Pose transfer branch: encodes (source image, source pose, target pose), runs the cascaded
/// attention transfer blocks and decodes a detail-free coarse estimate.
///
/// The image-path feature map after the last block is the guidance map shared
/// with the detail branch. It is returned as a live Var, so any loss computed
/// downstream of it back-propagates into this branch.

#include <string>
#include <vector>

#include "drn/net_config.hpp"
#include "drn/params.hpp"

namespace drn {

template <typename T>
struct TransferBlockState {
    Var<T> image;
    Var<T> pose;
};

template <typename T>
class TransferBlock {
public:
    TransferBlock(ParamSet<T>& params, const std::string& name, Index channels, Rng& rng);

    /// Attention gate in [0, 1] computed from the pose path.
    Var<T> gate(const Var<T>& pose) const;
    /// Residual update of the image path before gating.
    Var<T> image_update(const Var<T>& image) const;
    /// image' = image + gate ⊙ update(image); pose' = pose + pose features.
    TransferBlockState<T> step(const TransferBlockState<T>& state) const;

private:
    Var<T> pose_features(const Var<T>& pose) const;

    Conv2d<T> pose_a_, pose_b_;
    Conv2d<T> image_a_, image_b_;
};

template <typename T>
struct TransferOutput {
    Var<T> coarse;    // (N, 3, H, W) in [-1, 1]
    Var<T> guidance;  // (N, C_g, H / 2^d, W / 2^d)
};

template <typename T>
class TransferBranch {
public:
    TransferBranch(const NetConfig& config, std::uint64_t seed);
    TransferBranch(const TransferBranch&) = delete;
    TransferBranch& operator=(const TransferBranch&) = delete;

    TransferOutput<T> forward(const Var<T>& source, const Var<T>& source_pose, const Var<T>& target_pose) const;

    /// Encoded (image, pose) pair before the transfer cascade.
    TransferBlockState<T> encode(const Var<T>& source, const Var<T>& source_pose, const Var<T>& target_pose) const;
    const std::vector<TransferBlock<T>>& blocks() const { return blocks_; }

    ParamSet<T>& params() { return params_; }
    const ParamSet<T>& params() const { return params_; }
    const NetConfig& config() const { return config_; }

private:
    NetConfig config_;
    ParamSet<T> params_;
    std::vector<Conv2d<T>> image_down_;
    std::vector<Conv2d<T>> pose_down_;
    std::vector<TransferBlock<T>> blocks_;
    std::vector<Conv2d<T>> decoder_up_;
    Conv2d<T> to_rgb_;
};

}  // namespace drn
