#include "drn/transfer_branch.hpp"

namespace drn {

template <typename T>
TransferBlock<T>::TransferBlock(ParamSet<T>& params, const std::string& name, Index channels, Rng& rng)
    : pose_a_(params, name + ".pose_a", channels, channels, 3, 1, 1, false, rng),
      pose_b_(params, name + ".pose_b", channels, channels, 3, 1, 1, false, rng),
      image_a_(params, name + ".image_a", channels, channels, 3, 1, 1, false, rng),
      image_b_(params, name + ".image_b", channels, channels, 3, 1, 1, false, rng)
{
}

template <typename T>
Var<T> TransferBlock<T>::pose_features(const Var<T>& pose) const
{
    return instance_norm(pose_b_(norm_act(pose_a_(pose))), T(kNormEps));
}

template <typename T>
Var<T> TransferBlock<T>::gate(const Var<T>& pose) const
{
    return sigmoid(pose_features(pose));
}

template <typename T>
Var<T> TransferBlock<T>::image_update(const Var<T>& image) const
{
    return instance_norm(image_b_(norm_act(image_a_(image))), T(kNormEps));
}

template <typename T>
TransferBlockState<T> TransferBlock<T>::step(const TransferBlockState<T>& state) const
{
    require_same_shape(state.image.shape(), state.pose.shape(), "transfer block paths");
    const Var<T> features = pose_features(state.pose);
    const Var<T> g = sigmoid(features);
    return {add(state.image, mul(g, image_update(state.image))), add(state.pose, features)};
}

template <typename T>
TransferBranch<T>::TransferBranch(const NetConfig& config, std::uint64_t seed) : config_(config)
{
    config_.validate();
    Rng rng(seed);
    const Index base = config_.base_channels;
    Index img_in = 3;
    Index pose_in = 2 * config_.pose_channels;
    for (int i = 0; i < config_.n_down; ++i) {
        const Index out = base << i;
        image_down_.emplace_back(params_, "image_down" + std::to_string(i), img_in, out, 3, 2, 1, false, rng);
        pose_down_.emplace_back(params_, "pose_down" + std::to_string(i), pose_in, out, 3, 2, 1, false, rng);
        img_in = out;
        pose_in = out;
    }
    const Index guidance = config_.guidance_channels();
    for (int i = 0; i < config_.n_transfer_blocks; ++i)
        blocks_.emplace_back(params_, "block" + std::to_string(i), guidance, rng);
    Index ch = guidance;
    for (int i = config_.n_down - 1; i >= 0; --i) {
        const Index out = i > 0 ? base << (i - 1) : base;
        decoder_up_.emplace_back(params_, "up" + std::to_string(config_.n_down - 1 - i), ch, out, 3, 1, 1, false, rng);
        ch = out;
    }
    to_rgb_ = Conv2d<T>(params_, "to_rgb", ch, 3, 3, 1, 1, true, rng, 1.0);
}

template <typename T>
TransferBlockState<T> TransferBranch<T>::encode(const Var<T>& source, const Var<T>& source_pose,
                                                const Var<T>& target_pose) const
{
    const Shape s = source.shape();
    if (s.c != 3 || s.h != config_.height || s.w != config_.width)
        throw DimensionError("transfer branch expects (N,3," + std::to_string(config_.height) + "," +
                             std::to_string(config_.width) + ") source, got " + s.str());
    const Shape ps{s.n, config_.pose_channels, s.h, s.w};
    require_same_shape(source_pose.shape(), ps, "source pose");
    require_same_shape(target_pose.shape(), ps, "target pose");
    if (!params_.all_finite()) throw NumericError("transfer branch parameters contain non-finite values");

    Var<T> image = source;
    Var<T> pose = concat_channels(source_pose, target_pose);
    for (std::size_t i = 0; i < image_down_.size(); ++i) {
        image = norm_act(image_down_[i](image));
        pose = norm_act(pose_down_[i](pose));
    }
    return {image, pose};
}

template <typename T>
TransferOutput<T> TransferBranch<T>::forward(const Var<T>& source, const Var<T>& source_pose,
                                             const Var<T>& target_pose) const
{
    TransferBlockState<T> state = encode(source, source_pose, target_pose);
    for (const auto& block : blocks_) state = block.step(state);
    Var<T> x = state.image;
    for (const auto& up : decoder_up_) x = norm_act(up(upsample_nearest(x, 2)));
    return {tanh(to_rgb_(x)), state.image};
}

template class TransferBlock<float>;
template class TransferBlock<double>;
template class TransferBranch<float>;
template class TransferBranch<double>;

}  // namespace drn
