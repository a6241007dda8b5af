#pragma once

/// \file params.hpp
/// \brief Named trainable parameter collections and the layer helpers built on them.

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "drn/autograd.hpp"

namespace drn {

using Rng = std::mt19937_64;

/// Ordered, named set of leaf Vars. Iteration order is insertion order, which
/// is also the serialization order.
template <typename T>
class ParamSet {
public:
    struct Entry {
        std::string name;
        Var<T> var;
    };

    ParamSet() = default;
    ParamSet(const ParamSet&) = delete;
    ParamSet& operator=(const ParamSet&) = delete;
    ParamSet(ParamSet&&) noexcept = default;
    ParamSet& operator=(ParamSet&&) noexcept = default;

    Var<T> add(const std::string& name, Tensor<T> init);
    Var<T> get(const std::string& name) const;
    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    const std::vector<Entry>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }
    Index numel() const;

    void zero_grad();
    void set_requires_grad(bool on);
    bool all_finite() const;

    /// FNV-1a over names and raw value bytes; used to assert which phase touched what.
    std::uint64_t checksum() const;
    /// Euclidean norm of all accumulated gradients.
    double grad_norm() const;

    /// Copies values in by name. Every name must exist with a matching shape.
    void assign(const std::vector<std::pair<std::string, Tensor<T>>>& values);
    std::vector<std::pair<std::string, Tensor<T>>> snapshot() const;

private:
    std::vector<Entry> entries_;
    std::map<std::string, std::size_t> index_;
};

/// He-normal initializer for a weight with the given fan-in and LeakyReLU slope.
template <typename T>
Tensor<T> he_normal(const Shape& shape, Index fan_in, double slope, Rng& rng);

/// Convolution with square kernel; bias omitted when the layer feeds a normalization.
template <typename T>
struct Conv2d {
    Var<T> weight;
    Var<T> bias;
    int stride = 1;
    int pad = 0;

    Conv2d() = default;
    Conv2d(ParamSet<T>& params, const std::string& name, Index in, Index out, int kernel, int stride,
           int pad, bool with_bias, Rng& rng, double gain_slope = 0.2);

    Var<T> operator()(const Var<T>& x) const { return conv2d(x, weight, bias, stride, pad); }
    Index out_channels() const { return weight.shape().n; }
};

template <typename T>
struct Linear {
    Var<T> weight;
    Var<T> bias;

    Linear() = default;
    /// zero_init leaves weight and bias at zero (used for identity-start modulation heads).
    Linear(ParamSet<T>& params, const std::string& name, Index in, Index out, Rng& rng, bool zero_init = false);

    Var<T> operator()(const Var<T>& x) const { return linear(x, weight, bias); }
};

inline constexpr double kLeakySlope = 0.2;
inline constexpr double kNormEps = 1e-5;

/// Instance norm followed by LeakyReLU(0.2).
template <typename T>
Var<T> norm_act(const Var<T>& x)
{
    return leaky_relu(instance_norm(x, T(kNormEps)), T(kLeakySlope));
}

template <typename T>
Var<T> lrelu(const Var<T>& x)
{
    return leaky_relu(x, T(kLeakySlope));
}

}  // namespace drn
