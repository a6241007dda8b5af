#include "drn/params.hpp"

#include "drn/hash.hpp"

#include <cmath>
#include <cstring>

namespace drn {

std::string hex64(std::uint64_t value)
{
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i, value >>= 4) out[static_cast<std::size_t>(i)] = digits[value & 0xF];
    return out;
}

template <typename T>
Var<T> ParamSet<T>::add(const std::string& name, Tensor<T> init)
{
    if (index_.count(name)) throw ConfigError("duplicate parameter name '" + name + "'");
    Var<T> v(std::move(init), true);
    index_[name] = entries_.size();
    entries_.push_back({name, v});
    return v;
}

template <typename T>
Var<T> ParamSet<T>::get(const std::string& name) const
{
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
    return entries_[it->second].var;
}

template <typename T>
Index ParamSet<T>::numel() const
{
    Index total = 0;
    for (const auto& e : entries_) total += e.var.value().numel();
    return total;
}

template <typename T>
void ParamSet<T>::zero_grad()
{
    for (auto& e : entries_) e.var.zero_grad();
}

template <typename T>
void ParamSet<T>::set_requires_grad(bool on)
{
    for (auto& e : entries_) e.var.set_requires_grad(on);
}

template <typename T>
bool ParamSet<T>::all_finite() const
{
    for (const auto& e : entries_)
        if (!e.var.value().all_finite()) return false;
    return true;
}

template <typename T>
std::uint64_t ParamSet<T>::checksum() const
{
    std::uint64_t h = kFnvOffset;
    for (const auto& e : entries_) {
        h = fnv1a64(e.name.data(), e.name.size(), h);
        h = fnv1a64(e.var.value().data(), sizeof(T) * static_cast<std::size_t>(e.var.value().numel()), h);
    }
    return h;
}

template <typename T>
double ParamSet<T>::grad_norm() const
{
    double total = 0.0;
    for (const auto& e : entries_)
        if (e.var.has_grad()) total += e.var.grad().array().template cast<double>().square().sum();
    return std::sqrt(total);
}

template <typename T>
void ParamSet<T>::assign(const std::vector<std::pair<std::string, Tensor<T>>>& values)
{
    if (values.size() != entries_.size())
        throw ConfigError("parameter count mismatch: expected " + std::to_string(entries_.size()) + ", got " +
                          std::to_string(values.size()));
    for (const auto& [name, tensor] : values) {
        Var<T> v = get(name);
        require_same_shape(v.value().shape(), tensor.shape(), ("parameter " + name).c_str());
        v.value() = tensor;
    }
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>>> ParamSet<T>::snapshot() const
{
    std::vector<std::pair<std::string, Tensor<T>>> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.emplace_back(e.name, e.var.value());
    return out;
}

template <typename T>
Tensor<T> he_normal(const Shape& shape, Index fan_in, double slope, Rng& rng)
{
    const double gain = std::sqrt(2.0 / (1.0 + slope * slope));
    std::normal_distribution<double> dist(0.0, gain / std::sqrt(static_cast<double>(fan_in)));
    Tensor<T> t(shape);
    for (Index i = 0; i < t.numel(); ++i) t.array()[i] = static_cast<T>(dist(rng));
    return t;
}

template <typename T>
Conv2d<T>::Conv2d(ParamSet<T>& params, const std::string& name, Index in, Index out, int kernel, int stride_,
                  int pad_, bool with_bias, Rng& rng, double gain_slope)
    : stride(stride_), pad(pad_)
{
    weight = params.add(name + ".weight",
                        he_normal<T>(Shape{out, in, kernel, kernel}, in * kernel * kernel, gain_slope, rng));
    if (with_bias) bias = params.add(name + ".bias", Tensor<T>(Shape{1, out, 1, 1}));
}

template <typename T>
Linear<T>::Linear(ParamSet<T>& params, const std::string& name, Index in, Index out, Rng& rng, bool zero_init)
{
    weight = params.add(name + ".weight",
                        zero_init ? Tensor<T>(Shape{out, in, 1, 1})
                                  : he_normal<T>(Shape{out, in, 1, 1}, in, kLeakySlope, rng));
    bias = params.add(name + ".bias", Tensor<T>(Shape{1, out, 1, 1}));
}

template class ParamSet<float>;
template class ParamSet<double>;
template struct Conv2d<float>;
template struct Conv2d<double>;
template struct Linear<float>;
template struct Linear<double>;
template Tensor<float> he_normal(const Shape&, Index, double, Rng&);
template Tensor<double> he_normal(const Shape&, Index, double, Rng&);

}  // namespace drn
