#include "drn/tensor.hpp"

namespace drn {

std::string Shape::str() const
{
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
           std::to_string(w) + ")";
}

void require_same_shape(const Shape& a, const Shape& b, const char* what)
{
    if (!(a == b))
        throw DimensionError(std::string(what) + ": shape " + a.str() + " vs " + b.str());
}

template <typename T>
Tensor<T> stack_batch(const std::vector<Tensor<T>>& items)
{
    if (items.empty()) throw DimensionError("stack_batch: no tensors");
    Shape s = items.front().shape();
    for (const auto& t : items) {
        if (t.n() != 1 || t.c() != s.c || t.h() != s.h || t.w() != s.w)
            throw DimensionError("stack_batch: incompatible shape " + t.shape().str());
    }
    const Index len = s.numel();
    s.n = static_cast<Index>(items.size());
    Tensor<T> out(s);
    for (std::size_t i = 0; i < items.size(); ++i)
        out.array().segment(static_cast<Index>(i) * len, len) = items[i].array();
    return out;
}

template Tensor<float> stack_batch(const std::vector<Tensor<float>>&);
template Tensor<double> stack_batch(const std::vector<Tensor<double>>&);

}  // namespace drn
