#pragma once

/// \file autograd.hpp
/// \brief Tape-free reverse-mode differentiation over Tensor values.
///
/// Every op returns a Var whose node remembers its parents and a closure that
/// pushes the node's gradient back into them. Calling backward() on a scalar
/// Var sorts the reachable graph topologically and runs the closures once.
/// When gradients are disabled (NoGradGuard) or no parent requires them, ops
/// produce plain constant nodes and keep no history.

#include <functional>
#include <memory>
#include <vector>

#include "drn/tensor.hpp"

namespace drn {

template <typename T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    Tensor<T>& ensure_grad()
    {
        if (grad.shape() != value.shape()) grad = Tensor<T>(value.shape());
        return grad;
    }
};

template <typename T>
class Var {
public:
    Var() = default;
    explicit Var(Tensor<T> value, bool requires_grad = false)
        : node_(std::make_shared<Node<T>>())
    {
        node_->value = std::move(value);
        node_->requires_grad = requires_grad;
    }
    explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

    bool defined() const { return static_cast<bool>(node_); }
    const Tensor<T>& value() const { return node_->value; }
    Tensor<T>& value() { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool on) { node_->requires_grad = on; }

    /// Gradient accumulated by backward(); zero-filled if nothing arrived yet.
    const Tensor<T>& grad() const { return node_->ensure_grad(); }
    Tensor<T>& grad() { return node_->ensure_grad(); }
    bool has_grad() const { return node_->grad.shape() == node_->value.shape(); }
    void zero_grad() { node_->grad = Tensor<T>(); }

    T item() const { return node_->value.item(); }

    const std::shared_ptr<Node<T>>& node() const { return node_; }

private:
    std::shared_ptr<Node<T>> node_;
};

/// Gradient recording switch, per thread.
bool grad_enabled();

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

/// Seeds d(root)/d(root) = 1 and accumulates gradients into every reachable
/// node that requires them. root must hold a single value.
template <typename T>
void backward(const Var<T>& root);

template <typename T>
Var<T> constant(Tensor<T> value)
{
    return Var<T>(std::move(value), false);
}

template <typename T>
Var<T> detach(const Var<T>& x)
{
    return Var<T>(x.value(), false);
}

// Elementwise arithmetic. Shapes must match exactly.
template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> scale(const Var<T>& a, T factor);
template <typename T> Var<T> add_scalar(const Var<T>& a, T value);

template <typename T> Var<T> abs(const Var<T>& x);
template <typename T> Var<T> square(const Var<T>& x);
template <typename T> Var<T> tanh(const Var<T>& x);
template <typename T> Var<T> sigmoid(const Var<T>& x);
template <typename T> Var<T> leaky_relu(const Var<T>& x, T slope);
/// Identity inside [lo, hi], constant outside; gradient is zero where clamped.
template <typename T> Var<T> clamp(const Var<T>& x, T lo, T hi);

/// Mean and sum over all elements, returned as a (1,1,1,1) Var.
template <typename T> Var<T> mean(const Var<T>& x);
template <typename T> Var<T> sum(const Var<T>& x);

/// 2-D convolution with square kernels and zero padding.
/// weight: (C_out, C_in, k, k); bias: (1, C_out, 1, 1) or undefined.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride, int pad);

/// x: (N, C_in, 1, 1); weight: (C_out, C_in, 1, 1); bias: (1, C_out, 1, 1).
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias);

/// Per-sample per-channel standardization, sigma = sqrt(biased var + eps).
template <typename T> Var<T> instance_norm(const Var<T>& x, T eps);

/// y = x * scale + bias with scale, bias of shape (N, C, 1, 1) broadcast over H, W.
template <typename T>
Var<T> channel_affine(const Var<T>& x, const Var<T>& scale, const Var<T>& bias);

template <typename T> Var<T> upsample_nearest(const Var<T>& x, int factor);
/// Spatial mean, (N, C, H, W) -> (N, C, 1, 1).
template <typename T> Var<T> global_avg_pool(const Var<T>& x);
template <typename T> Var<T> concat_channels(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> slice_channels(const Var<T>& x, Index begin, Index count);

/// Channel Gram matrix per sample, (N, C, H, W) -> (N, 1, C, C), scaled by 1/(C·H·W).
template <typename T> Var<T> gram(const Var<T>& x);

}  // namespace drn
