#pragma once

/// \file optim.hpp
/// \brief Adaptive-moment optimizers with decoupled weight regularization.

#include <string>

#include "drn/checkpoint.hpp"
#include "drn/params.hpp"

namespace drn {

enum class OptimizerKind { RAdam, Adam };

OptimizerKind optimizer_kind_from_string(const std::string& name);
std::string to_string(OptimizerKind kind);

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::RAdam;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-5;
};

/// Rectified Adam (variance-rectified step once the SMA length exceeds 5,
/// momentum-only step before) or plain Adam. Weight decay is decoupled:
/// theta -= lr * weight_decay * theta before the moment update is applied.
template <typename T>
class Optimizer {
public:
    Optimizer(ParamSet<T>& params, OptimizerConfig config);

    /// Applies one update from the gradients currently stored on the parameters.
    /// Parameters without a gradient are left untouched.
    void step(double lr);

    long steps() const { return step_count_; }
    void set_steps(long steps) { step_count_ = steps; }

    /// First and second moments as "<param>.m" / "<param>.v".
    std::vector<std::pair<std::string, Tensor<T>>> state() const;
    void load_state(const std::vector<std::pair<std::string, Tensor<T>>>& arrays);

private:
    ParamSet<T>* params_;
    OptimizerConfig config_;
    long step_count_ = 0;
    std::vector<Tensor<T>> m_;
    std::vector<Tensor<T>> v_;
};

}  // namespace drn
