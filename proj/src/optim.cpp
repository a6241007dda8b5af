#include "drn/optim.hpp"

#include <cmath>
#include <map>

namespace drn {

OptimizerKind optimizer_kind_from_string(const std::string& name)
{
    if (name == "radam") return OptimizerKind::RAdam;
    if (name == "adam") return OptimizerKind::Adam;
    throw ConfigError("unknown optimizer '" + name + "' (expected radam or adam)");
}

std::string to_string(OptimizerKind kind)
{
    return kind == OptimizerKind::RAdam ? "radam" : "adam";
}

template <typename T>
Optimizer<T>::Optimizer(ParamSet<T>& params, OptimizerConfig config) : params_(&params), config_(config)
{
    for (const auto& e : params.entries()) {
        m_.emplace_back(e.var.value().shape());
        v_.emplace_back(e.var.value().shape());
    }
}

template <typename T>
void Optimizer<T>::step(double lr)
{
    ++step_count_;
    const double t = static_cast<double>(step_count_);
    const double b1 = config_.beta1;
    const double b2 = config_.beta2;
    const double bias1 = 1.0 - std::pow(b1, t);
    const double b2t = std::pow(b2, t);
    const double bias2 = 1.0 - b2t;

    // Step multiplier for m and whether the adaptive denominator is used.
    double mult = lr / bias1;
    bool adaptive = true;
    if (config_.kind == OptimizerKind::RAdam) {
        const double rho_inf = 2.0 / (1.0 - b2) - 1.0;
        const double rho_t = rho_inf - 2.0 * t * b2t / bias2;
        if (rho_t > 5.0) {
            const double r = std::sqrt((rho_t - 4.0) * (rho_t - 2.0) * rho_inf /
                                       ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t));
            mult *= r;
        } else {
            adaptive = false;
        }
    }

    const T decay = static_cast<T>(1.0 - lr * config_.weight_decay);
    const T c1 = static_cast<T>(1.0 - b1);
    const T c2 = static_cast<T>(1.0 - b2);
    const T sqrt_bias2 = static_cast<T>(std::sqrt(bias2));
    const T eps = static_cast<T>(config_.eps);
    const T step_mult = static_cast<T>(mult);
    const auto& entries = params_->entries();
    for (std::size_t i = 0; i < entries.size(); ++i) {
        Var<T> p = entries[i].var;
        if (!p.has_grad()) continue;
        const auto& g = p.grad().array();
        auto& m = m_[i].array();
        auto& v = v_[i].array();
        m = static_cast<T>(b1) * m + c1 * g;
        v = static_cast<T>(b2) * v + c2 * g.square();
        auto& theta = p.value().array();
        theta *= decay;
        if (adaptive)
            theta -= step_mult * m / (v.sqrt() / sqrt_bias2 + eps);
        else
            theta -= step_mult * m;
    }
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>>> Optimizer<T>::state() const
{
    std::vector<std::pair<std::string, Tensor<T>>> out;
    const auto& entries = params_->entries();
    for (std::size_t i = 0; i < entries.size(); ++i) {
        out.emplace_back(entries[i].name + ".m", m_[i]);
        out.emplace_back(entries[i].name + ".v", v_[i]);
    }
    return out;
}

template <typename T>
void Optimizer<T>::load_state(const std::vector<std::pair<std::string, Tensor<T>>>& arrays)
{
    std::map<std::string, const Tensor<T>*> by_name;
    for (const auto& [name, t] : arrays) by_name[name] = &t;
    const auto& entries = params_->entries();
    if (arrays.size() != 2 * entries.size()) throw ConfigError("optimizer state does not match parameter set");
    for (std::size_t i = 0; i < entries.size(); ++i) {
        for (auto [suffix, dst] : {std::pair{".m", &m_[i]}, std::pair{".v", &v_[i]}}) {
            auto it = by_name.find(entries[i].name + suffix);
            if (it == by_name.end()) throw ConfigError("optimizer state lacks " + entries[i].name + suffix);
            require_same_shape(it->second->shape(), dst->shape(), "optimizer state");
            *dst = *it->second;
        }
    }
}

template class Optimizer<float>;
template class Optimizer<double>;

}  // namespace drn
