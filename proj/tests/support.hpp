#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "drn/autograd.hpp"
#include "drn/data_pipeline.hpp"
#include "drn/net_config.hpp"
#include "drn/trainer.hpp"

namespace drn::test {

template <typename T>
Tensor<T> random_tensor(const Shape& s, Rng& rng, double lo = -1.0, double hi = 1.0)
{
    std::uniform_real_distribution<double> u(lo, hi);
    Tensor<T> t(s);
    for (Index i = 0; i < t.numel(); ++i) t.array()[i] = static_cast<T>(u(rng));
    return t;
}

inline double uniform(Rng& rng, double lo, double hi)
{
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline int uniform_int(Rng& rng, int lo, int hi)
{
    return std::uniform_int_distribution<int>(lo, hi)(rng);
}

/// ||a - b|| / max(||a||, ||b||, floor).
inline double relative_error(const Eigen::ArrayXd& a, const Eigen::ArrayXd& b, double floor = 1e-12)
{
    const double scale = std::max({std::sqrt(a.square().sum()), std::sqrt(b.square().sum()), floor});
    return std::sqrt((a - b).square().sum()) / scale;
}

/// Central finite differences of a scalar function of the leaf `x`, compared
/// against the analytic gradient. Returns the relative error.
inline double gradient_check(Var<double>& x, const std::function<Var<double>()>& f, double h = 1e-6,
                             Index max_entries = 0)
{
    x.set_requires_grad(true);
    x.zero_grad();
    backward(f());
    const Eigen::ArrayXd analytic = x.grad().array();
    const Index n = max_entries > 0 ? std::min(max_entries, x.value().numel()) : x.value().numel();
    Eigen::ArrayXd numeric(n), picked(n);
    const Index stride = std::max<Index>(1, x.value().numel() / n);
    for (Index k = 0; k < n; ++k) {
        const Index i = k * stride;
        const double keep = x.value().array()[i];
        double fp = 0, fm = 0;
        {
            NoGradGuard guard;
            x.value().array()[i] = keep + h;
            fp = f().item();
            x.value().array()[i] = keep - h;
            fm = f().item();
        }
        x.value().array()[i] = keep;
        numeric[k] = (fp - fm) / (2 * h);
        picked[k] = analytic[i];
    }
    return relative_error(picked, numeric);
}

/// Scratch directory removed on destruction.
struct TempDir {
    std::filesystem::path path;

    explicit TempDir(const std::string& tag)
    {
        static int counter = 0;
        path = std::filesystem::temp_directory_path() /
               ("drn_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir()
    {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
};

/// A small network plan that keeps unit tests fast.
inline NetConfig tiny_net(Index h = 16, Index w = 16)
{
    NetConfig n;
    n.height = h;
    n.width = w;
    n.base_channels = 4;
    n.n_down = 2;
    n.n_transfer_blocks = 2;
    n.n_res_blocks = 1;
    n.style_dim = 8;
    n.mlp_hidden = 8;
    n.face_size = 16;
    n.disc_channels = 4;
    return n;
}

/// Training config for the toy dataset at its native 128×88 resolution.
inline TrainConfig toy_train_config(const std::filesystem::path& data_root)
{
    TrainConfig c;
    c.epochs = 40;
    c.decay_start_epoch = 10;
    c.lr0 = 1e-4;
    c.heatmap_sigma = 3;
    c.data_root = data_root.string();
    c.net.height = 128;
    c.net.width = 88;
    c.net.base_channels = 16;
    c.net.disc_channels = 16;
    c.net.face_size = 32;
    return c;
}

/// Tiny-network config for fast trainer tests on the toy dataset.
inline TrainConfig fast_train_config(const std::filesystem::path& data_root)
{
    TrainConfig c = toy_train_config(data_root);
    c.net = tiny_net(128, 88);
    c.net.n_down = 3;
    c.net.face_size = 16;
    c.extractor.layers = 2;
    c.extractor.base_channels = 4;
    return c;
}

}  // namespace drn::test
