#include <doctest.h>

#include <cmath>
#include <cstring>

#include "drn/checkpoint.hpp"
#include "drn/optim.hpp"
#include "support.hpp"

using namespace drn;
using drn::test::random_tensor;
using drn::test::TempDir;

namespace {

NamedTensors sample_arrays(Rng& rng)
{
    return {{"conv.weight", random_tensor<float>(Shape{4, 3, 3, 3}, rng)},
            {"bias", random_tensor<float>(Shape{1, 4, 1, 1}, rng)},
            {"", random_tensor<float>(Shape{1, 1, 1, 1}, rng)}};
}

bool same(const NamedTensors& a, const NamedTensors& b)
{
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i].first != b[i].first || !(a[i].second.shape() == b[i].second.shape()) ||
            std::memcmp(a[i].second.data(), b[i].second.data(), sizeof(float) * a[i].second.numel()) != 0)
            return false;
    return true;
}

/// Scalar RAdam/Adam reference with decoupled weight decay.
struct ReferenceOptimizer {
    OptimizerConfig cfg;
    double m = 0, v = 0;
    long t = 0;

    double step(double theta, double g, double lr)
    {
        ++t;
        m = cfg.beta1 * m + (1 - cfg.beta1) * g;
        v = cfg.beta2 * v + (1 - cfg.beta2) * g * g;
        theta -= lr * cfg.weight_decay * theta;
        const double m_hat = m / (1 - std::pow(cfg.beta1, static_cast<double>(t)));
        const double v_hat = v / (1 - std::pow(cfg.beta2, static_cast<double>(t)));
        if (cfg.kind == OptimizerKind::Adam) return theta - lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
        const double rho_inf = 2 / (1 - cfg.beta2) - 1;
        const double b2t = std::pow(cfg.beta2, static_cast<double>(t));
        const double rho = rho_inf - 2 * static_cast<double>(t) * b2t / (1 - b2t);
        if (rho <= 5) return theta - lr * m_hat;
        const double r = std::sqrt((rho - 4) * (rho - 2) * rho_inf / ((rho_inf - 4) * (rho_inf - 2) * rho));
        return theta - lr * r * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
};

}  // namespace

TEST_CASE("blobs round-trip bit-exactly in memory and on disk")
{
    Rng rng(1);
    const auto arrays = sample_arrays(rng);
    const std::string bytes = encode_blob(arrays);
    CHECK(bytes.substr(0, 4) == "DRNP");
    CHECK(static_cast<unsigned char>(bytes[4]) == 3);
    CHECK(same(decode_blob(bytes), arrays));

    TempDir dir("blob");
    write_blob(dir.path / "p.drnp", arrays);
    CHECK(same(read_blob(dir.path / "p.drnp"), arrays));
    CHECK(read_file(dir.path / "p.drnp") == bytes);
}

TEST_CASE("blob size follows the documented layout")
{
    Rng rng(2);
    const auto arrays = sample_arrays(rng);
    std::size_t want = 4 + 4;
    for (const auto& [name, t] : arrays) want += 2 + name.size() + 1 + 4 * 4 + 4 * static_cast<std::size_t>(t.numel());
    CHECK(encode_blob(arrays).size() == want);
}

TEST_CASE("malformed blobs are rejected")
{
    Rng rng(3);
    const std::string bytes = encode_blob(sample_arrays(rng));
    for (std::size_t cut : {std::size_t(0), std::size_t(3), std::size_t(9), bytes.size() / 2, bytes.size() - 1})
        CHECK_THROWS_AS(decode_blob(bytes.substr(0, cut)), IoError);
    CHECK_THROWS_AS(decode_blob(bytes + "x"), IoError);
    std::string bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(decode_blob(bad), IoError);
    CHECK_THROWS_AS(read_file("/nonexistent/drn/file"), IoError);
}

TEST_CASE("atomic writes replace existing files")
{
    TempDir dir("atomic");
    write_file_atomic(dir.path / "a.txt", "first");
    write_file_atomic(dir.path / "a.txt", "second");
    CHECK(read_file(dir.path / "a.txt") == "second");
    std::size_t count = 0;
    for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir.path)) ++count;
    CHECK(count == 1);
}

TEST_CASE("optimizer steps match a scalar reference in both regimes")
{
    for (const OptimizerKind kind : {OptimizerKind::RAdam, OptimizerKind::Adam}) {
        CAPTURE(to_string(kind));
        Rng rng(4);
        ParamSet<double> params;
        const auto init = random_tensor<double>(Shape{1, 3, 1, 1}, rng);
        params.add("w", init);
        OptimizerConfig cfg;
        cfg.kind = kind;
        Optimizer<double> opt(params, cfg);
        std::vector<ReferenceOptimizer> ref(3, ReferenceOptimizer{cfg});
        std::vector<double> theta(init.array().data(), init.array().data() + 3);
        for (int t = 0; t < 20; ++t) {
            const auto g = random_tensor<double>(Shape{1, 3, 1, 1}, rng);
            const double lr = 1e-2 * (1 + t % 3);
            params.get("w").grad() = g;
            opt.step(lr);
            for (int i = 0; i < 3; ++i) {
                theta[i] = ref[i].step(theta[i], g.array()[i], lr);
                CHECK(params.get("w").value().array()[i] == doctest::Approx(theta[i]).epsilon(1e-12));
            }
        }
        CHECK(opt.steps() == 20);
    }
}

TEST_CASE("parameters without gradients are left untouched")
{
    ParamSet<double> params;
    params.add("a", Tensor<double>(Shape{1, 1, 1, 2}, 1.0));
    params.add("b", Tensor<double>(Shape{1, 1, 1, 2}, 1.0));
    Optimizer<double> opt(params, OptimizerConfig{});
    params.get("a").grad() = Tensor<double>(Shape{1, 1, 1, 2}, 0.5);
    opt.step(0.1);
    CHECK(params.get("b").value().array()[0] == 1.0);
    CHECK(params.get("a").value().array()[0] != 1.0);
}

TEST_CASE("restoring optimizer state continues the same trajectory")
{
    Rng rng(5);
    const auto init = random_tensor<float>(Shape{2, 2, 1, 1}, rng);
    std::vector<Tensor<float>> grads;
    for (int i = 0; i < 12; ++i) grads.push_back(random_tensor<float>(Shape{2, 2, 1, 1}, rng));

    ParamSet<float> full;
    full.add("w", init);
    Optimizer<float> opt_full(full, OptimizerConfig{});
    for (const auto& g : grads) {
        full.get("w").grad() = g;
        opt_full.step(1e-3);
    }

    ParamSet<float> first;
    first.add("w", init);
    Optimizer<float> opt_first(first, OptimizerConfig{});
    for (int i = 0; i < 7; ++i) {
        first.get("w").grad() = grads[i];
        opt_first.step(1e-3);
    }
    TempDir dir("optstate");
    write_blob(dir.path / "p.drnp", to_float_arrays(first.snapshot()));
    write_blob(dir.path / "o.drnp", to_float_arrays(opt_first.state()));

    ParamSet<float> second;
    second.add("w", Tensor<float>(Shape{2, 2, 1, 1}));
    second.assign(from_float_arrays<float>(read_blob(dir.path / "p.drnp")));
    Optimizer<float> opt_second(second, OptimizerConfig{});
    opt_second.load_state(from_float_arrays<float>(read_blob(dir.path / "o.drnp")));
    opt_second.set_steps(opt_first.steps());
    for (int i = 7; i < 12; ++i) {
        second.get("w").grad() = grads[i];
        opt_second.step(1e-3);
    }
    CHECK((second.get("w").value().array() == full.get("w").value().array()).all());
    CHECK_THROWS_AS(opt_second.load_state({}), ConfigError);
}

TEST_CASE("optimizer names parse")
{
    CHECK(optimizer_kind_from_string("radam") == OptimizerKind::RAdam);
    CHECK(optimizer_kind_from_string("adam") == OptimizerKind::Adam);
    CHECK_THROWS_AS(optimizer_kind_from_string("sgd"), ConfigError);
}
