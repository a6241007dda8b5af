#include <doctest.h>

#include <cmath>
#include <fstream>
#include <set>

#include "drn/trainer.hpp"
#include "support.hpp"

using namespace drn;
using drn::test::TempDir;

namespace {

/// One synthesized toy dataset shared by every test in this file.
const std::filesystem::path& toy_root()
{
    static TempDir dir("trainer_toy");
    static const bool made = [] {
        synth_toy_dataset(SynthConfig{}, dir.path);
        return true;
    }();
    (void)made;
    return dir.path;
}

TrainConfig fast_config()
{
    return test::fast_train_config(toy_root());
}

std::size_t count_lines(const std::filesystem::path& p)
{
    std::ifstream in(p);
    std::size_t n = 0;
    for (std::string line; std::getline(in, line);) n += line.empty() ? 0 : 1;
    return n;
}

}  // namespace

TEST_CASE("learning rate holds, then decays linearly to zero")
{
    TrainConfig c;
    c.lr0 = 1e-4;
    c.epochs = 40;
    c.decay_start_epoch = 10;
    CHECK(lr_at(0, c) == 1e-4);
    CHECK(lr_at(5, c) == 1e-4);
    CHECK(lr_at(10, c) == 1e-4);
    CHECK(lr_at(25, c) == doctest::Approx(5e-5).epsilon(1e-12));
    CHECK(lr_at(40, c) == 0.0);
    double prev = lr_at(0, c);
    for (int e = 1; e <= 40; ++e) {
        CHECK(lr_at(e, c) <= prev);
        CHECK(lr_at(e, c) >= 0.0);
        prev = lr_at(e, c);
    }
}

TEST_CASE("configs round-trip through JSON and reject bad values")
{
    TrainConfig c = fast_config();
    c.weights.sty = 2.5;
    c.face.sketch_radius = 2;
    const TrainConfig back = nlohmann::json(c).get<TrainConfig>();
    CHECK(nlohmann::json(back) == nlohmann::json(c));

    TrainConfig bad = c;
    bad.decay_start_epoch = bad.epochs;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.k_disc = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.optimizer = "sgd";
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.extractor.tag = "pretrained";
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("the loader visits every pair once per pass and restores its state")
{
    PairLoader loader(7, 3);
    for (int pass = 0; pass < 3; ++pass) {
        std::multiset<std::size_t> seen;
        for (int i = 0; i < 7; ++i)
            for (auto idx : loader.next(1)) seen.insert(idx);
        CHECK(seen == std::multiset<std::size_t>{0, 1, 2, 3, 4, 5, 6});
    }
    CHECK(loader.drawn() == 21);
    PairLoader copy(7, 99);
    copy.load_state(loader.state());
    for (int i = 0; i < 20; ++i) CHECK(copy.next(2) == loader.next(2));
}

TEST_CASE("each phase updates only its own networks")
{
    TrainConfig c = fast_config();
    Trainer trainer(c, PairDataset::load(c));
    auto sums = [&] {
        return std::array<std::uint64_t, 4>{trainer.transfer().params().checksum(), trainer.detail().params().checksum(),
                                            trainer.disc_appearance().params().checksum(),
                                            trainer.disc_shape().params().checksum()};
    };
    auto before = sums();
    std::vector<std::pair<TrainPhase, int>> calls;
    bool ok = true;
    trainer.set_phase_hook([&](TrainPhase phase, int k) {
        calls.emplace_back(phase, k);
        const auto now = sums();
        const bool changed[4] = {now[0] != before[0], now[1] != before[1], now[2] != before[2], now[3] != before[3]};
        if (phase == TrainPhase::Transfer) ok = ok && changed[0] && !changed[1] && !changed[2] && !changed[3];
        if (phase == TrainPhase::Joint) ok = ok && changed[0] && changed[1] && !changed[2] && !changed[3];
        if (phase == TrainPhase::Discriminator) ok = ok && !changed[0] && !changed[1] && changed[2] && changed[3];
        before = now;
    });
    for (int s = 0; s < 2; ++s) {
        const long g0 = trainer.generator_loader().drawn(), d0 = trainer.discriminator_loader().drawn();
        const StepMetrics m = trainer.step();
        CHECK(trainer.generator_loader().drawn() == g0 + 1);
        CHECK(trainer.discriminator_loader().drawn() == d0 + c.k_disc);
        for (const char* key : {"L1", "L_recon_coarse", "L_per_coarse", "L2", "L_recon", "L_per", "L_sty", "L_adv_G",
                                "L_D_A", "L_D_S"}) {
            CAPTURE(key);
            REQUIRE(m.count(key) == 1);
            CHECK(std::isfinite(m.at(key)));
            CHECK(m.at(key) >= 0.0);
        }
        CHECK(m.at("L1") == doctest::Approx(10 * m.at("L_recon_coarse") + 5 * m.at("L_per_coarse")).epsilon(1e-5));
    }
    CHECK(ok);
    REQUIRE(calls.size() == 2 * (2 + static_cast<std::size_t>(c.k_disc)));
    CHECK(calls[0] == std::pair{TrainPhase::Transfer, 0});
    CHECK(calls[1] == std::pair{TrainPhase::Joint, 0});
    for (int k = 0; k < c.k_disc; ++k) CHECK(calls[2 + k] == std::pair{TrainPhase::Discriminator, k});
    CHECK(trainer.global_step() == 2);
}

TEST_CASE("resuming from a checkpoint reproduces the next step")
{
    TrainConfig c = fast_config();
    TempDir dir("resume");
    Trainer a(c, PairDataset::load(c));
    a.step();
    a.step();
    a.save(dir.path);
    const StepMetrics next = a.step();

    Trainer b(c, PairDataset::load(c));
    b.load(dir.path);
    CHECK(b.global_step() == 2);
    const StepMetrics again = b.step();
    CHECK(again == next);
    CHECK(b.transfer().params().checksum() == a.transfer().params().checksum());
    CHECK(b.disc_shape().params().checksum() == a.disc_shape().params().checksum());

    TrainConfig other = c;
    other.net.base_channels = 8;
    Trainer mismatch(other, PairDataset::load(other));
    CHECK_THROWS_AS(mismatch.load(dir.path), ConfigError);
}

TEST_CASE("a non-finite loss stops training with diagnostics")
{
    TrainConfig c = fast_config();
    PairDataset data = PairDataset::load(c);
    for (auto& s : data.samples) s.image.array().setConstant(std::nanf(""));
    TempDir dir("diverge");
    Trainer trainer(c, std::move(data));
    trainer.set_diagnostics_dir(dir.path);
    CHECK_THROWS_AS(trainer.step(), DivergenceError);
    REQUIRE(std::filesystem::exists(dir.path / "divergence.json"));
    const auto diag = nlohmann::json::parse(read_file(dir.path / "divergence.json"));
    CHECK(diag.at("phase") == "transfer");
    CHECK(diag.at("step") == 1);
}

TEST_CASE("fit writes logs and checkpoints and resumes to completion")
{
    TrainConfig c = fast_config();
    c.max_steps = 4;
    c.checkpoint_every = 2;
    TempDir dir("fit");
    long seen = 0;
    const auto manifest = fit(c, dir.path, false, [&](long step, const StepMetrics&) { seen = step; });
    CHECK(seen == 4);
    CHECK(manifest.at("finished") == true);
    CHECK(manifest.at("global_step") == 4);
    CHECK(count_lines(dir.path / "metrics.log") == 4);
    CHECK(std::filesystem::exists(dir.path / "run_config.json"));
    validate_manifest(read_manifest(dir.path), dir.path);

    const auto again = fit(c, dir.path, true);
    CHECK(again.at("global_step") == 4);
    CHECK(count_lines(dir.path / "metrics.log") == 4);

    const GlobalModel model = load_global_model(dir.path);
    CHECK(model.config.net.height == 128);
    Trainer t(c, PairDataset::load(c));
    t.load(dir.path);
    CHECK(model.transfer->params().checksum() == t.transfer().params().checksum());

    std::filesystem::remove(dir.path / "detail.drnp");
    CHECK_THROWS_AS(validate_manifest(read_manifest(dir.path), dir.path), IoError);
}

TEST_CASE("epochs and step totals follow the pair count")
{
    TrainConfig c = fast_config();
    Trainer t(c, PairDataset::load(c));
    CHECK(t.steps_per_epoch() == 18);
    CHECK(t.total_steps() == 18 * 40);
    c.max_steps = 5;
    Trainer capped(c, PairDataset::load(c));
    CHECK(capped.total_steps() == 5);
    CHECK(capped.epoch() == 0);
    CHECK(capped.current_lr() == c.lr0);
}

TEST_CASE("face training uses pairs with faces on both sides")
{
    TrainConfig c = fast_config();
    c.max_steps = 2;
    const PairDataset data = PairDataset::load(c);
    const auto samples = build_face_samples(data, c);
    CHECK(samples.size() == data.pairs.size());
    for (const auto& s : samples) {
        CHECK(s.source_face.shape() == Shape{1, 3, c.net.face_size, c.net.face_size});
        CHECK(s.sketch.shape() == Shape{1, 1, c.net.face_size, c.net.face_size});
        CHECK(s.sketch.array().sum() > 0.0f);
    }
    TempDir dir("face");
    const auto manifest = fit_face(c, dir.path);
    CHECK(manifest.at("kind") == "face");
    CHECK(manifest.at("finished") == true);
    const FaceModel model = load_face_model(dir.path);
    CHECK(model.face->params().size() > 0);
    CHECK_THROWS_AS(load_global_model(dir.path), IoError);

    PairDataset faceless = data;
    for (auto& s : faceless.samples) s.annotation.face_bbox.reset();
    CHECK_THROWS_AS(build_face_samples(faceless, c), ConfigError);
}
