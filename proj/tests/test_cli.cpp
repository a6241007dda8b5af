#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include "drn/cli.hpp"
#include "support.hpp"

using namespace drn;
using drn::test::TempDir;
namespace fs = std::filesystem;

namespace {

struct RunResult {
    int status = -1;
    std::string output;
};

/// Runs the drn binary (path in DRN_TOOL) with stdout and stderr captured.
RunResult run_tool(const std::string& args, const fs::path& log)
{
    const char* tool = std::getenv("DRN_TOOL");
    REQUIRE_MESSAGE(tool != nullptr, "DRN_TOOL must point at the drn binary");
    const std::string cmd = std::string("'") + tool + "' " + args + " > '" + log.string() + "' 2>&1";
    const int raw = std::system(cmd.c_str());
    RunResult r;
    r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    r.output = read_file(log);
    return r;
}

void write_config(const fs::path& path, TrainConfig train)
{
    RunConfig rc;
    rc.train = std::move(train);
    std::ofstream(path) << nlohmann::json(rc).dump(2);
}

/// Synthesized data plus short global and face runs, shared by the tests below.
struct Workspace {
    TempDir dir{"cli"};
    fs::path data, config, global, face;

    Workspace()
    {
        data = dir.path / "data";
        config = dir.path / "config.json";
        global = dir.path / "global";
        face = dir.path / "face";
        const fs::path log = dir.path / "setup.log";
        REQUIRE(run_tool("synth-data --out '" + data.string() + "'", log).status == kExitOk);
        TrainConfig c = test::fast_train_config("");
        c.max_steps = 3;
        write_config(config, c);
        const auto g = run_tool("train --config '" + config.string() + "' --data '" + data.string() + "' --out '" +
                                    global.string() + "'",
                                log);
        REQUIRE_MESSAGE(g.status == kExitOk, g.output);
        const auto f = run_tool("train --face --config '" + config.string() + "' --data '" + data.string() +
                                    "' --out '" + face.string() + "'",
                                log);
        REQUIRE_MESSAGE(f.status == kExitOk, f.output);
    }

    fs::path log() const { return dir.path / "cmd.log"; }
    std::string image(const std::string& stem) const { return "'" + (data / "images" / (stem + ".png")).string() + "'"; }
    std::string ann(const std::string& stem) const
    {
        return "'" + (data / "annotations" / (stem + ".json")).string() + "'";
    }
};

Workspace& workspace()
{
    static Workspace w;
    return w;
}

std::pair<std::string, std::string> first_test_pair(const Workspace& w)
{
    std::ifstream in(w.data / "test_pairs.csv");
    std::string header, row;
    std::getline(in, header);
    std::getline(in, row);
    const auto comma = row.find(',');
    return {row.substr(0, comma), row.substr(comma + 1)};
}

}  // namespace

TEST_CASE("usage errors exit with status 2")
{
    TempDir dir("usage");
    CHECK(run_tool("", dir.path / "a.log").status == kExitUsage);
    CHECK(run_tool("--help", dir.path / "a.log").status == kExitOk);
    CHECK(run_tool("bogus", dir.path / "a.log").status == kExitUsage);
    CHECK(run_tool("train --out x", dir.path / "a.log").status == kExitUsage);
    CHECK(run_tool("infer --ckpt x", dir.path / "a.log").status == kExitUsage);
    const auto r = run_tool("synth-data --out '" + (dir.path / "d").string() + "' --identities 0", dir.path / "a.log");
    CHECK(r.status == kExitUsage);
}

TEST_CASE("data root precedence is flag, environment, config")
{
    ::unsetenv(kDataRootEnv);
    CHECK(resolve_data_root("", "cfg") == "cfg");
    ::setenv(kDataRootEnv, "env", 1);
    CHECK(resolve_data_root("", "cfg") == "env");
    CHECK(resolve_data_root("flag", "cfg") == "flag");
    ::unsetenv(kDataRootEnv);
}

TEST_CASE("training writes a checkpoint and a finished run resumes as a no-op")
{
    Workspace& w = workspace();
    CHECK(fs::exists(w.global / "manifest.json"));
    const auto manifest = read_manifest(w.global);
    CHECK(manifest.at("finished") == true);
    CHECK(manifest.at("global_step") == 3);
    const auto r = run_tool("train --resume '" + w.global.string() + "'", w.log());
    CHECK(r.status == kExitOk);
    CHECK(r.output.find("already finished") != std::string::npos);
    CHECK(read_manifest(w.global).at("global_step") == 3);
    CHECK(run_tool("train --resume '" + w.face.string() + "' --out '" + (w.dir.path / "x").string() + "'", w.log())
              .status == kExitUsage);
}

TEST_CASE("missing data and missing checkpoints are I/O failures")
{
    Workspace& w = workspace();
    CHECK(run_tool("train --config '" + w.config.string() + "' --data /nonexistent/drn --out '" +
                       (w.dir.path / "never").string() + "'",
                   w.log())
              .status == kExitIo);
    const auto [src, tgt] = first_test_pair(w);
    CHECK(run_tool("infer --ckpt /nonexistent/ckpt --source " + w.image(src) + " --source-ann " + w.ann(src) +
                       " --target-ann " + w.ann(tgt) + " --out '" + (w.dir.path / "o.png").string() + "'",
                   w.log())
              .status == kExitIo);
}

TEST_CASE("a diverging run exits with status 3")
{
    Workspace& w = workspace();
    TrainConfig c = test::fast_train_config("");
    c.max_steps = 2;
    c.weights.recon = 1e300;
    const fs::path cfg = w.dir.path / "diverge.json";
    write_config(cfg, c);
    const auto r = run_tool("train --config '" + cfg.string() + "' --data '" + w.data.string() + "' --out '" +
                                (w.dir.path / "diverged").string() + "'",
                            w.log());
    CHECK(r.status == kExitDivergence);
    CHECK(fs::exists(w.dir.path / "diverged" / "divergence.json"));
}

TEST_CASE("inference is deterministic and writes debug outputs on request")
{
    Workspace& w = workspace();
    const auto [src, tgt] = first_test_pair(w);
    const std::string common = "infer --ckpt '" + w.global.string() + "' --face-ckpt '" + w.face.string() +
                               "' --source " + w.image(src) + " --source-ann " + w.ann(src) + " --target-ann " +
                               w.ann(tgt);
    const fs::path out_dir = w.dir.path / "infer";
    fs::create_directories(out_dir);
    REQUIRE(run_tool(common + " --out '" + (out_dir / "a.png").string() + "'", w.log()).status == kExitOk);
    REQUIRE(run_tool(common + " --out '" + (out_dir / "b.png").string() + "' --debug", w.log()).status == kExitOk);
    CHECK(read_file(out_dir / "a.png") == read_file(out_dir / "b.png"));
    const RgbImage img = read_png(out_dir / "a.png");
    CHECK(img.height == 128);
    CHECK(img.width == 88);
    CHECK(fs::exists(out_dir / "debug" / "b_coarse.png"));
    CHECK(fs::exists(out_dir / "debug" / "b_residual.png"));
    REQUIRE(run_tool(common + " --out '" + (out_dir / "c.png").string() + "' --no-face", w.log()).status == kExitOk);
    CHECK(fs::exists(out_dir / "c.png"));
}

TEST_CASE("inference without the face module composes coarse plus residual")
{
    Workspace& w = workspace();
    const GlobalModel model = load_global_model(w.global);
    const auto [src, tgt] = first_test_pair(w);
    const Sample s = load_sample(resolve_sample(w.data, src), 128, 88);
    const Sample t = load_sample(resolve_sample(w.data, tgt), 128, 88);
    const InferenceResult r = run_inference(model, nullptr, s.image, s.annotation, t.annotation, true);
    CHECK_FALSE(r.face_used);
    const Eigen::ArrayXf want = (r.coarse.array() + r.residual.array()).max(-1.0f).min(1.0f);
    CHECK((r.final_image.array() - want).abs().maxCoeff() == 0.0f);
    CHECK(r.guidance.shape() == Shape{1, model.config.net.guidance_channels(), 16, 11});

    const FaceModel face = load_face_model(w.face);
    const InferenceResult with_face = run_inference(model, &face, s.image, s.annotation, t.annotation, true);
    CHECK(with_face.face_used);
    const InferenceResult disabled = run_inference(model, &face, s.image, s.annotation, t.annotation, false);
    CHECK_FALSE(disabled.face_used);
}

TEST_CASE("evaluation writes a valid report and rejects unknown metrics")
{
    Workspace& w = workspace();
    const fs::path pred = w.dir.path / "pred";
    fs::create_directories(pred);
    std::ifstream in(w.data / "test_pairs.csv");
    std::string row;
    std::getline(in, row);
    int n = 0;
    while (std::getline(in, row) && n < 3) {
        const auto comma = row.find(',');
        const std::string src = row.substr(0, comma), tgt = row.substr(comma + 1);
        REQUIRE(run_tool("infer --ckpt '" + w.global.string() + "' --source " + w.image(src) + " --source-ann " +
                             w.ann(src) + " --target-ann " + w.ann(tgt) + " --out '" +
                             (pred / (src + "__" + tgt + ".png")).string() + "'",
                         w.log())
                    .status == kExitOk);
        ++n;
    }
    const fs::path report = w.dir.path / "report.json";
    const auto r = run_tool("eval --pred '" + pred.string() + "' --gt '" + (w.data / "images").string() + "' --ann '" +
                                (w.data / "annotations").string() + "' --report '" + report.string() + "'",
                            w.log());
    REQUIRE_MESSAGE(r.status == kExitOk, r.output);
    const EvalReport rep = EvalReport::load(report);
    for (const auto& m : known_metrics()) CHECK(rep.metrics.contains(m));
    const double s = rep.metrics.at("ssim").at("value").get<double>();
    CHECK(s > -1.0);
    CHECK(s < 1.0);
    CHECK(rep.metrics.at("ssim").at("n") == 3);

    const auto bad = run_tool("eval --pred '" + pred.string() + "' --gt '" + (w.data / "images").string() +
                                  "' --ann '" + (w.data / "annotations").string() + "' --metrics ssim,bogus --report '" +
                                  (w.dir.path / "bad.json").string() + "'",
                              w.log());
    CHECK(bad.status == kExitUsage);
    CHECK(bad.output.find("bogus") != std::string::npos);
}

TEST_CASE("guidance visualization has the guidance resolution")
{
    Workspace& w = workspace();
    const auto [src, tgt] = first_test_pair(w);
    const fs::path out = w.dir.path / "viz.png";
    REQUIRE(run_tool("viz-guidance --ckpt '" + w.global.string() + "' --source " + w.image(src) + " --source-ann " +
                         w.ann(src) + " --target-ann " + w.ann(tgt) + " --out '" + out.string() + "'",
                     w.log())
                .status == kExitOk);
    const RgbImage img = read_png(out);
    CHECK(img.height == 16);
    CHECK(img.width == 11);
}
