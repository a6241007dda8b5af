#include "drn/trainer.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "drn/checkpoint.hpp"

namespace drn {

namespace fs = std::filesystem;

namespace {

void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known, const std::string& what)
{
    if (!j.is_object()) throw ConfigError(what + " must be a JSON object");
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (const char* k : known) ok = ok || key == k;
        if (!ok) throw ConfigError("unknown " + what + " key '" + key + "'");
    }
}

/// Independent seeds for every network and loader, drawn from the run seed.
struct SeedPlan {
    std::uint64_t transfer, detail, disc_a, disc_s, gen_loader, disc_loader;

    explicit SeedPlan(std::uint64_t seed)
    {
        Rng rng(seed);
        transfer = rng();
        detail = rng();
        disc_a = rng();
        disc_s = rng();
        gen_loader = rng();
        disc_loader = rng();
    }
};

OptimizerConfig optimizer_config(const TrainConfig& c)
{
    OptimizerConfig o;
    o.kind = optimizer_kind_from_string(c.optimizer);
    o.weight_decay = c.weight_reg;
    return o;
}

void ensure_dir(const fs::path& dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

bool finite(double v)
{
    return std::isfinite(v);
}

template <typename T>
void save_params(const ParamSet<T>& params, const fs::path& path)
{
    write_blob(path, to_float_arrays(params.snapshot()));
}

template <typename T>
void load_params(ParamSet<T>& params, const fs::path& path)
{
    const auto arrays = read_blob(path);
    if (arrays.size() != params.size())
        throw IoError(path.string() + ": holds " + std::to_string(arrays.size()) + " arrays, network has " +
                      std::to_string(params.size()));
    try {
        params.assign(from_float_arrays<T>(arrays));
    } catch (const Error& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

template <typename T>
nlohmann::json save_optimizer(const Optimizer<T>& opt, const fs::path& dir, const std::string& file)
{
    write_blob(dir / file, to_float_arrays(opt.state()));
    return {{"file", file}, {"steps", opt.steps()}};
}

template <typename T>
void load_optimizer(Optimizer<T>& opt, const nlohmann::json& entry, const fs::path& dir)
{
    const fs::path path = dir / entry.at("file").get<std::string>();
    try {
        opt.load_state(from_float_arrays<T>(read_blob(path)));
    } catch (const ConfigError& e) {
        throw IoError(path.string() + ": " + e.what());
    }
    opt.set_steps(entry.at("steps").get<long>());
}

void write_json(const fs::path& path, const nlohmann::json& j)
{
    write_file_atomic(path, j.dump(2) + "\n");
}

/// Keeps the log lines with step <= last_step.
void truncate_metrics_log(const fs::path& path, long last_step)
{
    if (!fs::exists(path)) return;
    std::ifstream in(path);
    std::string kept, line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto rec = nlohmann::json::parse(line, nullptr, false);
        if (rec.is_discarded() || !rec.contains("step")) continue;
        if (rec["step"].get<long>() <= last_step) kept += line + "\n";
    }
    write_file_atomic(path, kept);
}

class MetricsLog {
public:
    MetricsLog(const fs::path& path, bool append)
        : path_(path), out_(path, append ? std::ios::app : std::ios::trunc)
    {
        if (!out_) throw IoError("cannot open metrics log " + path.string());
    }

    void write(const nlohmann::json& record)
    {
        out_ << record.dump() << "\n";
        out_.flush();
        if (!out_) throw IoError("cannot append to metrics log " + path_.string());
    }

private:
    fs::path path_;
    std::ofstream out_;
};

}  // namespace

void TrainConfig::validate() const
{
    if (epochs <= decay_start_epoch) throw ConfigError("epochs must exceed decay_start_epoch");
    if (decay_start_epoch < 0) throw ConfigError("decay_start_epoch must be >= 0");
    if (!(lr0 > 0)) throw ConfigError("lr0 must be positive");
    if (weight_reg < 0) throw ConfigError("weight_reg must be non-negative");
    if (k_disc < 1) throw ConfigError("k_disc must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (max_steps < 0 || checkpoint_every < 0) throw ConfigError("max_steps and checkpoint_every must be >= 0");
    if (!(heatmap_sigma > 0)) throw ConfigError("heatmap_sigma must be positive");
    if (blend_sigma < 0) throw ConfigError("blend_sigma must be non-negative");
    if (face.epochs < 1 || !(face.lr > 0) || face.sketch_radius < 0)
        throw ConfigError("face: epochs >= 1, lr > 0 and sketch_radius >= 0 required");
    optimizer_kind_from_string(optimizer);
    weights.validate();
    net.validate();
    if (extractor.tag != "identity" && extractor.tag != "fixed-random")
        throw ConfigError("extractor tag '" + extractor.tag + "' is not available (use fixed-random or identity)");
}

void to_json(nlohmann::json& j, const TrainConfig& c)
{
    j = nlohmann::json{{"epochs", c.epochs},
                       {"lr0", c.lr0},
                       {"decay_start_epoch", c.decay_start_epoch},
                       {"weight_reg", c.weight_reg},
                       {"k_disc", c.k_disc},
                       {"batch_size", c.batch_size},
                       {"seed", c.seed},
                       {"max_steps", c.max_steps},
                       {"checkpoint_every", c.checkpoint_every},
                       {"optimizer", c.optimizer},
                       {"data_root", c.data_root},
                       {"train_pairs", c.train_pairs},
                       {"heatmap_sigma", c.heatmap_sigma},
                       {"blend_sigma", c.blend_sigma},
                       {"loss_weights", c.weights},
                       {"net", c.net},
                       {"extractor", c.extractor},
                       {"face", {{"epochs", c.face.epochs}, {"lr", c.face.lr}, {"sketch_radius", c.face.sketch_radius}}}};
}

void from_json(const nlohmann::json& j, TrainConfig& c)
{
    reject_unknown(j,
                   {"epochs", "lr0", "decay_start_epoch", "weight_reg", "k_disc", "batch_size", "seed", "max_steps",
                    "checkpoint_every", "optimizer", "data_root", "train_pairs", "heatmap_sigma", "blend_sigma",
                    "loss_weights", "net", "extractor", "face"},
                   "train config");
    const TrainConfig d;
    c.epochs = j.value("epochs", d.epochs);
    c.lr0 = j.value("lr0", d.lr0);
    c.decay_start_epoch = j.value("decay_start_epoch", d.decay_start_epoch);
    c.weight_reg = j.value("weight_reg", d.weight_reg);
    c.k_disc = j.value("k_disc", d.k_disc);
    c.batch_size = j.value("batch_size", d.batch_size);
    c.seed = j.value("seed", d.seed);
    c.max_steps = j.value("max_steps", d.max_steps);
    c.checkpoint_every = j.value("checkpoint_every", d.checkpoint_every);
    c.optimizer = j.value("optimizer", d.optimizer);
    c.data_root = j.value("data_root", d.data_root);
    c.train_pairs = j.value("train_pairs", d.train_pairs);
    c.heatmap_sigma = j.value("heatmap_sigma", d.heatmap_sigma);
    c.blend_sigma = j.value("blend_sigma", d.blend_sigma);
    c.weights = j.contains("loss_weights") ? j["loss_weights"].get<LossWeights>() : d.weights;
    c.net = j.contains("net") ? j["net"].get<NetConfig>() : d.net;
    c.extractor = j.contains("extractor") ? j["extractor"].get<ExtractorProvenance>() : d.extractor;
    c.face = d.face;
    if (j.contains("face")) {
        const auto& f = j["face"];
        reject_unknown(f, {"epochs", "lr", "sketch_radius"}, "face config");
        c.face.epochs = f.value("epochs", d.face.epochs);
        c.face.lr = f.value("lr", d.face.lr);
        c.face.sketch_radius = f.value("sketch_radius", d.face.sketch_radius);
    }
}

double lr_at(int epoch, const TrainConfig& config)
{
    if (epoch < 0 || epoch > config.epochs)
        throw ConfigError("lr_at: epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(config.epochs) + "]");
    if (epoch <= config.decay_start_epoch) return config.lr0;
    const double remaining = static_cast<double>(config.epochs - epoch);
    const double span = static_cast<double>(config.epochs - config.decay_start_epoch);
    return config.lr0 * (remaining / span);
}

nlohmann::json metrics_record(long step, int epoch, double lr, const StepMetrics& m)
{
    nlohmann::json rec = {{"step", step}, {"epoch", epoch}, {"lr", lr}};
    for (const auto& [k, v] : m) rec[k] = v;
    return rec;
}

// ---------------------------------------------------------------------------

PairDataset PairDataset::load(const TrainConfig& config)
{
    if (config.data_root.empty()) throw ConfigError("no data root configured");
    const fs::path root = config.data_root;
    return from_records(load_pair_index(root / config.train_pairs, root), config);
}

PairDataset PairDataset::from_records(const std::vector<PairRecord>& records, const TrainConfig& config)
{
    PairDataset out;
    std::map<std::string, std::size_t> index;
    auto add = [&](const SampleRecord& r) {
        auto it = index.find(r.stem);
        if (it != index.end()) return it->second;
        Sample s = load_sample(r, config.net.height, config.net.width);
        EncodedSample e{s.stem, std::move(s.image),
                        encode_pose_heatmaps<float>(s.annotation.keypoints, config.net.height, config.net.width,
                                                    config.heatmap_sigma),
                        std::move(s.annotation)};
        out.samples.push_back(std::move(e));
        index.emplace(r.stem, out.samples.size() - 1);
        return out.samples.size() - 1;
    };
    for (const auto& p : records) {
        const std::size_t s = add(p.source);
        const std::size_t t = add(p.target);
        out.pairs.emplace_back(s, t);
    }
    return out;
}

PairLoader::PairLoader(std::size_t n_pairs, std::uint64_t seed) : n_(n_pairs), rng_(seed)
{
    if (n_ == 0) throw ConfigError("no training pairs");
    reshuffle();
}

void PairLoader::reshuffle()
{
    order_.resize(n_);
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::shuffle(order_.begin(), order_.end(), rng_);
    position_ = 0;
}

std::vector<std::size_t> PairLoader::next(int batch_size)
{
    std::vector<std::size_t> out;
    for (int i = 0; i < batch_size; ++i) {
        if (position_ == n_) reshuffle();
        out.push_back(order_[position_++]);
    }
    ++drawn_;
    return out;
}

nlohmann::json PairLoader::state() const
{
    std::ostringstream rng;
    rng << rng_;
    return {{"rng", rng.str()}, {"order", order_}, {"position", position_}, {"drawn", drawn_}};
}

void PairLoader::load_state(const nlohmann::json& state)
{
    std::istringstream rng(state.at("rng").get<std::string>());
    rng >> rng_;
    if (!rng) throw IoError("corrupt loader RNG state");
    auto order = state.at("order").get<std::vector<std::size_t>>();
    if (order.size() != n_) throw IoError("loader state covers " + std::to_string(order.size()) + " pairs, dataset has " +
                                          std::to_string(n_));
    order_ = std::move(order);
    position_ = state.at("position").get<std::size_t>();
    drawn_ = state.at("drawn").get<long>();
}

Batch make_batch(const PairDataset& data, const std::vector<std::size_t>& pair_indices)
{
    std::vector<Tensor<float>> src, tgt, ps, pt;
    for (std::size_t i : pair_indices) {
        const auto [s, t] = data.pairs.at(i);
        src.push_back(data.samples[s].image);
        tgt.push_back(data.samples[t].image);
        ps.push_back(data.samples[s].heatmap);
        pt.push_back(data.samples[t].heatmap);
    }
    return {stack_batch(src), stack_batch(tgt), stack_batch(ps), stack_batch(pt)};
}

// ---------------------------------------------------------------------------

namespace {

const NetConfig& checked_net(const TrainConfig& config)
{
    config.validate();
    return config.net;
}

}  // namespace

Trainer::Trainer(TrainConfig config, PairDataset data)
    : config_(std::move(config)),
      data_(std::move(data)),
      extractor_(FeatureExtractor<float>::from_provenance(config_.extractor)),
      transfer_(checked_net(config_), SeedPlan(config_.seed).transfer),
      detail_(config_.net, SeedPlan(config_.seed).detail),
      disc_a_(DiscriminatorKind::Appearance, 3, config_.net.disc_channels, SeedPlan(config_.seed).disc_a),
      disc_s_(DiscriminatorKind::Shape, config_.net.pose_channels, config_.net.disc_channels,
              SeedPlan(config_.seed).disc_s),
      opt_transfer_(transfer_.params(), optimizer_config(config_)),
      opt_detail_(detail_.params(), optimizer_config(config_)),
      opt_disc_a_(disc_a_.params(), optimizer_config(config_)),
      opt_disc_s_(disc_s_.params(), optimizer_config(config_)),
      gen_loader_(data_.pairs.size(), SeedPlan(config_.seed).gen_loader),
      disc_loader_(data_.pairs.size(), SeedPlan(config_.seed).disc_loader),
      zero_mask_(Shape{1, 1, config_.net.height, config_.net.width})
{
    for (const auto& s : data_.samples)
        if (s.image.h() != config_.net.height || s.image.w() != config_.net.width)
            throw ConfigError("sample " + s.stem + " is " + std::to_string(s.image.h()) + "x" +
                              std::to_string(s.image.w()) + ", network expects " + std::to_string(config_.net.height) +
                              "x" + std::to_string(config_.net.width));
}

long Trainer::steps_per_epoch() const
{
    return std::max<long>(1, static_cast<long>(data_.pairs.size()) / config_.batch_size);
}

long Trainer::total_steps() const
{
    const long all = steps_per_epoch() * config_.epochs;
    return config_.max_steps > 0 ? std::min(all, config_.max_steps) : all;
}

int Trainer::epoch() const
{
    return static_cast<int>(std::min<long>(step_ / steps_per_epoch(), config_.epochs));
}

void Trainer::diverged(const std::string& phase, const StepMetrics& partial) const
{
    if (!diagnostics_dir_.empty()) {
        nlohmann::json diag = {{"step", step_ + 1},
                               {"epoch", epoch()},
                               {"phase", phase},
                               {"lr", current_lr()},
                               {"losses", partial},
                               {"params_finite",
                                {{"transfer", transfer_.params().all_finite()},
                                 {"detail", detail_.params().all_finite()},
                                 {"disc_appearance", disc_a_.params().all_finite()},
                                 {"disc_shape", disc_s_.params().all_finite()}}}};
        try {
            ensure_dir(diagnostics_dir_);
            write_json(diagnostics_dir_ / "divergence.json", diag);
        } catch (const Error&) {
            // The divergence itself is the error worth reporting.
        }
    }
    std::string msg = "non-finite loss in " + phase + " phase at step " + std::to_string(step_ + 1) + ":";
    for (const auto& [k, v] : partial) msg += " " + k + "=" + std::to_string(v);
    throw DivergenceError(msg);
}

StepMetrics Trainer::step()
{
    if (finished()) throw ConfigError("training already finished");
    const double lr = current_lr();
    const LossWeights& w = config_.weights;
    StepMetrics m;

    disc_a_.params().set_requires_grad(false);
    disc_s_.params().set_requires_grad(false);

    // (1) Transfer branch on the coarse estimate, without adversarial terms.
    const Batch b = make_batch(data_, gen_loader_.next(config_.batch_size));
    const Var<float> src = constant(b.source), tgt = constant(b.target);
    const Var<float> ps = constant(b.source_pose), pt = constant(b.target_pose);
    {
        transfer_.params().zero_grad();
        const auto out = transfer_.forward(src, ps, pt);
        const auto l1 = loss_l1(out.coarse, tgt, extractor_, w);
        m["L1"] = l1.total.item();
        m["L_recon_coarse"] = l1.recon.item();
        m["L_per_coarse"] = l1.per.item();
        if (!finite(m["L1"])) diverged("transfer", m);
        backward(l1.total);
        opt_transfer_.step(lr);
        transfer_.params().zero_grad();
    }
    if (hook_) hook_(TrainPhase::Transfer, 0);

    // (2) Full pipeline on the final image; updates both generator branches.
    {
        transfer_.params().zero_grad();
        detail_.params().zero_grad();
        const auto out = transfer_.forward(src, ps, pt);
        const Var<float> residual = detail_.forward(src, out.guidance);
        const Var<float> final_image = compose_final(out.coarse, residual, std::optional<Var<float>>{}, zero_mask_);
        const auto l2 = loss_l2(final_image, tgt, src, pt, extractor_, disc_a_, disc_s_, w);
        m["L2"] = l2.total.item();
        m["L_recon"] = l2.recon.item();
        m["L_per"] = l2.per.item();
        m["L_sty"] = l2.sty.item();
        m["L_adv_G"] = l2.adv.item();
        if (!finite(m["L2"])) diverged("joint", m);
        backward(l2.total);
        opt_transfer_.step(lr);
        opt_detail_.step(lr);
        transfer_.params().zero_grad();
        detail_.params().zero_grad();
    }
    if (hook_) hook_(TrainPhase::Joint, 0);

    // (3) Discriminators on fresh batches, generators frozen.
    disc_a_.params().set_requires_grad(true);
    disc_s_.params().set_requires_grad(true);
    double sum_a = 0, sum_s = 0;
    for (int k = 0; k < config_.k_disc; ++k) {
        const Batch fb = make_batch(data_, disc_loader_.next(config_.batch_size));
        const Var<float> fsrc = constant(fb.source), ftgt = constant(fb.target);
        const Var<float> fps = constant(fb.source_pose), fpt = constant(fb.target_pose);
        Var<float> fake;
        {
            NoGradGuard guard;
            const auto out = transfer_.forward(fsrc, fps, fpt);
            fake = compose_final(out.coarse, detail_.forward(fsrc, out.guidance), std::optional<Var<float>>{}, zero_mask_);
        }
        disc_a_.params().zero_grad();
        const Var<float> la = lsgan_d_loss(disc_a_, fsrc, ftgt, fsrc, fake);
        disc_s_.params().zero_grad();
        const Var<float> ls = lsgan_d_loss(disc_s_, fpt, ftgt, fpt, fake);
        if (!finite(la.item()) || !finite(ls.item())) {
            m["L_D_A"] = la.item();
            m["L_D_S"] = ls.item();
            diverged("discriminator", m);
        }
        backward(la);
        backward(ls);
        opt_disc_a_.step(lr);
        opt_disc_s_.step(lr);
        disc_a_.params().zero_grad();
        disc_s_.params().zero_grad();
        sum_a += la.item();
        sum_s += ls.item();
        if (hook_) hook_(TrainPhase::Discriminator, k);
    }
    disc_a_.params().set_requires_grad(false);
    disc_s_.params().set_requires_grad(false);
    m["L_D_A"] = sum_a / config_.k_disc;
    m["L_D_S"] = sum_s / config_.k_disc;

    ++step_;
    return m;
}

nlohmann::json Trainer::save(const fs::path& dir) const
{
    ensure_dir(dir);
    save_params(transfer_.params(), dir / "transfer.drnp");
    save_params(detail_.params(), dir / "detail.drnp");
    save_params(disc_a_.params(), dir / "disc_appearance.drnp");
    save_params(disc_s_.params(), dir / "disc_shape.drnp");
    nlohmann::json manifest = {
        {"version", kManifestVersion},
        {"kind", "global"},
        {"global_step", step_},
        {"epoch", epoch()},
        {"total_steps", total_steps()},
        {"finished", finished()},
        {"modules",
         {{"transfer", "transfer.drnp"},
          {"detail", "detail.drnp"},
          {"disc_appearance", "disc_appearance.drnp"},
          {"disc_shape", "disc_shape.drnp"}}},
        {"optimizers",
         {{"transfer", save_optimizer(opt_transfer_, dir, "opt_transfer.drnp")},
          {"detail", save_optimizer(opt_detail_, dir, "opt_detail.drnp")},
          {"disc_appearance", save_optimizer(opt_disc_a_, dir, "opt_disc_appearance.drnp")},
          {"disc_shape", save_optimizer(opt_disc_s_, dir, "opt_disc_shape.drnp")}}},
        {"config", config_},
        {"extractor", extractor_.provenance()},
        {"rng_state", {{"generator_loader", gen_loader_.state()}, {"discriminator_loader", disc_loader_.state()}}}};
    write_json(dir / "manifest.json", manifest);
    return manifest;
}

void Trainer::load(const fs::path& dir)
{
    const nlohmann::json manifest = read_manifest(dir);
    if (manifest.value("kind", "") != "global") throw IoError(dir.string() + ": not a global-model checkpoint");
    const TrainConfig saved = manifest.at("config").get<TrainConfig>();
    if (nlohmann::json(saved.net) != nlohmann::json(config_.net))
        throw ConfigError("checkpoint network config differs from the configured one");
    if (manifest.at("extractor").get<ExtractorProvenance>() != extractor_.provenance())
        throw ConfigError("checkpoint extractor provenance differs from the configured one");
    const auto& mods = manifest.at("modules");
    load_params(transfer_.params(), dir / mods.at("transfer").get<std::string>());
    load_params(detail_.params(), dir / mods.at("detail").get<std::string>());
    load_params(disc_a_.params(), dir / mods.at("disc_appearance").get<std::string>());
    load_params(disc_s_.params(), dir / mods.at("disc_shape").get<std::string>());
    const auto& opts = manifest.at("optimizers");
    load_optimizer(opt_transfer_, opts.at("transfer"), dir);
    load_optimizer(opt_detail_, opts.at("detail"), dir);
    load_optimizer(opt_disc_a_, opts.at("disc_appearance"), dir);
    load_optimizer(opt_disc_s_, opts.at("disc_shape"), dir);
    gen_loader_.load_state(manifest.at("rng_state").at("generator_loader"));
    disc_loader_.load_state(manifest.at("rng_state").at("discriminator_loader"));
    step_ = manifest.at("global_step").get<long>();
}

namespace {

std::optional<nlohmann::json> existing_manifest(const fs::path& out_dir, bool resume)
{
    if (!resume) return std::nullopt;
    if (!fs::exists(out_dir / "manifest.json"))
        throw IoError("cannot resume: no manifest.json in " + out_dir.string());
    return read_manifest(out_dir);
}

}  // namespace

nlohmann::json fit(const TrainConfig& requested, const fs::path& out_dir, bool resume, const StepCallback& on_step)
{
    const std::optional<nlohmann::json> prior = existing_manifest(out_dir, resume);
    if (prior && prior->value("finished", false)) return *prior;

    TrainConfig config = prior ? prior->at("config").get<TrainConfig>() : requested;
    if (prior && !requested.data_root.empty()) config.data_root = requested.data_root;
    config.validate();
    PairDataset data = PairDataset::load(config);
    Trainer trainer(config, std::move(data));
    trainer.set_diagnostics_dir(out_dir);
    if (prior) trainer.load(out_dir);

    ensure_dir(out_dir);
    write_json(out_dir / "run_config.json", {{"mode", "global"}, {"config", config}});
    const fs::path log_path = out_dir / "metrics.log";
    if (prior) truncate_metrics_log(log_path, trainer.global_step());
    MetricsLog log(log_path, prior.has_value());
    while (!trainer.finished()) {
        const double lr = trainer.current_lr();
        const int epoch = trainer.epoch();
        const StepMetrics m = trainer.step();
        log.write(metrics_record(trainer.global_step(), epoch, lr, m));
        if (on_step) on_step(trainer.global_step(), m);
        if (config.checkpoint_every > 0 && trainer.global_step() % config.checkpoint_every == 0 && !trainer.finished())
            trainer.save(out_dir);
    }
    return trainer.save(out_dir);
}

// ---------------------------------------------------------------------------
// Face module

std::vector<FaceSample> build_face_samples(const PairDataset& data, const TrainConfig& config)
{
    const Index size = config.net.face_size;
    std::vector<FaceSample> out;
    std::size_t skipped = 0;
    for (const auto& [s, t] : data.pairs) {
        const auto& a = data.samples[s].annotation;
        const auto& b = data.samples[t].annotation;
        if (!a.face_bbox || !b.face_bbox || !b.face_landmarks || b.face_landmarks->empty()) {
            ++skipped;
            continue;
        }
        try {
            FaceSample f;
            f.source_face = crop_resize_face(data.samples[s].image, *a.face_bbox, size);
            f.target_face = crop_resize_face(data.samples[t].image, *b.face_bbox, size);
            f.sketch = encode_landmark_sketch<float>(landmarks_to_crop(*b.face_landmarks, *b.face_bbox, size), size,
                                                     size, config.face.sketch_radius);
            out.push_back(std::move(f));
        } catch (const FaceTooSmallError& e) {
            std::cerr << "warning: skipping pair " << data.samples[s].stem << " -> " << data.samples[t].stem << ": "
                      << e.what() << "\n";
            ++skipped;
        }
    }
    if (out.empty())
        throw ConfigError("no training pair has face boxes and landmarks on both sides (" + std::to_string(skipped) +
                          " pairs skipped)");
    return out;
}

FaceTrainer::FaceTrainer(TrainConfig config, std::vector<FaceSample> samples)
    : config_(std::move(config)),
      samples_(std::move(samples)),
      extractor_(FeatureExtractor<float>::from_provenance(config_.extractor)),
      face_(checked_net(config_), SeedPlan(config_.seed).detail),
      disc_a_(DiscriminatorKind::Appearance, 3, config_.net.disc_channels, SeedPlan(config_.seed).disc_a),
      disc_s_(DiscriminatorKind::Shape, 1, config_.net.disc_channels, SeedPlan(config_.seed).disc_s),
      opt_face_(face_.params(), optimizer_config(config_)),
      opt_disc_a_(disc_a_.params(), optimizer_config(config_)),
      opt_disc_s_(disc_s_.params(), optimizer_config(config_)),
      gen_loader_(samples_.size(), SeedPlan(config_.seed).gen_loader),
      disc_loader_(samples_.size(), SeedPlan(config_.seed).disc_loader)
{
}

long FaceTrainer::total_steps() const
{
    const long per_epoch = std::max<long>(1, static_cast<long>(samples_.size()) / config_.batch_size);
    const long all = per_epoch * config_.face.epochs;
    return config_.max_steps > 0 ? std::min(all, config_.max_steps) : all;
}

int FaceTrainer::epoch() const
{
    const long per_epoch = std::max<long>(1, static_cast<long>(samples_.size()) / config_.batch_size);
    return static_cast<int>(step_ / per_epoch);
}

Batch FaceTrainer::batch(const std::vector<std::size_t>& idx) const
{
    std::vector<Tensor<float>> src, tgt, sk;
    for (std::size_t i : idx) {
        src.push_back(samples_[i].source_face);
        tgt.push_back(samples_[i].target_face);
        sk.push_back(samples_[i].sketch);
    }
    return {stack_batch(src), stack_batch(tgt), Tensor<float>(), stack_batch(sk)};
}

FaceMetrics FaceTrainer::step()
{
    if (finished()) throw ConfigError("face training already finished");
    const double lr = config_.face.lr;
    FaceMetrics m;

    disc_a_.params().set_requires_grad(false);
    disc_s_.params().set_requires_grad(false);
    {
        const Batch b = batch(gen_loader_.next(config_.batch_size));
        const Var<float> src = constant(b.source), tgt = constant(b.target), sketch = constant(b.target_pose);
        face_.params().zero_grad();
        const Var<float> fake = face_.generate_face(face_.encode_style(src), sketch);
        const auto l2 = loss_l2(fake, tgt, src, sketch, extractor_, disc_a_, disc_s_, config_.weights);
        m["L2"] = l2.total.item();
        m["L_recon"] = l2.recon.item();
        m["L_per"] = l2.per.item();
        m["L_sty"] = l2.sty.item();
        m["L_adv_G"] = l2.adv.item();
        if (!finite(m["L2"])) throw DivergenceError("non-finite face loss at step " + std::to_string(step_ + 1));
        backward(l2.total);
        opt_face_.step(lr);
        face_.params().zero_grad();
    }

    disc_a_.params().set_requires_grad(true);
    disc_s_.params().set_requires_grad(true);
    double sum_a = 0, sum_s = 0;
    for (int k = 0; k < config_.k_disc; ++k) {
        const Batch b = batch(disc_loader_.next(config_.batch_size));
        const Var<float> src = constant(b.source), tgt = constant(b.target), sketch = constant(b.target_pose);
        Var<float> fake;
        {
            NoGradGuard guard;
            fake = face_.generate_face(face_.encode_style(src), sketch);
        }
        disc_a_.params().zero_grad();
        disc_s_.params().zero_grad();
        const Var<float> la = lsgan_d_loss(disc_a_, src, tgt, src, fake);
        const Var<float> ls = lsgan_d_loss(disc_s_, sketch, tgt, sketch, fake);
        if (!finite(la.item()) || !finite(ls.item()))
            throw DivergenceError("non-finite face discriminator loss at step " + std::to_string(step_ + 1));
        backward(la);
        backward(ls);
        opt_disc_a_.step(lr);
        opt_disc_s_.step(lr);
        disc_a_.params().zero_grad();
        disc_s_.params().zero_grad();
        sum_a += la.item();
        sum_s += ls.item();
    }
    disc_a_.params().set_requires_grad(false);
    disc_s_.params().set_requires_grad(false);
    m["L_D_A"] = sum_a / config_.k_disc;
    m["L_D_S"] = sum_s / config_.k_disc;
    ++step_;
    return m;
}

nlohmann::json FaceTrainer::save(const fs::path& dir) const
{
    ensure_dir(dir);
    save_params(face_.params(), dir / "face.drnp");
    save_params(disc_a_.params(), dir / "face_disc_appearance.drnp");
    save_params(disc_s_.params(), dir / "face_disc_shape.drnp");
    nlohmann::json manifest = {
        {"version", kManifestVersion},
        {"kind", "face"},
        {"global_step", step_},
        {"epoch", epoch()},
        {"total_steps", total_steps()},
        {"finished", finished()},
        {"modules",
         {{"face", "face.drnp"},
          {"disc_appearance", "face_disc_appearance.drnp"},
          {"disc_shape", "face_disc_shape.drnp"}}},
        {"optimizers",
         {{"face", save_optimizer(opt_face_, dir, "opt_face.drnp")},
          {"disc_appearance", save_optimizer(opt_disc_a_, dir, "opt_face_disc_appearance.drnp")},
          {"disc_shape", save_optimizer(opt_disc_s_, dir, "opt_face_disc_shape.drnp")}}},
        {"config", config_},
        {"extractor", extractor_.provenance()},
        {"rng_state", {{"generator_loader", gen_loader_.state()}, {"discriminator_loader", disc_loader_.state()}}}};
    write_json(dir / "manifest.json", manifest);
    return manifest;
}

void FaceTrainer::load(const fs::path& dir)
{
    const nlohmann::json manifest = read_manifest(dir);
    if (manifest.value("kind", "") != "face") throw IoError(dir.string() + ": not a face-module checkpoint");
    if (nlohmann::json(manifest.at("config").get<TrainConfig>().net) != nlohmann::json(config_.net))
        throw ConfigError("checkpoint network config differs from the configured one");
    const auto& mods = manifest.at("modules");
    load_params(face_.params(), dir / mods.at("face").get<std::string>());
    load_params(disc_a_.params(), dir / mods.at("disc_appearance").get<std::string>());
    load_params(disc_s_.params(), dir / mods.at("disc_shape").get<std::string>());
    const auto& opts = manifest.at("optimizers");
    load_optimizer(opt_face_, opts.at("face"), dir);
    load_optimizer(opt_disc_a_, opts.at("disc_appearance"), dir);
    load_optimizer(opt_disc_s_, opts.at("disc_shape"), dir);
    gen_loader_.load_state(manifest.at("rng_state").at("generator_loader"));
    disc_loader_.load_state(manifest.at("rng_state").at("discriminator_loader"));
    step_ = manifest.at("global_step").get<long>();
}

nlohmann::json fit_face(const TrainConfig& requested, const fs::path& out_dir, bool resume, const StepCallback& on_step)
{
    const std::optional<nlohmann::json> prior = existing_manifest(out_dir, resume);
    if (prior && prior->value("finished", false)) return *prior;

    TrainConfig config = prior ? prior->at("config").get<TrainConfig>() : requested;
    if (prior && !requested.data_root.empty()) config.data_root = requested.data_root;
    config.validate();
    const PairDataset data = PairDataset::load(config);
    FaceTrainer trainer(config, build_face_samples(data, config));
    if (prior) trainer.load(out_dir);

    ensure_dir(out_dir);
    write_json(out_dir / "run_config.json", {{"mode", "face"}, {"config", config}});
    const fs::path log_path = out_dir / "metrics.log";
    if (prior) truncate_metrics_log(log_path, trainer.global_step());
    MetricsLog log(log_path, prior.has_value());
    while (!trainer.finished()) {
        const int epoch = trainer.epoch();
        const FaceMetrics m = trainer.step();
        log.write(metrics_record(trainer.global_step(), epoch, config.face.lr, m));
        if (on_step) on_step(trainer.global_step(), m);
        if (config.checkpoint_every > 0 && trainer.global_step() % config.checkpoint_every == 0 && !trainer.finished())
            trainer.save(out_dir);
    }
    return trainer.save(out_dir);
}

// ---------------------------------------------------------------------------

nlohmann::json read_manifest(const fs::path& dir)
{
    const fs::path path = dir / "manifest.json";
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw IoError(path.string() + ": " + e.what());
    }
    validate_manifest(manifest, dir);
    return manifest;
}

void validate_manifest(const nlohmann::json& manifest, const fs::path& dir)
{
    const std::string where = (dir / "manifest.json").string();
    if (!manifest.is_object() || manifest.value("version", -1) != kManifestVersion)
        throw IoError(where + ": unsupported manifest version");
    for (const char* key : {"global_step", "epoch", "modules", "optimizers", "config", "extractor", "rng_state"})
        if (!manifest.contains(key)) throw IoError(where + ": missing '" + key + "'");
    for (const auto& [name, file] : manifest["modules"].items())
        if (!fs::exists(dir / file.get<std::string>()))
            throw IoError(where + ": module '" + name + "' blob " + file.get<std::string>() + " is missing");
    for (const auto& [name, entry] : manifest["optimizers"].items())
        if (!fs::exists(dir / entry.at("file").get<std::string>()))
            throw IoError(where + ": optimizer state for '" + name + "' is missing");
}

GlobalModel load_global_model(const fs::path& dir)
{
    const nlohmann::json manifest = read_manifest(dir);
    if (manifest.value("kind", "") != "global") throw IoError(dir.string() + ": not a global-model checkpoint");
    GlobalModel model;
    model.config = manifest.at("config").get<TrainConfig>();
    model.transfer = std::make_unique<TransferBranch<float>>(model.config.net, 0);
    model.detail = std::make_unique<DetailBranch<float>>(model.config.net, 0);
    load_params(model.transfer->params(), dir / manifest["modules"].at("transfer").get<std::string>());
    load_params(model.detail->params(), dir / manifest["modules"].at("detail").get<std::string>());
    return model;
}

FaceModel load_face_model(const fs::path& dir)
{
    const nlohmann::json manifest = read_manifest(dir);
    if (manifest.value("kind", "") != "face") throw IoError(dir.string() + ": not a face-module checkpoint");
    FaceModel model;
    model.config = manifest.at("config").get<TrainConfig>();
    model.face = std::make_unique<FaceModule<float>>(model.config.net, 0);
    load_params(model.face->params(), dir / manifest["modules"].at("face").get<std::string>());
    return model;
}

}  // namespace drn
