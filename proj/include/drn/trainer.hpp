#pragma once

/// \file trainer.hpp
/// \brief Alternating optimization of the transfer and detail branches against
/// two conditional discriminators, the separate face-module loop, learning-rate
/// schedule and checkpoint directories.

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "drn/data_pipeline.hpp"
#include "drn/detail_replenisher.hpp"
#include "drn/losses.hpp"
#include "drn/optim.hpp"
#include "drn/transfer_branch.hpp"

namespace drn {

struct FaceTrainConfig {
    int epochs = 200;
    double lr = 1e-4;
    double sketch_radius = 1.0;
};

struct TrainConfig {
    int epochs = 40;
    double lr0 = 1e-4;
    int decay_start_epoch = 10;
    double weight_reg = 1e-5;
    int k_disc = 3;
    int batch_size = 1;
    std::uint64_t seed = 0;
    long max_steps = 0;         // 0: run every epoch
    long checkpoint_every = 0;  // 0: only at the end
    std::string optimizer = "radam";
    std::string data_root;
    std::string train_pairs = "train_pairs.csv";
    double heatmap_sigma = 6.0;
    double blend_sigma = 3.0;
    LossWeights weights;
    NetConfig net;
    ExtractorProvenance extractor;
    FaceTrainConfig face;

    void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// lr0 through decay_start_epoch, then linear decay reaching 0 at `epochs`.
double lr_at(int epoch, const TrainConfig& config);

/// Keys: L1, L_recon_coarse, L_per_coarse, L2, L_recon, L_per, L_sty, L_adv_G, L_D_A, L_D_S.
using StepMetrics = std::map<std::string, double>;

nlohmann::json metrics_record(long step, int epoch, double lr, const StepMetrics& m);

/// Samples held in memory with their pose encodings.
struct EncodedSample {
    std::string stem;
    Tensor<float> image;    // (1, 3, H, W)
    Tensor<float> heatmap;  // (1, 18, H, W)
    Annotation annotation;
};

struct Batch {
    Tensor<float> source, target, source_pose, target_pose;
};

struct PairDataset {
    std::vector<EncodedSample> samples;
    std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (source, target) indices

    /// Loads `config.train_pairs` under `config.data_root`.
    static PairDataset load(const TrainConfig& config);
    static PairDataset from_records(const std::vector<PairRecord>& records, const TrainConfig& config);
};

/// Endless stream of batches over a seeded permutation of pair indices,
/// reshuffled on every pass.
class PairLoader {
public:
    PairLoader(std::size_t n_pairs, std::uint64_t seed);

    std::vector<std::size_t> next(int batch_size);
    long drawn() const { return drawn_; }

    nlohmann::json state() const;
    void load_state(const nlohmann::json& state);

private:
    void reshuffle();

    std::size_t n_;
    Rng rng_;
    std::vector<std::size_t> order_;
    std::size_t position_ = 0;
    long drawn_ = 0;
};

Batch make_batch(const PairDataset& data, const std::vector<std::size_t>& pair_indices);

enum class TrainPhase { Transfer, Joint, Discriminator };

/// Called after each parameter update: once for Transfer, once for Joint and
/// once per discriminator iteration (with its 0-based index).
using PhaseHook = std::function<void(TrainPhase, int)>;

class Trainer {
public:
    Trainer(TrainConfig config, PairDataset data);

    /// One iteration of the alternating scheme. Throws DivergenceError on a
    /// non-finite loss, after writing diagnostics when a directory is set.
    StepMetrics step();

    long global_step() const { return step_; }
    int epoch() const;
    long steps_per_epoch() const;
    long total_steps() const;
    bool finished() const { return step_ >= total_steps(); }
    double current_lr() const { return lr_at(epoch(), config_); }

    void set_phase_hook(PhaseHook hook) { hook_ = std::move(hook); }
    void set_diagnostics_dir(std::filesystem::path dir) { diagnostics_dir_ = std::move(dir); }

    /// Writes blobs and manifest.json into dir; returns the manifest.
    nlohmann::json save(const std::filesystem::path& dir) const;
    /// Restores parameters, optimizer moments, loader state and step counter.
    void load(const std::filesystem::path& dir);

    TransferBranch<float>& transfer() { return transfer_; }
    DetailBranch<float>& detail() { return detail_; }
    Discriminator<float>& disc_appearance() { return disc_a_; }
    Discriminator<float>& disc_shape() { return disc_s_; }
    const PairLoader& generator_loader() const { return gen_loader_; }
    const PairLoader& discriminator_loader() const { return disc_loader_; }
    const TrainConfig& config() const { return config_; }
    const PairDataset& data() const { return data_; }

private:
    [[noreturn]] void diverged(const std::string& phase, const StepMetrics& partial) const;

    TrainConfig config_;
    PairDataset data_;
    FeatureExtractor<float> extractor_;
    TransferBranch<float> transfer_;
    DetailBranch<float> detail_;
    Discriminator<float> disc_a_;
    Discriminator<float> disc_s_;
    Optimizer<float> opt_transfer_;
    Optimizer<float> opt_detail_;
    Optimizer<float> opt_disc_a_;
    Optimizer<float> opt_disc_s_;
    PairLoader gen_loader_;
    PairLoader disc_loader_;
    Tensor<float> zero_mask_;
    long step_ = 0;
    PhaseHook hook_;
    std::filesystem::path diagnostics_dir_;
};

/// Callback per completed step (after metrics are logged).
using StepCallback = std::function<void(long step, const StepMetrics&)>;

/// Runs (or resumes) training into out_dir: run_config.json, metrics.log,
/// periodic checkpoints and a final manifest. With resume set and a finished
/// manifest in out_dir it returns immediately.
nlohmann::json fit(const TrainConfig& config, const std::filesystem::path& out_dir, bool resume = false,
                   const StepCallback& on_step = {});

// ---------------------------------------------------------------------------
// Face module

struct FaceSample {
    Tensor<float> source_face;  // (1, 3, S, S)
    Tensor<float> target_face;  // (1, 3, S, S)
    Tensor<float> sketch;       // (1, 1, S, S)
};

/// Face crops for every pair whose source and target both carry a face box and
/// landmarks. Throws ConfigError when none qualify.
std::vector<FaceSample> build_face_samples(const PairDataset& data, const TrainConfig& config);

/// Face-module loss terms: recon, per, sty and the sketch-conditioned adversarial term.
using FaceMetrics = std::map<std::string, double>;

class FaceTrainer {
public:
    FaceTrainer(TrainConfig config, std::vector<FaceSample> samples);

    FaceMetrics step();
    long global_step() const { return step_; }
    long total_steps() const;
    bool finished() const { return step_ >= total_steps(); }
    int epoch() const;

    nlohmann::json save(const std::filesystem::path& dir) const;
    void load(const std::filesystem::path& dir);

    FaceModule<float>& face() { return face_; }

private:
    Batch batch(const std::vector<std::size_t>& idx) const;

    TrainConfig config_;
    std::vector<FaceSample> samples_;
    FeatureExtractor<float> extractor_;
    FaceModule<float> face_;
    Discriminator<float> disc_a_;
    Discriminator<float> disc_s_;
    Optimizer<float> opt_face_;
    Optimizer<float> opt_disc_a_;
    Optimizer<float> opt_disc_s_;
    PairLoader gen_loader_;
    PairLoader disc_loader_;
    long step_ = 0;
};

nlohmann::json fit_face(const TrainConfig& config, const std::filesystem::path& out_dir, bool resume = false,
                        const StepCallback& on_step = {});

// ---------------------------------------------------------------------------
// Checkpoint directories

inline constexpr int kManifestVersion = 1;

nlohmann::json read_manifest(const std::filesystem::path& dir);
/// Checks version and that every referenced blob exists.
void validate_manifest(const nlohmann::json& manifest, const std::filesystem::path& dir);

/// Networks restored from a global checkpoint for inference.
struct GlobalModel {
    TrainConfig config;
    std::unique_ptr<TransferBranch<float>> transfer;
    std::unique_ptr<DetailBranch<float>> detail;
};
GlobalModel load_global_model(const std::filesystem::path& dir);

struct FaceModel {
    TrainConfig config;
    std::unique_ptr<FaceModule<float>> face;
};
FaceModel load_face_model(const std::filesystem::path& dir);

}  // namespace drn
