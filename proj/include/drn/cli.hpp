#pragma once

/// \file cli.hpp
/// \brief Subcommands of the `drn` tool: train, infer, eval, synth-data and
/// viz-guidance. Each returns a process exit status.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "drn/eval_suite.hpp"
#include "drn/trainer.hpp"

namespace drn {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitDivergence = 3;
inline constexpr int kExitIo = 4;

/// Environment variable overriding the configured data root.
inline constexpr const char* kDataRootEnv = "DRN_DATA_ROOT";

/// Evaluation options carried in the "eval" section of a run config.
struct EvalSettings {
    std::vector<std::string> metrics = {"ssim", "fid", "perceptual", "face_identity", "retrieval", "kec"};
    std::vector<double> kec_thresholds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 12, 14, 16, 18, 20};
    std::vector<int> retrieval_ks = {3, 5, 10};
    std::vector<double> identity_thresholds = kIdentityThresholds;
    std::uint64_t embedder_seed = 11;
    Index embedder_dim = 64;
    Index embedder_thumb = 16;
    Index ssim_window = 7;
    Index face_size = 64;
    int detector_tolerance = 24;

    void validate() const;
};

void to_json(nlohmann::json& j, const EvalSettings& s);
void from_json(const nlohmann::json& j, EvalSettings& s);

/// Metric names accepted by `eval --metrics`.
const std::vector<std::string>& known_metrics();

/// A training config document with an optional "eval" section.
struct RunConfig {
    TrainConfig train;
    EvalSettings eval;
};

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

/// Parses and validates a config file; ConfigError on any problem.
RunConfig load_run_config(const std::filesystem::path& path);

/// Flag, then environment, then config value.
std::string resolve_data_root(const std::string& flag, const std::string& configured);

struct TrainCommand {
    std::filesystem::path config;
    std::filesystem::path data;
    std::filesystem::path out;
    std::filesystem::path resume;  // checkpoint directory to continue from
    bool face = false;
};

struct InferCommand {
    std::filesystem::path checkpoint;
    std::filesystem::path face_checkpoint;
    std::filesystem::path source;
    std::filesystem::path source_annotation;
    std::filesystem::path target_annotation;
    std::filesystem::path out;
    bool no_face = false;
    bool debug = false;
};

struct EvalCommand {
    std::filesystem::path pred;
    std::filesystem::path gt;
    std::filesystem::path ann;
    std::string metrics;  // comma separated; empty selects the configured list
    std::filesystem::path report;
    std::filesystem::path config;  // optional, for the "eval" section
};

struct SynthCommand {
    SynthConfig synth;
    std::filesystem::path out;
};

struct VizCommand {
    std::filesystem::path checkpoint;
    std::filesystem::path source;
    std::filesystem::path source_annotation;
    std::filesystem::path target_annotation;
    std::filesystem::path out;
};

int cmd_train(const TrainCommand& cmd);
int cmd_infer(const InferCommand& cmd);
int cmd_eval(const EvalCommand& cmd);
int cmd_synth_data(const SynthCommand& cmd);
int cmd_viz_guidance(const VizCommand& cmd);

/// Result of running the global model (and optionally the face module) on one input.
struct InferenceResult {
    Tensor<float> final_image;
    Tensor<float> coarse;
    Tensor<float> residual;
    Tensor<float> guidance;
    bool face_used = false;
};

/// The inference path without any file handling. `face` may be null.
InferenceResult run_inference(const GlobalModel& model, const FaceModel* face, const Tensor<float>& source,
                              const Annotation& source_annotation, const Annotation& target_annotation,
                              bool allow_face);

/// Builds the report for already-loaded files; used by cmd_eval.
EvalReport evaluate_directories(const std::filesystem::path& pred, const std::filesystem::path& gt,
                                const std::filesystem::path& ann, const std::vector<std::string>& metrics,
                                const EvalSettings& settings, const ExtractorProvenance& extractor);

/// Maps an in-flight exception to an exit status and prints it to stderr.
int report_failure(const std::exception& e);

/// Entry point for the `drn` binary.
int cli_main(int argc, char** argv);

}  // namespace drn
