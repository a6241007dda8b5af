#pragma once

/// \file data_pipeline.hpp
/// \brief Image and annotation ingestion, center-crop preprocessing, pair
/// indices and the procedural stick-figure dataset.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "drn/params.hpp"
#include "drn/pose_codec.hpp"
#include "drn/tensor.hpp"

namespace drn {

/// 8-bit interleaved RGB raster, row-major.
struct RgbImage {
    Index height = 0;
    Index width = 0;
    std::vector<std::uint8_t> pixels;

    RgbImage() = default;
    RgbImage(Index h, Index w) : height(h), width(w), pixels(static_cast<std::size_t>(3 * h * w), 0) {}

    std::uint8_t* at(Index y, Index x) { return pixels.data() + 3 * (y * width + x); }
    const std::uint8_t* at(Index y, Index x) const { return pixels.data() + 3 * (y * width + x); }
};

RgbImage read_png(const std::filesystem::path& path);
void write_png(const RgbImage& img, const std::filesystem::path& path);

/// v -> v / 127.5 - 1, as a (1, 3, H, W) tensor.
template <typename T>
Tensor<T> image_to_tensor(const RgbImage& img);

/// Inverse of image_to_tensor with rounding and clamping; uses sample n.
template <typename T>
RgbImage tensor_to_image(const Tensor<T>& t, Index n = 0);

/// Writes a single-channel (N, 1, H, W) or 3-channel tensor in [-1, 1] as PNG.
template <typename T>
void write_tensor_png(const Tensor<T>& t, const std::filesystem::path& path);

struct Preprocessed {
    Tensor<float> image;  // (1, 3, out_h, out_w)
    Annotation annotation;
    Index crop_offset = 0;
};

/// Horizontal center crop to out_w columns (offset (W - out_w) / 2), pixel
/// mapping to [-1, 1] and annotation shift. Keypoints leaving the frame become
/// invisible; the face box is clamped and dropped with its landmarks if it
/// leaves the frame entirely. `context` names the sample in errors.
Preprocessed preprocess(const RgbImage& img, const Annotation& ann, Index out_h, Index out_w,
                        const std::string& context = "image");

/// Moves annotation coordinates left by dx pixels and applies the frame rules above.
Annotation shift_annotation(const Annotation& ann, double dx, Index out_h, Index out_w);

struct SampleRecord {
    std::string stem;
    std::filesystem::path image_path;
    std::filesystem::path annotation_path;
    std::string item_id;
};

struct PairRecord {
    SampleRecord source;
    SampleRecord target;
};

/// Resolves a sample stem to images/<stem>.png and annotations/<stem>.json under root.
SampleRecord resolve_sample(const std::filesystem::path& data_root, const std::string& stem);

/// Reads a `source,target` CSV of sample stems. Every bad row is collected and
/// reported together in one IngestionError.
std::vector<PairRecord> load_pair_index(const std::filesystem::path& csv_path,
                                        const std::filesystem::path& data_root);

struct Sample {
    std::string stem;
    std::string item_id;
    Tensor<float> image;
    Annotation annotation;
};
/// Reads and preprocesses one sample to out_h × out_w.
Sample load_sample(const SampleRecord& record, Index out_h, Index out_w);

void write_pair_index(const std::vector<std::pair<std::string, std::string>>& pairs,
                      const std::filesystem::path& csv_path);

// ---------------------------------------------------------------------------
// Toy dataset

inline constexpr int kNumToyMarkers = 20;     // 18 joints + right and left mouth corners
inline constexpr int kMouthRight = 18;
inline constexpr int kMouthLeft = 19;

/// Marker colors, index-aligned with the 18 joints followed by the two mouth corners.
const std::array<std::array<std::uint8_t, 3>, kNumToyMarkers>& toy_marker_colors();

inline constexpr std::array<std::uint8_t, 3> kToyBackground = {233, 233, 229};

/// Face-landmark order used by the toy data: right eye, left eye, nose, mouth right, mouth left.
inline constexpr std::array<int, 5> kToyFaceMarkers = {14, 15, 0, kMouthRight, kMouthLeft};

struct ToyIdentity {
    std::array<std::uint8_t, 3> top;
    std::array<std::uint8_t, 3> accent;
    std::array<std::uint8_t, 3> bottom;
    std::array<std::uint8_t, 3> skin;
    int texture = 0;  // 0 solid, 1 horizontal stripes, 2 vertical stripes, 3 checks
    double shoulder_half = 10, hip_half = 7, torso = 32;
    double upper_arm = 15, forearm = 13, thigh = 20, shin = 19;
    double head_radius = 7;
};

/// Joint positions in raw-image pixels (integers), 18 joints then the mouth corners.
using ToyJoints = std::array<Point2, kNumToyMarkers>;

struct ToyRender {
    RgbImage image;
    ToyJoints joints;
    Annotation annotation;
};

struct SynthConfig {
    std::uint64_t seed = 1;
    int n_identities = 4;
    int poses_per_identity = 3;
    int test_identities = -1;  // -1: n_identities / 4
    Index height = 128;
    Index raw_width = 128;
    Index crop_width = 88;  // the sampled figure stays inside the center crop

    void validate() const;
};

ToyIdentity sample_toy_identity(Rng& rng, const SynthConfig& config);
/// Samples joint positions; every marker lies inside the center crop and markers
/// are at least 3 px apart in Chebyshev distance.
ToyJoints sample_toy_pose(const ToyIdentity& identity, Rng& rng, const SynthConfig& config);
ToyRender render_toy_figure(const ToyIdentity& identity, const ToyJoints& joints, const SynthConfig& config,
                            const std::string& item_id);

struct SynthManifest {
    nlohmann::json document;  // contents of dataset.json
    std::vector<std::string> stems;
    std::vector<std::pair<std::string, std::string>> pairs;
    std::vector<std::pair<std::string, std::string>> train_pairs;
    std::vector<std::pair<std::string, std::string>> test_pairs;
};

/// Writes images/, annotations/, pairs.csv, train_pairs.csv, test_pairs.csv and
/// dataset.json (identities, splits, FNV-1a checksums) under out_dir.
SynthManifest synth_toy_dataset(const SynthConfig& config, const std::filesystem::path& out_dir);

/// Recovers marker centroids by exact color match (L∞ distance ≤ tolerance).
/// Returned points are in the image's own pixel frame; detected=false when no pixel matches.
struct DetectedPoint {
    double x = 0.0;
    double y = 0.0;
    bool detected = false;
};
std::array<DetectedPoint, kNumToyMarkers> detect_toy_markers(const RgbImage& img, int tolerance = 24);

}  // namespace drn
