#pragma once

/// \file pose_codec.hpp
/// \brief Spatial encodings of keypoint and face annotations.
///
/// Images are (1, 3, H, W) tensors in [-1, 1]; pose heatmaps are (1, 18, H, W);
/// sketches and blend masks are single-channel (1, 1, H, W).

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "drn/tensor.hpp"

namespace drn {

inline constexpr int kNumJoints = 18;

/// Joint order of the 18-point skeleton, validated on every annotation load.
inline constexpr std::array<std::string_view, kNumJoints> kJointNames = {
    "nose",      "neck",      "r_shoulder", "r_elbow", "r_wrist", "l_shoulder",
    "l_elbow",   "l_wrist",   "r_hip",      "r_knee",  "r_ankle", "l_hip",
    "l_knee",    "l_ankle",   "r_eye",      "l_eye",   "r_ear",   "l_ear"};

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

struct Keypoint {
    double x = 0.0;
    double y = 0.0;
    bool visible = false;
};

using Keypoints = std::vector<Keypoint>;

struct FaceBox {
    double x0 = 0.0;
    double y0 = 0.0;
    double x1 = 0.0;
    double y1 = 0.0;

    double width() const { return x1 - x0; }
    double height() const { return y1 - y0; }
    double area() const { return width() > 0 && height() > 0 ? width() * height() : 0.0; }
};

/// One annotation document per image.
struct Annotation {
    Keypoints keypoints;
    std::optional<FaceBox> face_bbox;
    std::optional<std::vector<Point2>> face_landmarks;
    /// Garment identity used as retrieval ground truth; optional in the file.
    std::optional<std::string> item_id;
};

class SketchUnavailableError : public Error {
public:
    using Error::Error;
};

class FaceTooSmallError : public Error {
public:
    using Error::Error;
};

/// Throws AnnotationError unless there are exactly 18 keypoints and every
/// visible one lies inside a width×height frame (pass 0 to skip the bounds check).
void validate_keypoints(const Keypoints& kp, double width = 0, double height = 0);

Annotation annotation_from_json(const nlohmann::json& doc);
nlohmann::json annotation_to_json(const Annotation& ann);
Annotation load_annotation(const std::filesystem::path& path);
void save_annotation(const Annotation& ann, const std::filesystem::path& path);

/// Clamps a box to [0, width] × [0, height].
FaceBox clamp_box(const FaceBox& box, double width, double height);

/// Pixel (x, y) belongs to the box iff x0 <= x < x1 and y0 <= y < y1.
inline bool box_contains(const FaceBox& box, Index x, Index y)
{
    return box.x0 <= static_cast<double>(x) && static_cast<double>(x) < box.x1 &&
           box.y0 <= static_cast<double>(y) && static_cast<double>(y) < box.y1;
}

/// One Gaussian bump per visible joint, centered on the rounded keypoint pixel.
template <typename T>
Tensor<T> encode_pose_heatmaps(const Keypoints& kp, Index height, Index width, double sigma);

/// Binary map with a disc of the given radius at every landmark (crop coordinates).
template <typename T>
Tensor<T> encode_landmark_sketch(const std::vector<Point2>& landmarks, Index height, Index width,
                                 double radius);

template <typename T>
struct BlendMask {
    Tensor<T> mask;  // (1, 1, H, W)
    bool degenerate = false;
};

/// Box indicator convolved with a unit-sum Gaussian of half-width ceil(3·sigma), zero padded.
template <typename T>
BlendMask<T> face_blend_mask(const FaceBox& box, double sigma, Index height, Index width);

/// Normalized 1-D Gaussian taps, length 2·ceil(3·sigma) + 1 (a single 1 when sigma == 0).
std::vector<double> gaussian_kernel_1d(double sigma);

/// Keys cubic convolution weight (a = -0.5).
double cubic_weight(double t);

/// Bicubic sample of one plane at fractional (y, x); out-of-range taps replicate the border.
template <typename T>
T bicubic_sample(const T* plane, Index height, Index width, double y, double x);

/// Resamples the box region of img to out_size × out_size, clamped to [-1, 1].
template <typename T>
Tensor<T> crop_resize_face(const Tensor<T>& img, const FaceBox& box, Index out_size);

/// Inverse of crop_resize_face: bicubically rescales a square crop back into the
/// box pixels of a zero height×width canvas.
template <typename T>
Tensor<T> paste_face(const Tensor<T>& face, const FaceBox& box, Index height, Index width);

/// Maps image-space landmarks into the pixel grid of a crop of the given box.
std::vector<Point2> landmarks_to_crop(const std::vector<Point2>& landmarks, const FaceBox& box, Index out_size);

}  // namespace drn
