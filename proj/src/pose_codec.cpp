#include "drn/pose_codec.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace drn {

void validate_keypoints(const Keypoints& kp, double width, double height)
{
    if (kp.size() != kNumJoints)
        throw AnnotationError("expected " + std::to_string(kNumJoints) + " keypoints, got " +
                              std::to_string(kp.size()));
    if (width <= 0 || height <= 0) return;
    for (std::size_t i = 0; i < kp.size(); ++i) {
        const auto& p = kp[i];
        if (!p.visible) continue;
        if (!(p.x >= 0 && p.x < width && p.y >= 0 && p.y < height))
            throw AnnotationError("visible keypoint " + std::string(kJointNames[i]) + " at (" +
                                  std::to_string(p.x) + ", " + std::to_string(p.y) + ") outside " +
                                  std::to_string(width) + "x" + std::to_string(height) + " frame");
    }
}

Annotation annotation_from_json(const nlohmann::json& doc)
{
    static const std::array<std::string_view, 4> known = {"keypoints", "face_bbox", "face_landmarks", "item_id"};
    if (!doc.is_object()) throw AnnotationError("annotation must be a JSON object");
    for (const auto& [key, _] : doc.items())
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw AnnotationError("unknown annotation key '" + key + "'");
    if (!doc.contains("keypoints") || !doc["keypoints"].is_array())
        throw AnnotationError("annotation lacks a 'keypoints' array");

    Annotation ann;
    try {
        for (const auto& row : doc["keypoints"]) {
            if (!row.is_array() || row.size() != 3) throw AnnotationError("keypoint rows must be [x, y, v]");
            ann.keypoints.push_back({row[0].get<double>(), row[1].get<double>(), row[2].get<double>() > 0});
        }
        if (doc.contains("face_bbox") && !doc["face_bbox"].is_null()) {
            const auto& b = doc["face_bbox"];
            if (!b.is_array() || b.size() != 4) throw AnnotationError("face_bbox must be [x0, y0, x1, y1]");
            ann.face_bbox = FaceBox{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
            if (!(ann.face_bbox->x0 < ann.face_bbox->x1 && ann.face_bbox->y0 < ann.face_bbox->y1))
                throw AnnotationError("face_bbox requires x0 < x1 and y0 < y1");
        }
        if (doc.contains("face_landmarks") && !doc["face_landmarks"].is_null()) {
            std::vector<Point2> pts;
            for (const auto& row : doc["face_landmarks"]) {
                if (!row.is_array() || row.size() != 2) throw AnnotationError("face_landmarks rows must be [x, y]");
                pts.push_back({row[0].get<double>(), row[1].get<double>()});
            }
            ann.face_landmarks = std::move(pts);
        }
        if (doc.contains("item_id") && !doc["item_id"].is_null()) ann.item_id = doc["item_id"].get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw AnnotationError(std::string("malformed annotation: ") + e.what());
    }
    validate_keypoints(ann.keypoints);
    return ann;
}

nlohmann::json annotation_to_json(const Annotation& ann)
{
    nlohmann::json doc;
    doc["keypoints"] = nlohmann::json::array();
    for (const auto& p : ann.keypoints) doc["keypoints"].push_back({p.x, p.y, p.visible ? 1 : 0});
    if (ann.face_bbox)
        doc["face_bbox"] = {ann.face_bbox->x0, ann.face_bbox->y0, ann.face_bbox->x1, ann.face_bbox->y1};
    else
        doc["face_bbox"] = nullptr;
    if (ann.face_landmarks) {
        doc["face_landmarks"] = nlohmann::json::array();
        for (const auto& p : *ann.face_landmarks) doc["face_landmarks"].push_back({p.x, p.y});
    } else {
        doc["face_landmarks"] = nullptr;
    }
    if (ann.item_id) doc["item_id"] = *ann.item_id;
    return doc;
}

Annotation load_annotation(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot open annotation " + path.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw AnnotationError(path.string() + ": " + e.what());
    }
    try {
        return annotation_from_json(doc);
    } catch (const AnnotationError& e) {
        throw AnnotationError(path.string() + ": " + e.what());
    }
}

void save_annotation(const Annotation& ann, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out) throw IoError("cannot write annotation " + path.string());
    out << annotation_to_json(ann).dump(1) << "\n";
}

FaceBox clamp_box(const FaceBox& box, double width, double height)
{
    return FaceBox{std::clamp(box.x0, 0.0, width), std::clamp(box.y0, 0.0, height), std::clamp(box.x1, 0.0, width),
                   std::clamp(box.y1, 0.0, height)};
}

template <typename T>
Tensor<T> encode_pose_heatmaps(const Keypoints& kp, Index height, Index width, double sigma)
{
    if (height <= 0 || width <= 0) throw ConfigError("heatmap size must be positive");
    if (!(sigma > 0)) throw ConfigError("heatmap sigma must be positive");
    validate_keypoints(kp, static_cast<double>(width), static_cast<double>(height));

    Tensor<T> out(Shape{1, kNumJoints, height, width});
    const double denom = 2.0 * sigma * sigma;
    Eigen::ArrayXd gx(width);
    Eigen::ArrayXd gy(height);
    for (int c = 0; c < kNumJoints; ++c) {
        if (!kp[c].visible) continue;
        const double cx = std::clamp<double>(std::round(kp[c].x), 0.0, static_cast<double>(width - 1));
        const double cy = std::clamp<double>(std::round(kp[c].y), 0.0, static_cast<double>(height - 1));
        for (Index x = 0; x < width; ++x) gx[x] = std::exp(-(x - cx) * (x - cx) / denom);
        for (Index y = 0; y < height; ++y) gy[y] = std::exp(-(y - cy) * (y - cy) / denom);
        out.plane(0, c) = (gy.matrix() * gx.matrix().transpose()).template cast<T>();
    }
    return out;
}

template <typename T>
Tensor<T> encode_landmark_sketch(const std::vector<Point2>& landmarks, Index height, Index width, double radius)
{
    if (landmarks.empty()) throw SketchUnavailableError("no face landmarks to rasterize");
    Tensor<T> out(Shape{1, 1, height, width});
    const double r2 = radius * radius;
    for (const auto& p : landmarks) {
        const Index y_lo = std::max<Index>(0, static_cast<Index>(std::floor(p.y - radius)));
        const Index y_hi = std::min<Index>(height - 1, static_cast<Index>(std::ceil(p.y + radius)));
        const Index x_lo = std::max<Index>(0, static_cast<Index>(std::floor(p.x - radius)));
        const Index x_hi = std::min<Index>(width - 1, static_cast<Index>(std::ceil(p.x + radius)));
        for (Index y = y_lo; y <= y_hi; ++y)
            for (Index x = x_lo; x <= x_hi; ++x) {
                const double dx = static_cast<double>(x) - p.x;
                const double dy = static_cast<double>(y) - p.y;
                if (dx * dx + dy * dy <= r2) out(0, 0, y, x) = T(1);
            }
    }
    return out;
}

std::vector<double> gaussian_kernel_1d(double sigma)
{
    if (sigma < 0) throw ConfigError("blur sigma must be non-negative");
    if (sigma == 0) return {1.0};
    const int half = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(2 * half + 1);
    double total = 0.0;
    for (int i = -half; i <= half; ++i) {
        k[i + half] = std::exp(-(i * i) / (2.0 * sigma * sigma));
        total += k[i + half];
    }
    for (auto& v : k) v /= total;
    return k;
}

template <typename T>
BlendMask<T> face_blend_mask(const FaceBox& box, double sigma, Index height, Index width)
{
    BlendMask<T> result{Tensor<T>(Shape{1, 1, height, width}), false};
    const FaceBox b = clamp_box(box, static_cast<double>(width), static_cast<double>(height));
    if (b.area() <= 0) {
        result.degenerate = true;
        return result;
    }
    const auto k = gaussian_kernel_1d(sigma);
    const int half = static_cast<int>(k.size() / 2);

    Eigen::MatrixXd indicator = Eigen::MatrixXd::Zero(height, width);
    for (Index y = 0; y < height; ++y)
        for (Index x = 0; x < width; ++x)
            if (box_contains(b, x, y)) indicator(y, x) = 1.0;

    // Separable blur: rows, then columns, zero outside the frame.
    Eigen::MatrixXd horiz = Eigen::MatrixXd::Zero(height, width);
    for (Index y = 0; y < height; ++y)
        for (Index x = 0; x < width; ++x) {
            double acc = 0.0;
            for (int t = -half; t <= half; ++t) {
                const Index xs = x + t;
                if (xs >= 0 && xs < width) acc += k[t + half] * indicator(y, xs);
            }
            horiz(y, x) = acc;
        }
    auto& m = result.mask;
    for (Index y = 0; y < height; ++y)
        for (Index x = 0; x < width; ++x) {
            double acc = 0.0;
            for (int t = -half; t <= half; ++t) {
                const Index ys = y + t;
                if (ys >= 0 && ys < height) acc += k[t + half] * horiz(ys, x);
            }
            m(0, 0, y, x) = static_cast<T>(std::clamp(acc, 0.0, 1.0));
        }
    return result;
}

double cubic_weight(double t)
{
    constexpr double a = -0.5;
    t = std::abs(t);
    if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
    if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
    return 0.0;
}

template <typename T>
T bicubic_sample(const T* plane, Index height, Index width, double y, double x)
{
    const double fy = std::floor(y);
    const double fx = std::floor(x);
    const Index iy = static_cast<Index>(fy);
    const Index ix = static_cast<Index>(fx);
    double wy[4];
    double wx[4];
    for (int i = 0; i < 4; ++i) {
        wy[i] = cubic_weight(y - (fy + i - 1));
        wx[i] = cubic_weight(x - (fx + i - 1));
    }
    double acc = 0.0;
    for (int i = 0; i < 4; ++i) {
        if (wy[i] == 0.0) continue;
        const Index yy = std::clamp<Index>(iy + i - 1, 0, height - 1);
        double row = 0.0;
        for (int j = 0; j < 4; ++j) {
            if (wx[j] == 0.0) continue;
            const Index xx = std::clamp<Index>(ix + j - 1, 0, width - 1);
            row += wx[j] * static_cast<double>(plane[yy * width + xx]);
        }
        acc += wy[i] * row;
    }
    return static_cast<T>(acc);
}

template <typename T>
Tensor<T> crop_resize_face(const Tensor<T>& img, const FaceBox& box, Index out_size)
{
    const FaceBox b = clamp_box(box, static_cast<double>(img.w()), static_cast<double>(img.h()));
    if (b.area() < 4.0) throw FaceTooSmallError("face box area " + std::to_string(b.area()) + " px^2 is below 4");
    const double sy = b.height() / static_cast<double>(out_size);
    const double sx = b.width() / static_cast<double>(out_size);
    Tensor<T> out(Shape{img.n(), img.c(), out_size, out_size});
    for (Index n = 0; n < img.n(); ++n)
        for (Index c = 0; c < img.c(); ++c) {
            const T* plane = img.plane_data(n, c);
            for (Index oy = 0; oy < out_size; ++oy) {
                const double y = b.y0 + (oy + 0.5) * sy - 0.5;
                for (Index ox = 0; ox < out_size; ++ox) {
                    const double x = b.x0 + (ox + 0.5) * sx - 0.5;
                    out(n, c, oy, ox) = std::clamp(bicubic_sample(plane, img.h(), img.w(), y, x), T(-1), T(1));
                }
            }
        }
    return out;
}

template <typename T>
Tensor<T> paste_face(const Tensor<T>& face, const FaceBox& box, Index height, Index width)
{
    const FaceBox b = clamp_box(box, static_cast<double>(width), static_cast<double>(height));
    Tensor<T> out(Shape{face.n(), face.c(), height, width});
    if (b.area() <= 0) return out;
    const double sy = static_cast<double>(face.h()) / b.height();
    const double sx = static_cast<double>(face.w()) / b.width();
    for (Index n = 0; n < face.n(); ++n)
        for (Index c = 0; c < face.c(); ++c) {
            const T* plane = face.plane_data(n, c);
            for (Index y = 0; y < height; ++y)
                for (Index x = 0; x < width; ++x) {
                    if (!box_contains(b, x, y)) continue;
                    const double fy = (y + 0.5 - b.y0) * sy - 0.5;
                    const double fx = (x + 0.5 - b.x0) * sx - 0.5;
                    out(n, c, y, x) = std::clamp(bicubic_sample(plane, face.h(), face.w(), fy, fx), T(-1), T(1));
                }
        }
    return out;
}

std::vector<Point2> landmarks_to_crop(const std::vector<Point2>& landmarks, const FaceBox& box, Index out_size)
{
    std::vector<Point2> out;
    out.reserve(landmarks.size());
    const double sx = static_cast<double>(out_size) / box.width();
    const double sy = static_cast<double>(out_size) / box.height();
    for (const auto& p : landmarks) out.push_back({(p.x + 0.5 - box.x0) * sx - 0.5, (p.y + 0.5 - box.y0) * sy - 0.5});
    return out;
}

#define DRN_INSTANTIATE_CODEC(T)                                                                     \
    template Tensor<T> encode_pose_heatmaps<T>(const Keypoints&, Index, Index, double);              \
    template Tensor<T> encode_landmark_sketch<T>(const std::vector<Point2>&, Index, Index, double);  \
    template BlendMask<T> face_blend_mask<T>(const FaceBox&, double, Index, Index);                  \
    template T bicubic_sample<T>(const T*, Index, Index, double, double);                            \
    template Tensor<T> crop_resize_face<T>(const Tensor<T>&, const FaceBox&, Index);                 \
    template Tensor<T> paste_face<T>(const Tensor<T>&, const FaceBox&, Index, Index);

DRN_INSTANTIATE_CODEC(float)
DRN_INSTANTIATE_CODEC(double)

#undef DRN_INSTANTIATE_CODEC

}  // namespace drn
