#include "drn/data_pipeline.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "drn/checkpoint.hpp"
#include "drn/hash.hpp"

namespace drn {

namespace fs = std::filesystem;

RgbImage read_png(const fs::path& path)
{
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str()))
        throw IoError("cannot read PNG " + path.string() + ": " + image.message);
    image.format = PNG_FORMAT_RGB;
    RgbImage out(image.height, image.width);
    if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
        const std::string msg = image.message;
        png_image_free(&image);
        throw IoError("cannot decode PNG " + path.string() + ": " + msg);
    }
    return out;
}

void write_png(const RgbImage& img, const fs::path& path)
{
    if (img.height <= 0 || img.width <= 0) throw IoError("refusing to write an empty image to " + path.string());
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(img.width);
    image.height = static_cast<png_uint_32>(img.height);
    image.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&image, path.c_str(), 0, img.pixels.data(), 0, nullptr))
        throw IoError("cannot write PNG " + path.string() + ": " + image.message);
}

template <typename T>
Tensor<T> image_to_tensor(const RgbImage& img)
{
    Tensor<T> t(Shape{1, 3, img.height, img.width});
    for (Index y = 0; y < img.height; ++y)
        for (Index x = 0; x < img.width; ++x)
            for (Index c = 0; c < 3; ++c) t(0, c, y, x) = static_cast<T>(img.at(y, x)[c]) / T(127.5) - T(1);
    return t;
}

template <typename T>
RgbImage tensor_to_image(const Tensor<T>& t, Index n)
{
    if (t.c() != 1 && t.c() != 3) throw DimensionError("image tensor must have 1 or 3 channels, got " + t.shape().str());
    RgbImage img(t.h(), t.w());
    for (Index y = 0; y < t.h(); ++y)
        for (Index x = 0; x < t.w(); ++x)
            for (Index c = 0; c < 3; ++c) {
                const double v = (static_cast<double>(t(n, t.c() == 1 ? 0 : c, y, x)) + 1.0) * 127.5;
                img.at(y, x)[c] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
            }
    return img;
}

template <typename T>
void write_tensor_png(const Tensor<T>& t, const fs::path& path)
{
    write_png(tensor_to_image(t), path);
}

Annotation shift_annotation(const Annotation& ann, double dx, Index out_h, Index out_w)
{
    const double w = static_cast<double>(out_w);
    const double h = static_cast<double>(out_h);
    Annotation out = ann;
    for (auto& p : out.keypoints) {
        p.x -= dx;
        p.visible = p.visible && p.x >= 0 && p.x < w && p.y >= 0 && p.y < h;
    }
    if (out.face_landmarks)
        for (auto& p : *out.face_landmarks) p.x -= dx;
    if (out.face_bbox) {
        FaceBox b = *out.face_bbox;
        b.x0 -= dx;
        b.x1 -= dx;
        b = clamp_box(b, w, h);
        if (b.area() <= 0) {
            out.face_bbox.reset();
            out.face_landmarks.reset();
        } else {
            out.face_bbox = b;
        }
    }
    return out;
}

Preprocessed preprocess(const RgbImage& img, const Annotation& ann, Index out_h, Index out_w,
                        const std::string& context)
{
    if (img.height != out_h || img.width < out_w)
        throw IngestionError(context + ": image is " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                             ", need height " + std::to_string(out_h) + " and width >= " + std::to_string(out_w));
    const Index offset = (img.width - out_w) / 2;
    Preprocessed out;
    out.crop_offset = offset;
    out.image = Tensor<float>(Shape{1, 3, out_h, out_w});
    for (Index y = 0; y < out_h; ++y)
        for (Index x = 0; x < out_w; ++x)
            for (Index c = 0; c < 3; ++c)
                out.image(0, c, y, x) = static_cast<float>(img.at(y, x + offset)[c]) / 127.5f - 1.0f;
    out.annotation = shift_annotation(ann, static_cast<double>(offset), out_h, out_w);
    return out;
}

SampleRecord resolve_sample(const fs::path& data_root, const std::string& stem)
{
    SampleRecord r;
    r.stem = stem;
    r.image_path = data_root / "images" / (stem + ".png");
    r.annotation_path = data_root / "annotations" / (stem + ".json");
    return r;
}

namespace {

std::string trim(std::string s)
{
    const auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

std::vector<std::string> split_csv_row(const std::string& line)
{
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

}  // namespace

std::vector<PairRecord> load_pair_index(const fs::path& csv_path, const fs::path& data_root)
{
    std::ifstream in(csv_path);
    if (!in) throw IoError("cannot open pair index " + csv_path.string());

    std::vector<PairRecord> pairs;
    std::vector<std::string> problems;
    std::string line;
    int line_no = 0;
    bool header_seen = false;
    int row_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        line = trim(line);
        if (line.empty()) continue;
        if (!header_seen) {
            header_seen = true;
            if (split_csv_row(line) != std::vector<std::string>{"source", "target"})
                throw IngestionError(csv_path.string() + ": header must be 'source,target', got '" + line + "'");
            continue;
        }
        ++row_no;
        const std::string where = "row " + std::to_string(row_no) + " (line " + std::to_string(line_no) + ")";
        const auto cells = split_csv_row(line);
        if (cells.size() != 2 || cells[0].empty() || cells[1].empty()) {
            problems.push_back(where + ": expected two non-empty columns, got '" + line + "'");
            continue;
        }
        PairRecord pair{resolve_sample(data_root, cells[0]), resolve_sample(data_root, cells[1])};
        bool ok = true;
        for (SampleRecord* s : {&pair.source, &pair.target}) {
            if (!fs::exists(s->image_path)) {
                problems.push_back(where + ": missing image " + s->image_path.string());
                ok = false;
            }
            if (!fs::exists(s->annotation_path)) {
                problems.push_back(where + ": missing annotation " + s->annotation_path.string());
                ok = false;
                continue;
            }
            try {
                const Annotation ann = load_annotation(s->annotation_path);
                if (!ann.item_id) {
                    problems.push_back(where + ": annotation " + s->annotation_path.string() + " has no item_id");
                    ok = false;
                } else {
                    s->item_id = *ann.item_id;
                }
            } catch (const Error& e) {
                problems.push_back(where + ": " + e.what());
                ok = false;
            }
        }
        if (ok && pair.source.item_id != pair.target.item_id) {
            problems.push_back(where + ": source item '" + pair.source.item_id + "' differs from target item '" +
                               pair.target.item_id + "'");
            ok = false;
        }
        if (ok) pairs.push_back(std::move(pair));
    }
    if (!problems.empty()) {
        std::string msg = csv_path.string() + ": " + std::to_string(problems.size()) + " problem(s)";
        for (const auto& p : problems) msg += "\n  " + p;
        throw IngestionError(msg);
    }
    return pairs;
}

Sample load_sample(const SampleRecord& record, Index out_h, Index out_w)
{
    const Annotation ann = load_annotation(record.annotation_path);
    validate_keypoints(ann.keypoints);
    const RgbImage img = read_png(record.image_path);
    validate_keypoints(ann.keypoints, static_cast<double>(img.width), static_cast<double>(img.height));
    Preprocessed p = preprocess(img, ann, out_h, out_w, record.image_path.string());
    return Sample{record.stem, record.item_id, std::move(p.image), std::move(p.annotation)};
}

void write_pair_index(const std::vector<std::pair<std::string, std::string>>& pairs, const fs::path& csv_path)
{
    std::string text = "source,target\n";
    for (const auto& [s, t] : pairs) text += s + "," + t + "\n";
    write_file_atomic(csv_path, text);
}

// ---------------------------------------------------------------------------
// Toy dataset

const std::array<std::array<std::uint8_t, 3>, kNumToyMarkers>& toy_marker_colors()
{
    static const auto colors = [] {
        std::array<std::array<std::uint8_t, 3>, kNumToyMarkers> out{};
        const std::uint8_t levels[3] = {0, 128, 255};
        int k = 0;
        for (int r = 0; r < 3 && k < kNumToyMarkers; ++r)
            for (int g = 0; g < 3 && k < kNumToyMarkers; ++g)
                for (int b = 0; b < 3 && k < kNumToyMarkers; ++b) {
                    if (r == g && g == b) continue;  // black, gray, white
                    out[static_cast<std::size_t>(k++)] = {levels[r], levels[g], levels[b]};
                }
        return out;
    }();
    return colors;
}

void SynthConfig::validate() const
{
    if (n_identities < 1) throw ConfigError("synth: n_identities must be >= 1");
    if (poses_per_identity < 2) throw ConfigError("synth: poses_per_identity must be >= 2");
    if (test_identities >= n_identities) throw ConfigError("synth: test_identities must leave a training identity");
    if (height < 64 || crop_width < 44 || raw_width < crop_width)
        throw ConfigError("synth: image must be at least 64x44 with raw_width >= crop_width");
}

namespace {

using Color = std::array<std::uint8_t, 3>;

double uniform(Rng& rng, double lo, double hi)
{
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Odd values in [31, 223]: never within the detector tolerance of a marker
// color or the background.
Color sample_color(Rng& rng)
{
    std::uniform_int_distribution<int> d(0, 96);
    return {static_cast<std::uint8_t>(31 + 2 * d(rng)), static_cast<std::uint8_t>(31 + 2 * d(rng)),
            static_cast<std::uint8_t>(31 + 2 * d(rng))};
}

int color_gap(const Color& a, const Color& b)
{
    int m = 0;
    for (int c = 0; c < 3; ++c) m = std::max(m, std::abs(int(a[static_cast<std::size_t>(c)]) - int(b[static_cast<std::size_t>(c)])));
    return m;
}

Color distinct_color(Rng& rng, std::initializer_list<Color> others)
{
    for (;;) {
        const Color c = sample_color(rng);
        bool ok = true;
        for (const auto& o : others) ok = ok && color_gap(c, o) >= 48;
        if (ok) return c;
    }
}

Point2 offset(const Point2& p, double dx, double dy)
{
    return {p.x + dx, p.y + dy};
}

Point2 rounded(const Point2& p)
{
    return {std::round(p.x), std::round(p.y)};
}

double deg(double d)
{
    return d * std::numbers::pi / 180.0;
}

double segment_distance(double px, double py, const Point2& a, const Point2& b)
{
    const double vx = b.x - a.x, vy = b.y - a.y;
    const double len2 = vx * vx + vy * vy;
    double t = len2 > 0 ? ((px - a.x) * vx + (py - a.y) * vy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double dx = px - (a.x + t * vx), dy = py - (a.y + t * vy);
    return std::sqrt(dx * dx + dy * dy);
}

class Canvas {
public:
    Canvas(Index h, Index w) : img_(h, w)
    {
        for (Index y = 0; y < h; ++y)
            for (Index x = 0; x < w; ++x) set(y, x, kToyBackground);
    }

    void set(Index y, Index x, const Color& c)
    {
        if (y < 0 || x < 0 || y >= img_.height || x >= img_.width) return;
        std::copy(c.begin(), c.end(), img_.at(y, x));
    }

    template <typename Shade>
    void capsule(const Point2& a, const Point2& b, double thickness, Shade shade)
    {
        const double r = thickness / 2;
        const Index y0 = static_cast<Index>(std::floor(std::min(a.y, b.y) - r));
        const Index y1 = static_cast<Index>(std::ceil(std::max(a.y, b.y) + r));
        const Index x0 = static_cast<Index>(std::floor(std::min(a.x, b.x) - r));
        const Index x1 = static_cast<Index>(std::ceil(std::max(a.x, b.x) + r));
        for (Index y = y0; y <= y1; ++y)
            for (Index x = x0; x <= x1; ++x)
                if (segment_distance(double(x), double(y), a, b) <= r) set(y, x, shade(y, x));
    }

    template <typename Shade>
    void quad(const std::array<Point2, 4>& q, Shade shade)
    {
        double ymin = q[0].y, ymax = q[0].y, xmin = q[0].x, xmax = q[0].x;
        for (const auto& p : q) {
            ymin = std::min(ymin, p.y);
            ymax = std::max(ymax, p.y);
            xmin = std::min(xmin, p.x);
            xmax = std::max(xmax, p.x);
        }
        for (Index y = Index(std::floor(ymin)); y <= Index(std::ceil(ymax)); ++y)
            for (Index x = Index(std::floor(xmin)); x <= Index(std::ceil(xmax)); ++x) {
                // Convex polygon test: the point is on the same side of every edge.
                int pos = 0, neg = 0;
                for (int i = 0; i < 4; ++i) {
                    const Point2& a = q[static_cast<std::size_t>(i)];
                    const Point2& b = q[static_cast<std::size_t>((i + 1) % 4)];
                    const double cross = (b.x - a.x) * (double(y) - a.y) - (b.y - a.y) * (double(x) - a.x);
                    pos += cross >= 0;
                    neg += cross <= 0;
                }
                if (pos == 4 || neg == 4) set(y, x, shade(y, x));
            }
    }

    void disc(const Point2& c, double r, const Color& color)
    {
        for (Index y = Index(std::floor(c.y - r)); y <= Index(std::ceil(c.y + r)); ++y)
            for (Index x = Index(std::floor(c.x - r)); x <= Index(std::ceil(c.x + r)); ++x)
                if ((double(x) - c.x) * (double(x) - c.x) + (double(y) - c.y) * (double(y) - c.y) <= r * r)
                    set(y, x, color);
    }

    RgbImage take() { return std::move(img_); }

private:
    RgbImage img_;
};

struct HeadLayout {
    double nose_dy, eye_dx, eye_dy, ear_dx, mouth_dx, mouth_dy;
};

constexpr HeadLayout kHead{1, 3, -2, 6, 2, 4};

}  // namespace

ToyIdentity sample_toy_identity(Rng& rng, const SynthConfig& config)
{
    const double s = static_cast<double>(config.height) / 128.0;
    ToyIdentity id;
    id.skin = sample_color(rng);
    id.top = distinct_color(rng, {id.skin});
    id.accent = distinct_color(rng, {id.top});
    id.bottom = distinct_color(rng, {id.top, id.skin});
    id.texture = std::uniform_int_distribution<int>(0, 3)(rng);
    id.shoulder_half = s * uniform(rng, 8, 12);
    id.hip_half = s * uniform(rng, 5, 8);
    id.torso = s * uniform(rng, 28, 36);
    id.upper_arm = s * uniform(rng, 13, 18);
    id.forearm = s * uniform(rng, 11, 15);
    id.thigh = s * uniform(rng, 17, 22);
    id.shin = s * uniform(rng, 16, 21);
    id.head_radius = std::max(7.0, s * uniform(rng, 7, 8.5));
    return id;
}

ToyJoints sample_toy_pose(const ToyIdentity& id, Rng& rng, const SynthConfig& config)
{
    const double s = static_cast<double>(config.height) / 128.0;
    const double margin = static_cast<double>(config.raw_width - config.crop_width) / 2.0;
    const double xmin = margin + 1, xmax = margin + static_cast<double>(config.crop_width) - 2;
    const double ymin = 1, ymax = static_cast<double>(config.height) - 2;
    const double cx = static_cast<double>(config.raw_width) / 2.0;

    for (int attempt = 0; attempt < 10000; ++attempt) {
        ToyJoints j{};
        const Point2 neck = rounded({cx + uniform(rng, -5, 5) * s, 2 * id.head_radius + uniform(rng, 5, 9) * s});
        const Point2 head = rounded({neck.x + uniform(rng, -1.5, 1.5), neck.y - id.head_radius - 2});
        j[1] = neck;
        j[0] = offset(head, 0, kHead.nose_dy);
        j[14] = offset(head, -kHead.eye_dx, kHead.eye_dy);
        j[15] = offset(head, kHead.eye_dx, kHead.eye_dy);
        j[16] = offset(head, -kHead.ear_dx, 0);
        j[17] = offset(head, kHead.ear_dx, 0);
        j[kMouthRight] = offset(head, -kHead.mouth_dx, kHead.mouth_dy);
        j[kMouthLeft] = offset(head, kHead.mouth_dx, kHead.mouth_dy);

        const double shoulder_drop = uniform(rng, 1, 3) * s;
        j[2] = rounded(offset(neck, -id.shoulder_half, shoulder_drop));
        j[5] = rounded(offset(neck, id.shoulder_half, shoulder_drop));
        const Point2 pelvis = offset(neck, uniform(rng, -2, 2) * s, id.torso);
        j[8] = rounded(offset(pelvis, -id.hip_half, 0));
        j[11] = rounded(offset(pelvis, id.hip_half, 0));

        // Limb angles are measured from straight down, positive pointing away from the body.
        for (int side = 0; side < 2; ++side) {
            const double dir = side == 0 ? -1.0 : 1.0;
            const int sh = side == 0 ? 2 : 5, el = sh + 1, wr = sh + 2;
            const double a = deg(uniform(rng, -15, 150));
            const double b = a + deg(uniform(rng, -10, 120));
            j[static_cast<std::size_t>(el)] = rounded(offset(j[static_cast<std::size_t>(sh)], dir * id.upper_arm * std::sin(a), id.upper_arm * std::cos(a)));
            j[static_cast<std::size_t>(wr)] = rounded(offset(j[static_cast<std::size_t>(el)], dir * id.forearm * std::sin(b), id.forearm * std::cos(b)));

            const int hp = side == 0 ? 8 : 11, kn = hp + 1, an = hp + 2;
            const double h = deg(uniform(rng, -8, 30));
            const double k = h + deg(uniform(rng, -20, 20));
            j[static_cast<std::size_t>(kn)] = rounded(offset(j[static_cast<std::size_t>(hp)], dir * id.thigh * std::sin(h), id.thigh * std::cos(h)));
            j[static_cast<std::size_t>(an)] = rounded(offset(j[static_cast<std::size_t>(kn)], dir * id.shin * std::sin(k), id.shin * std::cos(k)));
        }

        bool ok = true;
        for (const auto& p : j) ok = ok && p.x >= xmin && p.x <= xmax && p.y >= ymin && p.y <= ymax;
        for (std::size_t a = 0; ok && a < j.size(); ++a)
            for (std::size_t b = a + 1; ok && b < j.size(); ++b)
                ok = std::max(std::abs(j[a].x - j[b].x), std::abs(j[a].y - j[b].y)) >= 3;
        if (ok) return j;
    }
    throw ConfigError("synth: could not place a figure inside the crop; image too small for the skeleton");
}

ToyRender render_toy_figure(const ToyIdentity& id, const ToyJoints& j, const SynthConfig& config,
                            const std::string& item_id)
{
    const double s = static_cast<double>(config.height) / 128.0;
    Canvas canvas(config.height, config.raw_width);
    const auto solid = [](const Color& c) { return [c](Index, Index) { return c; }; };
    const auto textured = [&id](Index y, Index x) {
        bool alt = false;
        switch (id.texture) {
        case 1: alt = (y / 3) % 2 == 1; break;
        case 2: alt = (x / 3) % 2 == 1; break;
        case 3: alt = ((x / 4) + (y / 4)) % 2 == 1; break;
        default: break;
        }
        return alt ? id.accent : id.top;
    };

    for (int hp : {8, 11}) {
        canvas.capsule(j[static_cast<std::size_t>(hp)], j[static_cast<std::size_t>(hp + 1)], 6 * s, solid(id.bottom));
        canvas.capsule(j[static_cast<std::size_t>(hp + 1)], j[static_cast<std::size_t>(hp + 2)], 5 * s, solid(id.bottom));
    }
    canvas.quad({j[2], j[5], j[11], j[8]}, textured);
    canvas.capsule(j[1], j[0], 4 * s, solid(id.skin));
    for (int sh : {2, 5}) {
        canvas.capsule(j[static_cast<std::size_t>(sh)], j[static_cast<std::size_t>(sh + 1)], 5 * s, textured);
        canvas.capsule(j[static_cast<std::size_t>(sh + 1)], j[static_cast<std::size_t>(sh + 2)], 4 * s, solid(id.skin));
    }
    const Point2 head = offset(j[0], 0, -kHead.nose_dy);
    canvas.disc(head, id.head_radius, id.skin);

    const auto& colors = toy_marker_colors();
    for (int m = 0; m < kNumToyMarkers; ++m)
        for (Index dy = -1; dy <= 1; ++dy)
            for (Index dx = -1; dx <= 1; ++dx)
                canvas.set(Index(j[static_cast<std::size_t>(m)].y) + dy, Index(j[static_cast<std::size_t>(m)].x) + dx,
                           colors[static_cast<std::size_t>(m)]);

    ToyRender out;
    out.image = canvas.take();
    out.joints = j;
    for (int k = 0; k < kNumJoints; ++k) out.annotation.keypoints.push_back({j[static_cast<std::size_t>(k)].x, j[static_cast<std::size_t>(k)].y, true});
    const double r = id.head_radius + 1;
    out.annotation.face_bbox = FaceBox{head.x - r, head.y - r, head.x + r + 1, head.y + r + 1};
    std::vector<Point2> landmarks;
    for (int m : kToyFaceMarkers) landmarks.push_back(j[static_cast<std::size_t>(m)]);
    out.annotation.face_landmarks = std::move(landmarks);
    out.annotation.item_id = item_id;
    return out;
}

SynthManifest synth_toy_dataset(const SynthConfig& config, const fs::path& out_dir)
{
    config.validate();
    std::error_code ec;
    fs::create_directories(out_dir / "images", ec);
    if (!ec) fs::create_directories(out_dir / "annotations", ec);
    if (ec) throw IoError("cannot create dataset directories under " + out_dir.string() + ": " + ec.message());

    const int n_test = config.test_identities < 0 ? config.n_identities / 4 : config.test_identities;
    Rng rng(config.seed);
    SynthManifest m;
    nlohmann::json identities = nlohmann::json::array();
    nlohmann::json train_ids = nlohmann::json::array(), test_ids = nlohmann::json::array();
    nlohmann::json files = nlohmann::json::object();

    for (int i = 0; i < config.n_identities; ++i) {
        char item[32];
        std::snprintf(item, sizeof item, "id%03d", i);
        const bool is_test = i >= config.n_identities - n_test;
        const ToyIdentity identity = sample_toy_identity(rng, config);
        std::vector<std::string> stems;
        for (int p = 0; p < config.poses_per_identity; ++p) {
            char stem[48];
            std::snprintf(stem, sizeof stem, "%s_pose%02d", item, p);
            const ToyJoints joints = sample_toy_pose(identity, rng, config);
            const ToyRender r = render_toy_figure(identity, joints, config, item);
            const auto img_rel = fs::path("images") / (std::string(stem) + ".png");
            const auto ann_rel = fs::path("annotations") / (std::string(stem) + ".json");
            write_png(r.image, out_dir / img_rel);
            save_annotation(r.annotation, out_dir / ann_rel);
            for (const auto& rel : {img_rel, ann_rel}) {
                const std::string bytes = read_file(out_dir / rel);
                files[rel.generic_string()] = hex64(fnv1a64(bytes.data(), bytes.size()));
            }
            stems.emplace_back(stem);
            m.stems.emplace_back(stem);
        }
        for (const auto& a : stems)
            for (const auto& b : stems) {
                if (a == b) continue;
                m.pairs.emplace_back(a, b);
                (is_test ? m.test_pairs : m.train_pairs).emplace_back(a, b);
            }
        identities.push_back({{"item_id", item}, {"split", is_test ? "test" : "train"}, {"samples", stems}});
        (is_test ? test_ids : train_ids).push_back(item);
    }

    write_pair_index(m.pairs, out_dir / "pairs.csv");
    write_pair_index(m.train_pairs, out_dir / "train_pairs.csv");
    write_pair_index(m.test_pairs, out_dir / "test_pairs.csv");
    for (const char* name : {"pairs.csv", "train_pairs.csv", "test_pairs.csv"}) {
        const std::string bytes = read_file(out_dir / name);
        files[name] = hex64(fnv1a64(bytes.data(), bytes.size()));
    }

    m.document = {{"format", "drn-toy-dataset"},
                  {"version", 1},
                  {"seed", config.seed},
                  {"n_identities", config.n_identities},
                  {"poses_per_identity", config.poses_per_identity},
                  {"height", config.height},
                  {"raw_width", config.raw_width},
                  {"crop_width", config.crop_width},
                  {"identities", identities},
                  {"splits", {{"train", train_ids}, {"test", test_ids}}},
                  {"checksums", files}};
    write_file_atomic(out_dir / "dataset.json", m.document.dump(2) + "\n");
    return m;
}

std::array<DetectedPoint, kNumToyMarkers> detect_toy_markers(const RgbImage& img, int tolerance)
{
    const auto& colors = toy_marker_colors();
    std::array<double, kNumToyMarkers> sx{}, sy{}, count{};
    for (Index y = 0; y < img.height; ++y)
        for (Index x = 0; x < img.width; ++x) {
            const std::uint8_t* px = img.at(y, x);
            const Color c{px[0], px[1], px[2]};
            for (std::size_t m = 0; m < colors.size(); ++m)
                if (color_gap(c, colors[m]) <= tolerance) {
                    sx[m] += double(x);
                    sy[m] += double(y);
                    count[m] += 1;
                    break;
                }
        }
    std::array<DetectedPoint, kNumToyMarkers> out{};
    for (std::size_t m = 0; m < out.size(); ++m)
        if (count[m] > 0) out[m] = {sx[m] / count[m], sy[m] / count[m], true};
    return out;
}

template Tensor<float> image_to_tensor(const RgbImage&);
template Tensor<double> image_to_tensor(const RgbImage&);
template RgbImage tensor_to_image(const Tensor<float>&, Index);
template RgbImage tensor_to_image(const Tensor<double>&, Index);
template void write_tensor_png(const Tensor<float>&, const fs::path&);
template void write_tensor_png(const Tensor<double>&, const fs::path&);

}  // namespace drn
