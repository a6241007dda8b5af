#include "drn/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "drn/checkpoint.hpp"

namespace drn {

namespace fs = std::filesystem;

namespace {

void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& known, const std::string& what)
{
    if (!j.is_object()) throw ConfigError(what + " must be a JSON object");
    for (const auto& [key, _] : j.items())
        if (!known.count(key)) throw ConfigError("unknown " + what + " key '" + key + "'");
}

std::string format_number(double v)
{
    std::ostringstream s;
    s << v;
    return s.str();
}

std::vector<std::string> split_list(const std::string& text)
{
    std::vector<std::string> out;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        item.erase(0, item.find_first_not_of(" \t"));
        item.erase(item.find_last_not_of(" \t") + 1);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

void require_file(const fs::path& path, const std::string& what)
{
    if (!fs::is_regular_file(path)) throw IoError(what + " " + path.string() + " does not exist");
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

void EvalSettings::validate() const
{
    for (const auto& m : metrics)
        if (std::find(known_metrics().begin(), known_metrics().end(), m) == known_metrics().end())
            throw ConfigError("eval: unknown metric '" + m + "'");
    if (kec_thresholds.empty() || !std::is_sorted(kec_thresholds.begin(), kec_thresholds.end()) ||
        kec_thresholds.front() < 0)
        throw ConfigError("eval: kec_thresholds must be a nonempty ascending list of non-negative values");
    if (retrieval_ks.empty() || std::any_of(retrieval_ks.begin(), retrieval_ks.end(), [](int k) { return k < 1; }))
        throw ConfigError("eval: retrieval_ks must be a nonempty list of values >= 1");
    if (identity_thresholds.empty() ||
        std::any_of(identity_thresholds.begin(), identity_thresholds.end(), [](double e) { return !(e > 0); }))
        throw ConfigError("eval: identity_thresholds must be positive");
    if (embedder_dim < 1 || embedder_thumb < 1 || ssim_window < 1 || face_size < 4 || detector_tolerance < 0)
        throw ConfigError("eval: embedder_dim, embedder_thumb, ssim_window >= 1, face_size >= 4 and "
                          "detector_tolerance >= 0 required");
}

void to_json(nlohmann::json& j, const EvalSettings& s)
{
    j = nlohmann::json{{"metrics", s.metrics},
                       {"kec_thresholds", s.kec_thresholds},
                       {"retrieval_ks", s.retrieval_ks},
                       {"identity_thresholds", s.identity_thresholds},
                       {"embedder_seed", s.embedder_seed},
                       {"embedder_dim", s.embedder_dim},
                       {"embedder_thumb", s.embedder_thumb},
                       {"ssim_window", s.ssim_window},
                       {"face_size", s.face_size},
                       {"detector_tolerance", s.detector_tolerance}};
}

void from_json(const nlohmann::json& j, EvalSettings& s)
{
    reject_unknown_keys(j,
                        {"metrics", "kec_thresholds", "retrieval_ks", "identity_thresholds", "embedder_seed",
                         "embedder_dim", "embedder_thumb", "ssim_window", "face_size", "detector_tolerance"},
                        "eval");
    const EvalSettings d;
    s.metrics = j.value("metrics", d.metrics);
    s.kec_thresholds = j.value("kec_thresholds", d.kec_thresholds);
    s.retrieval_ks = j.value("retrieval_ks", d.retrieval_ks);
    s.identity_thresholds = j.value("identity_thresholds", d.identity_thresholds);
    s.embedder_seed = j.value("embedder_seed", d.embedder_seed);
    s.embedder_dim = j.value("embedder_dim", d.embedder_dim);
    s.embedder_thumb = j.value("embedder_thumb", d.embedder_thumb);
    s.ssim_window = j.value("ssim_window", d.ssim_window);
    s.face_size = j.value("face_size", d.face_size);
    s.detector_tolerance = j.value("detector_tolerance", d.detector_tolerance);
}

const std::vector<std::string>& known_metrics()
{
    static const std::vector<std::string> names = {"ssim",          "fid",       "perceptual",
                                                   "face_identity", "retrieval", "kec"};
    return names;
}

void to_json(nlohmann::json& j, const RunConfig& c)
{
    j = c.train;
    j["eval"] = c.eval;
}

void from_json(const nlohmann::json& j, RunConfig& c)
{
    if (!j.is_object()) throw ConfigError("run config must be a JSON object");
    nlohmann::json train = j;
    c.eval = EvalSettings{};
    if (train.contains("eval")) {
        c.eval = train["eval"].get<EvalSettings>();
        train.erase("eval");
    }
    c.train = train.get<TrainConfig>();
}

RunConfig load_run_config(const fs::path& path)
{
    if (!fs::is_regular_file(path)) throw ConfigError("config file " + path.string() + " does not exist");
    try {
        RunConfig c = nlohmann::json::parse(read_file(path)).get<RunConfig>();
        c.train.validate();
        c.eval.validate();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

std::string resolve_data_root(const std::string& flag, const std::string& configured)
{
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv(kDataRootEnv); env != nullptr && *env != '\0') return env;
    return configured;
}

// ---------------------------------------------------------------------------
// train

int cmd_train(const TrainCommand& cmd)
{
    const bool resuming = !cmd.resume.empty();
    if (!resuming && cmd.config.empty()) throw ConfigError("--config is required");
    const fs::path out = cmd.out.empty() ? cmd.resume : cmd.out;
    if (out.empty()) throw ConfigError("--out is required");

    TrainConfig config;
    if (!cmd.config.empty()) config = load_run_config(cmd.config).train;
    std::optional<nlohmann::json> prior;
    if (resuming) {
        prior = read_manifest(cmd.resume);
        const std::string kind = prior->value("kind", "");
        if (kind != (cmd.face ? "face" : "global"))
            throw ConfigError(cmd.resume.string() + " holds a " + kind + " checkpoint");
        if (cmd.config.empty()) config = prior->at("config").get<TrainConfig>();
        if (prior->value("finished", false)) {
            std::cout << "run in " << cmd.resume.string() << " already finished at step "
                      << prior->at("global_step").get<long>() << "\n";
            return kExitOk;
        }
    }
    config.data_root = resolve_data_root(cmd.data.string(), config.data_root);
    if (config.data_root.empty())
        throw ConfigError(std::string("no data root: pass --data, set ") + kDataRootEnv + " or data_root in the config");
    if (!fs::is_directory(config.data_root)) throw IoError("data root " + config.data_root + " is not a directory");
    require_file(fs::path(config.data_root) / config.train_pairs, "pair index");
    config.validate();

    if (resuming && fs::weakly_canonical(cmd.resume) != fs::weakly_canonical(out)) {
        fs::create_directories(out);
        for (const auto& entry : fs::directory_iterator(cmd.resume))
            if (entry.is_regular_file())
                fs::copy_file(entry.path(), out / entry.path().filename(), fs::copy_options::overwrite_existing);
    }

    const auto progress = [](long step, const std::map<std::string, double>& m) {
        if (step % 10 != 0 && step != 1) return;
        std::cout << "step " << step;
        for (const auto& [k, v] : m) std::cout << " " << k << "=" << v;
        std::cout << "\n";
    };
    const nlohmann::json manifest =
        cmd.face ? fit_face(config, out, resuming, progress) : fit(config, out, resuming, progress);
    std::cout << "finished at step " << manifest.at("global_step").get<long>() << "; checkpoint in " << out.string()
              << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// infer

InferenceResult run_inference(const GlobalModel& model, const FaceModel* face, const Tensor<float>& source,
                              const Annotation& source_annotation, const Annotation& target_annotation,
                              bool allow_face)
{
    const NetConfig& net = model.config.net;
    const Index h = net.height, w = net.width;
    if (source.shape() != Shape{1, 3, h, w})
        throw DimensionError("source image is " + source.shape().str() + ", model expects 1x3x" + std::to_string(h) +
                             "x" + std::to_string(w));
    validate_keypoints(source_annotation.keypoints, static_cast<double>(w), static_cast<double>(h));
    validate_keypoints(target_annotation.keypoints, static_cast<double>(w), static_cast<double>(h));

    NoGradGuard guard;
    const double sigma = model.config.heatmap_sigma;
    const Var<float> src = constant(source);
    const Var<float> src_pose = constant(encode_pose_heatmaps<float>(source_annotation.keypoints, h, w, sigma));
    const Var<float> tgt_pose = constant(encode_pose_heatmaps<float>(target_annotation.keypoints, h, w, sigma));
    const TransferOutput<float> t = model.transfer->forward(src, src_pose, tgt_pose);
    const Var<float> residual = model.detail->forward(src, t.guidance);

    InferenceResult out;
    std::optional<Var<float>> pasted;
    Tensor<float> mask(Shape{1, 1, h, w});
    if (allow_face && face != nullptr) {
        const bool has_face = source_annotation.face_bbox && target_annotation.face_bbox &&
                              target_annotation.face_landmarks && !target_annotation.face_landmarks->empty();
        if (!has_face) {
            std::cerr << "warning: face box or landmarks missing; using the global path only\n";
        } else {
            try {
                const Index size = face->config.net.face_size;
                const FaceBox& src_box = *source_annotation.face_bbox;
                const FaceBox& tgt_box = *target_annotation.face_bbox;
                const Var<float> style = face->face->encode_style(constant(crop_resize_face(source, src_box, size)));
                const Tensor<float> sketch = encode_landmark_sketch<float>(
                    landmarks_to_crop(*target_annotation.face_landmarks, tgt_box, size), size, size,
                    face->config.face.sketch_radius);
                const Var<float> generated = face->face->generate_face(style, constant(sketch));
                const BlendMask<float> blend = face_blend_mask<float>(tgt_box, model.config.blend_sigma, h, w);
                if (blend.degenerate) {
                    std::cerr << "warning: target face box is degenerate; using the global path only\n";
                } else {
                    pasted = constant(paste_face(generated.value(), tgt_box, h, w));
                    mask = blend.mask;
                    out.face_used = true;
                }
            } catch (const FaceTooSmallError& e) {
                std::cerr << "warning: " << e.what() << "; using the global path only\n";
            }
        }
    }
    out.final_image = compose_final(t.coarse, residual, pasted, mask).value();
    out.coarse = t.coarse.value();
    out.residual = residual.value();
    out.guidance = t.guidance.value();
    return out;
}

namespace {

struct LoadedInput {
    Preprocessed source;
    Annotation target;
};

LoadedInput load_inference_input(const NetConfig& net, const fs::path& source, const fs::path& source_ann,
                                 const fs::path& target_ann)
{
    require_file(source, "source image");
    require_file(source_ann, "source annotation");
    require_file(target_ann, "target annotation");
    const RgbImage img = read_png(source);
    LoadedInput in;
    in.source = preprocess(img, load_annotation(source_ann), net.height, net.width, source.string());
    // The target annotation lives in the same raw frame as the source image.
    in.target = shift_annotation(load_annotation(target_ann), static_cast<double>(in.source.crop_offset), net.height,
                                 net.width);
    return in;
}

}  // namespace

int cmd_infer(const InferCommand& cmd)
{
    if (cmd.checkpoint.empty() || cmd.source.empty() || cmd.source_annotation.empty() ||
        cmd.target_annotation.empty() || cmd.out.empty())
        throw ConfigError("--ckpt, --source, --source-ann, --target-ann and --out are required");
    const GlobalModel model = load_global_model(cmd.checkpoint);
    std::optional<FaceModel> face;
    if (!cmd.face_checkpoint.empty() && !cmd.no_face) face = load_face_model(cmd.face_checkpoint);
    const LoadedInput in = load_inference_input(model.config.net, cmd.source, cmd.source_annotation,
                                                cmd.target_annotation);
    const InferenceResult r = run_inference(model, face ? &*face : nullptr, in.source.image, in.source.annotation,
                                            in.target, !cmd.no_face);

    if (cmd.out.has_parent_path()) fs::create_directories(cmd.out.parent_path());
    write_tensor_png(r.final_image, cmd.out);
    if (cmd.debug) {
        const fs::path dir = cmd.out.parent_path() / "debug";
        fs::create_directories(dir);
        write_tensor_png(r.coarse, dir / (cmd.out.stem().string() + "_coarse.png"));
        write_tensor_png(r.residual, dir / (cmd.out.stem().string() + "_residual.png"));
    }
    std::cout << "wrote " << cmd.out.string() << (r.face_used ? " (face module applied)" : "") << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// eval

namespace {

struct EvalItem {
    std::string stem;
    std::string target;
    std::optional<std::string> source;
    Tensor<float> pred;
    RgbImage pred_raw;
    Tensor<float> gt;
    Annotation gt_annotation;
    std::optional<Preprocessed> source_sample;
    std::optional<Annotation> pred_annotation;
};

std::vector<fs::path> list_pngs(const fs::path& dir)
{
    if (!fs::is_directory(dir)) throw IoError(dir.string() + " is not a directory");
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

Preprocessed load_reference(const fs::path& gt, const fs::path& ann, const std::string& stem, Index h, Index w)
{
    const fs::path img_path = gt / (stem + ".png");
    const fs::path ann_path = ann / (stem + ".json");
    if (!fs::is_regular_file(img_path)) throw ProtocolError("no ground-truth image " + img_path.string());
    if (!fs::is_regular_file(ann_path)) throw ProtocolError("no annotation " + ann_path.string());
    return preprocess(read_png(img_path), load_annotation(ann_path), h, w, img_path.string());
}

std::vector<EvalItem> load_items(const fs::path& pred, const fs::path& gt, const fs::path& ann)
{
    std::vector<EvalItem> items;
    for (const fs::path& p : list_pngs(pred)) {
        EvalItem it;
        it.stem = p.stem().string();
        const auto sep = it.stem.find("__");
        it.target = sep == std::string::npos ? it.stem : it.stem.substr(sep + 2);
        if (sep != std::string::npos) it.source = it.stem.substr(0, sep);
        it.pred_raw = read_png(p);
        it.pred = image_to_tensor<float>(it.pred_raw);
        Preprocessed ref = load_reference(gt, ann, it.target, it.pred.h(), it.pred.w());
        it.gt = std::move(ref.image);
        it.gt_annotation = std::move(ref.annotation);
        if (it.source) it.source_sample = load_reference(gt, ann, *it.source, it.pred.h(), it.pred.w());
        const fs::path pred_ann = pred / (it.stem + ".json");
        if (fs::is_regular_file(pred_ann)) it.pred_annotation = load_annotation(pred_ann);
        items.push_back(std::move(it));
    }
    if (items.empty()) throw ProtocolError("no prediction images in " + pred.string());
    return items;
}

Eigen::MatrixXd pooled_features(const std::vector<const Tensor<float>*>& images, const FeatureExtractor<float>& fx)
{
    NoGradGuard guard;
    Eigen::MatrixXd out;
    for (std::size_t i = 0; i < images.size(); ++i) {
        const Tensor<float>& f = fx.features(constant(*images[i])).back().value();
        const Eigen::VectorXd v = f.sample_matrix(0).cast<double>().rowwise().mean();
        if (i == 0) out.resize(static_cast<Index>(images.size()), v.size());
        out.row(static_cast<Index>(i)) = v.transpose();
    }
    return out;
}

nlohmann::json scalar_metric(double value, std::size_t n)
{
    return {{"value", value}, {"n", n}};
}

KeypointSet body_set(const Keypoints& kp)
{
    KeypointSet s{PartGroup::Body, {}};
    for (const Keypoint& k : kp) s.points.push_back({k.x, k.y, k.visible});
    return s;
}

KeypointSet face_set(const std::vector<Point2>& pts)
{
    KeypointSet s{PartGroup::Face, {}};
    for (const Point2& p : pts) s.points.push_back({p.x, p.y, true});
    return s;
}

nlohmann::json eval_kec(const std::vector<EvalItem>& items, const EvalSettings& settings)
{
    std::vector<KeypointSet> pred, gt;
    for (const EvalItem& it : items) {
        KeypointSet body_pred, face_pred{PartGroup::Face, {}};
        if (it.pred_annotation) {
            body_pred = body_set(it.pred_annotation->keypoints);
            if (it.pred_annotation->face_landmarks) face_pred = face_set(*it.pred_annotation->face_landmarks);
        } else {
            const auto found = detect_toy_markers(it.pred_raw, settings.detector_tolerance);
            body_pred.group = PartGroup::Body;
            for (int k = 0; k < kNumJoints; ++k) body_pred.points.push_back(found[static_cast<std::size_t>(k)]);
            for (int k : kToyFaceMarkers) face_pred.points.push_back(found[static_cast<std::size_t>(k)]);
        }
        pred.push_back(std::move(body_pred));
        gt.push_back(body_set(it.gt_annotation.keypoints));
        if (it.gt_annotation.face_landmarks && it.gt_annotation.face_landmarks->size() == face_pred.points.size()) {
            pred.push_back(std::move(face_pred));
            gt.push_back(face_set(*it.gt_annotation.face_landmarks));
        }
    }
    nlohmann::json groups = nlohmann::json::object();
    for (const auto& [group, curve] : keypoint_error_curve(pred, gt, settings.kec_thresholds))
        groups[to_string(group)] = error_curve_json(curve);
    return {{"comparison", "<="}, {"hand_threshold_scale", 2.0}, {"groups", groups}};
}

}  // namespace

EvalReport evaluate_directories(const fs::path& pred, const fs::path& gt, const fs::path& ann,
                                const std::vector<std::string>& metrics, const EvalSettings& settings,
                                const ExtractorProvenance& extractor)
{
    const std::vector<EvalItem> items = load_items(pred, gt, ann);
    const auto wants = [&](const char* name) { return std::find(metrics.begin(), metrics.end(), name) != metrics.end(); };
    EvalReport report;
    const Embedder embedder =
        Embedder::fixed_random(settings.embedder_seed, settings.embedder_dim, settings.embedder_thumb);

    if (wants("ssim")) {
        double total = 0;
        for (const EvalItem& it : items) total += ssim(it.pred, it.gt, SsimOptions{settings.ssim_window});
        report.metrics["ssim"] = scalar_metric(total / static_cast<double>(items.size()), items.size());
    }
    if (wants("perceptual") || wants("fid")) {
        const FeatureExtractor<float> fx = FeatureExtractor<float>::from_provenance(extractor);
        report.provenance["extractor"] = extractor;
        if (wants("perceptual")) {
            double total = 0;
            for (const EvalItem& it : items) total += paired_perceptual_distance(it.pred, it.gt, fx);
            report.metrics["perceptual"] = scalar_metric(total / static_cast<double>(items.size()), items.size());
        }
        if (wants("fid")) {
            std::vector<const Tensor<float>*> a, b;
            for (const EvalItem& it : items) {
                a.push_back(&it.pred);
                b.push_back(&it.gt);
            }
            report.metrics["fid"] =
                scalar_metric(frechet_distance(pooled_features(a, fx), pooled_features(b, fx)), items.size());
        }
    }
    if (wants("face_identity")) {
        std::vector<std::pair<Tensor<float>, Tensor<float>>> pairs;
        for (const EvalItem& it : items) {
            const Tensor<float>& ref = it.source_sample ? it.source_sample->image : it.gt;
            const Annotation& ref_ann = it.source_sample ? it.source_sample->annotation : it.gt_annotation;
            if (!ref_ann.face_bbox || !it.gt_annotation.face_bbox) continue;
            try {
                pairs.emplace_back(crop_resize_face(ref, *ref_ann.face_bbox, settings.face_size),
                                   crop_resize_face(it.pred, *it.gt_annotation.face_bbox, settings.face_size));
            } catch (const FaceTooSmallError& e) {
                std::cerr << "warning: " << it.stem << ": " << e.what() << "; skipped for face identity\n";
            }
        }
        const IdentityResult r = face_identity_eval(pairs, embedder, settings.identity_thresholds);
        nlohmann::json acc = nlohmann::json::object();
        for (const auto& [eps, value] : r.accuracy) acc[format_number(eps)] = value;
        report.metrics["face_identity"] = {
            {"mean_l2", r.mean_distance}, {"accuracy", acc}, {"degenerate_embedder", r.degenerate_embedder}, {"n", r.n}};
        if (r.degenerate_embedder) std::cerr << "warning: face embedder maps distinct crops to one vector\n";
    }
    if (wants("retrieval")) {
        std::vector<std::pair<Tensor<float>, std::string>> queries, database;
        for (const EvalItem& it : items) {
            if (!it.gt_annotation.item_id)
                throw ProtocolError("annotation for " + it.target + " has no item_id, required for retrieval");
            queries.emplace_back(it.pred, *it.gt_annotation.item_id);
        }
        for (const fs::path& p : list_pngs(gt)) {
            const fs::path a = ann / (p.stem().string() + ".json");
            if (!fs::is_regular_file(a)) continue;
            Preprocessed ref = preprocess(read_png(p), load_annotation(a), items[0].pred.h(), items[0].pred.w(),
                                          p.string());
            if (ref.annotation.item_id) database.emplace_back(std::move(ref.image), *ref.annotation.item_id);
        }
        const std::map<int, double> recall = retrieval_recall(queries, database, embedder, settings.retrieval_ks);
        nlohmann::json table = nlohmann::json::object();
        for (const auto& [k, v] : recall) table[std::to_string(k)] = v;
        report.metrics["retrieval"] = {
            {"recall", table}, {"n_queries", queries.size()}, {"database_size", database.size()}};
    }
    if (wants("kec")) {
        report.metrics["kec"] = eval_kec(items, settings);
        report.provenance["keypoints"] = {{"predicted", "annotation file when present, else toy color detector"},
                                          {"detector_tolerance", settings.detector_tolerance}};
    }
    if (wants("face_identity") || wants("retrieval")) report.provenance["embedder"] = embedder.provenance();
    report.config = {{"metrics", metrics}, {"eval", settings}, {"pred", pred.string()}, {"gt", gt.string()},
                     {"ann", ann.string()}, {"n_predictions", items.size()}};
    return report;
}

int cmd_eval(const EvalCommand& cmd)
{
    EvalSettings settings;
    ExtractorProvenance extractor;
    if (!cmd.config.empty()) {
        const RunConfig rc = load_run_config(cmd.config);
        settings = rc.eval;
        extractor = rc.train.extractor;
    }
    std::vector<std::string> metrics = cmd.metrics.empty() ? settings.metrics : split_list(cmd.metrics);
    for (const auto& m : metrics)
        if (std::find(known_metrics().begin(), known_metrics().end(), m) == known_metrics().end()) {
            std::string valid;
            for (const auto& k : known_metrics()) valid += (valid.empty() ? "" : ", ") + k;
            throw ConfigError("unknown metric '" + m + "'; valid metrics: " + valid);
        }
    if (metrics.empty()) throw ConfigError("no metrics selected");
    if (cmd.pred.empty() || cmd.gt.empty() || cmd.ann.empty() || cmd.report.empty())
        throw ConfigError("--pred, --gt, --ann and --report are required");

    const EvalReport report = evaluate_directories(cmd.pred, cmd.gt, cmd.ann, metrics, settings, extractor);
    if (cmd.report.has_parent_path()) fs::create_directories(cmd.report.parent_path());
    report.save(cmd.report);
    std::cout << report.metrics.dump(2) << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// synth-data, viz-guidance

int cmd_synth_data(const SynthCommand& cmd)
{
    if (cmd.out.empty()) throw ConfigError("--out is required");
    cmd.synth.validate();
    const SynthManifest m = synth_toy_dataset(cmd.synth, cmd.out);
    std::cout << "wrote " << m.stems.size() << " samples, " << m.train_pairs.size() << " train and "
              << m.test_pairs.size() << " test pairs to " << cmd.out.string() << "\n";
    return kExitOk;
}

int cmd_viz_guidance(const VizCommand& cmd)
{
    if (cmd.checkpoint.empty() || cmd.source.empty() || cmd.source_annotation.empty() ||
        cmd.target_annotation.empty() || cmd.out.empty())
        throw ConfigError("--ckpt, --source, --source-ann, --target-ann and --out are required");
    const GlobalModel model = load_global_model(cmd.checkpoint);
    const LoadedInput in = load_inference_input(model.config.net, cmd.source, cmd.source_annotation,
                                                cmd.target_annotation);
    const InferenceResult r = run_inference(model, nullptr, in.source.image, in.source.annotation, in.target, false);
    if (cmd.out.has_parent_path()) fs::create_directories(cmd.out.parent_path());
    write_tensor_png(pca_visualize_guidance(r.guidance), cmd.out);
    std::cout << "wrote " << cmd.out.string() << " (" << r.guidance.h() << "x" << r.guidance.w() << ")\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------

int report_failure(const std::exception& e)
{
    std::cerr << "error: " << e.what() << "\n";
    if (dynamic_cast<const DivergenceError*>(&e)) return kExitDivergence;
    if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const fs::filesystem_error*>(&e)) return kExitIo;
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const AnnotationError*>(&e) ||
        dynamic_cast<const IngestionError*>(&e) || dynamic_cast<const ProtocolError*>(&e) ||
        dynamic_cast<const nlohmann::json::exception*>(&e))
        return kExitUsage;
    return 1;
}

int cli_main(int argc, char** argv)
{
    CLI::App app{"Pose transfer with detail replenishing: training, inference and evaluation", "drn"};
    app.require_subcommand(1);

    TrainCommand train;
    auto* t = app.add_subcommand("train", "Train the global model, or the face module with --face");
    t->add_option("--config", train.config, "Run config JSON");
    t->add_option("--data", train.data, "Dataset root (overrides the environment and config)");
    t->add_option("--out", train.out, "Output directory; defaults to the --resume directory");
    t->add_option("--resume", train.resume, "Checkpoint directory to continue from");
    t->add_flag("--face", train.face, "Train the face module instead of the global model");

    InferCommand infer;
    auto* i = app.add_subcommand("infer", "Render a source person under a target pose");
    i->add_option("--ckpt", infer.checkpoint, "Global-model checkpoint directory")->required();
    i->add_option("--face-ckpt", infer.face_checkpoint, "Face-module checkpoint directory");
    i->add_option("--source", infer.source, "Source image (PNG)")->required();
    i->add_option("--source-ann", infer.source_annotation, "Source annotation JSON")->required();
    i->add_option("--target-ann", infer.target_annotation, "Target annotation JSON")->required();
    i->add_option("--out", infer.out, "Output image (PNG)")->required();
    i->add_flag("--no-face", infer.no_face, "Skip the face module");
    i->add_flag("--debug", infer.debug, "Also write the coarse image and the residual");

    EvalCommand eval;
    auto* e = app.add_subcommand("eval", "Score predictions against ground truth and write a JSON report");
    e->add_option("--pred", eval.pred, "Directory of predicted PNGs named <target> or <source>__<target>")->required();
    e->add_option("--gt", eval.gt, "Directory of ground-truth PNGs")->required();
    e->add_option("--ann", eval.ann, "Directory of ground-truth annotations")->required();
    std::string metric_help = "Comma-separated metrics:";
    for (const auto& m : known_metrics()) metric_help += " " + m;
    e->add_option("--metrics", eval.metrics, metric_help);
    e->add_option("--report", eval.report, "Report path")->required();
    e->add_option("--config", eval.config, "Run config whose eval section sets the options");

    SynthCommand synth;
    auto* s = app.add_subcommand("synth-data", "Render the synthetic toy dataset");
    s->add_option("--out", synth.out, "Output directory")->required();
    s->add_option("--seed", synth.synth.seed, "Random seed")->capture_default_str();
    s->add_option("--identities", synth.synth.n_identities, "Number of identities")->capture_default_str();
    s->add_option("--poses", synth.synth.poses_per_identity, "Poses per identity")->capture_default_str();
    s->add_option("--test-identities", synth.synth.test_identities, "Identities held out (-1: a quarter)")
        ->capture_default_str();
    s->add_option("--height", synth.synth.height, "Image height")->capture_default_str();
    s->add_option("--raw-width", synth.synth.raw_width, "Stored image width")->capture_default_str();
    s->add_option("--crop-width", synth.synth.crop_width, "Width after center crop")->capture_default_str();

    VizCommand viz;
    auto* v = app.add_subcommand("viz-guidance", "Write the PCA visualization of a guidance map");
    v->add_option("--ckpt", viz.checkpoint, "Global-model checkpoint directory")->required();
    v->add_option("--source", viz.source, "Source image (PNG)")->required();
    v->add_option("--source-ann", viz.source_annotation, "Source annotation JSON")->required();
    v->add_option("--target-ann", viz.target_annotation, "Target annotation JSON")->required();
    v->add_option("--out", viz.out, "Output image (PNG)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        const int code = app.exit(err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (t->parsed()) return cmd_train(train);
        if (i->parsed()) return cmd_infer(infer);
        if (e->parsed()) return cmd_eval(eval);
        if (s->parsed()) return cmd_synth_data(synth);
        if (v->parsed()) return cmd_viz_guidance(viz);
    } catch (const std::exception& ex) {
        return report_failure(ex);
    }
    return kExitUsage;
}

}  // namespace drn
