#include "drn/eval_suite.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "drn/checkpoint.hpp"

namespace drn {

std::string to_string(PartGroup g)
{
    switch (g) {
    case PartGroup::Body: return "body";
    case PartGroup::Face: return "face";
    case PartGroup::LeftHand: return "left_hand";
    case PartGroup::RightHand: return "right_hand";
    }
    return "body";
}

PartGroup part_group_from_string(const std::string& name)
{
    for (PartGroup g : {PartGroup::Body, PartGroup::Face, PartGroup::LeftHand, PartGroup::RightHand})
        if (to_string(g) == name) return g;
    throw ProtocolError("unknown part group '" + name + "'");
}

std::map<PartGroup, ErrorCurve> keypoint_error_curve(const std::vector<KeypointSet>& pred,
                                                     const std::vector<KeypointSet>& gt,
                                                     const std::vector<double>& thresholds)
{
    if (pred.size() != gt.size())
        throw ProtocolError("keypoint lists are misaligned: " + std::to_string(pred.size()) + " predicted vs " +
                            std::to_string(gt.size()) + " ground-truth sets");
    if (thresholds.empty()) throw ProtocolError("threshold list is empty");
    if (!std::is_sorted(thresholds.begin(), thresholds.end()) || thresholds.front() < 0)
        throw ProtocolError("thresholds must be ascending and non-negative");

    struct Tally {
        std::vector<double> hits;
        double total = 0;
        std::size_t cardinality = 0;
        bool seen = false;
    };
    std::map<PartGroup, Tally> tallies;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        const KeypointSet& p = pred[i];
        const KeypointSet& g = gt[i];
        if (p.group != g.group)
            throw ProtocolError("set " + std::to_string(i) + ": predicted group " + to_string(p.group) +
                                " vs ground-truth group " + to_string(g.group));
        if (p.points.size() != g.points.size())
            throw ProtocolError("set " + std::to_string(i) + ": " + std::to_string(p.points.size()) +
                                " predicted vs " + std::to_string(g.points.size()) + " ground-truth points");
        if (g.group == PartGroup::Body && g.points.size() != kNumJoints)
            throw ProtocolError("set " + std::to_string(i) + ": body sets need " + std::to_string(kNumJoints) +
                                " points");
        Tally& t = tallies[g.group];
        if (t.seen && t.cardinality != g.points.size())
            throw ProtocolError("group " + to_string(g.group) + " mixes cardinalities " +
                                std::to_string(t.cardinality) + " and " + std::to_string(g.points.size()));
        if (!t.seen) t.hits.assign(thresholds.size(), 0.0);
        t.seen = true;
        t.cardinality = g.points.size();

        const double scale = (g.group == PartGroup::LeftHand || g.group == PartGroup::RightHand) ? 2.0 : 1.0;
        for (std::size_t k = 0; k < g.points.size(); ++k) {
            const DetectedPoint& gp = g.points[k];
            if (!gp.detected) continue;
            t.total += 1;
            const DetectedPoint& pp = p.points[k];
            if (!pp.detected) continue;
            const double d = std::hypot(pp.x - gp.x, pp.y - gp.y);
            for (std::size_t a = 0; a < thresholds.size(); ++a)
                if (d <= scale * thresholds[a]) t.hits[a] += 1;
        }
    }

    std::map<PartGroup, ErrorCurve> out;
    for (const auto& [group, t] : tallies) {
        const double scale = (group == PartGroup::LeftHand || group == PartGroup::RightHand) ? 2.0 : 1.0;
        ErrorCurve c;
        c.cardinality = t.cardinality;
        for (std::size_t a = 0; a < thresholds.size(); ++a) {
            c.thresholds.push_back(scale * thresholds[a]);
            c.accuracy.push_back(t.total > 0 ? t.hits[a] / t.total : 0.0);
        }
        out.emplace(group, std::move(c));
    }
    return out;
}

// ---------------------------------------------------------------------------

Eigen::VectorXd area_thumbnail(const Tensor<float>& image, Index thumb)
{
    if (image.c() != 3) throw DimensionError("embedder expects a 3-channel image, got " + image.shape().str());
    const Index h = image.h(), w = image.w();
    Eigen::VectorXd out = Eigen::VectorXd::Zero(3 * thumb * thumb);
    Eigen::VectorXd count = Eigen::VectorXd::Zero(thumb * thumb);
    for (Index y = 0; y < h; ++y) {
        const Index ty = y * thumb / h;
        for (Index x = 0; x < w; ++x) {
            const Index tx = x * thumb / w;
            count[ty * thumb + tx] += 1;
            for (Index c = 0; c < 3; ++c) out[(c * thumb + ty) * thumb + tx] += image(0, c, y, x);
        }
    }
    for (Index c = 0; c < 3; ++c)
        for (Index i = 0; i < thumb * thumb; ++i)
            if (count[i] > 0) out[c * thumb * thumb + i] /= count[i];
    return out;
}

Embedder Embedder::fixed_random(std::uint64_t seed, Index dim, Index thumb)
{
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const Index in = 3 * thumb * thumb;
    Eigen::MatrixXd proj(dim, in);
    for (Index i = 0; i < dim; ++i)
        for (Index j = 0; j < in; ++j) proj(i, j) = normal(rng) / std::sqrt(static_cast<double>(in));
    auto fn = [proj, thumb](const Tensor<float>& img) -> Eigen::VectorXd {
        Eigen::VectorXd v = proj * area_thumbnail(img, thumb);
        const double n = v.norm();
        return n > 0 ? Eigen::VectorXd(v / n) : v;
    };
    return Embedder(fn, {{"tag", "fixed-random"}, {"seed", seed}, {"dim", dim}, {"thumb", thumb}});
}

Embedder Embedder::thumbnail(Index thumb)
{
    return Embedder([thumb](const Tensor<float>& img) { return area_thumbnail(img, thumb); },
                    {{"tag", "thumbnail"}, {"thumb", thumb}});
}

IdentityResult identity_from_distances(const std::vector<double>& distances, const std::vector<double>& eps)
{
    if (distances.empty()) throw ProtocolError("face identity evaluation needs at least one pair");
    IdentityResult r;
    r.n = distances.size();
    r.mean_distance = std::accumulate(distances.begin(), distances.end(), 0.0) / static_cast<double>(distances.size());
    for (double e : eps) {
        const auto hits = std::count_if(distances.begin(), distances.end(), [e](double d) { return d < e; });
        r.accuracy[e] = static_cast<double>(hits) / static_cast<double>(distances.size());
    }
    return r;
}

IdentityResult face_identity_eval(const std::vector<std::pair<Tensor<float>, Tensor<float>>>& pairs,
                                  const Embedder& emb, const std::vector<double>& eps)
{
    if (pairs.empty()) throw ProtocolError("face identity evaluation needs at least one pair");
    std::vector<double> distances;
    std::vector<Eigen::VectorXd> embeddings;
    std::vector<const Tensor<float>*> inputs;
    for (const auto& [src, gen] : pairs) {
        if (!src.all_finite() || !gen.all_finite()) throw ProtocolError("face crop contains non-finite values");
        const Eigen::VectorXd a = emb(src), b = emb(gen);
        distances.push_back((a - b).norm());
        embeddings.push_back(a);
        embeddings.push_back(b);
        inputs.push_back(&src);
        inputs.push_back(&gen);
    }
    IdentityResult r = identity_from_distances(distances, eps);
    // Canary: distinct crops that all map to one embedding make the accuracy meaningless.
    bool distinct_inputs = false, distinct_outputs = false;
    for (std::size_t i = 1; i < inputs.size(); ++i) {
        distinct_inputs = distinct_inputs || inputs[i]->shape() != inputs[0]->shape() ||
                          (inputs[i]->array() != inputs[0]->array()).any();
        distinct_outputs = distinct_outputs || (embeddings[i] - embeddings[0]).norm() > 1e-12;
    }
    r.degenerate_embedder = distinct_inputs && !distinct_outputs;
    return r;
}

std::map<int, double> retrieval_recall_from_embeddings(const std::vector<Eigen::VectorXd>& queries,
                                                       const std::vector<std::string>& query_ids,
                                                       const std::vector<Eigen::VectorXd>& database,
                                                       const std::vector<std::string>& database_ids,
                                                       const std::vector<int>& ks)
{
    if (queries.size() != query_ids.size() || database.size() != database_ids.size())
        throw ProtocolError("retrieval: embeddings and ids are misaligned");
    if (queries.empty() || database.empty()) throw ProtocolError("retrieval: empty query set or database");
    for (int k : ks)
        if (k < 1) throw ProtocolError("retrieval: K must be >= 1");

    std::vector<std::size_t> ranks;  // 1-based rank of the first positive
    for (std::size_t q = 0; q < queries.size(); ++q) {
        if (std::find(database_ids.begin(), database_ids.end(), query_ids[q]) == database_ids.end())
            throw ProtocolError("retrieval: query " + std::to_string(q) + " has no positive item '" + query_ids[q] +
                                "' in the database");
        std::vector<double> dist(database.size());
        for (std::size_t i = 0; i < database.size(); ++i) {
            if (database[i].size() != queries[q].size()) throw ProtocolError("retrieval: embedding sizes differ");
            dist[i] = (database[i] - queries[q]).norm();
        }
        std::vector<std::size_t> order(database.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
        for (std::size_t r = 0; r < order.size(); ++r)
            if (database_ids[order[r]] == query_ids[q]) {
                ranks.push_back(r + 1);
                break;
            }
    }
    std::map<int, double> out;
    for (int k : ks) {
        const auto hits =
            std::count_if(ranks.begin(), ranks.end(), [k](std::size_t r) { return r <= static_cast<std::size_t>(k); });
        out[k] = static_cast<double>(hits) / static_cast<double>(ranks.size());
    }
    return out;
}

std::map<int, double> retrieval_recall(const std::vector<std::pair<Tensor<float>, std::string>>& queries,
                                       const std::vector<std::pair<Tensor<float>, std::string>>& database,
                                       const Embedder& emb, const std::vector<int>& ks)
{
    std::vector<Eigen::VectorXd> qe, de;
    std::vector<std::string> qi, di;
    for (const auto& [img, id] : queries) {
        qe.push_back(emb(img));
        qi.push_back(id);
    }
    for (const auto& [img, id] : database) {
        de.push_back(emb(img));
        di.push_back(id);
    }
    return retrieval_recall_from_embeddings(qe, qi, de, di, ks);
}

namespace {

void moments(const Eigen::MatrixXd& x, Eigen::VectorXd& mu, Eigen::MatrixXd& cov)
{
    mu = x.colwise().mean().transpose();
    const Eigen::MatrixXd centered = x.rowwise() - mu.transpose();
    cov = centered.transpose() * centered / static_cast<double>(x.rows() - 1);
    cov.diagonal().array() += kCovarianceRidge;
}

}  // namespace

double frechet_distance_from_moments(const Eigen::VectorXd& mu_a, const Eigen::MatrixXd& cov_a,
                                     const Eigen::VectorXd& mu_b, const Eigen::MatrixXd& cov_b)
{
    const Index d = mu_a.size();
    if (mu_b.size() != d || cov_a.rows() != d || cov_a.cols() != d || cov_b.rows() != d || cov_b.cols() != d)
        throw ProtocolError("frechet_distance: dimension mismatch");
    // tr((S_a S_b)^½) = tr((S_a^½ S_b S_a^½)^½), whose argument is symmetric PSD.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ea(cov_a);
    const Eigen::VectorXd la = ea.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    const Eigen::MatrixXd sqrt_a = ea.eigenvectors() * la.asDiagonal() * ea.eigenvectors().transpose();
    const Eigen::MatrixXd inner = sqrt_a * cov_b * sqrt_a;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ei(0.5 * (inner + inner.transpose()), Eigen::EigenvaluesOnly);
    const double tr_sqrt = ei.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
    const double value = (mu_a - mu_b).squaredNorm() + cov_a.trace() + cov_b.trace() - 2.0 * tr_sqrt;
    return std::max(0.0, value);
}

double frechet_distance(const Eigen::MatrixXd& feats_a, const Eigen::MatrixXd& feats_b)
{
    if (feats_a.cols() != feats_b.cols())
        throw ProtocolError("frechet_distance: feature sizes " + std::to_string(feats_a.cols()) + " and " +
                            std::to_string(feats_b.cols()) + " differ");
    if (feats_a.rows() < 2 || feats_b.rows() < 2) throw ProtocolError("frechet_distance: need at least 2 samples per set");
    Eigen::VectorXd mu_a, mu_b;
    Eigen::MatrixXd cov_a, cov_b;
    moments(feats_a, mu_a, cov_a);
    moments(feats_b, mu_b, cov_b);
    return frechet_distance_from_moments(mu_a, cov_a, mu_b, cov_b);
}

double paired_perceptual_distance(const Tensor<float>& a, const Tensor<float>& b, const FeatureExtractor<float>& fx,
                                  const std::vector<double>& layer_weights)
{
    require_same_shape(a.shape(), b.shape(), "paired_perceptual_distance");
    NoGradGuard guard;
    const auto fa = fx.features(constant(a));
    const auto fb = fx.features(constant(b));
    if (!layer_weights.empty() && layer_weights.size() != fa.size())
        throw ProtocolError("paired_perceptual_distance: " + std::to_string(layer_weights.size()) +
                            " weights for " + std::to_string(fa.size()) + " layers");
    double total = 0.0;
    for (std::size_t l = 0; l < fa.size(); ++l) {
        const double w = layer_weights.empty() ? 1.0 : layer_weights[l];
        if (w == 0.0) continue;
        const Tensor<float>& ta = fa[l].value();
        const Tensor<float>& tb = fb[l].value();
        double acc = 0.0;
        for (Index n = 0; n < ta.n(); ++n) {
            const Eigen::MatrixXd ma = ta.sample_matrix(n).cast<double>();
            const Eigen::MatrixXd mb = tb.sample_matrix(n).cast<double>();
            const Eigen::RowVectorXd na = ma.colwise().norm().array() + 1e-10;
            const Eigen::RowVectorXd nb = mb.colwise().norm().array() + 1e-10;
            const Eigen::MatrixXd ua = ma.array().rowwise() / na.array();
            const Eigen::MatrixXd ub = mb.array().rowwise() / nb.array();
            acc += (ua - ub).colwise().squaredNorm().mean();
        }
        total += w * acc / static_cast<double>(ta.n());
    }
    return total;
}

double ssim(const Tensor<float>& a, const Tensor<float>& b, const SsimOptions& o)
{
    require_same_shape(a.shape(), b.shape(), "ssim");
    const Index h = a.h(), w = a.w(), k = o.window;
    if (k < 1 || k > h || k > w)
        throw ProtocolError("ssim: window " + std::to_string(k) + " does not fit a " + std::to_string(h) + "x" +
                            std::to_string(w) + " image");
    const double c1 = o.k1 * o.k1, c2 = o.k2 * o.k2;
    const double area = static_cast<double>(k * k);
    double total = 0.0;
    long count = 0;
    for (Index n = 0; n < a.n(); ++n)
        for (Index c = 0; c < a.c(); ++c) {
            const Eigen::ArrayXXd pa = (a.plane(n, c).cast<double>().array() + 1.0) * 0.5;
            const Eigen::ArrayXXd pb = (b.plane(n, c).cast<double>().array() + 1.0) * 0.5;
            for (Index y = 0; y + k <= h; ++y)
                for (Index x = 0; x + k <= w; ++x) {
                    const auto wa = pa.block(y, x, k, k);
                    const auto wb = pb.block(y, x, k, k);
                    const double ma = wa.sum() / area, mb = wb.sum() / area;
                    const double va = (wa - ma).square().sum() / area;
                    const double vb = (wb - mb).square().sum() / area;
                    const double cov = ((wa - ma) * (wb - mb)).sum() / area;
                    total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                    ++count;
                }
        }
    return total / static_cast<double>(count);
}

Tensor<float> pca_visualize_guidance(const Tensor<float>& features)
{
    if (!features.all_finite()) throw NumericError("guidance map contains non-finite values");
    const Index c = features.c(), h = features.h(), w = features.w();
    // Rows are spatial positions, columns channels.
    const Eigen::MatrixXd x = features.sample_matrix(0).cast<double>().transpose();
    const Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
    const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(std::max<Index>(1, x.rows()));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);

    Tensor<float> out(Shape{1, 3, h, w});
    const Index n_comp = std::min<Index>(3, c);
    std::vector<Eigen::VectorXd> proj;
    for (Index k = 0; k < n_comp; ++k) {
        Eigen::VectorXd v = es.eigenvectors().col(c - 1 - k);  // eigenvalues ascend
        Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v[arg] < 0) v = -v;
        proj.push_back(centered * v);
    }
    const double lead_range = proj.empty() ? 0.0 : proj[0].maxCoeff() - proj[0].minCoeff();
    for (Index k = 0; k < n_comp; ++k) {
        const Eigen::VectorXd& p = proj[static_cast<std::size_t>(k)];
        const double lo = p.minCoeff(), hi = p.maxCoeff();
        if (hi - lo <= 1e-6 * lead_range || hi - lo <= 1e-12) continue;  // no spread: stays mid-gray
        for (Index i = 0; i < h * w; ++i) out(0, k, i / w, i % w) = static_cast<float>(2.0 * (p[i] - lo) / (hi - lo) - 1.0);
    }
    return out;
}

// ---------------------------------------------------------------------------

nlohmann::json EvalReport::to_json() const
{
    return {{"schema", kReportSchemaId}, {"version", kReportVersion}, {"config", config}, {"provenance", provenance},
            {"metrics", metrics}};
}

EvalReport EvalReport::from_json(const nlohmann::json& doc)
{
    validate_report(doc);
    EvalReport r;
    r.config = doc.at("config");
    r.provenance = doc.at("provenance");
    r.metrics = doc.at("metrics");
    return r;
}

void EvalReport::save(const std::filesystem::path& path) const
{
    const nlohmann::json doc = to_json();
    validate_report(doc);
    write_file_atomic(path, doc.dump(2) + "\n");
}

EvalReport EvalReport::load(const std::filesystem::path& path)
{
    try {
        return from_json(nlohmann::json::parse(read_file(path)));
    } catch (const nlohmann::json::exception& e) {
        throw ProtocolError(path.string() + ": " + e.what());
    }
}

nlohmann::json error_curve_json(const ErrorCurve& c)
{
    return {{"thresholds", c.thresholds}, {"accuracy", c.accuracy}, {"cardinality", c.cardinality}};
}

ErrorCurve error_curve_from_json(const nlohmann::json& j)
{
    ErrorCurve c;
    c.thresholds = j.at("thresholds").get<std::vector<double>>();
    c.accuracy = j.at("accuracy").get<std::vector<double>>();
    c.cardinality = j.at("cardinality").get<std::size_t>();
    return c;
}

const nlohmann::json& eval_report_schema()
{
    static const nlohmann::json schema = nlohmann::json::parse(R"JSON(
{
  "$schema": "http://json-schema.org/draft-07/schema#",
  "$id": "drn-eval-report",
  "title": "Evaluation report",
  "type": "object",
  "required": ["schema", "version", "config", "provenance", "metrics"],
  "additionalProperties": false,
  "properties": {
    "schema": {"const": "drn-eval-report"},
    "version": {"const": 1},
    "config": {"type": "object"},
    "provenance": {"type": "object"},
    "metrics": {
      "type": "object",
      "additionalProperties": false,
      "properties": {
        "ssim": {"$ref": "#/definitions/scalar"},
        "fid": {"$ref": "#/definitions/scalar"},
        "perceptual": {"$ref": "#/definitions/scalar"},
        "face_identity": {
          "type": "object",
          "required": ["mean_l2", "accuracy", "degenerate_embedder", "n"],
          "properties": {
            "mean_l2": {"type": "number", "minimum": 0},
            "accuracy": {"type": "object", "additionalProperties": {"$ref": "#/definitions/fraction"}},
            "degenerate_embedder": {"type": "boolean"},
            "n": {"type": "integer", "minimum": 1}
          }
        },
        "retrieval": {
          "type": "object",
          "required": ["recall", "n_queries", "database_size"],
          "properties": {
            "recall": {"type": "object", "additionalProperties": {"$ref": "#/definitions/fraction"}},
            "n_queries": {"type": "integer", "minimum": 1},
            "database_size": {"type": "integer", "minimum": 1}
          }
        },
        "kec": {
          "type": "object",
          "required": ["comparison", "hand_threshold_scale", "groups"],
          "properties": {
            "comparison": {"const": "<="},
            "hand_threshold_scale": {"type": "number", "minimum": 1},
            "groups": {"type": "object", "additionalProperties": {"$ref": "#/definitions/curve"}}
          }
        }
      }
    }
  },
  "definitions": {
    "fraction": {"type": "number", "minimum": 0, "maximum": 1},
    "scalar": {
      "type": "object",
      "required": ["value", "n"],
      "properties": {
        "value": {"type": "number"},
        "n": {"type": "integer", "minimum": 1}
      }
    },
    "curve": {
      "type": "object",
      "required": ["thresholds", "accuracy", "cardinality"],
      "properties": {
        "thresholds": {"type": "array", "minItems": 1, "items": {"type": "number", "minimum": 0}},
        "accuracy": {"type": "array", "minItems": 1, "items": {"$ref": "#/definitions/fraction"}},
        "cardinality": {"type": "integer", "minimum": 0}
      }
    }
  }
}
)JSON");
    return schema;
}

namespace {

bool type_matches(const nlohmann::json& v, const std::string& type)
{
    if (type == "object") return v.is_object();
    if (type == "array") return v.is_array();
    if (type == "string") return v.is_string();
    if (type == "boolean") return v.is_boolean();
    if (type == "null") return v.is_null();
    if (type == "number") return v.is_number();
    if (type == "integer")
        return v.is_number_integer() || (v.is_number_float() && std::floor(v.get<double>()) == v.get<double>());
    return false;
}

void check(const nlohmann::json& doc, const nlohmann::json& schema, const nlohmann::json& root, const std::string& at,
           std::vector<std::string>& errors)
{
    if (schema.contains("$ref")) {
        const std::string ref = schema["$ref"].get<std::string>();
        const std::string prefix = "#/definitions/";
        if (ref.rfind(prefix, 0) != 0 || !root.contains("definitions") ||
            !root["definitions"].contains(ref.substr(prefix.size()))) {
            errors.push_back(at + ": unresolvable $ref " + ref);
            return;
        }
        check(doc, root["definitions"][ref.substr(prefix.size())], root, at, errors);
        return;
    }
    if (schema.contains("type") && !type_matches(doc, schema["type"].get<std::string>())) {
        errors.push_back(at + ": expected " + schema["type"].get<std::string>());
        return;
    }
    if (schema.contains("const") && doc != schema["const"]) errors.push_back(at + ": must equal " + schema["const"].dump());
    if (schema.contains("enum") &&
        std::find(schema["enum"].begin(), schema["enum"].end(), doc) == schema["enum"].end())
        errors.push_back(at + ": not one of " + schema["enum"].dump());
    if (doc.is_number()) {
        const double v = doc.get<double>();
        if (!std::isfinite(v)) errors.push_back(at + ": not finite");
        if (schema.contains("minimum") && v < schema["minimum"].get<double>())
            errors.push_back(at + ": below minimum " + schema["minimum"].dump());
        if (schema.contains("maximum") && v > schema["maximum"].get<double>())
            errors.push_back(at + ": above maximum " + schema["maximum"].dump());
    }
    if (doc.is_object()) {
        if (schema.contains("required"))
            for (const auto& key : schema["required"])
                if (!doc.contains(key.get<std::string>()))
                    errors.push_back(at + ": missing required '" + key.get<std::string>() + "'");
        const nlohmann::json props = schema.value("properties", nlohmann::json::object());
        for (const auto& [key, value] : doc.items()) {
            const std::string child = at + "/" + key;
            if (props.contains(key)) {
                check(value, props[key], root, child, errors);
            } else if (schema.contains("additionalProperties")) {
                const auto& extra = schema["additionalProperties"];
                if (extra.is_boolean()) {
                    if (!extra.get<bool>()) errors.push_back(child + ": unexpected property");
                } else {
                    check(value, extra, root, child, errors);
                }
            }
        }
    }
    if (doc.is_array()) {
        if (schema.contains("minItems") && doc.size() < schema["minItems"].get<std::size_t>())
            errors.push_back(at + ": fewer than " + schema["minItems"].dump() + " items");
        if (schema.contains("items"))
            for (std::size_t i = 0; i < doc.size(); ++i)
                check(doc[i], schema["items"], root, at + "/" + std::to_string(i), errors);
    }
}

}  // namespace

std::vector<std::string> schema_violations(const nlohmann::json& doc, const nlohmann::json& schema)
{
    std::vector<std::string> errors;
    check(doc, schema, schema, "", errors);
    return errors;
}

void validate_report(const nlohmann::json& doc)
{
    const auto errors = schema_violations(doc, eval_report_schema());
    if (errors.empty()) return;
    std::string msg = "report does not match the schema:";
    for (const auto& e : errors) msg += "\n  " + (e.empty() ? std::string("/") : e);
    throw ProtocolError(msg);
}

}  // namespace drn
