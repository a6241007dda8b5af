#pragma once

/// \file eval_suite.hpp
/// \brief Fine-grained evaluation: keypoint error curves, face identity
/// preservation, retrieval recall, Fréchet distance, paired perceptual
/// distance, SSIM, guidance-map PCA and the JSON report.

#include <functional>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "drn/data_pipeline.hpp"
#include "drn/losses.hpp"

namespace drn {

enum class PartGroup { Body, Face, LeftHand, RightHand };

std::string to_string(PartGroup g);
PartGroup part_group_from_string(const std::string& name);

struct KeypointSet {
    PartGroup group = PartGroup::Body;
    std::vector<DetectedPoint> points;
};

struct ErrorCurve {
    std::vector<double> thresholds;
    std::vector<double> accuracy;
    std::size_t cardinality = 0;  // points per set
};

/// P(α) = #(predicted and within distance ≤ α of ground truth) / #(ground-truth points present).
/// Hand groups are evaluated on the threshold axis doubled. Lists are aligned by
/// index; group or cardinality mismatches throw ProtocolError.
std::map<PartGroup, ErrorCurve> keypoint_error_curve(const std::vector<KeypointSet>& pred,
                                                     const std::vector<KeypointSet>& gt,
                                                     const std::vector<double>& thresholds);

/// Image -> vector map with a recorded provenance.
class Embedder {
public:
    using Fn = std::function<Eigen::VectorXd(const Tensor<float>&)>;

    Embedder(Fn fn, nlohmann::json provenance) : fn_(std::move(fn)), provenance_(std::move(provenance)) {}

    /// Area-averaged thumbnail (3 × thumb × thumb) projected by a seeded Gaussian
    /// matrix to `dim` values and L2-normalized.
    static Embedder fixed_random(std::uint64_t seed, Index dim = 64, Index thumb = 16);
    /// The raw thumbnail itself, unnormalized.
    static Embedder thumbnail(Index thumb = 16);

    Eigen::VectorXd operator()(const Tensor<float>& image) const { return fn_(image); }
    const nlohmann::json& provenance() const { return provenance_; }

private:
    Fn fn_;
    nlohmann::json provenance_;
};

/// (3 × thumb × thumb) box-averaged downsample of sample 0, flattened.
Eigen::VectorXd area_thumbnail(const Tensor<float>& image, Index thumb);

struct IdentityResult {
    double mean_distance = 0.0;
    std::map<double, double> accuracy;  // eps -> fraction with distance < eps
    bool degenerate_embedder = false;   // distinct inputs collapsed onto one embedding
    std::size_t n = 0;
};

inline const std::vector<double> kIdentityThresholds = {0.6, 0.7};

IdentityResult identity_from_distances(const std::vector<double>& distances, const std::vector<double>& eps);

/// Pairs of (source face, generated face) crops.
IdentityResult face_identity_eval(const std::vector<std::pair<Tensor<float>, Tensor<float>>>& pairs,
                                  const Embedder& emb, const std::vector<double>& eps = kIdentityThresholds);

/// Recall@K with database items ranked by ascending L2 distance, ties by database index.
std::map<int, double> retrieval_recall_from_embeddings(const std::vector<Eigen::VectorXd>& queries,
                                                       const std::vector<std::string>& query_ids,
                                                       const std::vector<Eigen::VectorXd>& database,
                                                       const std::vector<std::string>& database_ids,
                                                       const std::vector<int>& ks);

std::map<int, double> retrieval_recall(const std::vector<std::pair<Tensor<float>, std::string>>& queries,
                                       const std::vector<std::pair<Tensor<float>, std::string>>& database,
                                       const Embedder& emb, const std::vector<int>& ks);

inline constexpr double kCovarianceRidge = 1e-6;

/// Rows are samples. ||mu_a - mu_b||² + tr(S_a + S_b - 2 (S_a S_b)^½) with unbiased
/// covariances plus kCovarianceRidge·I; clamped at 0.
double frechet_distance(const Eigen::MatrixXd& feats_a, const Eigen::MatrixXd& feats_b);

double frechet_distance_from_moments(const Eigen::VectorXd& mu_a, const Eigen::MatrixXd& cov_a,
                                     const Eigen::VectorXd& mu_b, const Eigen::MatrixXd& cov_b);

/// Σ_l w_l · mean over pixels of ||f̂_a - f̂_b||², f̂ the per-pixel unit-normalized
/// feature vector. Empty weights mean 1 per layer.
double paired_perceptual_distance(const Tensor<float>& a, const Tensor<float>& b, const FeatureExtractor<float>& fx,
                                  const std::vector<double>& layer_weights = {});

struct SsimOptions {
    Index window = 7;
    double k1 = 0.01;
    double k2 = 0.03;
};

/// Mean SSIM over all valid window positions and channels of images in [-1, 1]
/// (mapped to [0, 1]); uniform window, population statistics.
double ssim(const Tensor<float>& a, const Tensor<float>& b, const SsimOptions& options = {});

/// Projects every spatial position of (1, C, h, w) features on the top three
/// principal components and min-max scales each to [-1, 1]. Components without
/// spread come out as 0 (mid-gray).
Tensor<float> pca_visualize_guidance(const Tensor<float>& features);

// ---------------------------------------------------------------------------
// Reports

inline constexpr const char* kReportSchemaId = "drn-eval-report";
inline constexpr int kReportVersion = 1;

struct EvalReport {
    nlohmann::json config = nlohmann::json::object();
    nlohmann::json provenance = nlohmann::json::object();
    nlohmann::json metrics = nlohmann::json::object();

    nlohmann::json to_json() const;
    static EvalReport from_json(const nlohmann::json& doc);
    void save(const std::filesystem::path& path) const;
    static EvalReport load(const std::filesystem::path& path);
};

nlohmann::json error_curve_json(const ErrorCurve& c);
ErrorCurve error_curve_from_json(const nlohmann::json& j);

/// JSON Schema (draft-07 subset) describing reports; identical to schemas/eval_report.schema.json.
const nlohmann::json& eval_report_schema();

/// Validates `doc` against `schema` using the keywords type, enum, const,
/// required, properties, additionalProperties, items, minItems, minimum,
/// maximum and $ref to local definitions. Returns the list of violations.
std::vector<std::string> schema_violations(const nlohmann::json& doc, const nlohmann::json& schema);

/// Throws ProtocolError listing every violation.
void validate_report(const nlohmann::json& doc);

}  // namespace drn
