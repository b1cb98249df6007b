#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace dualeval {

/// Pooled hidden states of one layer: rows are examples, columns hidden dims.
struct FeatureMatrix {
    Eigen::MatrixXd values;
    int layer = 0;
    std::vector<std::string> ids;  // one per row
    std::string pooling = "mean";
    std::string backend;

    Eigen::Index rows() const noexcept { return values.rows(); }
    Eigen::Index cols() const noexcept { return values.cols(); }
    bool all_finite() const { return values.allFinite(); }
    /// Subset of rows, in the given order.
    FeatureMatrix select(std::span<const std::size_t> rows) const;
};

/// Linear map on per-dimension standardized features.
struct ProbeModel {
    Eigen::VectorXd weights;   // in standardized units; 0 on zero-variance dims
    double bias = 0;
    int layer = 0;
    double ridge_lambda = 0;
    Eigen::VectorXd center;    // training mean per dim
    Eigen::VectorXd scale;     // training std per dim (1 where the dim is constant)
    std::vector<bool> active;  // false for zero-variance dims
    bool rank_deficient = false;
    double gradient_norm = 0;  // ||grad|| of the objective at the solution

    nlohmann::json to_json() const;
};

/// Minimizes ||Zw + b - y||^2 + lambda ||w||^2 with Z the training features
/// standardized per dimension and b unpenalized. lambda > 0 uses a Cholesky
/// solve of the normal equations; lambda = 0 uses a complete orthogonal
/// decomposition, which yields the minimum-norm solution (and sets
/// rank_deficient) when the system is singular.
ProbeModel fit_probe(const FeatureMatrix& x, std::span<const double> y, double lambda);

/// 1e-6 * trace(Z^T Z) / d on the standardized training design.
double default_ridge_lambda(const FeatureMatrix& x);

/// The fitted map expressed on unstandardized features: y = x . weights + intercept.
struct RawLinearMap {
    Eigen::VectorXd weights;
    double intercept = 0;
};
RawLinearMap raw_units(const ProbeModel& model);

/// Throws DimensionMismatch when the column count differs from the fit.
std::vector<double> predict(const ProbeModel& model, const FeatureMatrix& x);

enum class Correlation { spearman, pearson };
std::string_view to_string(Correlation c);

struct SweepSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;  // may be empty: no validation rule then
    std::vector<std::size_t> test;
};

struct SweepOptions {
    std::optional<double> lambda;  // nullopt: default_ridge_lambda per layer
    Correlation val_metric = Correlation::spearman;
    Correlation test_metric = Correlation::spearman;
};

struct LayerResult {
    int layer = 0;
    bool excluded = false;
    std::string note;
    double train_rmse = 0;
    std::optional<double> val_corr;
    std::optional<double> test_corr;
    std::optional<ProbeModel> model;
};

struct LayerSweepResult {
    std::vector<LayerResult> layers;
    std::optional<int> selected_by_rmse;
    std::optional<int> selected_by_val;
    std::optional<double> test_at_rmse;
    std::optional<double> test_at_val;
    SweepOptions options;

    const LayerResult* find(int layer) const;
    nlohmann::json to_json() const;
};

/// One probe per layer fit on the train rows. Selection (lowest train RMSE,
/// highest validation correlation, ties to the lower layer) is completed before
/// any test label is read. Layers with non-finite features are excluded.
LayerSweepResult layer_sweep(std::span<const FeatureMatrix> layers, std::span<const double> labels,
                             const SweepSplit& split, const SweepOptions& options);

/// Mean Euclidean norm of the example vectors, per layer.
std::vector<double> magnitude_profile(std::span<const FeatureMatrix> layers);

struct VirulenceProbeConfig {
    double train_fraction = 0.10;
    std::size_t n_strata = 10;
    std::uint64_t seed = 0;
    std::optional<double> lambda;
};

struct VirulenceProbeReport {
    std::size_t n_train = 0;
    std::size_t n_test = 0;
    LayerSweepResult sweep;
    std::vector<double> magnitude;
    std::optional<int> best_test_layer;
    std::optional<double> best_test_pearson;

    nlohmann::json to_json() const;
};

/// Label-stratified train draw of round(train_fraction * n) examples, the rest
/// is test; layer sweep scored with Pearson.
VirulenceProbeReport probe_virulence(std::span<const FeatureMatrix> layers, std::span<const double> labels,
                                     const VirulenceProbeConfig& config);

// ---------------------------------------------------------------------------
// Feature files: a text header terminated by a line "end", then rows*cols
// little-endian float64 values, row-major.
//
//   dualeval-features 1
//   rows <n>
//   cols <d>
//   layer <l>
//   pooling <policy>
//   backend <name>
//   ids
//   <id per line, n lines>
//   end

void write_feature_matrix(const std::filesystem::path& path, const FeatureMatrix& m);
FeatureMatrix read_feature_matrix(const std::filesystem::path& path);

}  // namespace dualeval
