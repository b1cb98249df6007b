#include "dualeval/probes.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "dualeval/curation.hpp"
#include "dualeval/errors.hpp"
#include "dualeval/metrics.hpp"

namespace dualeval {

FeatureMatrix FeatureMatrix::select(std::span<const std::size_t> row_idx) const {
    FeatureMatrix out;
    out.layer = layer;
    out.pooling = pooling;
    out.backend = backend;
    out.values.resize(static_cast<Eigen::Index>(row_idx.size()), values.cols());
    for (std::size_t r = 0; r < row_idx.size(); ++r) {
        out.values.row(static_cast<Eigen::Index>(r)) = values.row(static_cast<Eigen::Index>(row_idx[r]));
        if (row_idx[r] < ids.size()) out.ids.push_back(ids[row_idx[r]]);
    }
    return out;
}

nlohmann::json ProbeModel::to_json() const {
    return nlohmann::json{{"layer", layer},
                          {"bias", bias},
                          {"ridge_lambda", ridge_lambda},
                          {"rank_deficient", rank_deficient},
                          {"gradient_norm", gradient_norm},
                          {"weights", std::vector<double>(weights.data(), weights.data() + weights.size())},
                          {"center", std::vector<double>(center.data(), center.data() + center.size())},
                          {"scale", std::vector<double>(scale.data(), scale.data() + scale.size())}};
}

namespace {

struct Standardized {
    Eigen::MatrixXd z;  // active columns only
    Eigen::VectorXd center;
    Eigen::VectorXd scale;
    std::vector<bool> active;
    std::vector<Eigen::Index> active_cols;
};

Standardized standardize(const Eigen::MatrixXd& x) {
    Standardized s;
    const auto n = x.rows();
    const auto d = x.cols();
    s.center = x.colwise().mean().transpose();
    s.scale = Eigen::VectorXd::Ones(d);
    s.active.assign(static_cast<std::size_t>(d), false);
    for (Eigen::Index j = 0; j < d; ++j) {
        const double var = (x.col(j).array() - s.center(j)).square().sum() / static_cast<double>(n);
        const double sd = std::sqrt(var);
        // Relative floor so that a column equal to a constant up to rounding counts as constant.
        if (sd > 1e-12 * std::max(1.0, std::abs(s.center(j)))) {
            s.scale(j) = sd;
            s.active[static_cast<std::size_t>(j)] = true;
            s.active_cols.push_back(j);
        }
    }
    s.z.resize(n, static_cast<Eigen::Index>(s.active_cols.size()));
    for (std::size_t k = 0; k < s.active_cols.size(); ++k) {
        const auto j = s.active_cols[k];
        s.z.col(static_cast<Eigen::Index>(k)) = (x.col(j).array() - s.center(j)) / s.scale(j);
    }
    return s;
}

void check_fit_inputs(const FeatureMatrix& x, std::span<const double> y, double lambda) {
    if (x.rows() < 1 || x.cols() < 1) throw DataError("probe needs at least one example and one feature");
    if (static_cast<std::size_t>(x.rows()) != y.size()) {
        throw DimensionMismatch("feature rows (" + std::to_string(x.rows()) + ") != labels (" +
                                std::to_string(y.size()) + ")");
    }
    if (!x.all_finite()) throw DataError("non-finite features");
    for (double v : y)
        if (!std::isfinite(v)) throw DataError("non-finite label");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("ridge lambda must be finite and >= 0");
}

}  // namespace

double default_ridge_lambda(const FeatureMatrix& x) {
    const auto s = standardize(x.values);
    return 1e-6 * s.z.squaredNorm() / static_cast<double>(x.cols());
}

ProbeModel fit_probe(const FeatureMatrix& x, std::span<const double> y, double lambda) {
    check_fit_inputs(x, y, lambda);
    const auto s = standardize(x.values);
    const Eigen::Map<const Eigen::VectorXd> yv(y.data(), static_cast<Eigen::Index>(y.size()));
    const double y_mean = yv.mean();
    const Eigen::VectorXd yc = yv.array() - y_mean;

    ProbeModel m;
    m.layer = x.layer;
    m.ridge_lambda = lambda;
    m.center = s.center;
    m.scale = s.scale;
    m.active = s.active;
    m.weights = Eigen::VectorXd::Zero(x.cols());
    m.bias = y_mean;  // standardized columns have zero mean, so the bias decouples

    const auto a = s.z.cols();
    if (a == 0) return m;

    Eigen::MatrixXd gram = s.z.transpose() * s.z;
    gram.diagonal().array() += lambda;
    const Eigen::VectorXd rhs = s.z.transpose() * yc;

    Eigen::VectorXd w;
    if (lambda > 0) {
        Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
        w = ldlt.solve(rhs);
    } else {
        Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(gram);
        m.rank_deficient = cod.rank() < a;
        w = cod.solve(rhs);
    }
    for (Eigen::Index k = 0; k < a; ++k) m.weights(s.active_cols[static_cast<std::size_t>(k)]) = w(k);

    const Eigen::VectorXd residual = s.z * w - yc;
    m.gradient_norm = (s.z.transpose() * residual + lambda * w).norm();
    return m;
}

RawLinearMap raw_units(const ProbeModel& model) {
    RawLinearMap out;
    out.weights = Eigen::VectorXd::Zero(model.weights.size());
    out.intercept = model.bias;
    for (Eigen::Index j = 0; j < model.weights.size(); ++j) {
        if (!model.active[static_cast<std::size_t>(j)]) continue;
        out.weights(j) = model.weights(j) / model.scale(j);
        out.intercept -= out.weights(j) * model.center(j);
    }
    return out;
}

std::vector<double> predict(const ProbeModel& model, const FeatureMatrix& x) {
    if (x.cols() != model.weights.size()) {
        throw DimensionMismatch("probe expects " + std::to_string(model.weights.size()) + " features, got " +
                                std::to_string(x.cols()));
    }
    std::vector<double> out(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        double v = model.bias;
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
            if (!model.active[static_cast<std::size_t>(j)]) continue;
            v += model.weights(j) * (x.values(i, j) - model.center(j)) / model.scale(j);
        }
        out[static_cast<std::size_t>(i)] = v;
    }
    return out;
}

std::string_view to_string(Correlation c) { return c == Correlation::spearman ? "spearman" : "pearson"; }

const LayerResult* LayerSweepResult::find(int layer) const {
    for (const auto& r : layers)
        if (r.layer == layer) return &r;
    return nullptr;
}

namespace {

double correlate(Correlation c, std::span<const double> x, std::span<const double> y) {
    return c == Correlation::spearman ? spearman_rho(x, y) : pearson_r(x, y);
}

std::vector<double> gather(std::span<const double> labels, std::span<const std::size_t> idx) {
    std::vector<double> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(labels[i]);
    return out;
}

nlohmann::json opt_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }
nlohmann::json opt_json(const std::optional<int>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

// Test labels stay out of reach until a selection has been made.
class SealedTestLabels {
public:
    SealedTestLabels(std::span<const double> labels, std::span<const std::size_t> idx) : values_(gather(labels, idx)) {}

    struct SelectionDone {};
    std::span<const double> open(SelectionDone) const { return values_; }

private:
    std::vector<double> values_;
};

}  // namespace

nlohmann::json LayerSweepResult::to_json() const {
    nlohmann::json j;
    j["val_metric"] = std::string(to_string(options.val_metric));
    j["test_metric"] = std::string(to_string(options.test_metric));
    j["lambda"] = options.lambda ? nlohmann::json(*options.lambda) : nlohmann::json("default_1e-6_trace_over_d");
    j["standardization"] = "per-dimension z-score on the train split";
    j["tie_break"] = "lower layer index";
    j["selected_by_train_rmse"] = opt_json(selected_by_rmse);
    j["selected_by_val"] = opt_json(selected_by_val);
    j["test_at_train_rmse_layer"] = opt_json(test_at_rmse);
    j["test_at_val_layer"] = opt_json(test_at_val);
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : layers) {
        nlohmann::json e{{"layer", r.layer},
                         {"excluded", r.excluded},
                         {"train_rmse", r.excluded ? nlohmann::json(nullptr) : nlohmann::json(r.train_rmse)},
                         {"val_corr", opt_json(r.val_corr)},
                         {"test_corr", opt_json(r.test_corr)}};
        if (!r.note.empty()) e["note"] = r.note;
        if (r.model) {
            e["ridge_lambda"] = r.model->ridge_lambda;
            e["rank_deficient"] = r.model->rank_deficient;
        }
        rows.push_back(std::move(e));
    }
    j["layers"] = std::move(rows);
    return j;
}

LayerSweepResult layer_sweep(std::span<const FeatureMatrix> layers, std::span<const double> labels,
                             const SweepSplit& split, const SweepOptions& options) {
    if (layers.empty()) throw DataError("layer sweep needs at least one layer");
    if (split.train.empty()) throw DataError("layer sweep needs training examples");
    for (const auto& l : layers) {
        if (static_cast<std::size_t>(l.rows()) != labels.size()) {
            throw DimensionMismatch("layer " + std::to_string(l.layer) + " has " + std::to_string(l.rows()) +
                                    " rows for " + std::to_string(labels.size()) + " labels");
        }
    }
    {
        std::vector<bool> seen(labels.size(), false);
        for (const auto* part : {&split.train, &split.val, &split.test}) {
            for (auto i : *part) {
                if (i >= labels.size() || seen[i]) throw DataError("train/val/test split is not disjoint or in range");
                seen[i] = true;
            }
        }
    }

    const auto y_train = gather(labels, split.train);
    const auto y_val = gather(labels, split.val);
    const SealedTestLabels y_test(labels, split.test);

    LayerSweepResult result;
    result.options = options;
    for (const auto& features : layers) {
        LayerResult r;
        r.layer = features.layer;
        if (!features.all_finite()) {
            r.excluded = true;
            r.note = "non-finite features";
            result.layers.push_back(std::move(r));
            continue;
        }
        const auto x_train = features.select(split.train);
        const double lambda = options.lambda.value_or(default_ridge_lambda(x_train));
        r.model = fit_probe(x_train, y_train, lambda);
        r.train_rmse = rmse(y_train, predict(*r.model, x_train));
        if (!split.val.empty()) {
            try {
                r.val_corr = correlate(options.val_metric, y_val, predict(*r.model, features.select(split.val)));
            } catch (const UndefinedCorrelation&) {
                r.note = "validation correlation undefined";
            }
        }
        result.layers.push_back(std::move(r));
    }

    // Selection. Strict comparisons keep the first (lowest) layer on ties; layers
    // are visited in ascending index order.
    std::vector<const LayerResult*> order;
    for (const auto& r : result.layers)
        if (!r.excluded) order.push_back(&r);
    std::stable_sort(order.begin(), order.end(), [](const auto* a, const auto* b) { return a->layer < b->layer; });
    const LayerResult* by_rmse = nullptr;
    const LayerResult* by_val = nullptr;
    for (const auto* r : order) {
        if (!by_rmse || r->train_rmse < by_rmse->train_rmse) by_rmse = r;
        if (r->val_corr && (!by_val || *r->val_corr > *by_val->val_corr)) by_val = r;
    }
    if (by_rmse) result.selected_by_rmse = by_rmse->layer;
    if (by_val) result.selected_by_val = by_val->layer;

    if (!split.test.empty()) {
        const auto test_labels = y_test.open(SealedTestLabels::SelectionDone{});
        for (std::size_t k = 0; k < layers.size(); ++k) {
            auto& r = result.layers[k];
            if (r.excluded) continue;
            try {
                r.test_corr = correlate(options.test_metric, test_labels, predict(*r.model, layers[k].select(split.test)));
            } catch (const UndefinedCorrelation&) {
                r.note += r.note.empty() ? "test correlation undefined" : "; test correlation undefined";
            }
        }
        if (by_rmse) result.test_at_rmse = result.find(by_rmse->layer)->test_corr;
        if (by_val) result.test_at_val = result.find(by_val->layer)->test_corr;
    }
    return result;
}

std::vector<double> magnitude_profile(std::span<const FeatureMatrix> layers) {
    if (layers.empty()) throw DataError("magnitude profile needs at least one layer");
    std::vector<double> out;
    for (const auto& l : layers) {
        if (l.rows() == 0) {
            out.push_back(0.0);
            continue;
        }
        out.push_back(l.values.rowwise().norm().mean());
    }
    return out;
}

nlohmann::json VirulenceProbeReport::to_json() const {
    nlohmann::json j;
    j["n_train"] = n_train;
    j["n_test"] = n_test;
    j["sweep"] = sweep.to_json();
    j["magnitude_profile"] = magnitude;
    j["best_test_layer"] = opt_json(best_test_layer);
    j["best_test_pearson"] = opt_json(best_test_pearson);
    return j;
}

VirulenceProbeReport probe_virulence(std::span<const FeatureMatrix> layers, std::span<const double> labels,
                                     const VirulenceProbeConfig& config) {
    if (layers.empty()) throw DataError("virulence probe needs at least one layer");
    if (!(config.train_fraction > 0.0 && config.train_fraction < 1.0)) {
        throw ConfigError("train_fraction must lie in (0, 1)");
    }
    const std::size_t n = labels.size();
    const auto n_train = static_cast<std::size_t>(std::llround(config.train_fraction * static_cast<double>(n)));
    if (n_train < 2 || n_train >= n) throw DataError("virulence corpus too small for the requested split");

    std::vector<std::string> keys = layers.front().ids;
    if (keys.size() != n) {
        keys.clear();
        for (std::size_t i = 0; i < n; ++i) keys.push_back(std::to_string(i));
    }
    const auto plan = make_quantile_plan(labels, n_train, 0, config.n_strata, nullptr);
    const auto draw = stratified_draw(labels, keys, plan, config.seed);

    {
        const auto y_train = gather(labels, draw.train);
        const auto first = y_train.front();
        if (std::all_of(y_train.begin(), y_train.end(), [&](double v) { return v == first; })) {
            throw UndefinedCorrelation("training labels have fewer than 2 distinct values");
        }
    }

    SweepSplit split{draw.train, {}, draw.rest};
    SweepOptions options{config.lambda, Correlation::pearson, Correlation::pearson};

    VirulenceProbeReport report;
    report.n_train = draw.train.size();
    report.n_test = draw.rest.size();
    report.sweep = layer_sweep(layers, labels, split, options);
    report.magnitude = magnitude_profile(layers);
    for (const auto& r : report.sweep.layers) {
        if (r.test_corr && (!report.best_test_pearson || *r.test_corr > *report.best_test_pearson)) {
            report.best_test_pearson = r.test_corr;
            report.best_test_layer = r.layer;
        }
    }
    return report;
}

// ---------------------------------------------------------------------------

void write_feature_matrix(const std::filesystem::path& path, const FeatureMatrix& m) {
    static_assert(std::endian::native == std::endian::little, "feature files are little-endian");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << "dualeval-features 1\n"
        << "rows " << m.rows() << '\n'
        << "cols " << m.cols() << '\n'
        << "layer " << m.layer << '\n'
        << "pooling " << m.pooling << '\n'
        << "backend " << m.backend << '\n'
        << "ids\n";
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        out << (static_cast<std::size_t>(i) < m.ids.size() ? m.ids[static_cast<std::size_t>(i)] : std::to_string(i))
            << '\n';
    }
    out << "end\n";
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> row_major = m.values;
    out.write(reinterpret_cast<const char*>(row_major.data()),
              static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(row_major.size())));
    if (!out) throw DataError("failed writing " + path.string());
}

FeatureMatrix read_feature_matrix(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::string line;
    auto expect_kv = [&](const std::string& key) -> std::string {
        if (!std::getline(in, line) || line.rfind(key + " ", 0) != 0) {
            throw DataError(path.string() + ": expected '" + key + "' header line");
        }
        return line.substr(key.size() + 1);
    };
    if (!std::getline(in, line) || line != "dualeval-features 1") throw DataError(path.string() + ": not a feature file");
    FeatureMatrix m;
    const auto rows = std::stoll(expect_kv("rows"));
    const auto cols = std::stoll(expect_kv("cols"));
    m.layer = std::stoi(expect_kv("layer"));
    m.pooling = expect_kv("pooling");
    if (!std::getline(in, line) || line.rfind("backend", 0) != 0) throw DataError(path.string() + ": missing backend");
    m.backend = line.size() > 8 ? line.substr(8) : "";
    if (!std::getline(in, line) || line != "ids") throw DataError(path.string() + ": missing ids block");
    for (long long i = 0; i < rows; ++i) {
        if (!std::getline(in, line)) throw DataError(path.string() + ": truncated ids block");
        m.ids.push_back(line);
    }
    if (!std::getline(in, line) || line != "end") throw DataError(path.string() + ": missing end marker");
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> row_major(rows, cols);
    in.read(reinterpret_cast<char*>(row_major.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(rows * cols)));
    if (in.gcount() != static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(rows * cols))) {
        throw DataError(path.string() + ": truncated matrix body");
    }
    m.values = row_major;
    return m;
}

}  // namespace dualeval
