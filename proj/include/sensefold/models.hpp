#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "sensefold/featurize.hpp"
#include "sensefold/metrics.hpp"
#include "sensefold/util.hpp"

namespace sensefold {

/// Dense row-major matrix.
struct Matrix {
    std::size_t rows = 0, cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
    std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
};

/// Model input: features, labels (may be empty at predict time) and the registry identity.
struct DesignMatrix {
    Matrix x;
    std::vector<ActivityClass> y;
    std::string fingerprint;
    std::vector<int> levels;  // per column; > 2 means one-hot encoded by the MLP

    std::size_t rows() const { return x.rows; }
    std::size_t cols() const { return x.cols; }
};

/// Throws DataError if any selected example still has missing cells.
DesignMatrix make_design_matrix(const Dataset& ds, std::span<const std::size_t> rows);
DesignMatrix make_design_matrix(const Dataset& ds);

enum class ModelKind : std::uint8_t { Majority, Stratified, RandomForest, AdaBoost, Mlp };

std::string_view to_string(ModelKind k);
/// Accepts "majority", "stratified", "rf", "adaboost", "mlp".
std::optional<ModelKind> model_kind_from_string(std::string_view s);

// ---------------------------------------------------------------------------
// CART

struct TreeParams {
    int max_depth = 0;              // 0 = unlimited
    std::size_t min_leaf = 1;
    std::size_t max_features = 0;   // 0 = all features, in column order
};

/// Dense per-column ranks of a matrix; lets trees sharing one matrix skip re-sorting doubles.
struct ColumnRanks {
    std::size_t rows = 0, cols = 0;
    std::vector<std::uint32_t> rank;            // column-major
    std::vector<std::vector<double>> values;    // distinct values per column, ascending

    explicit ColumnRanks(const Matrix& x);
    std::uint32_t at(std::size_t row, std::size_t col) const { return rank[col * rows + row]; }
};

class DecisionTree {
public:
    struct Node {
        std::int32_t feature = -1;  // -1 marks a leaf
        double threshold = 0;       // go left when x <= threshold
        std::int32_t left = -1, right = -1;
        std::int32_t leaf = -1;     // index into leaf distributions
    };

    /// Fits a Gini tree on rows with positive weight. `importance`, when given, receives the
    /// weighted impurity decrease per feature (unnormalized).
    static DecisionTree fit(const Matrix& x, std::span<const std::uint8_t> labels, std::span<const double> weights,
                            const TreeParams& params, Rng& rng, std::vector<double>* importance = nullptr);
    static DecisionTree fit(const ColumnRanks& x, std::span<const std::uint8_t> labels, std::span<const double> weights,
                            const TreeParams& params, Rng& rng, std::vector<double>* importance = nullptr);

    const ClassDistribution& predict_proba(std::span<const double> row) const;
    std::size_t node_count() const { return nodes_.size(); }
    std::size_t leaf_count() const { return leaves_.size(); }
    int depth() const;
    const std::vector<Node>& nodes() const { return nodes_; }

    nlohmann::json to_json() const;
    static DecisionTree from_json(const nlohmann::json& j);

    bool operator==(const DecisionTree&) const;

private:
    std::vector<Node> nodes_;
    std::vector<ClassDistribution> leaves_;
};

// ---------------------------------------------------------------------------
// Parameters

struct ForestParams {
    std::size_t trees = 100;
    std::size_t max_features = 0;  // 0 = floor(sqrt(d))
    std::size_t min_leaf = 1;
    int max_depth = 0;             // 0 = unlimited
    bool bootstrap = true;
    int jobs = 1;
};

struct AdaBoostParams {
    std::size_t rounds = 50;
    int base_depth = 1;
};

struct MlpParams {
    std::vector<std::size_t> hidden{100};
    std::size_t max_epochs = 200;
    std::size_t batch = 32;
    double learning_rate = 1e-3;
    std::size_t patience = 10;
    double validation_fraction = 0.1;
    double l2 = 1e-4;
    double tolerance = 1e-4;
};

struct ModelParams {
    ForestParams forest;
    AdaBoostParams adaboost;
    MlpParams mlp;

    nlohmann::json to_json() const;
    static ModelParams from_json(const nlohmann::json& j);
};

// ---------------------------------------------------------------------------
// MLP internals, exposed for gradient checking

/// Fully connected ReLU network with a softmax output. Parameters live in one flat vector:
/// per layer, the weight matrix (out x in, row-major) followed by the bias.
class MlpNetwork {
public:
    MlpNetwork() = default;
    explicit MlpNetwork(std::vector<std::size_t> layer_sizes);

    /// Glorot-uniform hidden layers, zero output layer.
    void initialize(Rng& rng);

    const std::vector<std::size_t>& layer_sizes() const { return sizes_; }
    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }

    void forward(std::span<const double> input, std::vector<double>& probs) const;

    /// Mean cross-entropy over the batch plus 0.5 * l2 * ||W||^2 / batch; gradient written to `grad`.
    double loss_and_gradient(const Matrix& x, std::span<const std::uint8_t> targets, double l2,
                             std::vector<double>& grad) const;
    double loss(const Matrix& x, std::span<const std::uint8_t> targets, double l2) const;

private:
    std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }
    std::size_t bias_offset(std::size_t layer) const { return offsets_[layer] + sizes_[layer] * sizes_[layer + 1]; }

    std::vector<std::size_t> sizes_;
    std::vector<std::size_t> offsets_;
    std::vector<double> params_;
};

// ---------------------------------------------------------------------------
// Trained models

struct MajorityModel {
    ActivityClass label;
};

struct StratifiedModel {
    ClassDistribution prior{};
    std::uint64_t seed = 0;
};

struct ForestModel {
    std::vector<DecisionTree> trees;
    std::vector<double> importance;  // normalized Gini importance
};

struct AdaBoostModel {
    std::vector<DecisionTree> stages;
    std::vector<double> alphas;
};

struct MlpModel {
    struct Column {
        double mean = 0, scale = 1;
        int levels = 0;  // > 2: one-hot over integer codes
    };
    std::vector<Column> columns;
    std::vector<ActivityClass> outputs;  // softmax unit -> class
    MlpNetwork network;
};

class TrainedModel {
public:
    using Impl = std::variant<MajorityModel, StratifiedModel, ForestModel, AdaBoostModel, MlpModel>;

    TrainedModel(Impl impl, std::string fingerprint, std::size_t feature_count, std::array<bool, kNumActivities> seen);

    ModelKind kind() const { return static_cast<ModelKind>(impl_.index()); }
    const std::string& fingerprint() const { return fingerprint_; }
    std::size_t feature_count() const { return feature_count_; }
    const std::array<bool, kNumActivities>& classes_seen() const { return seen_; }
    const Impl& impl() const { return impl_; }

    /// No fingerprint check; `row` must follow the training layout.
    ClassDistribution predict_proba_row(std::span<const double> row) const;

    nlohmann::json to_json() const;
    static TrainedModel from_json(const nlohmann::json& j);
    void save(const std::filesystem::path& path) const;
    static TrainedModel load(const std::filesystem::path& path);

private:
    Impl impl_;
    std::string fingerprint_;
    std::size_t feature_count_ = 0;
    std::array<bool, kNumActivities> seen_{};
};

TrainedModel train_majority(const DesignMatrix& data);
TrainedModel train_stratified(const DesignMatrix& data, std::uint64_t seed);
TrainedModel train_random_forest(const DesignMatrix& data, const ForestParams& params, std::uint64_t seed);
TrainedModel train_adaboost(const DesignMatrix& data, const AdaBoostParams& params, std::uint64_t seed);
TrainedModel train_mlp(const DesignMatrix& data, const MlpParams& params, std::uint64_t seed);
TrainedModel train_model(ModelKind kind, const DesignMatrix& data, const ModelParams& params, std::uint64_t seed);

/// Throws ConfigError when the matrix fingerprint differs from the model's.
std::vector<ClassDistribution> predict_proba(const TrainedModel& model, const DesignMatrix& data);
/// Argmax of the distribution (lowest class on ties); the stratified baseline samples instead.
std::vector<ActivityClass> predict(const TrainedModel& model, const DesignMatrix& data);

/// Normalized mean impurity decrease per feature; throws ConfigError for non-forest models.
std::vector<double> gini_importance(const TrainedModel& model);

}  // namespace sensefold
