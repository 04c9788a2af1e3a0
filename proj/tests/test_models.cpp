#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "sensefold/models.hpp"

using namespace sensefold;

namespace {

constexpr auto A = ActivityClass::Sleeping;
constexpr auto B = ActivityClass::Studying;
constexpr auto C = ActivityClass::Eating;

DesignMatrix empty_design(std::size_t cols) {
    DesignMatrix dm;
    dm.x = Matrix(0, cols);
    dm.fingerprint = "test-layout";
    dm.levels.assign(cols, 0);
    return dm;
}

void add_row(DesignMatrix& dm, std::vector<double> row, ActivityClass y) {
    dm.x.data.insert(dm.x.data.end(), row.begin(), row.end());
    ++dm.x.rows;
    dm.y.push_back(y);
}

DesignMatrix blobs(std::size_t n, std::uint64_t seed, double sep = 6.0, std::size_t noise_cols = 0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    auto dm = empty_design(2 + noise_cols);
    for (std::size_t i = 0; i < n; ++i) {
        const bool pos = i % 2;
        std::vector<double> row = {g(rng) + (pos ? sep : 0), g(rng) + (pos ? sep : 0)};
        for (std::size_t j = 0; j < noise_cols; ++j) row.push_back(g(rng));
        add_row(dm, row, pos ? B : A);
    }
    return dm;
}

DesignMatrix xor_data(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1, 1);
    auto dm = empty_design(2);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = u(rng), y = u(rng);
        add_row(dm, {x, y}, (x > 0) != (y > 0) ? B : A);
    }
    return dm;
}

double accuracy(const TrainedModel& m, const DesignMatrix& test) {
    const auto pred = predict(m, test);
    double ok = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) ok += pred[i] == test.y[i];
    return ok / static_cast<double>(pred.size());
}

double auroc(const TrainedModel& m, const DesignMatrix& test) {
    const auto proba = predict_proba(m, test);
    return weighted_auroc(test.y, proba);
}

std::vector<std::uint8_t> class_indices(const DesignMatrix& dm) {
    std::vector<std::uint8_t> out;
    for (auto y : dm.y) out.push_back(static_cast<std::uint8_t>(index_of(y)));
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Baselines

TEST(Majority, PredictsModalClass) {
    auto dm = empty_design(1);
    for (auto y : {A, A, A, B}) add_row(dm, {0}, y);
    const auto m = train_majority(dm);
    for (const auto& p : predict_proba(m, dm)) {
        EXPECT_EQ(p[index_of(A)], 1.0);
        EXPECT_EQ(p[index_of(B)], 0.0);
    }
}

TEST(Majority, TieGoesToLexicographicallySmallerName) {
    auto dm = empty_design(1);
    // "Eating" < "Sleeping" by name although Sleeping comes first in the enum
    for (auto y : {A, A, C, C}) add_row(dm, {0}, y);
    EXPECT_EQ(predict(train_majority(dm), dm).front(), C);
}

TEST(Majority, EmptyDatasetIsAnError) { EXPECT_THROW(train_majority(empty_design(1)), ConfigError); }

TEST(Stratified, SamplesTrainingDistribution) {
    auto train = empty_design(1);
    for (int i = 0; i < 400; ++i) add_row(train, {0}, i % 4 ? A : B);
    auto test = empty_design(1);
    for (int i = 0; i < 10000; ++i) add_row(test, {0}, i % 2 ? A : B);
    const auto m = train_stratified(train, 17);
    const auto pred = predict(m, test);
    double na = 0;
    for (auto p : pred) na += p == A;
    const double nb = 10000 - na;
    const double chi2 = (na - 7500) * (na - 7500) / 7500 + (nb - 2500) * (nb - 2500) / 2500;
    EXPECT_LT(chi2, 10.83);  // df 1, alpha 0.001
    EXPECT_EQ(pred, predict(train_stratified(train, 17), test));
    EXPECT_DOUBLE_EQ(auroc(m, test), 0.5);
    const auto p = predict_proba(m, test).front();
    EXPECT_DOUBLE_EQ(p[index_of(A)], 0.75);
}

// ---------------------------------------------------------------------------
// Trees and forests

TEST(Forest, SeparatesBlobs) {
    const auto train = blobs(200, 1), test = blobs(200, 2);
    EXPECT_GE(auroc(train_random_forest(train, {}, 5), test), 0.99);
}

TEST(Forest, SolvesXorWhereStumpCannot) {
    const auto train = xor_data(400, 3), test = xor_data(400, 4);
    ForestParams stump;
    stump.trees = 1;
    stump.max_depth = 1;
    stump.bootstrap = false;
    stump.max_features = 2;
    EXPECT_NEAR(accuracy(train_random_forest(train, stump, 1), test), 0.5, 0.1);
    EXPECT_GE(accuracy(train_random_forest(train, {}, 1), test), 0.95);
}

TEST(Forest, SameSeedSameForest) {
    const auto train = blobs(150, 5, 1.0, 3), test = blobs(50, 6, 1.0, 3);
    const auto a = train_random_forest(train, {}, 9), b = train_random_forest(train, {}, 9);
    EXPECT_EQ(a.to_json(), b.to_json());
    EXPECT_EQ(predict_proba(a, test), predict_proba(b, test));
    EXPECT_NE(a.to_json(), train_random_forest(train, {}, 10).to_json());
}

TEST(Forest, JobCountDoesNotChangeModel) {
    const auto train = blobs(150, 5, 1.0, 3);
    ForestParams p1, p4;
    p4.jobs = 4;
    EXPECT_EQ(train_random_forest(train, p1, 3).to_json(), train_random_forest(train, p4, 3).to_json());
}

TEST(Forest, SingleClassIsAnError) {
    auto dm = empty_design(1);
    for (int i = 0; i < 5; ++i) add_row(dm, {static_cast<double>(i)}, A);
    EXPECT_THROW(train_random_forest(dm, {}, 1), ConfigError);
}

TEST(Forest, ProbabilitiesAreDistributions) {
    const auto train = blobs(100, 7, 1.0, 4);
    const auto m = train_random_forest(train, {}, 2);
    std::mt19937_64 rng(1);
    std::normal_distribution<double> g(0, 5);
    auto probe = empty_design(6);
    for (int i = 0; i < 200; ++i) add_row(probe, {g(rng), g(rng), g(rng), g(rng), g(rng), g(rng)}, A);
    for (const auto& p : predict_proba(m, probe)) {
        double s = 0;
        for (double v : p) {
            EXPECT_GE(v, 0.0);
            s += v;
        }
        EXPECT_NEAR(s, 1.0, 1e-9);
        for (std::size_t c = 0; c < kNumActivities; ++c)
            if (c != index_of(A) && c != index_of(B)) {
                EXPECT_EQ(p[c], 0.0);
            }
    }
}

TEST(Forest, AgreeingTreesGiveCertainty) {
    const auto train = blobs(100, 8, 20.0);
    const auto m = train_random_forest(train, {}, 2);
    auto far = empty_design(2);
    add_row(far, {40, 40}, B);
    EXPECT_DOUBLE_EQ(predict_proba(m, far)[0][index_of(B)], 1.0);
}

TEST(Forest, GiniImportance) {
    std::mt19937_64 rng(12);
    std::normal_distribution<double> g;
    auto dm = empty_design(5);
    for (int i = 0; i < 300; ++i) {
        const bool pos = i % 2;
        add_row(dm, {g(rng), pos ? 1.0 + g(rng) * 0.1 : -1.0 + g(rng) * 0.1, 7.0, g(rng), g(rng)}, pos ? B : A);
    }
    const auto m = train_random_forest(dm, {}, 4);
    const auto imp = gini_importance(m);
    ASSERT_EQ(imp.size(), 5u);
    double s = 0;
    for (double v : imp) s += v;
    EXPECT_NEAR(s, 1.0, 1e-9);
    EXPECT_EQ(imp[2], 0.0);
    EXPECT_EQ(std::max_element(imp.begin(), imp.end()) - imp.begin(), 1);
    EXPECT_THROW(gini_importance(train_majority(dm)), ConfigError);
}

TEST(Tree, RanksOverloadMatchesMatrixOverload) {
    const auto dm = blobs(120, 13, 1.0, 4);
    const auto labels = class_indices(dm);
    std::vector<double> w(dm.rows(), 1.0);
    TreeParams tp;
    tp.max_features = 3;
    Rng r1(5), r2(5);
    const auto a = DecisionTree::fit(dm.x, labels, w, tp, r1);
    const auto b = DecisionTree::fit(ColumnRanks(dm.x), labels, w, tp, r2);
    EXPECT_TRUE(a == b);
}

TEST(Tree, DepthAndLeafLimits) {
    const auto dm = blobs(200, 14, 0.5, 2);
    const auto labels = class_indices(dm);
    std::vector<double> w(dm.rows(), 1.0);
    TreeParams tp;
    tp.max_depth = 3;
    Rng rng(1);
    EXPECT_LE(DecisionTree::fit(dm.x, labels, w, tp, rng).depth(), 3);
    TreeParams leafy;
    leafy.min_leaf = 50;
    const auto t = DecisionTree::fit(dm.x, labels, w, leafy, rng);
    EXPECT_LE(t.leaf_count(), 4u);
}

// ---------------------------------------------------------------------------
// AdaBoost

TEST(AdaBoost, LinearlySeparable) {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(-1, 1);
    auto make = [&](std::size_t n) {
        auto dm = empty_design(2);
        for (std::size_t i = 0; i < n; ++i) {
            const double x = u(rng), y = u(rng);
            add_row(dm, {x, y}, x + 0.5 * y > 0 ? B : A);
        }
        return dm;
    };
    const auto train = make(400), test = make(400);
    EXPECT_GE(accuracy(train_adaboost(train, {}, 1), test), 0.95);
}

TEST(AdaBoost, FirstStageIsPlainStump) {
    const auto dm = blobs(100, 22, 1.5, 2);
    AdaBoostParams p;
    p.rounds = 5;
    const auto m = train_adaboost(dm, p, 3);
    const auto& ab = std::get<AdaBoostModel>(m.impl());
    ASSERT_FALSE(ab.stages.empty());
    std::vector<double> w(dm.rows(), 1.0 / static_cast<double>(dm.rows()));
    TreeParams tp;
    tp.max_depth = 1;
    Rng rng(3);
    EXPECT_TRUE(ab.stages.front() == DecisionTree::fit(dm.x, class_indices(dm), w, tp, rng));
}

TEST(AdaBoost, SameSeedSameModel) {
    const auto dm = blobs(100, 23, 1.0, 2);
    EXPECT_EQ(train_adaboost(dm, {}, 4).to_json(), train_adaboost(dm, {}, 4).to_json());
}

TEST(AdaBoost, PerfectStumpStopsEarly) {
    const auto dm = blobs(100, 24, 30.0);
    const auto m = train_adaboost(dm, {}, 1);
    EXPECT_EQ(std::get<AdaBoostModel>(m.impl()).stages.size(), 1u);
}

// ---------------------------------------------------------------------------
// MLP

TEST(Mlp, GradientMatchesFiniteDifferences) {
    MlpNetwork net({5, 4, 3});
    Rng rng(31);
    net.initialize(rng);
    std::normal_distribution<double> g(0, 0.8);
    for (auto& p : net.params()) p = g(rng);
    Matrix x(7, 5);
    for (auto& v : x.data) v = g(rng) * 2;
    const std::vector<std::uint8_t> t = {0, 1, 2, 2, 1, 0, 1};
    const double l2 = 0.05;
    std::vector<double> grad;
    net.loss_and_gradient(x, t, l2, grad);
    ASSERT_EQ(grad.size(), net.params().size());
    double num = 0, den = 0;
    for (std::size_t i = 0; i < grad.size(); ++i) {
        const double keep = net.params()[i], h = 1e-5;
        net.params()[i] = keep + h;
        const double up = net.loss(x, t, l2);
        net.params()[i] = keep - h;
        const double down = net.loss(x, t, l2);
        net.params()[i] = keep;
        const double fd = (up - down) / (2 * h);
        num += (fd - grad[i]) * (fd - grad[i]);
        den += fd * fd + grad[i] * grad[i];
        EXPECT_LE(std::abs(fd - grad[i]), 1e-4 * std::max(1.0, std::abs(fd) + std::abs(grad[i]))) << i;
    }
    EXPECT_LE(std::sqrt(num) / std::sqrt(den), 1e-4);
    for (std::uint64_t seed = 1; seed <= 20; ++seed) EXPECT_LE(oracle::mlp_gradient_error(seed), 1e-4) << seed;
}

TEST(Mlp, ZeroOutputLayerGivesUniform) {
    MlpNetwork net({5, 8, 4});
    Rng rng(2);
    net.initialize(rng);
    std::vector<double> probs;
    const std::vector<double> input = {1, -2, 3, 0.5, 9};
    net.forward(input, probs);
    ASSERT_EQ(probs.size(), 4u);
    for (double p : probs) EXPECT_NEAR(p, 0.25, 1e-12);
}

TEST(Mlp, SeparatesBlobs) {
    const auto train = blobs(200, 41), test = blobs(200, 42);
    EXPECT_GE(auroc(train_mlp(train, {}, 7), test), 0.99);
}

TEST(Mlp, SameSeedSameModel) {
    const auto train = blobs(100, 43, 2.0);
    MlpParams p;
    p.max_epochs = 5;
    EXPECT_EQ(train_mlp(train, p, 1).to_json(), train_mlp(train, p, 1).to_json());
}

TEST(Mlp, OneHotEncodesCategoricalColumns) {
    auto dm = empty_design(1);
    dm.levels = {5};
    for (int i = 0; i < 100; ++i) add_row(dm, {static_cast<double>(i % 5)}, i % 5 == 2 ? B : A);
    const auto m = train_mlp(dm, {}, 3);
    EXPECT_EQ(std::get<MlpModel>(m.impl()).network.layer_sizes().front(), 5u);
    EXPECT_GE(accuracy(m, dm), 0.99);
}

// ---------------------------------------------------------------------------
// Prediction contract and persistence

TEST(Predict, FingerprintMismatchIsRejected) {
    const auto train = blobs(60, 51);
    const auto m = train_random_forest(train, {}, 1);
    auto other = train;
    other.fingerprint = "another-layout";
    EXPECT_THROW(predict_proba(m, other), ConfigError);
}

TEST(Persistence, EveryKindRoundTrips) {
    auto train = blobs(80, 61, 2.0);
    const auto probe = blobs(40, 62, 2.0);
    ModelParams params;
    params.mlp.max_epochs = 10;
    params.forest.trees = 10;
    params.adaboost.rounds = 5;
    for (auto kind : {ModelKind::Majority, ModelKind::Stratified, ModelKind::RandomForest, ModelKind::AdaBoost,
                      ModelKind::Mlp}) {
        const auto m = train_model(kind, train, params, 3);
        const auto back = TrainedModel::from_json(nlohmann::json::parse(m.to_json().dump()));
        EXPECT_EQ(back.kind(), kind);
        EXPECT_EQ(back.to_json(), m.to_json()) << to_string(kind);
        EXPECT_EQ(predict_proba(back, probe), predict_proba(m, probe)) << to_string(kind);
        EXPECT_EQ(predict(back, probe), predict(m, probe)) << to_string(kind);
    }
}

TEST(Persistence, SaveAndLoadFile) {
    const auto train = blobs(80, 63);
    const auto m = train_random_forest(train, {}, 1);
    const auto path = std::filesystem::temp_directory_path() / "sensefold_model_test.json";
    m.save(path);
    EXPECT_EQ(TrainedModel::load(path).to_json(), m.to_json());
    std::filesystem::remove(path);
}

TEST(Persistence, RejectsForeignFiles) {
    EXPECT_THROW(TrainedModel::from_json(nlohmann::json{{"format", "other"}}), ConfigError);
    auto j = train_majority(blobs(10, 1)).to_json();
    j["version"] = 999;
    EXPECT_THROW(TrainedModel::from_json(j), ConfigError);
}

TEST(ModelParamsJson, RoundTrip) {
    ModelParams p;
    p.forest.trees = 7;
    p.mlp.hidden = {3, 2};
    p.adaboost.base_depth = 2;
    const auto back = ModelParams::from_json(p.to_json());
    EXPECT_EQ(back.to_json(), p.to_json());
}
