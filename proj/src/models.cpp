#include "sensefold/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace sensefold {

using nlohmann::json;

DesignMatrix make_design_matrix(const Dataset& ds, std::span<const std::size_t> rows) {
    DesignMatrix dm;
    dm.x = Matrix(rows.size(), ds.registry.size());
    dm.y.reserve(rows.size());
    dm.fingerprint = ds.registry.fingerprint();
    dm.levels.reserve(ds.registry.size());
    for (const auto& f : ds.registry.features()) dm.levels.push_back(f.levels);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& e = ds.examples.at(rows[i]);
        if (std::any_of(e.features.missing.begin(), e.features.missing.end(), [](std::uint8_t m) { return m != 0; }))
            throw DataError("example of participant " + e.participant + " still has missing features; impute first");
        std::copy(e.features.values.begin(), e.features.values.end(), dm.x.row(i).begin());
        dm.y.push_back(e.label);
    }
    return dm;
}

DesignMatrix make_design_matrix(const Dataset& ds) {
    std::vector<std::size_t> rows(ds.size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return make_design_matrix(ds, rows);
}

std::string_view to_string(ModelKind k) {
    switch (k) {
        case ModelKind::Majority: return "majority";
        case ModelKind::Stratified: return "stratified";
        case ModelKind::RandomForest: return "rf";
        case ModelKind::AdaBoost: return "adaboost";
        case ModelKind::Mlp: return "mlp";
    }
    return "?";
}

std::optional<ModelKind> model_kind_from_string(std::string_view s) {
    for (auto k : {ModelKind::Majority, ModelKind::Stratified, ModelKind::RandomForest, ModelKind::AdaBoost,
                   ModelKind::Mlp})
        if (to_string(k) == s) return k;
    return std::nullopt;
}

namespace {

std::size_t argmax(const ClassDistribution& d) {
    return static_cast<std::size_t>(std::max_element(d.begin(), d.end()) - d.begin());
}

std::vector<std::uint8_t> label_indices(const DesignMatrix& data) {
    std::vector<std::uint8_t> out(data.y.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<std::uint8_t>(index_of(data.y[i]));
    return out;
}

std::array<bool, kNumActivities> seen_classes(const DesignMatrix& data) {
    std::array<bool, kNumActivities> seen{};
    for (auto y : data.y) seen[index_of(y)] = true;
    return seen;
}

void require_trainable(const DesignMatrix& data, bool need_two_classes) {
    if (data.rows() == 0) throw ConfigError("cannot train on an empty dataset");
    if (data.y.size() != data.rows()) throw ConfigError("design matrix has no labels for every row");
    if (need_two_classes) {
        const auto seen = seen_classes(data);
        if (std::count(seen.begin(), seen.end(), true) < 2)
            throw ConfigError("training data contains a single class");
    }
}

double unit_uniform(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// ---------------------------------------------------------------------------
// Tree construction

class TreeBuilder {
public:
    TreeBuilder(const ColumnRanks& x, std::span<const std::uint8_t> labels, std::span<const double> weights,
                const TreeParams& params, Rng& rng, std::vector<double>* importance)
        : x_(x), labels_(labels), weights_(weights), params_(params), rng_(rng), importance_(importance) {
        features_.resize(x.cols);
        std::iota(features_.begin(), features_.end(), std::size_t{0});
        for (std::size_t i = 0; i < x.rows; ++i)
            if (weights[i] > 0) samples_.push_back(static_cast<std::uint32_t>(i));
        buf_.reserve(samples_.size());
        if (importance_) importance_->assign(x.cols, 0.0);
    }

    void build(std::vector<DecisionTree::Node>& nodes, std::vector<ClassDistribution>& leaves) {
        if (samples_.empty()) throw ConfigError("decision tree needs at least one sample with positive weight");
        struct Task {
            std::size_t begin, end;
            int depth;
            std::size_t node;
        };
        nodes.emplace_back();
        std::vector<Task> stack{{0, samples_.size(), 0, 0}};
        while (!stack.empty()) {
            const Task t = stack.back();
            stack.pop_back();

            ClassDistribution counts{};
            double total = 0;
            for (std::size_t i = t.begin; i < t.end; ++i) {
                const auto s = samples_[i];
                counts[labels_[s]] += weights_[s];
                total += weights_[s];
            }
            const double impurity = gini(counts, total);
            const std::size_t n = t.end - t.begin;

            Split split;
            const bool can_split = impurity > 0 && n >= 2 * params_.min_leaf &&
                                   (params_.max_depth <= 0 || t.depth < params_.max_depth);
            if (can_split) split = best_split(t.begin, t.end, counts, total);

            if (!split.valid) {
                for (auto& c : counts) c /= total;
                nodes[t.node].leaf = static_cast<std::int32_t>(leaves.size());
                leaves.push_back(counts);
                continue;
            }

            const auto mid = std::partition(samples_.begin() + static_cast<std::ptrdiff_t>(t.begin),
                                            samples_.begin() + static_cast<std::ptrdiff_t>(t.end), [&](std::uint32_t s) {
                                                return x_.at(s, split.feature) <= split.rank;
                                            });
            const std::size_t m = static_cast<std::size_t>(mid - samples_.begin());

            if (importance_) {
                (*importance_)[split.feature] +=
                    total * impurity - split.left_weight * split.left_impurity - split.right_weight * split.right_impurity;
            }

            const std::size_t left = nodes.size();
            nodes.emplace_back();
            nodes.emplace_back();
            auto& node = nodes[t.node];
            node.feature = static_cast<std::int32_t>(split.feature);
            node.threshold = split.threshold;
            node.left = static_cast<std::int32_t>(left);
            node.right = static_cast<std::int32_t>(left + 1);
            stack.push_back({m, t.end, t.depth + 1, left + 1});
            stack.push_back({t.begin, m, t.depth + 1, left});
        }
    }

private:
    struct Split {
        bool valid = false;
        std::size_t feature = 0;
        double threshold = 0;
        std::uint32_t rank = 0;  // rows with rank <= this go left
        double proxy = -std::numeric_limits<double>::infinity();
        double left_weight = 0, right_weight = 0;
        double left_impurity = 0, right_impurity = 0;
    };

    static double gini(const ClassDistribution& counts, double total) {
        if (total <= 0) return 0;
        double ss = 0;
        for (double c : counts) ss += c * c;
        return std::max(0.0, 1.0 - ss / (total * total));
    }

    Split best_split(std::size_t begin, std::size_t end, const ClassDistribution& node_counts, double node_total) {
        const std::size_t d = x_.cols;
        const bool sample_features = params_.max_features > 0 && params_.max_features < d;
        const std::size_t wanted = sample_features ? params_.max_features : d;
        Split best;
        std::size_t visited = 0;
        for (std::size_t k = 0; k < d && visited < wanted; ++k) {
            if (sample_features) {
                std::uniform_int_distribution<std::size_t> pick(k, d - 1);
                std::swap(features_[k], features_[pick(rng_)]);
            }
            const std::size_t f = features_[k];
            buf_.clear();
            std::uint32_t lo = std::numeric_limits<std::uint32_t>::max(), hi = 0;
            for (std::size_t i = begin; i < end; ++i) {
                const auto r = x_.at(samples_[i], f);
                lo = std::min(lo, r);
                hi = std::max(hi, r);
                buf_.push_back(static_cast<std::uint64_t>(r) << 32 | samples_[i]);
            }
            if (lo == hi) continue;  // constant here: does not count
            ++visited;
            if (hi - lo < buf_.size() / 4) {
                scan_buckets(f, lo, hi, node_counts, node_total, best);
            } else {
                std::sort(buf_.begin(), buf_.end());
                scan_feature(f, node_counts, node_total, best);
            }
        }
        if (best.valid) {
            // recompute the child impurities for importance bookkeeping
            ClassDistribution lc{}, rc{};
            double lw = 0, rw = 0;
            for (std::size_t i = begin; i < end; ++i) {
                const auto s = samples_[i];
                if (x_.at(s, best.feature) <= best.rank) {
                    lc[labels_[s]] += weights_[s];
                    lw += weights_[s];
                } else {
                    rc[labels_[s]] += weights_[s];
                    rw += weights_[s];
                }
            }
            best.left_weight = lw;
            best.right_weight = rw;
            best.left_impurity = gini(lc, lw);
            best.right_impurity = gini(rc, rw);
        }
        return best;
    }

    void scan_feature(std::size_t f, const ClassDistribution& node_counts, double node_total, Split& best) {
        ClassDistribution left{};
        ClassDistribution right = node_counts;
        double lw = 0, rw = node_total;
        double lss = 0, rss = 0;
        for (double c : right) rss += c * c;
        const std::size_t n = buf_.size();
        for (std::size_t i = 0; i + 1 < n; ++i) {
            const auto s = static_cast<std::uint32_t>(buf_[i]);
            const auto c = labels_[s];
            const double w = weights_[s];
            lss += (2 * left[c] + w) * w;
            left[c] += w;
            rss += (w - 2 * right[c]) * w;
            right[c] -= w;
            lw += w;
            rw -= w;
            const auto ra = static_cast<std::uint32_t>(buf_[i] >> 32), rb = static_cast<std::uint32_t>(buf_[i + 1] >> 32);
            if (ra == rb) continue;
            if (i + 1 < params_.min_leaf || n - i - 1 < params_.min_leaf) continue;
            if (lw <= 0 || rw <= 0) continue;
            const double proxy = lss / lw + rss / rw;
            if (proxy > best.proxy) {
                best.valid = true;
                best.proxy = proxy;
                best.feature = f;
                best.rank = ra;
                const double a = x_.values[f][ra], b = x_.values[f][rb];
                double thr = a + (b - a) / 2;
                if (thr >= b || thr < a) thr = a;
                best.threshold = thr;
            }
        }
    }

    // Same scan over few distinct values, via per-rank class totals instead of a sort.
    void scan_buckets(std::size_t f, std::uint32_t lo, std::uint32_t hi, const ClassDistribution& node_counts,
                      double node_total, Split& best) {
        const std::size_t range = hi - lo + 1;
        hist_.assign(range * kNumActivities, 0.0);
        bucket_n_.assign(range, 0);
        for (auto key : buf_) {
            const auto s = static_cast<std::uint32_t>(key);
            const std::size_t b = (key >> 32) - lo;
            hist_[b * kNumActivities + labels_[s]] += weights_[s];
            ++bucket_n_[b];
        }
        ClassDistribution left{};
        ClassDistribution right = node_counts;
        double lw = 0, rw = node_total;
        double lss = 0, rss = 0;
        for (double c : right) rss += c * c;
        const std::size_t n = buf_.size();
        std::size_t taken = 0;
        for (std::size_t b = 0; b < range; ++b) {
            if (bucket_n_[b] == 0) continue;
            for (std::size_t c = 0; c < kNumActivities; ++c) {
                const double w = hist_[b * kNumActivities + c];
                if (w == 0) continue;
                lss += (2 * left[c] + w) * w;
                left[c] += w;
                rss += (w - 2 * right[c]) * w;
                right[c] -= w;
                lw += w;
                rw -= w;
            }
            taken += bucket_n_[b];
            if (taken == n) break;
            if (taken < params_.min_leaf || n - taken < params_.min_leaf) continue;
            if (lw <= 0 || rw <= 0) continue;
            const double proxy = lss / lw + rss / rw;
            if (proxy > best.proxy) {
                std::size_t next = b + 1;
                while (bucket_n_[next] == 0) ++next;
                const auto ra = static_cast<std::uint32_t>(lo + b), rb = static_cast<std::uint32_t>(lo + next);
                best.valid = true;
                best.proxy = proxy;
                best.feature = f;
                best.rank = ra;
                const double a = x_.values[f][ra], bv = x_.values[f][rb];
                double thr = a + (bv - a) / 2;
                if (thr >= bv || thr < a) thr = a;
                best.threshold = thr;
            }
        }
    }

    const ColumnRanks& x_;
    std::vector<double> hist_;
    std::vector<std::size_t> bucket_n_;
    std::span<const std::uint8_t> labels_;
    std::span<const double> weights_;
    TreeParams params_;
    Rng& rng_;
    std::vector<double>* importance_;
    std::vector<std::size_t> features_;
    std::vector<std::uint32_t> samples_;
    std::vector<std::uint64_t> buf_;  // rank << 32 | row
};

json distribution_to_json(const ClassDistribution& d) { return json(std::vector<double>(d.begin(), d.end())); }

ClassDistribution distribution_from_json(const json& j) {
    const auto v = j.get<std::vector<double>>();
    if (v.size() != kNumActivities) throw ConfigError("class distribution must have 12 entries");
    ClassDistribution d{};
    std::copy(v.begin(), v.end(), d.begin());
    return d;
}

}  // namespace

DecisionTree DecisionTree::fit(const Matrix& x, std::span<const std::uint8_t> labels, std::span<const double> weights,
                               const TreeParams& params, Rng& rng, std::vector<double>* importance) {
    if (labels.size() != x.rows || weights.size() != x.rows)
        throw ConfigError("decision tree: labels and weights must match the number of rows");
    if (params.min_leaf == 0) throw ConfigError("decision tree: min_leaf must be >= 1");
    return fit(ColumnRanks(x), labels, weights, params, rng, importance);
}

DecisionTree DecisionTree::fit(const ColumnRanks& x, std::span<const std::uint8_t> labels,
                               std::span<const double> weights, const TreeParams& params, Rng& rng,
                               std::vector<double>* importance) {
    if (labels.size() != x.rows || weights.size() != x.rows)
        throw ConfigError("decision tree: labels and weights must match the number of rows");
    if (params.min_leaf == 0) throw ConfigError("decision tree: min_leaf must be >= 1");
    DecisionTree tree;
    TreeBuilder builder(x, labels, weights, params, rng, importance);
    builder.build(tree.nodes_, tree.leaves_);
    return tree;
}

ColumnRanks::ColumnRanks(const Matrix& x) : rows(x.rows), cols(x.cols), rank(x.rows * x.cols), values(x.cols) {
    if (x.rows > std::numeric_limits<std::uint32_t>::max()) throw ConfigError("too many rows for a decision tree");
    std::vector<std::uint32_t> order(x.rows);
    for (std::size_t f = 0; f < x.cols; ++f) {
        std::iota(order.begin(), order.end(), 0u);
        std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) { return x.at(a, f) < x.at(b, f); });
        auto& vals = values[f];
        for (auto i : order) {
            const double v = x.at(i, f);
            if (vals.empty() || v != vals.back()) vals.push_back(v);
            rank[f * x.rows + i] = static_cast<std::uint32_t>(vals.size() - 1);
        }
    }
}

const ClassDistribution& DecisionTree::predict_proba(std::span<const double> row) const {
    std::size_t i = 0;
    while (nodes_[i].feature >= 0) {
        const auto& n = nodes_[i];
        i = static_cast<std::size_t>(row[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
    }
    return leaves_[static_cast<std::size_t>(nodes_[i].leaf)];
}

int DecisionTree::depth() const {
    if (nodes_.empty()) return 0;
    std::vector<int> d(nodes_.size(), 0);
    int best = 0;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        best = std::max(best, d[i]);
        if (nodes_[i].feature >= 0) {
            d[static_cast<std::size_t>(nodes_[i].left)] = d[i] + 1;
            d[static_cast<std::size_t>(nodes_[i].right)] = d[i] + 1;
        }
    }
    return best;
}

bool DecisionTree::operator==(const DecisionTree& o) const {
    if (nodes_.size() != o.nodes_.size() || leaves_ != o.leaves_) return false;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const auto &a = nodes_[i], &b = o.nodes_[i];
        if (a.feature != b.feature || a.threshold != b.threshold || a.left != b.left || a.right != b.right ||
            a.leaf != b.leaf)
            return false;
    }
    return true;
}

json DecisionTree::to_json() const {
    std::vector<std::int32_t> feature, left, right, leaf;
    std::vector<double> threshold;
    for (const auto& n : nodes_) {
        feature.push_back(n.feature);
        threshold.push_back(n.threshold);
        left.push_back(n.left);
        right.push_back(n.right);
        leaf.push_back(n.leaf);
    }
    json leaves = json::array();
    for (const auto& l : leaves_) leaves.push_back(distribution_to_json(l));
    return {{"feature", feature}, {"threshold", threshold}, {"left", left},
            {"right", right},     {"leaf", leaf},           {"leaves", leaves}};
}

DecisionTree DecisionTree::from_json(const json& j) {
    DecisionTree t;
    const auto feature = j.at("feature").get<std::vector<std::int32_t>>();
    const auto threshold = j.at("threshold").get<std::vector<double>>();
    const auto left = j.at("left").get<std::vector<std::int32_t>>();
    const auto right = j.at("right").get<std::vector<std::int32_t>>();
    const auto leaf = j.at("leaf").get<std::vector<std::int32_t>>();
    for (const auto& l : j.at("leaves")) t.leaves_.push_back(distribution_from_json(l));
    const std::size_t n = feature.size();
    if (threshold.size() != n || left.size() != n || right.size() != n || leaf.size() != n || n == 0)
        throw ConfigError("malformed tree: node arrays differ in length");
    const auto in_range = [&](std::int32_t v, std::size_t limit) { return v >= 0 && static_cast<std::size_t>(v) < limit; };
    for (std::size_t i = 0; i < n; ++i) {
        DecisionTree::Node node{feature[i], threshold[i], left[i], right[i], leaf[i]};
        if (node.feature >= 0 ? !(in_range(node.left, n) && in_range(node.right, n) && static_cast<std::size_t>(node.left) > i &&
                                  static_cast<std::size_t>(node.right) > i)
                              : !in_range(node.leaf, t.leaves_.size()))
            throw ConfigError("malformed tree: node " + std::to_string(i) + " has invalid links");
        t.nodes_.push_back(node);
    }
    return t;
}

// ---------------------------------------------------------------------------
// Params

json ModelParams::to_json() const {
    return {{"forest",
             {{"trees", forest.trees},
              {"max_features", forest.max_features},
              {"min_leaf", forest.min_leaf},
              {"max_depth", forest.max_depth},
              {"bootstrap", forest.bootstrap}}},
            {"adaboost", {{"rounds", adaboost.rounds}, {"base_depth", adaboost.base_depth}}},
            {"mlp",
             {{"hidden", mlp.hidden},
              {"max_epochs", mlp.max_epochs},
              {"batch", mlp.batch},
              {"learning_rate", mlp.learning_rate},
              {"patience", mlp.patience},
              {"validation_fraction", mlp.validation_fraction},
              {"l2", mlp.l2},
              {"tolerance", mlp.tolerance}}}};
}

ModelParams ModelParams::from_json(const json& j) {
    ModelParams p;
    try {
        if (j.contains("forest")) {
            const auto& f = j["forest"];
            p.forest.trees = f.value("trees", p.forest.trees);
            p.forest.max_features = f.value("max_features", p.forest.max_features);
            p.forest.min_leaf = f.value("min_leaf", p.forest.min_leaf);
            p.forest.max_depth = f.value("max_depth", p.forest.max_depth);
            p.forest.bootstrap = f.value("bootstrap", p.forest.bootstrap);
        }
        if (j.contains("adaboost")) {
            const auto& a = j["adaboost"];
            p.adaboost.rounds = a.value("rounds", p.adaboost.rounds);
            p.adaboost.base_depth = a.value("base_depth", p.adaboost.base_depth);
        }
        if (j.contains("mlp")) {
            const auto& m = j["mlp"];
            p.mlp.hidden = m.value("hidden", p.mlp.hidden);
            p.mlp.max_epochs = m.value("max_epochs", p.mlp.max_epochs);
            p.mlp.batch = m.value("batch", p.mlp.batch);
            p.mlp.learning_rate = m.value("learning_rate", p.mlp.learning_rate);
            p.mlp.patience = m.value("patience", p.mlp.patience);
            p.mlp.validation_fraction = m.value("validation_fraction", p.mlp.validation_fraction);
            p.mlp.l2 = m.value("l2", p.mlp.l2);
            p.mlp.tolerance = m.value("tolerance", p.mlp.tolerance);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid model parameters: ") + e.what());
    }
    if (p.forest.trees == 0) throw ConfigError("forest needs at least one tree");
    if (p.forest.min_leaf == 0) throw ConfigError("min_leaf must be >= 1");
    if (p.adaboost.rounds == 0) throw ConfigError("adaboost needs at least one round");
    if (p.mlp.batch == 0 || p.mlp.max_epochs == 0) throw ConfigError("mlp batch and max_epochs must be >= 1");
    if (!(p.mlp.learning_rate > 0)) throw ConfigError("mlp learning_rate must be positive");
    if (!(p.mlp.validation_fraction >= 0 && p.mlp.validation_fraction < 1))
        throw ConfigError("mlp validation_fraction must be in [0, 1)");
    return p;
}

// ---------------------------------------------------------------------------
// MLP network

MlpNetwork::MlpNetwork(std::vector<std::size_t> layer_sizes) : sizes_(std::move(layer_sizes)) {
    if (sizes_.size() < 2) throw ConfigError("network needs an input and an output layer");
    for (auto s : sizes_)
        if (s == 0) throw ConfigError("network layers must be non-empty");
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
        offsets_.push_back(off);
        off += sizes_[l] * sizes_[l + 1] + sizes_[l + 1];
    }
    params_.assign(off, 0.0);
}

void MlpNetwork::initialize(Rng& rng) {
    std::fill(params_.begin(), params_.end(), 0.0);
    const std::size_t layers = sizes_.size() - 1;
    for (std::size_t l = 0; l + 1 < layers; ++l) {
        const double fan_in = static_cast<double>(sizes_[l]), fan_out = static_cast<double>(sizes_[l + 1]);
        const double bound = std::sqrt(6.0 / (fan_in + fan_out));
        const std::size_t count = sizes_[l] * sizes_[l + 1];
        for (std::size_t i = 0; i < count; ++i) params_[weight_offset(l) + i] = (2 * unit_uniform(rng) - 1) * bound;
    }
}

namespace {

void softmax_inplace(std::vector<double>& z) {
    const double mx = *std::max_element(z.begin(), z.end());
    double sum = 0;
    for (auto& v : z) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (auto& v : z) v /= sum;
}

}  // namespace

void MlpNetwork::forward(std::span<const double> input, std::vector<double>& probs) const {
    std::vector<double> a(input.begin(), input.end()), z;
    const std::size_t layers = sizes_.size() - 1;
    for (std::size_t l = 0; l < layers; ++l) {
        const std::size_t in = sizes_[l], out = sizes_[l + 1];
        const double* w = params_.data() + weight_offset(l);
        const double* b = params_.data() + bias_offset(l);
        z.assign(out, 0.0);
        for (std::size_t o = 0; o < out; ++o) {
            double acc = b[o];
            const double* wr = w + o * in;
            for (std::size_t i = 0; i < in; ++i) acc += wr[i] * a[i];
            z[o] = (l + 1 < layers) ? std::max(0.0, acc) : acc;
        }
        a.swap(z);
    }
    softmax_inplace(a);
    probs = std::move(a);
}

double MlpNetwork::loss_and_gradient(const Matrix& x, std::span<const std::uint8_t> targets, double l2,
                                     std::vector<double>& grad) const {
    if (x.cols != sizes_.front()) throw ConfigError("input width does not match the network");
    if (targets.size() != x.rows || x.rows == 0) throw ConfigError("batch targets must match the batch rows");
    grad.assign(params_.size(), 0.0);
    const std::size_t layers = sizes_.size() - 1;
    std::vector<std::vector<double>> acts(layers + 1);
    std::vector<double> delta, prev_delta;
    double loss = 0;

    for (std::size_t r = 0; r < x.rows; ++r) {
        const auto in_row = x.row(r);
        acts[0].assign(in_row.begin(), in_row.end());
        for (std::size_t l = 0; l < layers; ++l) {
            const std::size_t in = sizes_[l], out = sizes_[l + 1];
            const double* w = params_.data() + weight_offset(l);
            const double* b = params_.data() + bias_offset(l);
            auto& next = acts[l + 1];
            next.assign(out, 0.0);
            const double* a = acts[l].data();
            for (std::size_t o = 0; o < out; ++o) {
                double acc = b[o];
                const double* wr = w + o * in;
                for (std::size_t i = 0; i < in; ++i) acc += wr[i] * a[i];
                next[o] = (l + 1 < layers) ? std::max(0.0, acc) : acc;
            }
        }
        softmax_inplace(acts[layers]);
        const std::size_t t = targets[r];
        loss -= std::log(std::max(acts[layers][t], 1e-300));

        delta = acts[layers];
        delta[t] -= 1.0;
        for (std::size_t l = layers; l-- > 0;) {
            const std::size_t in = sizes_[l], out = sizes_[l + 1];
            double* gw = grad.data() + weight_offset(l);
            double* gb = grad.data() + bias_offset(l);
            const double* a = acts[l].data();
            for (std::size_t o = 0; o < out; ++o) {
                const double dl = delta[o];
                if (dl == 0) continue;
                gb[o] += dl;
                double* gwr = gw + o * in;
                for (std::size_t i = 0; i < in; ++i) gwr[i] += dl * a[i];
            }
            if (l == 0) break;
            const double* w = params_.data() + weight_offset(l);
            prev_delta.assign(in, 0.0);
            for (std::size_t o = 0; o < out; ++o) {
                const double dl = delta[o];
                if (dl == 0) continue;
                const double* wr = w + o * in;
                for (std::size_t i = 0; i < in; ++i) prev_delta[i] += wr[i] * dl;
            }
            for (std::size_t i = 0; i < in; ++i)
                if (a[i] <= 0) prev_delta[i] = 0;
            delta.swap(prev_delta);
        }
    }

    const double n = static_cast<double>(x.rows);
    double penalty = 0;
    for (std::size_t l = 0; l < layers; ++l) {
        const std::size_t count = sizes_[l] * sizes_[l + 1];
        const double* w = params_.data() + weight_offset(l);
        double* gw = grad.data() + weight_offset(l);
        for (std::size_t i = 0; i < count; ++i) {
            penalty += w[i] * w[i];
            gw[i] = gw[i] / n + l2 * w[i] / n;
        }
        double* gb = grad.data() + bias_offset(l);
        for (std::size_t o = 0; o < sizes_[l + 1]; ++o) gb[o] /= n;
    }
    return loss / n + 0.5 * l2 * penalty / n;
}

double MlpNetwork::loss(const Matrix& x, std::span<const std::uint8_t> targets, double l2) const {
    std::vector<double> grad;
    return loss_and_gradient(x, targets, l2, grad);
}

// ---------------------------------------------------------------------------
// TrainedModel

TrainedModel::TrainedModel(Impl impl, std::string fingerprint, std::size_t feature_count,
                           std::array<bool, kNumActivities> seen)
    : impl_(std::move(impl)), fingerprint_(std::move(fingerprint)), feature_count_(feature_count), seen_(seen) {}

namespace {

std::size_t mlp_input_width(const std::vector<MlpModel::Column>& cols) {
    std::size_t w = 0;
    for (const auto& c : cols) w += c.levels > 2 ? static_cast<std::size_t>(c.levels) : 1;
    return w;
}

void mlp_encode(const std::vector<MlpModel::Column>& cols, std::span<const double> row, std::span<double> out) {
    std::size_t k = 0;
    for (std::size_t i = 0; i < cols.size(); ++i) {
        const auto& c = cols[i];
        if (c.levels > 2) {
            const auto code = static_cast<long>(std::llround(row[i]));
            for (int l = 0; l < c.levels; ++l) out[k + static_cast<std::size_t>(l)] = code == l ? 1.0 : 0.0;
            k += static_cast<std::size_t>(c.levels);
        } else {
            out[k++] = (row[i] - c.mean) / c.scale;
        }
    }
}

struct ProbaVisitor {
    std::span<const double> row;

    ClassDistribution operator()(const MajorityModel& m) const {
        ClassDistribution d{};
        d[index_of(m.label)] = 1.0;
        return d;
    }
    ClassDistribution operator()(const StratifiedModel& m) const { return m.prior; }
    ClassDistribution operator()(const ForestModel& m) const {
        ClassDistribution d{};
        for (const auto& t : m.trees) {
            const auto& p = t.predict_proba(row);
            for (std::size_t c = 0; c < kNumActivities; ++c) d[c] += p[c];
        }
        for (auto& v : d) v /= static_cast<double>(m.trees.size());
        return d;
    }
    ClassDistribution operator()(const AdaBoostModel& m) const {
        ClassDistribution d{};
        double total = 0;
        for (std::size_t s = 0; s < m.stages.size(); ++s) {
            d[argmax(m.stages[s].predict_proba(row))] += m.alphas[s];
            total += m.alphas[s];
        }
        for (auto& v : d) v /= total;
        return d;
    }
    ClassDistribution operator()(const MlpModel& m) const {
        std::vector<double> enc(mlp_input_width(m.columns));
        mlp_encode(m.columns, row, enc);
        std::vector<double> probs;
        m.network.forward(enc, probs);
        ClassDistribution d{};
        for (std::size_t o = 0; o < m.outputs.size(); ++o) d[index_of(m.outputs[o])] = probs[o];
        return d;
    }
};

std::vector<ActivityClass> classes_from_json(const json& j) {
    std::vector<ActivityClass> out;
    for (const auto& s : j) {
        const auto c = activity_from_string(s.get<std::string>());
        if (!c) throw ConfigError("unknown activity class in model file: " + s.get<std::string>());
        out.push_back(*c);
    }
    return out;
}

json classes_to_json(const std::vector<ActivityClass>& cs) {
    json j = json::array();
    for (auto c : cs) j.push_back(std::string(to_string(c)));
    return j;
}

constexpr int kModelFormatVersion = 1;

}  // namespace

ClassDistribution TrainedModel::predict_proba_row(std::span<const double> row) const {
    if (row.size() != feature_count_) throw ConfigError("feature row width does not match the model");
    return std::visit(ProbaVisitor{row}, impl_);
}

json TrainedModel::to_json() const {
    std::vector<ActivityClass> seen;
    for (std::size_t c = 0; c < kNumActivities; ++c)
        if (seen_[c]) seen.push_back(all_activities()[c]);
    json j{{"format", "sensefold-model"},
           {"version", kModelFormatVersion},
           {"kind", std::string(to_string(kind()))},
           {"fingerprint", fingerprint_},
           {"feature_count", feature_count_},
           {"classes", classes_to_json(seen)}};
    std::visit(
        [&](const auto& m) {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, MajorityModel>) {
                j["label"] = std::string(to_string(m.label));
            } else if constexpr (std::is_same_v<T, StratifiedModel>) {
                j["prior"] = distribution_to_json(m.prior);
                j["seed"] = m.seed;
            } else if constexpr (std::is_same_v<T, ForestModel>) {
                json trees = json::array();
                for (const auto& t : m.trees) trees.push_back(t.to_json());
                j["trees"] = std::move(trees);
                j["importance"] = m.importance;
            } else if constexpr (std::is_same_v<T, AdaBoostModel>) {
                json stages = json::array();
                for (const auto& t : m.stages) stages.push_back(t.to_json());
                j["stages"] = std::move(stages);
                j["alphas"] = m.alphas;
            } else {
                json cols = json::array();
                for (const auto& c : m.columns) cols.push_back({c.mean, c.scale, c.levels});
                j["columns"] = std::move(cols);
                j["outputs"] = classes_to_json(m.outputs);
                j["layers"] = m.network.layer_sizes();
                j["params"] = m.network.params();
            }
        },
        impl_);
    return j;
}

TrainedModel TrainedModel::from_json(const json& j) {
    try {
        if (j.value("format", std::string()) != "sensefold-model") throw ConfigError("not a sensefold model file");
        if (j.at("version").get<int>() != kModelFormatVersion)
            throw ConfigError("unsupported model format version " + j.at("version").dump());
        const auto kind = model_kind_from_string(j.at("kind").get<std::string>());
        if (!kind) throw ConfigError("unknown model kind " + j.at("kind").dump());
        std::array<bool, kNumActivities> seen{};
        for (auto c : classes_from_json(j.at("classes"))) seen[index_of(c)] = true;
        const auto fp = j.at("fingerprint").get<std::string>();
        const auto width = j.at("feature_count").get<std::size_t>();

        Impl impl;
        switch (*kind) {
            case ModelKind::Majority: {
                const auto c = activity_from_string(j.at("label").get<std::string>());
                if (!c) throw ConfigError("unknown majority label");
                impl = MajorityModel{*c};
                break;
            }
            case ModelKind::Stratified:
                impl = StratifiedModel{distribution_from_json(j.at("prior")), j.at("seed").get<std::uint64_t>()};
                break;
            case ModelKind::RandomForest: {
                ForestModel m;
                for (const auto& t : j.at("trees")) m.trees.push_back(DecisionTree::from_json(t));
                m.importance = j.at("importance").get<std::vector<double>>();
                if (m.trees.empty()) throw ConfigError("forest without trees");
                impl = std::move(m);
                break;
            }
            case ModelKind::AdaBoost: {
                AdaBoostModel m;
                for (const auto& t : j.at("stages")) m.stages.push_back(DecisionTree::from_json(t));
                m.alphas = j.at("alphas").get<std::vector<double>>();
                if (m.stages.empty() || m.stages.size() != m.alphas.size())
                    throw ConfigError("adaboost stages and weights differ in length");
                impl = std::move(m);
                break;
            }
            case ModelKind::Mlp: {
                MlpModel m;
                for (const auto& c : j.at("columns"))
                    m.columns.push_back({c.at(0).get<double>(), c.at(1).get<double>(), c.at(2).get<int>()});
                m.outputs = classes_from_json(j.at("outputs"));
                m.network = MlpNetwork(j.at("layers").get<std::vector<std::size_t>>());
                const auto params = j.at("params").get<std::vector<double>>();
                if (params.size() != m.network.params().size()) throw ConfigError("mlp parameter count mismatch");
                m.network.params() = params;
                if (m.network.layer_sizes().front() != mlp_input_width(m.columns) ||
                    m.network.layer_sizes().back() != m.outputs.size())
                    throw ConfigError("mlp layer sizes do not match its encoding");
                impl = std::move(m);
                break;
            }
        }
        return TrainedModel(std::move(impl), fp, width, seen);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed model file: ") + e.what());
    }
}

void TrainedModel::save(const std::filesystem::path& path) const { write_text_file(path, to_json().dump()); }

TrainedModel TrainedModel::load(const std::filesystem::path& path) {
    const auto text = read_text_file(path);
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError("cannot parse model file " + path.string() + ": " + e.what());
    }
    return from_json(j);
}

// ---------------------------------------------------------------------------
// Training

TrainedModel train_majority(const DesignMatrix& data) {
    require_trainable(data, false);
    std::array<std::size_t, kNumActivities> counts{};
    for (auto y : data.y) ++counts[index_of(y)];
    std::optional<ActivityClass> best;
    for (std::size_t c = 0; c < kNumActivities; ++c) {
        if (counts[c] == 0) continue;
        const auto cls = all_activities()[c];
        if (!best || counts[c] > counts[index_of(*best)] ||
            (counts[c] == counts[index_of(*best)] && to_string(cls) < to_string(*best)))
            best = cls;
    }
    return TrainedModel(MajorityModel{*best}, data.fingerprint, data.cols(), seen_classes(data));
}

TrainedModel train_stratified(const DesignMatrix& data, std::uint64_t seed) {
    require_trainable(data, false);
    StratifiedModel m;
    m.seed = seed;
    for (auto y : data.y) m.prior[index_of(y)] += 1.0;
    for (auto& p : m.prior) p /= static_cast<double>(data.rows());
    return TrainedModel(m, data.fingerprint, data.cols(), seen_classes(data));
}

TrainedModel train_random_forest(const DesignMatrix& data, const ForestParams& params, std::uint64_t seed) {
    require_trainable(data, true);
    if (params.trees == 0) throw ConfigError("forest needs at least one tree");
    const auto labels = label_indices(data);
    const std::size_t n = data.rows(), d = data.cols();
    TreeParams tp;
    tp.max_depth = params.max_depth;
    tp.min_leaf = params.min_leaf;
    tp.max_features = params.max_features > 0
                          ? std::min(params.max_features, d)
                          : std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(d))));

    const ColumnRanks ranks(data.x);
    ForestModel m;
    m.trees.resize(params.trees);
    std::vector<std::vector<double>> importances(params.trees);
    parallel_for(params.trees, params.jobs, [&](std::size_t t) {
        Rng rng(derive_seed(seed, t));
        std::vector<double> w(n, 1.0);
        if (params.bootstrap) {
            std::fill(w.begin(), w.end(), 0.0);
            std::uniform_int_distribution<std::size_t> pick(0, n - 1);
            for (std::size_t i = 0; i < n; ++i) w[pick(rng)] += 1.0;
        }
        m.trees[t] = DecisionTree::fit(ranks, labels, w, tp, rng, &importances[t]);
    });

    m.importance.assign(d, 0.0);
    for (const auto& imp : importances) {
        const double s = std::accumulate(imp.begin(), imp.end(), 0.0);
        if (s <= 0) continue;
        for (std::size_t f = 0; f < d; ++f) m.importance[f] += imp[f] / s;
    }
    const double total = std::accumulate(m.importance.begin(), m.importance.end(), 0.0);
    if (total > 0)
        for (auto& v : m.importance) v /= total;
    return TrainedModel(std::move(m), data.fingerprint, d, seen_classes(data));
}

TrainedModel train_adaboost(const DesignMatrix& data, const AdaBoostParams& params, std::uint64_t seed) {
    require_trainable(data, true);
    if (params.rounds == 0) throw ConfigError("adaboost needs at least one round");
    const auto labels = label_indices(data);
    const auto seen = seen_classes(data);
    const double k = static_cast<double>(std::count(seen.begin(), seen.end(), true));
    const std::size_t n = data.rows();
    TreeParams tp;
    tp.max_depth = params.base_depth;
    Rng rng(seed);

    const ColumnRanks ranks(data.x);
    std::vector<double> w(n, 1.0 / static_cast<double>(n));
    AdaBoostModel m;
    for (std::size_t round = 0; round < params.rounds; ++round) {
        auto tree = DecisionTree::fit(ranks, labels, w, tp, rng);
        std::vector<std::uint8_t> wrong(n);
        double err = 0, total = 0;
        for (std::size_t i = 0; i < n; ++i) {
            wrong[i] = argmax(tree.predict_proba(data.x.row(i))) != labels[i];
            if (wrong[i]) err += w[i];
            total += w[i];
        }
        err /= total;
        if (err <= 0) {
            m.stages.push_back(std::move(tree));
            m.alphas.push_back(1.0);
            break;
        }
        if (err >= 1.0 - 1.0 / k) {
            if (m.stages.empty()) {
                m.stages.push_back(std::move(tree));
                m.alphas.push_back(1.0);
            }
            break;
        }
        const double alpha = std::log((1 - err) / err) + std::log(k - 1);
        double sum = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (wrong[i]) w[i] *= std::exp(alpha);
            sum += w[i];
        }
        for (auto& v : w) v /= sum;
        m.stages.push_back(std::move(tree));
        m.alphas.push_back(alpha);
    }
    return TrainedModel(std::move(m), data.fingerprint, data.cols(), seen);
}

TrainedModel train_mlp(const DesignMatrix& data, const MlpParams& params, std::uint64_t seed) {
    require_trainable(data, true);
    if (params.batch == 0 || params.max_epochs == 0) throw ConfigError("mlp batch and max_epochs must be >= 1");
    const std::size_t n = data.rows(), d = data.cols();
    Rng rng(seed);

    MlpModel m;
    m.columns.resize(d);
    for (std::size_t c = 0; c < d; ++c) {
        auto& col = m.columns[c];
        col.levels = c < data.levels.size() ? data.levels[c] : 0;
        if (col.levels > 2) continue;
        double sum = 0, ss = 0;
        for (std::size_t r = 0; r < n; ++r) sum += data.x.at(r, c);
        col.mean = sum / static_cast<double>(n);
        for (std::size_t r = 0; r < n; ++r) ss += (data.x.at(r, c) - col.mean) * (data.x.at(r, c) - col.mean);
        const double sd = std::sqrt(ss / static_cast<double>(n));
        col.scale = sd > 0 ? sd : 1.0;
    }
    const auto seen = seen_classes(data);
    std::array<std::uint8_t, kNumActivities> unit_of{};
    for (std::size_t c = 0; c < kNumActivities; ++c)
        if (seen[c]) {
            unit_of[c] = static_cast<std::uint8_t>(m.outputs.size());
            m.outputs.push_back(all_activities()[c]);
        }

    const std::size_t width = mlp_input_width(m.columns);
    Matrix enc(n, width);
    std::vector<std::uint8_t> targets(n);
    for (std::size_t r = 0; r < n; ++r) {
        mlp_encode(m.columns, data.x.row(r), enc.row(r));
        targets[r] = unit_of[index_of(data.y[r])];
    }

    std::vector<std::size_t> layers{width};
    layers.insert(layers.end(), params.hidden.begin(), params.hidden.end());
    layers.push_back(m.outputs.size());
    m.network = MlpNetwork(layers);
    m.network.initialize(rng);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t n_val = static_cast<std::size_t>(params.validation_fraction * static_cast<double>(n));
    if (n_val == 0 || n_val >= n) n_val = 0;
    const std::vector<std::size_t> val_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<std::size_t> train_idx(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());

    auto gather = [&](std::span<const std::size_t> idx, Matrix& bx, std::vector<std::uint8_t>& by) {
        bx = Matrix(idx.size(), width);
        by.resize(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            std::copy_n(enc.row(idx[i]).begin(), width, bx.row(i).begin());
            by[i] = targets[idx[i]];
        }
    };
    Matrix val_x;
    std::vector<std::uint8_t> val_y;
    if (n_val > 0) gather(val_idx, val_x, val_y);

    auto& theta = m.network.params();
    std::vector<double> mom(theta.size(), 0.0), vel(theta.size(), 0.0), grad;
    constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
    std::uint64_t step = 0;
    double best_loss = std::numeric_limits<double>::infinity();
    std::vector<double> best_theta = theta;
    std::size_t stale = 0;
    Matrix bx;
    std::vector<std::uint8_t> by;

    for (std::size_t epoch = 1; epoch <= params.max_epochs; ++epoch) {
        std::shuffle(train_idx.begin(), train_idx.end(), rng);
        double epoch_loss = 0;
        for (std::size_t b = 0; b < train_idx.size(); b += params.batch) {
            const std::size_t e = std::min(train_idx.size(), b + params.batch);
            gather(std::span<const std::size_t>(train_idx).subspan(b, e - b), bx, by);
            const double loss = m.network.loss_and_gradient(bx, by, params.l2, grad);
            if (!std::isfinite(loss)) throw Error("MLP loss became non-finite at epoch " + std::to_string(epoch));
            epoch_loss += loss * static_cast<double>(e - b);
            ++step;
            const double lr = params.learning_rate * std::sqrt(1 - std::pow(kBeta2, static_cast<double>(step))) /
                              (1 - std::pow(kBeta1, static_cast<double>(step)));
            for (std::size_t i = 0; i < theta.size(); ++i) {
                mom[i] = kBeta1 * mom[i] + (1 - kBeta1) * grad[i];
                vel[i] = kBeta2 * vel[i] + (1 - kBeta2) * grad[i] * grad[i];
                theta[i] -= lr * mom[i] / (std::sqrt(vel[i]) + kEps);
            }
        }
        epoch_loss /= static_cast<double>(train_idx.size());
        const double monitored = n_val > 0 ? m.network.loss(val_x, val_y, params.l2) : epoch_loss;
        if (!std::isfinite(monitored)) throw Error("MLP loss became non-finite at epoch " + std::to_string(epoch));
        if (monitored < best_loss - params.tolerance) {
            best_loss = monitored;
            best_theta = theta;
            stale = 0;
        } else if (++stale >= params.patience) {
            break;
        }
    }
    theta = best_theta;
    return TrainedModel(std::move(m), data.fingerprint, d, seen);
}

TrainedModel train_model(ModelKind kind, const DesignMatrix& data, const ModelParams& params, std::uint64_t seed) {
    switch (kind) {
        case ModelKind::Majority: return train_majority(data);
        case ModelKind::Stratified: return train_stratified(data, seed);
        case ModelKind::RandomForest: return train_random_forest(data, params.forest, seed);
        case ModelKind::AdaBoost: return train_adaboost(data, params.adaboost, seed);
        case ModelKind::Mlp: return train_mlp(data, params.mlp, seed);
    }
    throw ConfigError("unknown model kind");
}

std::vector<ClassDistribution> predict_proba(const TrainedModel& model, const DesignMatrix& data) {
    if (data.fingerprint != model.fingerprint())
        throw ConfigError("feature registry fingerprint " + data.fingerprint + " does not match the model's " +
                          model.fingerprint());
    std::vector<ClassDistribution> out(data.rows());
    for (std::size_t r = 0; r < data.rows(); ++r) out[r] = model.predict_proba_row(data.x.row(r));
    return out;
}

std::vector<ActivityClass> predict(const TrainedModel& model, const DesignMatrix& data) {
    const auto proba = predict_proba(model, data);
    std::vector<ActivityClass> out(proba.size());
    if (const auto* s = std::get_if<StratifiedModel>(&model.impl())) {
        Rng rng(s->seed);
        for (std::size_t r = 0; r < out.size(); ++r) {
            const double u = unit_uniform(rng);
            double acc = 0;
            std::size_t pick = kNumActivities;
            for (std::size_t c = 0; c < kNumActivities; ++c) {
                if (s->prior[c] <= 0) continue;
                pick = c;
                acc += s->prior[c];
                if (u < acc) break;
            }
            out[r] = all_activities()[pick];
        }
        return out;
    }
    for (std::size_t r = 0; r < out.size(); ++r) out[r] = all_activities()[argmax(proba[r])];
    return out;
}

std::vector<double> gini_importance(const TrainedModel& model) {
    const auto* f = std::get_if<ForestModel>(&model.impl());
    if (!f) throw ConfigError("Gini importance needs a random forest model, got " + std::string(to_string(model.kind())));
    return f->importance;
}

}  // namespace sensefold
