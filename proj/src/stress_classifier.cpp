#include "caal/stress_classifier.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "caal/errors.hpp"
#include "caal/rng.hpp"

namespace caal {

StressLevel::StressLevel(int level) : level_(level) {
    if (level < 0 || level > 4) throw InvalidInput("stress level must be in 0..4, got " + std::to_string(level));
}

LabelScheme LabelScheme::standard() { return LabelScheme{{0, 1, 2}, {3, 4}}; }

void LabelScheme::validate() const {
    if (negative.empty() || positive.empty()) throw ConfigError("label scheme sets must be non-empty");
    for (int l : negative) {
        if (l < 0 || l > 4) throw ConfigError("label scheme level out of range");
        if (positive.count(l)) throw ConfigError("label scheme sets overlap at level " + std::to_string(l));
    }
    for (int l : positive)
        if (l < 0 || l > 4) throw ConfigError("label scheme level out of range");
}

std::optional<int> map_label(StressLevel level, const LabelScheme& scheme) {
    if (scheme.positive.count(level.value())) return 1;
    if (scheme.negative.count(level.value())) return 0;
    return std::nullopt;
}

void ForestConfig::validate() const {
    if (n_trees < 1) throw ConfigError("forest.n_trees must be >= 1");
    if (max_depth < 1) throw ConfigError("forest.max_depth must be >= 1");
    if (min_samples_split < 2) throw ConfigError("forest.min_samples_split must be >= 2");
    if (features_per_split < 0) throw ConfigError("forest.features_per_split must be >= 0");
}

void Dataset::add(std::span<const double> x, int label) {
    if (x.size() != n_features_) throw InvalidInput("dataset row has wrong feature count");
    if (label != 0 && label != 1) throw InvalidInput("dataset labels must be 0 or 1");
    values_.insert(values_.end(), x.begin(), x.end());
    labels_.push_back(label);
}

void Dataset::add(const FeatureVector& f, int label) {
    auto arr = f.to_array();
    add(std::span<const double>(arr), label);
}

void Dataset::append(const Dataset& other) {
    if (other.n_features_ != n_features_) throw InvalidInput("dataset feature counts differ");
    values_.insert(values_.end(), other.values_.begin(), other.values_.end());
    labels_.insert(labels_.end(), other.labels_.begin(), other.labels_.end());
}

std::size_t Dataset::count(int label) const {
    return static_cast<std::size_t>(std::count(labels_.begin(), labels_.end(), label));
}

int DecisionTree::predict(std::span<const double> x) const {
    int i = 0;
    while (nodes[i].feature >= 0) {
        const auto& n = nodes[i];
        i = x[n.feature] <= n.threshold ? n.left : n.right;
    }
    return nodes[i].leaf_class;
}

int DecisionTree::depth() const {
    std::vector<int> d(nodes.size(), 0);
    int best = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        best = std::max(best, d[i]);
        if (nodes[i].feature >= 0) {
            d[nodes[i].left] = d[i] + 1;
            d[nodes[i].right] = d[i] + 1;
        }
    }
    return best;
}

double gini(double n0, double n1) {
    const double w = n0 + n1;
    if (w <= 0) return 0;
    const double p0 = n0 / w, p1 = n1 / w;
    return 1.0 - p0 * p0 - p1 * p1;
}

namespace {

// Per-feature ordering of every row, computed once per forest.
struct Presorted {
    std::vector<std::vector<std::uint32_t>> order;
    std::vector<std::vector<double>> column;  // column[f][i] == data.value(i, f)
    std::vector<char> label;

    explicit Presorted(const Dataset& data) : order(data.n_features()), column(data.n_features()), label(data.size()) {
        const auto n = static_cast<std::uint32_t>(data.size());
        for (std::uint32_t i = 0; i < n; ++i) label[i] = static_cast<char>(data.label(i));
        for (std::size_t f = 0; f < data.n_features(); ++f) {
            column[f].resize(n);
            for (std::uint32_t i = 0; i < n; ++i) column[f][i] = data.value(i, f);
            auto& o = order[f];
            o.resize(n);
            std::iota(o.begin(), o.end(), 0u);
            std::stable_sort(o.begin(), o.end(), [&](std::uint32_t a, std::uint32_t b) {
                return data.value(a, f) < data.value(b, f);
            });
        }
    }
};

class TreeBuilder {
public:
    TreeBuilder(const Dataset& data, const Presorted& pre, const ForestConfig& cfg, std::uint64_t seed)
        : pre_(pre), cfg_(cfg), rng_(seed), weight_(data.size(), 0.0), goes_left_(data.size(), 0) {
        const std::size_t n = data.size();
        if (cfg.bootstrap) {
            std::uniform_int_distribution<std::size_t> pick(0, n - 1);
            for (std::size_t i = 0; i < n; ++i) weight_[pick(rng_)] += 1.0;
        } else {
            std::fill(weight_.begin(), weight_.end(), 1.0);
        }
        w_class0_.resize(n);
        w_class1_.resize(n);
        for (std::size_t i = 0; i < n; ++i) (pre.label[i] ? w_class1_ : w_class0_)[i] = weight_[i];
        const std::size_t d = data.n_features();
        sorted_.resize(d);
        for (std::size_t f = 0; f < d; ++f) {
            auto& s = sorted_[f];
            s.reserve(n);
            for (auto idx : pre.order[f])
                if (weight_[idx] > 0) s.push_back(idx);
        }
        scratch_.resize(sorted_.empty() ? 0 : sorted_[0].size());
        features_.resize(d);
        std::iota(features_.begin(), features_.end(), 0u);
        per_split_ = cfg.features_per_split > 0
                         ? std::min<std::size_t>(cfg.features_per_split, d)
                         : static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(d))));
    }

    DecisionTree build() {
        tree_.nodes.clear();
        tree_.nodes.emplace_back();
        grow(0, 0, sorted_.empty() ? 0 : sorted_[0].size(), 0);
        return std::move(tree_);
    }

private:
    void grow(int node, std::size_t lo, std::size_t hi, int depth) {
        double w0 = 0, w1 = 0;
        const auto& any = sorted_[0];
        for (std::size_t k = lo; k < hi; ++k) {
            const auto idx = any[k];
            (pre_.label[idx] ? w1 : w0) += weight_[idx];
        }
        tree_.nodes[node].leaf_class = w1 > w0 ? 1 : 0;

        const double total = w0 + w1;
        if (depth >= cfg_.max_depth || total < cfg_.min_samples_split || w0 == 0 || w1 == 0) return;

        // Sample features without replacement (partial Fisher-Yates).
        for (std::size_t i = 0; i < per_split_; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, features_.size() - 1);
            std::swap(features_[i], features_[pick(rng_)]);
        }

        const double parent = total * gini(w0, w1);
        double best_gain = 0;
        int best_feature = -1;
        double best_threshold = 0;
        double best_l0 = 0, best_l1 = 0;
        for (std::size_t s = 0; s < per_split_; ++s) {
            const auto f = features_[s];
            const auto& order = sorted_[f];
            const auto& col = pre_.column[f];
            double l0 = 0, l1 = 0;
            for (std::size_t k = lo; k + 1 < hi; ++k) {
                const auto idx = order[k];
                l0 += w_class0_[idx];
                l1 += w_class1_[idx];
                const double x = col[idx];
                const double x_next = col[order[k + 1]];
                if (!(x < x_next)) continue;
                const double r0 = w0 - l0, r1 = w1 - l1;
                // n * gini(n0, n1) == n - (n0^2 + n1^2) / n
                const double nl = l0 + l1, nr = r0 + r1;
                const double child = nl - (l0 * l0 + l1 * l1) / nl + nr - (r0 * r0 + r1 * r1) / nr;
                const double gain = (parent - child) / total;
                if (gain > best_gain + 1e-15) {
                    best_gain = gain;
                    best_feature = static_cast<int>(f);
                    best_threshold = x + 0.5 * (x_next - x);
                    best_l0 = l0;
                    best_l1 = l1;
                }
            }
        }
        if (best_feature < 0) return;

        if (depth + 1 >= cfg_.max_depth) {
            // Children are leaves; their classes follow from the split counts.
            attach_children(node, best_feature, best_threshold, best_l1 > best_l0 ? 1 : 0,
                            w1 - best_l1 > w0 - best_l0 ? 1 : 0);
            return;
        }

        // Mark left membership, then stable-partition every feature's segment.
        const auto& split_order = sorted_[best_feature];
        std::size_t n_left = 0;
        for (std::size_t k = lo; k < hi; ++k) {
            const auto idx = split_order[k];
            const bool left = pre_.column[best_feature][idx] <= best_threshold;
            goes_left_[idx] = left;
            n_left += left;
        }
        for (auto& order : sorted_) {
            std::size_t a = lo, b = 0;
            for (std::size_t k = lo; k < hi; ++k) {
                const auto idx = order[k];
                if (goes_left_[idx]) order[a++] = idx;
                else scratch_[b++] = idx;
            }
            std::copy(scratch_.begin(), scratch_.begin() + static_cast<std::ptrdiff_t>(b), order.begin() + static_cast<std::ptrdiff_t>(a));
        }

        const auto [left, right] = attach_children(node, best_feature, best_threshold, 0, 0);
        grow(left, lo, lo + n_left, depth + 1);
        grow(right, lo + n_left, hi, depth + 1);
    }

    std::pair<int, int> attach_children(int node, int feature, double threshold, int left_class, int right_class) {
        const int left = static_cast<int>(tree_.nodes.size());
        tree_.nodes.emplace_back();
        tree_.nodes.back().leaf_class = left_class;
        const int right = static_cast<int>(tree_.nodes.size());
        tree_.nodes.emplace_back();
        tree_.nodes.back().leaf_class = right_class;
        auto& n = tree_.nodes[node];
        n.feature = feature;
        n.threshold = threshold;
        n.left = left;
        n.right = right;
        return {left, right};
    }

    const Presorted& pre_;
    const ForestConfig& cfg_;
    std::mt19937_64 rng_;
    std::vector<double> weight_;
    std::vector<double> w_class0_, w_class1_;
    std::vector<char> goes_left_;
    std::vector<std::vector<std::uint32_t>> sorted_;
    std::vector<std::uint32_t> scratch_;
    std::vector<std::uint32_t> features_;
    std::size_t per_split_ = 1;
    DecisionTree tree_;
};

void check_trainable(const Dataset& data) {
    if (data.n_features() == 0) throw InvalidInput("dataset has no features");
    for (std::size_t i = 0; i < data.size(); ++i)
        for (double v : data.row(i))
            if (!std::isfinite(v)) throw InvalidInput("non-finite feature in training row " + std::to_string(i));
    if (data.count(1) == 0) throw TrainingError("training set has no samples of class 1 (stressed)");
    if (data.count(0) == 0) throw TrainingError("training set has no samples of class 0 (not stressed)");
}

}  // namespace

DecisionTree train_tree(const Dataset& data, const ForestConfig& config, std::uint64_t tree_seed) {
    config.validate();
    check_trainable(data);
    Presorted pre(data);
    return TreeBuilder(data, pre, config, tree_seed).build();
}

ForestModel train_forest(const Dataset& data, const ForestConfig& config) {
    config.validate();
    check_trainable(data);
    Presorted pre(data);
    std::vector<DecisionTree> trees;
    trees.reserve(static_cast<std::size_t>(config.n_trees));
    for (int t = 0; t < config.n_trees; ++t)
        trees.push_back(TreeBuilder(data, pre, config, derive_seed(config.seed, static_cast<std::uint64_t>(t))).build());
    return ForestModel(std::move(trees), data.n_features());
}

ForestModel::ForestModel(std::vector<DecisionTree> trees, std::size_t feature_count, double threshold)
    : trees_(std::move(trees)), feature_count_(feature_count), threshold_(threshold) {
    if (trees_.empty()) throw InvalidInput("forest needs at least one tree");
    for (const auto& t : trees_) {
        if (t.nodes.empty()) throw CorruptedModel("empty decision tree");
        for (const auto& n : t.nodes) {
            const auto size = static_cast<int>(t.nodes.size());
            if (n.feature >= static_cast<int>(feature_count_)) throw CorruptedModel("split feature out of range");
            if (n.feature >= 0 && (n.left <= 0 || n.right <= 0 || n.left >= size || n.right >= size))
                throw CorruptedModel("child index out of range");
            if (n.leaf_class != 0 && n.leaf_class != 1) throw CorruptedModel("leaf class must be 0 or 1");
        }
    }
}

double ForestModel::predict_raw(std::span<const double> x) const {
    std::size_t votes = 0;
    for (const auto& t : trees_) votes += static_cast<std::size_t>(t.predict(x));
    return static_cast<double>(votes) / static_cast<double>(trees_.size());
}

double ForestModel::predict_raw(const FeatureVector& f) const {
    auto arr = f.to_array();
    return predict_raw(std::span<const double>(arr));
}

int ForestModel::predict(std::span<const double> x) const { return predict_raw(x) >= threshold_ ? 1 : 0; }

int ForestModel::predict(const FeatureVector& f) const { return predict_raw(f) >= threshold_ ? 1 : 0; }

std::string ForestModel::to_json() const {
    nlohmann::json j;
    j["format"] = "caal-forest";
    j["version"] = 1;
    j["feature_count"] = feature_count_;
    j["threshold"] = threshold_;
    auto& arr = j["trees"] = nlohmann::json::array();
    for (const auto& t : trees_) {
        nlohmann::json jt;
        std::vector<int> feature, left, right, leaf;
        std::vector<double> thr;
        for (const auto& n : t.nodes) {
            feature.push_back(n.feature);
            thr.push_back(n.threshold);
            left.push_back(n.left);
            right.push_back(n.right);
            leaf.push_back(n.leaf_class);
        }
        jt["feature"] = feature;
        jt["threshold"] = thr;
        jt["left"] = left;
        jt["right"] = right;
        jt["leaf_class"] = leaf;
        arr.push_back(std::move(jt));
    }
    return j.dump();
}

ForestModel ForestModel::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw CorruptedModel(std::string("forest checkpoint is not valid JSON: ") + e.what());
    }
    if (j.value("format", "") != "caal-forest") throw CorruptedModel("not a forest checkpoint");
    if (j.value("version", 0) != 1) throw CorruptedModel("unsupported forest checkpoint version");
    try {
        std::vector<DecisionTree> trees;
        for (const auto& jt : j.at("trees")) {
            auto feature = jt.at("feature").get<std::vector<int>>();
            auto thr = jt.at("threshold").get<std::vector<double>>();
            auto left = jt.at("left").get<std::vector<int>>();
            auto right = jt.at("right").get<std::vector<int>>();
            auto leaf = jt.at("leaf_class").get<std::vector<int>>();
            const auto n = feature.size();
            if (thr.size() != n || left.size() != n || right.size() != n || leaf.size() != n)
                throw CorruptedModel("tree arrays have mismatched lengths");
            DecisionTree t;
            t.nodes.resize(n);
            for (std::size_t i = 0; i < n; ++i) t.nodes[i] = {feature[i], thr[i], left[i], right[i], leaf[i]};
            trees.push_back(std::move(t));
        }
        return ForestModel(std::move(trees), j.at("feature_count").get<std::size_t>(), j.at("threshold").get<double>());
    } catch (const nlohmann::json::exception& e) {
        throw CorruptedModel(std::string("malformed forest checkpoint: ") + e.what());
    }
}

void ForestModel::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << to_json() << '\n';
}

ForestModel ForestModel::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read forest checkpoint " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

double evaluate_recall(const ForestModel& model, const Dataset& test) {
    std::size_t tp = 0, fn = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
        if (test.label(i) != 1) continue;
        if (model.predict(test.row(i)) == 1) ++tp;
        else ++fn;
    }
    if (tp + fn == 0) throw UndefinedMetric("recall is undefined: test set has no positive samples");
    return static_cast<double>(tp) / static_cast<double>(tp + fn);
}

}  // namespace caal
