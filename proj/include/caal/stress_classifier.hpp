#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include "caal/hrv_features.hpp"

namespace caal {

/// Self-reported stress, 0 = "not at all" ... 4 = "extremely".
class StressLevel {
public:
    explicit StressLevel(int level);
    int value() const { return level_; }
    friend bool operator==(StressLevel, StressLevel) = default;

private:
    int level_;
};

struct LabelScheme {
    std::set<int> negative;
    std::set<int> positive;

    /// {0,1,2} -> 0 ("not stressed"), {3,4} -> 1 ("stressed").
    static LabelScheme standard();
    void validate() const;
};

/// 1 / 0, or nullopt when the level belongs to neither set.
std::optional<int> map_label(StressLevel level, const LabelScheme& scheme);

struct ForestConfig {
    int n_trees = 500;
    int max_depth = 5;
    int min_samples_split = 2;
    /// 0 selects ceil(sqrt(feature_count)).
    int features_per_split = 0;
    bool bootstrap = true;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Row-major feature matrix with binary labels.
class Dataset {
public:
    explicit Dataset(std::size_t n_features = kFeatureCount) : n_features_(n_features) {}

    void add(std::span<const double> x, int label);
    void add(const FeatureVector& f, int label);
    void append(const Dataset& other);

    std::size_t size() const { return labels_.size(); }
    std::size_t n_features() const { return n_features_; }
    std::span<const double> row(std::size_t i) const {
        return {values_.data() + i * n_features_, n_features_};
    }
    double value(std::size_t i, std::size_t f) const { return values_[i * n_features_ + f]; }
    int label(std::size_t i) const { return labels_[i]; }
    std::size_t count(int label) const;

private:
    std::size_t n_features_;
    std::vector<double> values_;
    std::vector<int> labels_;
};

/// Axis-aligned binary tree. Node 0 is the root; a sample goes left when
/// x[feature] <= threshold. Leaves have feature == -1 and carry leaf_class.
struct DecisionTree {
    struct Node {
        int feature = -1;
        double threshold = 0;
        int left = -1;
        int right = -1;
        int leaf_class = 0;
    };
    std::vector<Node> nodes;

    int predict(std::span<const double> x) const;
    int depth() const;
};

class ForestModel {
public:
    ForestModel(std::vector<DecisionTree> trees, std::size_t feature_count, double threshold = 0.5);

    /// Fraction of trees voting for class 1.
    double predict_raw(std::span<const double> x) const;
    double predict_raw(const FeatureVector& f) const;
    /// score >= threshold.
    int predict(std::span<const double> x) const;
    int predict(const FeatureVector& f) const;

    std::size_t feature_count() const { return feature_count_; }
    double threshold() const { return threshold_; }
    const std::vector<DecisionTree>& trees() const { return trees_; }

    void save(const std::filesystem::path& path) const;
    static ForestModel load(const std::filesystem::path& path);
    std::string to_json() const;
    static ForestModel from_json(const std::string& text);

private:
    std::vector<DecisionTree> trees_;
    std::size_t feature_count_;
    double threshold_;
};

/// Trains a Gini forest. Throws TrainingError when a class is missing,
/// InvalidInput on non-finite features.
ForestModel train_forest(const Dataset& data, const ForestConfig& config);

/// Single tree with the forest's split rule; exposed for tests.
DecisionTree train_tree(const Dataset& data, const ForestConfig& config, std::uint64_t tree_seed);

/// TP / (TP + FN) on class 1. Throws UndefinedMetric when the set has no positives.
double evaluate_recall(const ForestModel& model, const Dataset& test);

/// Gini impurity 1 - p0^2 - p1^2 of a node holding n0 and n1 samples.
double gini(double n0, double n1);

}  // namespace caal
