#include <doctest.h>

#include <filesystem>
#include <random>

#include "caal/errors.hpp"
#include "caal/stress_classifier.hpp"

using namespace caal;

namespace {

Dataset separated_1d(int n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.1, 1.0);
    Dataset d(1);
    for (int i = 0; i < n; ++i) {
        const double x = u(rng);
        const int y = i % 2;
        const double v = y ? x : -x;
        d.add(std::span<const double>(&v, 1), y);
    }
    return d;
}

Dataset random_dataset(std::size_t n, std::size_t d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z(0, 1);
    Dataset out(d);
    std::vector<double> x(d);
    for (std::size_t i = 0; i < n; ++i) {
        for (auto& v : x) v = std::round(z(rng) * 4) / 4;  // ties exercise duplicate handling
        const int y = (x[0] + 0.5 * x[d - 1] + 0.7 * z(rng)) > 0.3;
        out.add(x, y);
    }
    return out;
}

/// Exhaustive best Gini gain over every feature and every midpoint between distinct values.
double best_gain_by_search(const Dataset& d) {
    const double n = static_cast<double>(d.size());
    const double parent = n * gini(static_cast<double>(d.count(0)), static_cast<double>(d.count(1)));
    double best = 0;
    for (std::size_t f = 0; f < d.n_features(); ++f) {
        std::vector<double> vals;
        for (std::size_t i = 0; i < d.size(); ++i) vals.push_back(d.value(i, f));
        std::sort(vals.begin(), vals.end());
        vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
        for (std::size_t k = 0; k + 1 < vals.size(); ++k) {
            const double thr = 0.5 * (vals[k] + vals[k + 1]);
            double l0 = 0, l1 = 0, r0 = 0, r1 = 0;
            for (std::size_t i = 0; i < d.size(); ++i) {
                const bool left = d.value(i, f) <= thr;
                (d.label(i) ? (left ? l1 : r1) : (left ? l0 : r0)) += 1;
            }
            const double child = (l0 + l1) * gini(l0, l1) + (r0 + r1) * gini(r0, r1);
            best = std::max(best, (parent - child) / n);
        }
    }
    return best;
}

double gain_of_root(const Dataset& d, const DecisionTree& t) {
    const auto& root = t.nodes.at(0);
    double l0 = 0, l1 = 0, r0 = 0, r1 = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        const bool left = d.value(i, static_cast<std::size_t>(root.feature)) <= root.threshold;
        (d.label(i) ? (left ? l1 : r1) : (left ? l0 : r0)) += 1;
    }
    const double n = static_cast<double>(d.size());
    const double parent = n * gini(static_cast<double>(d.count(0)), static_cast<double>(d.count(1)));
    return (parent - (l0 + l1) * gini(l0, l1) - (r0 + r1) * gini(r0, r1)) / n;
}

DecisionTree leaf_tree(int cls) {
    DecisionTree t;
    DecisionTree::Node n;
    n.leaf_class = cls;
    t.nodes.push_back(n);
    return t;
}

}  // namespace

TEST_SUITE("stress_classifier") {

TEST_CASE("label mapping under the standard and custom schemes") {
    const auto std_scheme = LabelScheme::standard();
    CHECK(map_label(StressLevel(3), std_scheme) == 1);
    CHECK(map_label(StressLevel(4), std_scheme) == 1);
    CHECK(map_label(StressLevel(0), std_scheme) == 0);
    CHECK(map_label(StressLevel(2), std_scheme) == 0);

    const LabelScheme sparse{{0}, {3, 4}};
    CHECK_FALSE(map_label(StressLevel(2), sparse).has_value());
    CHECK(map_label(StressLevel(0), sparse) == 0);

    CHECK_THROWS_AS(StressLevel(5), InvalidInput);
    CHECK_THROWS_AS((LabelScheme{{0, 3}, {3, 4}}.validate()), ConfigError);
    CHECK_THROWS_AS((LabelScheme{{}, {3, 4}}.validate()), ConfigError);
}

TEST_CASE("gini impurity of a two-class node") {
    CHECK(gini(10, 0) == 0.0);
    CHECK(gini(5, 5) == doctest::Approx(0.5));
    CHECK(gini(1, 3) == doctest::Approx(1 - 0.0625 - 0.5625));
    CHECK(gini(0, 0) == 0.0);
}

TEST_CASE("separable data is learned perfectly") {
    const auto d = separated_1d(200, 3);
    ForestConfig cfg;
    cfg.n_trees = 10;
    cfg.seed = 1;
    const auto m = train_forest(d, cfg);
    CHECK(evaluate_recall(m, d) == 1.0);
    for (std::size_t i = 0; i < d.size(); ++i) CHECK(m.predict(d.row(i)) == d.label(i));
}

TEST_CASE("depth-one trees split inside the class gap") {
    const auto d = separated_1d(200, 4);
    ForestConfig cfg;
    cfg.n_trees = 10;
    cfg.max_depth = 1;
    cfg.seed = 2;
    const auto m = train_forest(d, cfg);
    double max_neg = -1e9, min_pos = 1e9;
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (d.label(i)) min_pos = std::min(min_pos, d.value(i, 0));
        else max_neg = std::max(max_neg, d.value(i, 0));
    }
    for (const auto& t : m.trees()) {
        REQUIRE(t.nodes.size() == 3);
        CHECK(t.nodes[0].threshold > max_neg);
        CHECK(t.nodes[0].threshold < min_pos);
        CHECK(t.depth() == 1);
    }
}

TEST_CASE("single stump maximizes Gini gain among all candidates") {
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
        const auto d = random_dataset(30 + seed * 7, 3, seed);
        if (d.count(0) == 0 || d.count(1) == 0) continue;
        ForestConfig cfg;
        cfg.n_trees = 1;
        cfg.max_depth = 1;
        cfg.bootstrap = false;
        cfg.features_per_split = 3;
        const auto t = train_tree(d, cfg, seed);
        const double want = best_gain_by_search(d);
        INFO("seed ", seed);
        if (want <= 1e-12) {
            CHECK(t.nodes.size() == 1);
        } else {
            REQUIRE(t.nodes.size() == 3);
            CHECK(gain_of_root(d, t) == doctest::Approx(want).epsilon(1e-12));
        }
    }
}

TEST_CASE("depth limit is respected") {
    const auto d = random_dataset(400, 5, 8);
    for (int depth : {1, 2, 3, 5}) {
        ForestConfig cfg;
        cfg.n_trees = 5;
        cfg.max_depth = depth;
        cfg.seed = 3;
        const auto forest = train_forest(d, cfg);
        for (const auto& t : forest.trees()) CHECK(t.depth() <= depth);
    }
}

TEST_CASE("vote fraction definition") {
    std::vector<DecisionTree> trees{leaf_tree(1), leaf_tree(1), leaf_tree(1), leaf_tree(0)};
    const ForestModel m(trees, 1);
    const double x = 0;
    CHECK(m.predict_raw(std::span<const double>(&x, 1)) == 0.75);
    CHECK(m.predict(std::span<const double>(&x, 1)) == 1);

    const ForestModel none({leaf_tree(0), leaf_tree(0)}, 1);
    CHECK(none.predict_raw(std::span<const double>(&x, 1)) == 0.0);

    const ForestModel tie({leaf_tree(0), leaf_tree(1)}, 1);
    CHECK(tie.predict(std::span<const double>(&x, 1)) == 1);  // score == threshold goes to class 1
}

TEST_CASE("raw score equals per-tree traversal aggregated externally") {
    const auto d = random_dataset(300, 4, 21);
    ForestConfig cfg;
    cfg.n_trees = 25;
    cfg.seed = 5;
    const auto m = train_forest(d, cfg);
    std::mt19937_64 rng(1);
    std::normal_distribution<double> z(0, 1.5);
    for (int k = 0; k < 200; ++k) {
        std::vector<double> x{z(rng), z(rng), z(rng), z(rng)};
        int votes = 0;
        for (const auto& t : m.trees()) {
            int i = 0;
            while (t.nodes[i].feature >= 0) {
                const auto& n = t.nodes[i];
                i = x[n.feature] <= n.threshold ? n.left : n.right;
            }
            votes += t.nodes[i].leaf_class;
        }
        const double s = m.predict_raw(x);
        CHECK(s == static_cast<double>(votes) / 25.0);
        CHECK(s >= 0.0);
        CHECK(s <= 1.0);
    }
}

TEST_CASE("training is deterministic and models are immutable values") {
    const auto d = random_dataset(200, 4, 2);
    ForestConfig cfg;
    cfg.n_trees = 8;
    cfg.seed = 77;
    const auto a = train_forest(d, cfg);
    const auto b = train_forest(d, cfg);
    CHECK(a.to_json() == b.to_json());

    const std::string before = a.to_json();
    Dataset more = d;
    more.append(random_dataset(100, 4, 3));
    const auto c = train_forest(more, cfg);
    CHECK(a.to_json() == before);
    CHECK(c.to_json() != before);
}

TEST_CASE("single-class data and empty positives are errors") {
    Dataset d(1);
    for (int i = 0; i < 10; ++i) {
        const double x = i;
        d.add(std::span<const double>(&x, 1), 0);
    }
    ForestConfig cfg;
    cfg.n_trees = 2;
    CHECK_THROWS_AS(train_forest(d, cfg), TrainingError);
    try {
        train_forest(d, cfg);
    } catch (const TrainingError& e) {
        CHECK(std::string(e.what()).find("class 1") != std::string::npos);
    }
    const ForestModel m({leaf_tree(0)}, 1);
    CHECK_THROWS_AS(evaluate_recall(m, d), UndefinedMetric);
}

TEST_CASE("recall counts detected positives only") {
    Dataset d(1);
    for (int i = 0; i < 10; ++i) {
        const double x = i < 4 ? 1.0 : -1.0;
        d.add(std::span<const double>(&x, 1), 1);
    }
    for (int i = 0; i < 5; ++i) {
        const double x = 1.0;
        d.add(std::span<const double>(&x, 1), 0);
    }
    DecisionTree t;
    t.nodes = {{0, 0.0, 1, 2, 0}, {-1, 0, -1, -1, 0}, {-1, 0, -1, -1, 1}};
    const ForestModel m({t}, 1);
    CHECK(evaluate_recall(m, d) == doctest::Approx(0.4));
}

TEST_CASE("checkpoint round trip is exact") {
    const auto d = random_dataset(200, 13, 12);
    ForestConfig cfg;
    cfg.n_trees = 6;
    cfg.seed = 4;
    const auto m = train_forest(d, cfg);
    const auto path = std::filesystem::temp_directory_path() / "caal_forest_roundtrip.json";
    m.save(path);
    const auto back = ForestModel::load(path);
    std::filesystem::remove(path);
    CHECK(back.to_json() == m.to_json());
    for (std::size_t i = 0; i < d.size(); ++i) CHECK(back.predict_raw(d.row(i)) == m.predict_raw(d.row(i)));

    CHECK_THROWS_AS(ForestModel::from_json("{\"format\":\"other\"}"), CorruptedModel);
    CHECK_THROWS_AS(ForestModel::from_json("not json"), CorruptedModel);
}

}
