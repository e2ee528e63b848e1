#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "caal/errors.hpp"
#include "caal/hrv_features.hpp"
#include "oracles.hpp"

using namespace caal;

TEST_SUITE("hrv_features") {

TEST_CASE("constant series has zero variability") {
    const auto f = compute_features({std::vector<double>(120, 1000.0)});
    CHECK(f.bpm == doctest::Approx(60.0));
    CHECK(f.ibi == 1000.0);
    for (double v : {f.sdnn, f.sdsd, f.rmssd, f.pnn20, f.pnn50, f.mad, f.sd1, f.sd2, f.s_area, f.sd_ratio})
        CHECK(v == 0.0);
}

TEST_CASE("pnn counts strictly larger successive differences") {
    const auto f = compute_features({{1000, 1030, 1040, 1045}});
    CHECK(f.pnn20 == doctest::Approx(1.0 / 3.0));
    CHECK(f.pnn50 == 0.0);

    // A difference of exactly 20 ms does not count.
    const auto g = compute_features({{1000, 1020, 1040, 1060}});
    CHECK(g.pnn20 == 0.0);
}

TEST_CASE("random series match the brute-force oracle") {
    std::mt19937_64 rng(11);
    for (int rep = 0; rep < 50; ++rep) {
        const auto x = oracle::random_series(rng, 4 + rep * 7);
        const auto want = oracle::hrv(x);
        const auto got = compute_features({x}).to_array();
        for (std::size_t k = 0; k < want.size(); ++k) {
            INFO("series ", rep, " field ", feature_names()[k]);
            CHECK(oracle::close(got[k], want[k], 1e-9));
        }
    }
}

TEST_CASE("shift invariance of dispersion features") {
    std::mt19937_64 rng(5);
    const auto x = oracle::random_series(rng, 150);
    auto y = x;
    for (double& v : y) v += 37.5;
    const auto a = compute_features({x});
    const auto b = compute_features({y});
    for (auto [p, q] : {std::pair{a.sdnn, b.sdnn}, {a.sdsd, b.sdsd}, {a.rmssd, b.rmssd}, {a.mad, b.mad},
                        {a.sd1, b.sd1}, {a.sd2, b.sd2}})
        CHECK(std::fabs(p - q) <= 1e-9 * std::max(1.0, std::fabs(p)));
    CHECK(b.ibi - a.ibi == doctest::Approx(37.5).epsilon(1e-12));
}

TEST_CASE("structural identities hold on every input") {
    std::mt19937_64 rng(9);
    for (int rep = 0; rep < 200; ++rep) {
        const auto x = oracle::random_series(rng, 4 + rep % 60);
        const auto f = compute_features({x});
        CHECK(f.pnn50 <= f.pnn20);
        CHECK(f.pnn20 <= 1.0);
        CHECK(f.sdnn >= 0);
        CHECK(f.rmssd >= 0);
        CHECK(f.s_area == std::numbers::pi * f.sd1 * f.sd2);
        CHECK(oracle::close(f.bpm, 60000.0 / f.ibi, 1e-9));
        CHECK(oracle::close(f.sd1, std::sqrt(0.5) * f.sdsd, 1e-12));

        long double sq = 0;
        for (std::size_t i = 1; i < x.size(); ++i) sq += (x[i] - x[i - 1]) * (x[i] - x[i - 1]);
        CHECK(oracle::close(f.rmssd * f.rmssd, static_cast<double>(sq / (x.size() - 1)), 1e-9));
    }
}

TEST_CASE("invalid series are rejected") {
    CHECK_THROWS_AS(compute_features({{800, 810, 820}}), InvalidInput);
    CHECK_THROWS_AS(compute_features({{800, 810, 0, 820}}), InvalidInput);
    CHECK_THROWS_AS(compute_features({{800, -5, 810, 820}}), InvalidInput);
    CHECK_NOTHROW(compute_features({{800, 810, 805, 820}}));
}

TEST_CASE("breathing rate comes from the side channel") {
    NnSeries s{{800, 810, 805, 820}};
    auto f = compute_features(s);
    CHECK(f.br == 0.0);
    CHECK_FALSE(f.br_available);
    s.breathing_rate = 14.5;
    f = compute_features(s);
    CHECK(f.br == 14.5);
    CHECK(f.br_available);
}

TEST_CASE("array round trip keeps the documented order") {
    std::array<double, kFeatureCount> v{};
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i + 1);
    CHECK(FeatureVector::from_array(v).to_array() == v);
    CHECK(std::string(feature_names()[0]) == "bpm");
    CHECK(std::string(feature_names()[11]) == "sd_ratio");
    CHECK(std::string(feature_names()[12]) == "br");
}

TEST_CASE("batch mode groups consecutive rows into windows") {
    std::istringstream in(
        "subject_id,timestamp,interval_ms,br\n"
        "a,0,1000,15\na,0,1000,15\na,0,1000,15\na,0,1000,15\n"
        "a,15,800,\na,15,820,\na,15,790,\na,15,805,\na,15,810,\n");
    const auto rows = compute_batch(in);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].subject_id == "a");
    CHECK(rows[0].timestamp == 0);
    CHECK(rows[0].features.sdnn == 0.0);
    CHECK(rows[0].features.br == 15.0);
    CHECK(rows[1].timestamp == 15);
    CHECK_FALSE(rows[1].features.br_available);

    std::ostringstream out;
    write_feature_table(out, rows);
    const std::string text = out.str();
    CHECK(text.rfind("subject_id,timestamp,bpm,ibi,sdnn,sdsd,rmssd,pnn20,pnn50,mad,sd1,sd2,s_area,sd_ratio,br,"
                     "br_available\n",
                     0) == 0);
}

TEST_CASE("batch mode rejects windows that are too short") {
    std::istringstream in("s,0,800\ns,0,810\n");
    CHECK_THROWS_AS(compute_batch(in), InvalidInput);
}

}
