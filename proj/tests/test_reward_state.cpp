#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "caal/errors.hpp"
#include "caal/reward_engine.hpp"
#include "caal/state_builder.hpp"

using namespace caal;

TEST_SUITE("reward_engine") {

TEST_CASE("sigmoid centers and saturation") {
    for (double a : {0.5, 10.0, 100.0, -100.0}) CHECK(sigmoid(0.37, a, 0.37) == 0.5);
    CHECK(sigmoid(0.3, 10, 0.3) == 0.5);
    CHECK(std::fabs(sigmoid(1.0, 100, 0.5) - 1.0) <= 1e-15);
    CHECK(sigmoid(-1.0, 100, 0.5) == doctest::Approx(std::exp(-150.0)).epsilon(1e-6));
}

TEST_CASE("component examples") {
    const RewardConfig cfg;
    auto c = components({0.4, 0.3, 0.4, 0.2}, cfg);
    CHECK(c.r1 == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(c.r2 == 0.5);
    CHECK(c.r3 == 0.5);

    RewardConfig lit;
    lit.paper_literal_r1 = true;
    CHECK(components({0.9, 0, 0, 0}, lit).r1 == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(components({0.3, 0, 0, 0}, lit).r1 < 1e-8);
}

TEST_CASE("composite reward examples") {
    const RewardConfig cfg;
    const AgentState s{0.4, 0.5, 0.5, 0.1};
    const double r2 = 1.0 / (1.0 + std::exp(-10.0 * 0.2));
    CHECK(r2 == doctest::Approx(0.8808).epsilon(1e-4));
    // r1 sits mid-band (two sigmoids at +20) and r3 is S(10), both within 1e-4 of one.
    const double r1 = std::pow(1.0 / (1.0 + std::exp(-20.0)), 2), r3 = 1.0 / (1.0 + std::exp(-10.0));
    CHECK(reward(s, Action::Query, cfg) == doctest::Approx(2 * r1 * r2 * r3).epsilon(1e-12));
    CHECK(reward(s, Action::Query, cfg) == doctest::Approx(1.7616).epsilon(1e-4));

    RewardConfig zero_r1;
    zero_r1.region_low = 0.8;
    zero_r1.region_high = 0.9;
    const AgentState far{0.0, 1.0, 1.0, 0};
    CHECK(reward(far, Action::Query, zero_r1) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(reward(far, Action::NoQuery, zero_r1) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("query and no-query rewards are complementary") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0, 1);
    RewardConfig cfg;
    for (int i = 0; i < 2000; ++i) {
        cfg.paper_literal_r1 = i % 2;
        const AgentState s{u(rng), u(rng), u(rng), u(rng)};
        const double q = reward(s, Action::Query, cfg), n = reward(s, Action::NoQuery, cfg);
        CHECK(std::fabs(q / cfg.query_reward_scale + n - 1.0) <= 1e-12);
        CHECK(q >= 0);
        CHECK(q <= cfg.query_reward_scale);
        CHECK(n >= 0);
        CHECK(n <= 1);
    }
}

TEST_CASE("default r1 is unimodal around the band center") {
    const RewardConfig cfg;
    const double mid = 0.5 * (cfg.region_low + cfg.region_high);
    double prev = -1;
    for (int i = 0; i <= 1000; ++i) {
        const double s1 = i / 1000.0;
        const double r1 = components({s1, 0, 0, 0}, cfg).r1;
        if (s1 <= mid) CHECK(r1 >= prev - 1e-15);
        else CHECK(r1 <= prev + 1e-15);
        prev = r1;
    }
}

TEST_CASE("time of day never enters the reward") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0, 1);
    const RewardConfig cfg;
    for (int i = 0; i < 500; ++i) {
        AgentState s{u(rng), u(rng), u(rng), u(rng)};
        AgentState t = s;
        t.s4 = u(rng);
        CHECK(reward(s, Action::Query, cfg) == reward(t, Action::Query, cfg));
        CHECK(reward(s, Action::NoQuery, cfg) == reward(t, Action::NoQuery, cfg));
    }
}

TEST_CASE("uncertainty-only reward ignores context") {
    RewardConfig cfg;
    cfg.uncertainty_only = true;
    const auto a = components({0.4, 0.0, 0.0, 0.0}, cfg);
    CHECK(a.r2 == 1.0);
    CHECK(a.r3 == 1.0);
    CHECK(reward({0.4, 0.0, 0.0, 0}, Action::Query, cfg) == reward({0.4, 1.0, 1.0, 0}, Action::Query, cfg));
}

TEST_CASE("config validation") {
    RewardConfig c;
    c.region_low = 0.7;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.query_reward_scale = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

}

TEST_SUITE("state_builder") {

TEST_CASE("state components") {
    auto p = ResponseProfile::uniform();
    p.rate[12] = 0.7;
    const auto s = build_state(0.33, 90, p, 12 * 60);
    CHECK(s.s1 == 0.33);
    CHECK(s.s2 == 0.5);
    CHECK(s.s3 == 0.7);
    CHECK(s.s4 == 0.5);
    CHECK(build_state(0.1, 400, p, 0).s2 == 1.0);
    CHECK(build_state(0.1, kNoPreviousQuery, p, 0).s2 == 1.0);
    CHECK(build_state(0.1, 0, p, 0).s2 == 0.0);
    CHECK(build_state(0.1, 0, p, 13 * 60 + 30).s4 == doctest::Approx(13.5 / 24));
    CHECK(build_state(0.1, 0, p, 3 * kMinutesPerDay + 12 * 60).s4 == 0.5);
}

TEST_CASE("s2 is monotone and clipped") {
    const auto p = ResponseProfile::uniform();
    double prev = -1;
    for (int m = 0; m <= 400; ++m) {
        const double s2 = build_state(0.5, m, p, 0).s2;
        CHECK(s2 >= prev);
        CHECK(s2 <= 1.0);
        if (m >= 180) CHECK(s2 == 1.0);
        prev = s2;
    }
}

TEST_CASE("all outputs stay in the unit box") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0, 1);
    auto p = ResponseProfile::uniform();
    for (int i = 0; i < 1000; ++i) {
        for (auto& r : p.rate) r = u(rng);
        const auto s = build_state(u(rng), u(rng) * 1000, p, static_cast<Minutes>(u(rng) * 1e6));
        for (double v : s.to_array()) {
            CHECK(v >= 0);
            CHECK(v <= 1);
        }
    }
}

TEST_CASE("EMA update arithmetic") {
    const auto p = ResponseProfile::uniform();
    const std::vector<ResponseEvent> one{{9, true, true}};
    const auto q = update_response_profile(p, one);
    CHECK(q.rate[9] == doctest::Approx(0.55));
    CHECK(q.issued[9] == 1);
    CHECK(q.answered[9] == 1);
    const std::vector<ResponseEvent> miss{{9, true, false}};
    CHECK(update_response_profile(q, miss).rate[9] == doctest::Approx(0.495));
    CHECK(update_response_profile(p, std::span<const ResponseEvent>{}).rate == p.rate);
    const std::vector<ResponseEvent> unqueried{{3, false, false}};
    CHECK(update_response_profile(p, unqueried).rate == p.rate);
}

TEST_CASE("answered without a query violates the contract") {
    const std::vector<ResponseEvent> bad{{5, false, true}};
    CHECK_THROWS_AS(update_response_profile(ResponseProfile::uniform(), bad), ContractViolation);
}

TEST_CASE("EMA converges to the Bernoulli mean") {
    std::mt19937_64 rng(10);
    std::bernoulli_distribution b(0.8);
    std::vector<ResponseEvent> ev;
    for (int i = 0; i < 1000; ++i) ev.push_back({20, true, b(rng)});
    const auto p = update_response_profile(ResponseProfile::uniform(), ev);
    CHECK(std::fabs(p.rate[20] - 0.8) <= 0.05);
    CHECK(p.answered[20] <= p.issued[20]);
}

TEST_CASE("updates commute with batch splitting") {
    std::mt19937_64 rng(2);
    std::uniform_int_distribution<int> h(0, 23);
    std::bernoulli_distribution b(0.6);
    std::vector<ResponseEvent> ev;
    for (int i = 0; i < 300; ++i) {
        const bool q = b(rng);
        ev.push_back({h(rng), q, q && b(rng)});
    }
    const auto whole = update_response_profile(ResponseProfile::uniform(), ev);
    auto parts = ResponseProfile::uniform();
    for (std::size_t start = 0; start < ev.size(); start += 37)
        parts = update_response_profile(
            parts, std::span<const ResponseEvent>(ev).subspan(start, std::min<std::size_t>(37, ev.size() - start)));
    CHECK(whole.rate == parts.rate);
    CHECK(whole.issued == parts.issued);
    CHECK(whole.answered == parts.answered);
}

TEST_CASE("profile CSV dump") {
    std::ostringstream out;
    write_response_profile(out, ResponseProfile::uniform());
    const std::string s = out.str();
    CHECK(s.rfind("hour,rate,issued,answered\n", 0) == 0);
    CHECK(std::count(s.begin(), s.end(), '\n') == 25);
}

}
