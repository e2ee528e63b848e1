#pragma once

#include "caal/state_builder.hpp"

namespace caal {

enum class Action : int { NoQuery = 0, Query = 1 };

struct RewardConfig {
    double region_low = 0.2;
    double region_high = 0.6;
    double alpha_r1 = 100;
    double alpha_r2 = 10;
    double beta_r2 = 0.3;
    double alpha_r3 = 100;
    double beta_r3 = 0.4;
    double query_reward_scale = 2;
    /// Use r1 = S(s1;100,0.5)*S(s1;-100,1.3) instead of the [region_low, region_high] band.
    bool paper_literal_r1 = false;
    /// Non-contextual variant: r2 and r3 are held at 1, so only the raw score matters.
    bool uncertainty_only = false;

    void validate() const;
};

struct RewardComponents {
    double r1 = 0;
    double r2 = 0;
    double r3 = 0;
    double product() const { return r1 * r2 * r3; }
};

/// 1 / (1 + exp(-alpha (x - beta))).
double sigmoid(double x, double alpha, double beta);

RewardComponents components(const AgentState& s, const RewardConfig& cfg);

/// Query: scale * r1 r2 r3. No query: 1 - r1 r2 r3.
double reward(const AgentState& s, Action a, const RewardConfig& cfg);

}  // namespace caal
