#include "caal/reward_engine.hpp"

#include <cmath>

#include "caal/errors.hpp"

namespace caal {

void RewardConfig::validate() const {
    if (!(region_low >= 0 && region_low < region_high && region_high <= 1))
        throw ConfigError("reward region must satisfy 0 <= region_low < region_high <= 1");
    if (!(query_reward_scale > 0)) throw ConfigError("reward.query_reward_scale must be > 0");
}

double sigmoid(double x, double alpha, double beta) {
    const double z = -alpha * (x - beta);
    // Both branches are exact at z == 0; the split avoids overflow of exp.
    if (z >= 0) {
        const double e = std::exp(-z);
        return e / (1.0 + e);
    }
    return 1.0 / (1.0 + std::exp(z));
}

RewardComponents components(const AgentState& s, const RewardConfig& cfg) {
    RewardComponents c;
    if (cfg.paper_literal_r1) {
        c.r1 = sigmoid(s.s1, 100.0, 0.5) * sigmoid(s.s1, -100.0, 1.3);
    } else {
        c.r1 = sigmoid(s.s1, cfg.alpha_r1, cfg.region_low) * sigmoid(s.s1, -cfg.alpha_r1, cfg.region_high);
    }
    if (cfg.uncertainty_only) {
        c.r2 = 1.0;
        c.r3 = 1.0;
    } else {
        c.r2 = sigmoid(s.s2, cfg.alpha_r2, cfg.beta_r2);
        c.r3 = sigmoid(s.s3, cfg.alpha_r3, cfg.beta_r3);
    }
    return c;
}

double reward(const AgentState& s, Action a, const RewardConfig& cfg) {
    const double p = components(s, cfg).product();
    return a == Action::Query ? cfg.query_reward_scale * p : 1.0 - p;
}

}  // namespace caal
