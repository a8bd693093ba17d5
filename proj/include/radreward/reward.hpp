#pragma once

// Clinically coherent reward: mention labels induce distributions over a
// binary disease state, and each category contributes the overlap between
// the generated and the ground-truth distribution.

#include "radreward/labeler.hpp"
#include "radreward/metrics.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

namespace radreward {

struct StateDistribution {
    double p_pos = 0.0;

    double p_neg() const { return 1.0 - p_pos; }

    friend bool operator==(const StateDistribution&, const StateDistribution&) = default;
};

struct RewardConfig {
    double beta_u = 0.5;   // p(+ | uncertain)
    double gamma = 0.95;   // EMA momentum
    double lambda = 10.0;  // weight of the clinical term
    bool include_no_finding = true;

    void validate() const {
        if (!(beta_u >= 0.0 && beta_u <= 1.0)) throw Error("reward config: beta_u must be in [0,1]");
        if (!(gamma >= 0.0 && gamma < 1.0)) throw Error("reward config: gamma must be in [0,1)");
        if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw Error("reward config: lambda must be finite and >= 0");
    }

    bool participates(FindingCategory c) const { return include_no_finding || c != FindingCategory::NoFinding; }
};

inline RewardConfig reward_config_from_json(const nlohmann::json& j) {
    RewardConfig cfg;
    cfg.beta_u = j.value("beta_u", cfg.beta_u);
    cfg.gamma = j.value("gamma", cfg.gamma);
    cfg.lambda = j.value("lambda", cfg.lambda);
    cfg.include_no_finding = j.value("include_no_finding", cfg.include_no_finding);
    cfg.validate();
    return cfg;
}

inline nlohmann::json to_json(const RewardConfig& cfg) {
    return {{"beta_u", cfg.beta_u},
            {"gamma", cfg.gamma},
            {"lambda", cfg.lambda},
            {"include_no_finding", cfg.include_no_finding}};
}

inline RewardConfig load_reward_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open config " + path.string());
    nlohmann::json j;
    in >> j;
    return reward_config_from_json(j);
}

/// Negative and absent labels both imply a negative state.
inline StateDistribution state_dist(MentionLabel l, double beta_u) {
    switch (l) {
    case MentionLabel::Positive: return {1.0};
    case MentionLabel::Uncertain: return {beta_u};
    case MentionLabel::Negative:
    case MentionLabel::Absent: break;
    }
    return {0.0};
}

inline double ccr_term(MentionLabel generated, MentionLabel truth, double beta_u) {
    const auto g = state_dist(generated, beta_u);
    const auto t = state_dist(truth, beta_u);
    return g.p_pos * t.p_pos + g.p_neg() * t.p_neg();
}

struct CcrReward {
    std::map<FindingCategory, double> terms; // participating categories only
    double total = 0.0;
};

inline CcrReward ccr_reward(const LabelVector& generated, const LabelVector& truth, const RewardConfig& cfg) {
    CcrReward r;
    for (auto c : kAllCategories) {
        if (!cfg.participates(c)) continue;
        const double t = ccr_term(generated[c], truth[c], cfg.beta_u);
        r.terms[c] = t;
        r.total += t;
    }
    return r;
}

/// Per-category running means of the clinical reward terms. Until the first
/// update the baselines are unset, and consumers treat the first observed
/// terms as the baseline.
class EmaBaselines {
  public:
    EmaBaselines() = default;

    explicit EmaBaselines(std::map<FindingCategory, double> initial) : values_(std::move(initial)), set_(true) {}

    bool initialized() const { return set_; }
    const std::map<FindingCategory, double>& values() const { return values_; }

    double value_or(FindingCategory c, double fallback) const {
        auto it = values_.find(c);
        return set_ && it != values_.end() ? it->second : fallback;
    }

    /// r̄ ← γ r̄ + (1 − γ) r per category; unset baselines take r directly.
    [[nodiscard]] EmaBaselines updated(const std::map<FindingCategory, double>& terms, double gamma) const {
        if (!(gamma >= 0.0 && gamma < 1.0)) throw Error("EMA gamma must be in [0,1)");
        EmaBaselines next = *this;
        next.set_ = true;
        for (const auto& [c, r] : terms) {
            auto it = next.values_.find(c);
            if (!set_ || it == next.values_.end())
                next.values_[c] = r;
            else
                it->second = gamma * it->second + (1.0 - gamma) * r;
        }
        return next;
    }

  private:
    std::map<FindingCategory, double> values_;
    bool set_ = false;
};

inline EmaBaselines update_baselines(const EmaBaselines& b, const std::map<FindingCategory, double>& terms,
                                     double gamma) {
    return b.updated(terms, gamma);
}

/// SCST advantage: CIDEr-D of the sample minus CIDEr-D of the greedy decode.
inline double nlg_advantage(const ParsedReport& sampled, const ParsedReport& greedy, const ParsedReport& truth,
                            const CiderD& idf) {
    const auto ref = truth.flatten();
    return idf.score(sampled.flatten(), ref) - idf.score(greedy.flatten(), ref);
}

struct RewardBundle {
    std::map<FindingCategory, double> ccr_terms;
    double ccr_total = 0.0;
    double nlg_reward = 0.0;
    double nlg_baseline_reward = 0.0;
    std::map<FindingCategory, double> baselines; // r̄ used for the advantage
    double combined_advantage = 0.0;
};

/// Assembles a reward bundle from precomputed pieces; baselines are read,
/// never updated.
inline RewardBundle combine_rewards(double nlg_reward, double nlg_baseline_reward, const CcrReward& ccr,
                                    const EmaBaselines& baselines, const RewardConfig& cfg) {
    RewardBundle b;
    b.ccr_terms = ccr.terms;
    b.ccr_total = ccr.total;
    b.nlg_reward = nlg_reward;
    b.nlg_baseline_reward = nlg_baseline_reward;
    double ccr_adv = 0.0;
    for (const auto& [c, r] : ccr.terms) {
        const double base = baselines.value_or(c, r);
        b.baselines[c] = base;
        ccr_adv += r - base;
    }
    b.combined_advantage = (nlg_reward - nlg_baseline_reward) + cfg.lambda * ccr_adv;
    return b;
}

inline RewardBundle combined_advantage(const ParsedReport& sampled, const ParsedReport& greedy,
                                       const ParsedReport& truth, const LabelVector& labels_gen,
                                       const LabelVector& labels_true, const EmaBaselines& baselines,
                                       const RewardConfig& cfg, const CiderD& idf) {
    const auto ref = truth.flatten();
    const double r = idf.score(sampled.flatten(), ref);
    const double rg = idf.score(greedy.flatten(), ref);
    return combine_rewards(r, rg, ccr_reward(labels_gen, labels_true, cfg), baselines, cfg);
}

inline nlohmann::json to_json(const RewardBundle& b) {
    nlohmann::json terms = nlohmann::json::object(), base = nlohmann::json::object();
    for (const auto& [c, v] : b.ccr_terms) terms[std::string(category_key(c))] = v;
    for (const auto& [c, v] : b.baselines) base[std::string(category_key(c))] = v;
    return {{"ccr_terms", terms},
            {"ccr_total", b.ccr_total},
            {"nlg_reward", b.nlg_reward},
            {"nlg_baseline_reward", b.nlg_baseline_reward},
            {"ccr_baselines", base},
            {"combined_advantage", b.combined_advantage}};
}

} // namespace radreward
