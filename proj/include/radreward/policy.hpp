#pragma once

// Toy hierarchical generator and its REINFORCE trainer.
//
// At step t the policy picks a sentence template from a fixed bank with
// probability softmax(template_logits[t]) and then decides whether to stop
// with probability sigmoid(stop_logits[t]). The last step always stops, so
// its stop decision is not sampled and carries log-probability 0. A chosen
// template emits its tokens deterministically.

#include "radreward/labeler.hpp"
#include "radreward/metrics.hpp"
#include "radreward/reward.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace radreward {

using SentenceBank = std::vector<Sentence>;

/// Flat parameter (or gradient) storage of a ToyPolicy.
struct ParameterSet {
    std::size_t max_steps = 0;
    std::size_t bank_size = 0;
    std::vector<double> template_logits; // row-major [max_steps x bank_size]
    std::vector<double> stop_logits;     // [max_steps]

    ParameterSet() = default;
    ParameterSet(std::size_t steps, std::size_t bank)
        : max_steps(steps), bank_size(bank), template_logits(steps * bank, 0.0), stop_logits(steps, 0.0) {}

    double& logit(std::size_t step, std::size_t k) { return template_logits[step * bank_size + k]; }
    double logit(std::size_t step, std::size_t k) const { return template_logits[step * bank_size + k]; }

    std::size_t size() const { return template_logits.size() + stop_logits.size(); }

    /// Coordinate view: template logits first, then stop logits.
    double flat(std::size_t i) const {
        return i < template_logits.size() ? template_logits[i] : stop_logits[i - template_logits.size()];
    }
    double& flat(std::size_t i) {
        return i < template_logits.size() ? template_logits[i] : stop_logits[i - template_logits.size()];
    }

    void axpy(double a, const ParameterSet& x) {
        for (std::size_t i = 0; i < template_logits.size(); ++i) template_logits[i] += a * x.template_logits[i];
        for (std::size_t i = 0; i < stop_logits.size(); ++i) stop_logits[i] += a * x.stop_logits[i];
    }

    bool all_finite() const {
        auto finite = [](double v) { return std::isfinite(v); };
        return std::all_of(template_logits.begin(), template_logits.end(), finite) &&
               std::all_of(stop_logits.begin(), stop_logits.end(), finite);
    }

    friend bool operator==(const ParameterSet&, const ParameterSet&) = default;
};

using PolicyGradient = ParameterSet;

inline double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double log_sigmoid(double x) { return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }

class ToyPolicy {
  public:
    ToyPolicy(std::size_t max_steps, std::size_t bank_size) : params_(max_steps, bank_size) {
        if (max_steps < 1) throw Error("toy policy: max_steps must be >= 1");
        if (bank_size < 1) throw Error("toy policy: empty sentence bank");
    }

    explicit ToyPolicy(ParameterSet params) : params_(std::move(params)) {
        if (params_.max_steps < 1 || params_.bank_size < 1) throw Error("toy policy: bad dimensions");
        if (params_.template_logits.size() != params_.max_steps * params_.bank_size ||
            params_.stop_logits.size() != params_.max_steps)
            throw Error("toy policy: parameter sizes do not match dimensions");
    }

    std::size_t max_steps() const { return params_.max_steps; }
    std::size_t bank_size() const { return params_.bank_size; }
    const ParameterSet& params() const { return params_; }
    ParameterSet& params() { return params_; }

    std::vector<double> template_probs(std::size_t step) const {
        std::vector<double> p(bank_size());
        double hi = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < p.size(); ++k) hi = std::max(hi, params_.logit(step, k));
        double z = 0;
        for (std::size_t k = 0; k < p.size(); ++k) z += p[k] = std::exp(params_.logit(step, k) - hi);
        for (auto& v : p) v /= z;
        return p;
    }

    std::vector<double> template_log_probs(std::size_t step) const {
        std::vector<double> lp(bank_size());
        double hi = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < lp.size(); ++k) hi = std::max(hi, params_.logit(step, k));
        double z = 0;
        for (std::size_t k = 0; k < lp.size(); ++k) z += std::exp(params_.logit(step, k) - hi);
        const double log_z = hi + std::log(z);
        for (std::size_t k = 0; k < lp.size(); ++k) lp[k] = params_.logit(step, k) - log_z;
        return lp;
    }

    double stop_prob(std::size_t step) const { return sigmoid(params_.stop_logits[step]); }
    bool is_last(std::size_t step) const { return step + 1 == max_steps(); }

    friend bool operator==(const ToyPolicy&, const ToyPolicy&) = default;

  private:
    ParameterSet params_;
};

struct TrajectoryStep {
    std::size_t template_id = 0;
    bool stop = false;
    double log_prob_template = 0.0;
    double log_prob_stop = 0.0;
};

struct Trajectory {
    std::vector<TrajectoryStep> steps;
    ParsedReport report;

    std::vector<std::size_t> template_ids() const {
        std::vector<std::size_t> ids;
        for (const auto& s : steps) ids.push_back(s.template_id);
        return ids;
    }

    double log_prob() const {
        double lp = 0;
        for (const auto& s : steps) lp += s.log_prob_template + s.log_prob_stop;
        return lp;
    }
};

/// Deterministic across platforms: mt19937_64 and seed_seq are fully
/// specified, and uniforms are built from the top 53 bits directly.
class Rng {
  public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream_a = 0, std::uint64_t stream_b = 0) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(stream_a), static_cast<std::uint32_t>(stream_a >> 32),
                          static_cast<std::uint32_t>(stream_b), static_cast<std::uint32_t>(stream_b >> 32)};
        engine_.seed(seq);
    }

    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    std::size_t categorical(const std::vector<double>& probs) {
        const double u = uniform();
        double acc = 0;
        for (std::size_t k = 0; k < probs.size(); ++k) {
            acc += probs[k];
            if (u < acc) return k;
        }
        return probs.size() - 1;
    }

    bool bernoulli(double p) { return uniform() < p; }

  private:
    std::mt19937_64 engine_;
};

inline ParsedReport realize(const std::vector<std::size_t>& template_ids, const SentenceBank& bank) {
    ParsedReport r;
    for (auto k : template_ids) r.sentences.push_back(bank.at(k));
    return r;
}

inline Trajectory sample(const ToyPolicy& policy, const SentenceBank& bank, Rng& rng) {
    if (bank.size() != policy.bank_size()) throw Error("toy policy: bank size mismatch");
    Trajectory traj;
    for (std::size_t t = 0; t < policy.max_steps(); ++t) {
        TrajectoryStep step;
        const auto lp = policy.template_log_probs(t);
        std::vector<double> p(lp.size());
        for (std::size_t k = 0; k < p.size(); ++k) p[k] = std::exp(lp[k]);
        step.template_id = rng.categorical(p);
        step.log_prob_template = lp[step.template_id];
        if (!policy.is_last(t)) {
            const double s = policy.params().stop_logits[t];
            step.stop = rng.bernoulli(sigmoid(s));
            step.log_prob_stop = step.stop ? log_sigmoid(s) : log_sigmoid(-s);
        }
        traj.steps.push_back(step);
        if (step.stop) break;
    }
    traj.report = realize(traj.template_ids(), bank);
    return traj;
}

inline Trajectory sample(const ToyPolicy& policy, const SentenceBank& bank, std::uint64_t seed) {
    Rng rng(seed);
    return sample(policy, bank, rng);
}

/// Argmax template per step (lowest index on ties); stops once the stop
/// probability strictly exceeds 0.5.
inline std::vector<std::size_t> greedy_template_ids(const ToyPolicy& policy) {
    std::vector<std::size_t> ids;
    for (std::size_t t = 0; t < policy.max_steps(); ++t) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < policy.bank_size(); ++k)
            if (policy.params().logit(t, k) > policy.params().logit(t, best)) best = k;
        ids.push_back(best);
        if (policy.stop_prob(t) > 0.5) break;
    }
    return ids;
}

inline ParsedReport greedy_decode(const ToyPolicy& policy, const SentenceBank& bank) {
    return realize(greedy_template_ids(policy), bank);
}

/// Log-probability of generating exactly this template sequence.
inline double sequence_log_prob(const ToyPolicy& policy, const std::vector<std::size_t>& ids) {
    if (ids.empty() || ids.size() > policy.max_steps()) return -std::numeric_limits<double>::infinity();
    double lp = 0;
    for (std::size_t t = 0; t < ids.size(); ++t) {
        lp += policy.template_log_probs(t).at(ids[t]);
        if (policy.is_last(t)) continue;
        const double s = policy.params().stop_logits[t];
        lp += (t + 1 == ids.size()) ? log_sigmoid(s) : log_sigmoid(-s);
    }
    return lp;
}

/// Beam search over template sequences, scored by sequence log-probability.
inline std::vector<std::size_t> beam_search_ids(const ToyPolicy& policy, std::size_t width = 4) {
    if (width < 1) throw Error("beam width must be >= 1");
    struct Hyp {
        std::vector<std::size_t> ids;
        double lp;
    };
    auto better = [](const Hyp& a, const Hyp& b) { return a.lp != b.lp ? a.lp > b.lp : a.ids < b.ids; };

    std::vector<Hyp> live{{{}, 0.0}}, finished;
    for (std::size_t t = 0; t < policy.max_steps() && !live.empty(); ++t) {
        const auto lp = policy.template_log_probs(t);
        const double s = policy.params().stop_logits[t];
        std::vector<Hyp> next;
        for (const auto& h : live) {
            for (std::size_t k = 0; k < lp.size(); ++k) {
                Hyp ext{h.ids, h.lp + lp[k]};
                ext.ids.push_back(k);
                if (policy.is_last(t)) {
                    finished.push_back(std::move(ext));
                    continue;
                }
                finished.push_back({ext.ids, ext.lp + log_sigmoid(s)});
                ext.lp += log_sigmoid(-s);
                next.push_back(std::move(ext));
            }
        }
        std::sort(next.begin(), next.end(), better);
        if (next.size() > width) next.resize(width);
        live = std::move(next);
    }
    return std::min_element(finished.begin(), finished.end(), better)->ids;
}

inline ParsedReport beam_decode(const ToyPolicy& policy, const SentenceBank& bank, std::size_t width = 4) {
    return realize(beam_search_ids(policy, width), bank);
}

/// Score-function gradient of the loss −advantage · Σ log p(decision).
inline PolicyGradient reinforce_gradient(const ToyPolicy& policy, const Trajectory& traj, double advantage) {
    if (!std::isfinite(advantage)) throw Error("reinforce_gradient: non-finite advantage");
    PolicyGradient g(policy.max_steps(), policy.bank_size());
    if (advantage == 0.0) return g;
    for (std::size_t t = 0; t < traj.steps.size(); ++t) {
        const auto& step = traj.steps[t];
        const auto p = policy.template_probs(t);
        for (std::size_t k = 0; k < p.size(); ++k)
            g.logit(t, k) = -advantage * ((k == step.template_id ? 1.0 : 0.0) - p[k]);
        if (!policy.is_last(t)) {
            const double u = policy.stop_prob(t);
            g.stop_logits[t] = -advantage * (step.stop ? 1.0 - u : -u);
        }
    }
    return g;
}

/// Reward context for training against one ground-truth report.
class ToyEnvironment {
  public:
    struct Outcome {
        double nlg = 0.0;
        CcrReward ccr;
    };

    ToyEnvironment(ParsedReport truth, SentenceBank bank, RuleSet rules, CiderD idf, RewardConfig cfg)
        : truth_(std::move(truth)), bank_(std::move(bank)), rules_(std::move(rules)), idf_(std::move(idf)), cfg_(cfg) {
        cfg_.validate();
        if (bank_.empty()) throw Error("toy environment: empty sentence bank");
        truth_tokens_ = truth_.flatten();
        truth_labels_ = label_report(truth_, rules_);
    }

    const ParsedReport& truth() const { return truth_; }
    const LabelVector& truth_labels() const { return truth_labels_; }
    const SentenceBank& bank() const { return bank_; }
    const RuleSet& rules() const { return rules_; }
    const RewardConfig& config() const { return cfg_; }
    const CiderD& idf() const { return idf_; }

    /// Memoized per template sequence; not thread-safe.
    const Outcome& evaluate(const std::vector<std::size_t>& ids) const {
        auto it = cache_.find(ids);
        if (it != cache_.end()) return it->second;
        const auto report = realize(ids, bank_);
        Outcome o;
        o.nlg = idf_.score(report.flatten(), truth_tokens_);
        o.ccr = ccr_reward(label_report(report, rules_), truth_labels_, cfg_);
        return cache_.emplace(ids, std::move(o)).first->second;
    }

    double total_reward(const std::vector<std::size_t>& ids) const {
        const auto& o = evaluate(ids);
        return o.nlg + cfg_.lambda * o.ccr.total;
    }

  private:
    ParsedReport truth_;
    SentenceBank bank_;
    RuleSet rules_;
    CiderD idf_;
    RewardConfig cfg_;
    Tokens truth_tokens_;
    LabelVector truth_labels_;
    mutable std::map<std::vector<std::size_t>, Outcome> cache_;
};

/// IDF documents for toy training: every ground-truth report plus each bank
/// template as its own document.
inline std::vector<std::vector<Tokens>> toy_idf_documents(const std::vector<ParsedReport>& truth_reports,
                                                          const SentenceBank& bank) {
    std::vector<std::vector<Tokens>> docs;
    for (const auto& r : truth_reports) docs.push_back({r.flatten()});
    for (const auto& s : bank) docs.push_back({s.tokens});
    return docs;
}

struct TrainOptions {
    std::size_t steps = 500;
    std::size_t batch = 32;
    double lr = 0.1;
    std::uint64_t seed = 0;
};

struct TraceRow {
    std::size_t step = 0;
    double nlg_mean = 0.0;
    double ccr_mean = 0.0;
    double total_mean = 0.0;
};

struct TrainResult {
    ToyPolicy policy;
    std::vector<TraceRow> trace; // steps + 1 rows; row k is measured after k updates
    EmaBaselines baselines;
};

namespace detail {

// Evaluation rollouts reuse the same seeds at every step so that trace rows
// are comparable and constant for a frozen policy.
inline constexpr std::uint64_t kEvalStream = 0xe7a1ULL << 32;

inline TraceRow measure(const ToyPolicy& policy, const ToyEnvironment& env, const TrainOptions& opts,
                        std::size_t step) {
    TraceRow row{step, 0, 0, 0};
    for (std::size_t i = 0; i < opts.batch; ++i) {
        Rng rng(opts.seed, kEvalStream, i);
        const auto ids = sample(policy, env.bank(), rng).template_ids();
        const auto& o = env.evaluate(ids);
        row.nlg_mean += o.nlg;
        row.ccr_mean += o.ccr.total;
    }
    row.nlg_mean /= static_cast<double>(opts.batch);
    row.ccr_mean /= static_cast<double>(opts.batch);
    row.total_mean = row.nlg_mean + env.config().lambda * row.ccr_mean;
    return row;
}

} // namespace detail

/// REINFORCE with a greedy (self-critical) baseline for the text reward and
/// per-category EMA baselines for the clinical reward. Each step samples a
/// batch with seeds (seed, step, index), averages the per-sample gradients,
/// takes a gradient step on the loss, then updates the EMA baselines with the
/// batch-mean clinical terms.
inline TrainResult train(ToyPolicy policy, const ToyEnvironment& env, const TrainOptions& opts) {
    if (!(opts.lr >= 0.0) || !std::isfinite(opts.lr)) throw Error("train: lr must be finite and >= 0");
    if (opts.steps < 1) throw Error("train: steps must be >= 1");
    if (opts.batch < 1) throw Error("train: batch must be >= 1");
    if (policy.bank_size() != env.bank().size()) throw Error("train: policy and bank sizes differ");
    if (!policy.params().all_finite()) throw Error("train: non-finite initial policy parameter");

    const auto& cfg = env.config();
    TrainResult result{policy, {}, {}};
    EmaBaselines baselines;

    for (std::size_t step = 0; step < opts.steps; ++step) {
        result.trace.push_back(detail::measure(policy, env, opts, step));

        std::vector<Trajectory> batch;
        batch.reserve(opts.batch);
        std::map<FindingCategory, double> mean_terms;
        for (std::size_t i = 0; i < opts.batch; ++i) {
            Rng rng(opts.seed, step, i);
            batch.push_back(sample(policy, env.bank(), rng));
            for (const auto& [c, r] : env.evaluate(batch.back().template_ids()).ccr.terms)
                mean_terms[c] += r / static_cast<double>(opts.batch);
        }
        if (!baselines.initialized()) baselines = baselines.updated(mean_terms, cfg.gamma);

        const double greedy_reward = env.evaluate(greedy_template_ids(policy)).nlg;
        PolicyGradient grad(policy.max_steps(), policy.bank_size());
        for (const auto& traj : batch) {
            const auto& o = env.evaluate(traj.template_ids());
            const auto bundle = combine_rewards(o.nlg, greedy_reward, o.ccr, baselines, cfg);
            grad.axpy(1.0 / static_cast<double>(opts.batch), reinforce_gradient(policy, traj, bundle.combined_advantage));
        }
        policy.params().axpy(-opts.lr, grad);
        if (!policy.params().all_finite())
            throw Error("train: non-finite policy parameter after step " + std::to_string(step) + " (lr " +
                        std::to_string(opts.lr) + ")");
        baselines = baselines.updated(mean_terms, cfg.gamma);
    }
    result.trace.push_back(detail::measure(policy, env, opts, opts.steps));
    result.policy = std::move(policy);
    result.baselines = std::move(baselines);
    return result;
}

} // namespace radreward
