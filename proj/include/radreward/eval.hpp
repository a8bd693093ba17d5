#pragma once

// Clinical-efficacy scoring, reference baselines and the end-to-end
// evaluation pipeline.

#include "radreward/corpus.hpp"
#include "radreward/io.hpp"
#include "radreward/labeler.hpp"
#include "radreward/metrics.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace radreward {

enum class BinaryOutcome { Pos, Neg };

enum class UncertainPolicy { AsPositive, AsNegative };

inline UncertainPolicy parse_uncertain_policy(std::string_view s) {
    if (s == "pos") return UncertainPolicy::AsPositive;
    if (s == "neg") return UncertainPolicy::AsNegative;
    throw Error("uncertain policy must be \"pos\" or \"neg\", got \"" + std::string(s) + "\"");
}

inline BinaryOutcome binarize(MentionLabel l, UncertainPolicy policy = UncertainPolicy::AsPositive) {
    switch (l) {
    case MentionLabel::Positive: return BinaryOutcome::Pos;
    case MentionLabel::Uncertain:
        return policy == UncertainPolicy::AsPositive ? BinaryOutcome::Pos : BinaryOutcome::Neg;
    case MentionLabel::Negative:
    case MentionLabel::Absent: break;
    }
    return BinaryOutcome::Neg;
}

struct ConfusionCounts {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

    std::size_t total() const { return tp + fp + tn + fn; }

    void add(BinaryOutcome predicted, BinaryOutcome actual) {
        const bool p = predicted == BinaryOutcome::Pos, a = actual == BinaryOutcome::Pos;
        (p ? (a ? tp : fp) : (a ? fn : tn)) += 1;
    }

    // Zero denominators score 0.
    double precision() const { return tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp); }
    double recall() const { return tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn); }
    double accuracy() const {
        return total() == 0 ? 0.0 : static_cast<double>(tp + tn) / static_cast<double>(total());
    }

    friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

struct CategoryScore {
    ConfusionCounts counts;
    double precision = 0, recall = 0, accuracy = 0;
};

struct ClinicalScores {
    double accuracy_macro = 0;
    double precision_macro = 0;
    double precision_micro = 0;
    double recall_macro = 0;
    double recall_micro = 0;
    std::vector<CategoryScore> per_category;
};

/// Macro averages weight every column equally; micro averages pool counts.
inline ClinicalScores aggregate_scores(std::span<const ConfusionCounts> columns) {
    if (columns.empty()) throw Error("aggregate_scores: no categories");
    ClinicalScores s;
    ConfusionCounts pooled;
    for (const auto& c : columns) {
        s.per_category.push_back({c, c.precision(), c.recall(), c.accuracy()});
        s.accuracy_macro += c.accuracy();
        s.precision_macro += c.precision();
        s.recall_macro += c.recall();
        pooled.tp += c.tp;
        pooled.fp += c.fp;
        pooled.tn += c.tn;
        pooled.fn += c.fn;
    }
    const auto n = static_cast<double>(columns.size());
    s.accuracy_macro /= n;
    s.precision_macro /= n;
    s.recall_macro /= n;
    s.precision_micro = pooled.precision();
    s.recall_micro = pooled.recall();
    return s;
}

inline std::array<ConfusionCounts, kNumCategories> confusion_counts(std::span<const LabelVector> generated,
                                                                    std::span<const LabelVector> truth,
                                                                    UncertainPolicy policy) {
    if (generated.size() != truth.size()) throw Error("clinical_scores: generated and truth differ in length");
    if (generated.empty()) throw Error("clinical_scores: empty input");
    std::array<ConfusionCounts, kNumCategories> counts{};
    for (std::size_t i = 0; i < generated.size(); ++i)
        for (auto c : kAllCategories)
            counts[index(c)].add(binarize(generated[i][c], policy), binarize(truth[i][c], policy));
    return counts;
}

inline ClinicalScores clinical_scores(std::span<const LabelVector> generated, std::span<const LabelVector> truth,
                                      UncertainPolicy policy = UncertainPolicy::AsPositive) {
    const auto counts = confusion_counts(generated, truth, policy);
    return aggregate_scores(counts);
}

/// Id-aligned variant: every generated id must have a truth row.
inline ClinicalScores clinical_scores(const std::vector<LabeledReport>& generated,
                                      const std::vector<LabeledReport>& truth,
                                      UncertainPolicy policy = UncertainPolicy::AsPositive) {
    std::map<std::string, const LabelVector*> by_id;
    for (const auto& t : truth) by_id[t.id] = &t.labels;
    std::vector<LabelVector> gen, tru;
    for (const auto& g : generated) {
        auto it = by_id.find(g.id);
        if (it == by_id.end()) throw Error("clinical_scores: id \"" + g.id + "\" has no truth labels");
        gen.push_back(g.labels);
        tru.push_back(*it->second);
    }
    return clinical_scores(gen, tru, policy);
}

/// Predicts Negative for every category, NoFinding included.
inline std::vector<LabelVector> major_class(std::span<const LabelVector> truth) {
    LabelVector negative;
    for (auto c : kAllCategories) negative[c] = MentionLabel::Negative;
    return std::vector<LabelVector>(truth.size(), negative);
}

enum class Distance { Euclidean, Cosine };

namespace detail {

inline double squared_euclidean(std::span<const double> a, std::span<const double> b) {
    double d = 0;
    for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
    return d;
}

inline double cosine_distance(std::span<const double> a, std::span<const double> b) {
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0 || nb == 0) return 1.0;
    return 1.0 - dot / std::sqrt(na * nb);
}

} // namespace detail

/// Id of the closest training record; ties go to the lexicographically
/// smallest id.
inline std::string nearest_neighbor(const EmbeddingRecord& query, std::span<const EmbeddingRecord> train,
                                    Distance metric = Distance::Euclidean) {
    if (train.empty()) throw Error("nearest_neighbor: empty train set");
    const std::string* best_id = nullptr;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& r : train) {
        if (r.vector.size() != query.vector.size())
            throw Error("nearest_neighbor: dimension mismatch for \"" + r.id + "\" (" + std::to_string(r.vector.size()) +
                        " vs " + std::to_string(query.vector.size()) + ")");
        const double d = metric == Distance::Euclidean ? detail::squared_euclidean(query.vector, r.vector)
                                                       : detail::cosine_distance(query.vector, r.vector);
        if (!best_id || d < best || (d == best && r.id < *best_id)) {
            best = d;
            best_id = &r.id;
        }
    }
    return *best_id;
}

/// 1-NN baseline: each query takes the report of its nearest train record,
/// relabelled with the query id.
inline std::vector<ParsedReport> nearest_neighbor_reports(std::span<const EmbeddingRecord> queries,
                                                          std::span<const EmbeddingRecord> train,
                                                          const std::vector<ParsedReport>& train_reports,
                                                          Distance metric = Distance::Euclidean) {
    std::map<std::string, const ParsedReport*> by_id;
    for (const auto& r : train_reports) by_id[r.id] = &r;
    std::vector<ParsedReport> out;
    for (const auto& q : queries) {
        const auto id = nearest_neighbor(q, train, metric);
        auto it = by_id.find(id);
        if (it == by_id.end()) throw Error("nearest_neighbor: train record \"" + id + "\" has no report");
        ParsedReport r = *it->second;
        r.id = q.id;
        out.push_back(std::move(r));
    }
    return out;
}

struct EvaluationConfig {
    UncertainPolicy uncertain = UncertainPolicy::AsPositive;
    MetricOptions metrics;
};

inline EvaluationConfig evaluation_config_from_json(const nlohmann::json& j) {
    EvaluationConfig cfg;
    if (j.contains("u_as")) cfg.uncertain = parse_uncertain_policy(j["u_as"].get<std::string>());
    cfg.metrics.rouge_beta = j.value("rouge_beta", cfg.metrics.rouge_beta);
    cfg.metrics.cider_sigma = j.value("cider_sigma", cfg.metrics.cider_sigma);
    if (!(cfg.metrics.rouge_beta > 0)) throw Error("evaluation config: rouge_beta must be > 0");
    if (!(cfg.metrics.cider_sigma > 0)) throw Error("evaluation config: cider_sigma must be > 0");
    return cfg;
}

struct EvaluationResult {
    MetricReport nlg;
    ClinicalScores clinical;
    std::vector<std::size_t> truth_positives; // per category
    std::size_t num_reports = 0;
};

/// Dedupes generated sentences, labels both sides and scores them.
inline EvaluationResult evaluate_reports(const std::vector<ParsedReport>& generated,
                                         const std::vector<ParsedReport>& truth, const RuleSet& rules,
                                         const EvaluationConfig& cfg) {
    if (generated.empty()) throw Error("evaluate: no generated reports");
    std::map<std::string, const ParsedReport*> by_id;
    for (const auto& t : truth) by_id[t.id] = &t;

    std::vector<ParsedReport> deduped;
    std::vector<ParsedReport> aligned_truth;
    for (const auto& g : generated) {
        auto it = by_id.find(g.id);
        if (it == by_id.end()) throw Error("evaluate: generated id \"" + g.id + "\" missing from truth");
        deduped.push_back(dedupe_sentences(g));
        aligned_truth.push_back(*it->second);
    }

    EvaluationResult res;
    res.num_reports = deduped.size();
    res.nlg = evaluate_nlg(deduped, aligned_truth, cfg.metrics);

    std::vector<LabelVector> gen_labels, truth_labels;
    for (std::size_t i = 0; i < deduped.size(); ++i) {
        gen_labels.push_back(label_report(deduped[i], rules));
        truth_labels.push_back(label_report(aligned_truth[i], rules));
    }
    res.clinical = clinical_scores(gen_labels, truth_labels, cfg.uncertain);
    res.truth_positives.assign(kNumCategories, 0);
    for (const auto& t : truth_labels)
        for (auto c : kAllCategories)
            if (binarize(t[c], cfg.uncertain) == BinaryOutcome::Pos) ++res.truth_positives[index(c)];
    return res;
}

namespace detail {

// Outputs carry six decimals so golden files do not depend on last-ulp
// differences between math libraries.
inline double round6(double v) {
    const double r = std::round(v * 1e6) / 1e6;
    return r == 0.0 ? 0.0 : r;
}

inline std::string fixed6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", round6(v));
    return buf;
}

} // namespace detail

inline std::string nlg_metrics_json(const MetricReport& m) {
    nlohmann::ordered_json j;
    j["bleu1"] = detail::round6(m.bleu1);
    j["bleu2"] = detail::round6(m.bleu2);
    j["bleu3"] = detail::round6(m.bleu3);
    j["bleu4"] = detail::round6(m.bleu4);
    j["rouge_l"] = detail::round6(m.rouge_l);
    j["cider_d"] = detail::round6(m.cider_d);
    return j.dump(2) + "\n";
}

inline std::string clinical_scores_json(const EvaluationResult& r, UncertainPolicy policy) {
    nlohmann::ordered_json j;
    j["num_reports"] = r.num_reports;
    j["uncertain_as"] = policy == UncertainPolicy::AsPositive ? "pos" : "neg";
    j["accuracy_macro"] = detail::round6(r.clinical.accuracy_macro);
    j["precision_macro"] = detail::round6(r.clinical.precision_macro);
    j["precision_micro"] = detail::round6(r.clinical.precision_micro);
    j["recall_macro"] = detail::round6(r.clinical.recall_macro);
    j["recall_micro"] = detail::round6(r.clinical.recall_micro);
    nlohmann::ordered_json per = nlohmann::ordered_json::object();
    for (auto c : kAllCategories) {
        const auto& s = r.clinical.per_category[index(c)];
        nlohmann::ordered_json e;
        e["tp"] = s.counts.tp;
        e["fp"] = s.counts.fp;
        e["tn"] = s.counts.tn;
        e["fn"] = s.counts.fn;
        e["precision"] = detail::round6(s.precision);
        e["recall"] = detail::round6(s.recall);
        e["accuracy"] = detail::round6(s.accuracy);
        per[std::string(category_key(c))] = e;
    }
    j["per_category"] = per;
    return j.dump(2) + "\n";
}

inline std::string per_category_csv(const EvaluationResult& r) {
    std::string out = "category,count,precision,recall,accuracy\n";
    for (auto c : kAllCategories) {
        const auto& s = r.clinical.per_category[index(c)];
        out += std::string(category_key(c)) + "," + std::to_string(r.truth_positives[index(c)]) + "," +
               detail::fixed6(s.precision) + "," + detail::fixed6(s.recall) + "," + detail::fixed6(s.accuracy) + "\n";
    }
    return out;
}

/// Full evaluation run. All inputs are read and scored before anything is
/// written; the three outputs then land via temp files and renames.
inline EvaluationResult run_evaluation(const std::filesystem::path& generated_path,
                                       const std::filesystem::path& truth_path, const RuleSet& rules,
                                       const EvaluationConfig& cfg, const std::filesystem::path& out_dir) {
    const auto generated = read_parsed_corpus(generated_path);
    const auto truth = read_parsed_corpus(truth_path);
    auto result = evaluate_reports(generated, truth, rules, cfg);

    const std::vector<std::pair<std::string, std::string>> files = {
        {"nlg_metrics.json", nlg_metrics_json(result.nlg)},
        {"clinical_scores.json", clinical_scores_json(result, cfg.uncertain)},
        {"per_category.csv", per_category_csv(result)},
    };
    std::filesystem::create_directories(out_dir);
    std::vector<std::filesystem::path> staged;
    try {
        for (const auto& [name, content] : files) {
            auto tmp = out_dir / (name + ".tmp");
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            if (!out) throw Error("cannot write " + tmp.string());
            out << content;
            out.close();
            if (!out) throw Error("write failed for " + tmp.string());
            staged.push_back(tmp);
        }
    } catch (...) {
        for (const auto& p : staged) std::filesystem::remove(p);
        throw;
    }
    for (std::size_t i = 0; i < files.size(); ++i) std::filesystem::rename(staged[i], out_dir / files[i].first);
    return result;
}

} // namespace radreward
