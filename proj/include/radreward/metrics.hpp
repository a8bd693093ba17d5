#pragma once

// Corpus-level text metrics: BLEU-1..4, ROUGE-L and CIDEr-D.

#include "radreward/corpus.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace radreward {

struct TokenizedPair {
    Tokens candidate;
    std::vector<Tokens> references;
};

struct MetricReport {
    double bleu1 = 0, bleu2 = 0, bleu3 = 0, bleu4 = 0;
    double rouge_l = 0;
    double cider_d = 0;
};

namespace detail {

struct NgramHash {
    std::size_t operator()(const Tokens& t) const noexcept {
        std::size_t h = 0xcbf29ce484222325ull;
        for (const auto& s : t) {
            h ^= std::hash<std::string>{}(s) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
        }
        return h;
    }
};

using NgramCounts = std::unordered_map<Tokens, double, NgramHash>;

inline NgramCounts count_ngrams(const Tokens& toks, std::size_t n) {
    NgramCounts out;
    if (toks.size() < n) return out;
    for (std::size_t i = 0; i + n <= toks.size(); ++i)
        out[Tokens(toks.begin() + static_cast<std::ptrdiff_t>(i), toks.begin() + static_cast<std::ptrdiff_t>(i + n))] += 1.0;
    return out;
}

inline void require_pairs(std::span<const TokenizedPair> pairs, const char* what) {
    if (pairs.empty()) throw Error(std::string(what) + ": empty pair list");
    for (const auto& p : pairs)
        if (p.references.empty()) throw Error(std::string(what) + ": pair without references");
}

} // namespace detail

/// Corpus BLEU-1..BLEU-n_max without smoothing. The effective reference
/// length per candidate is the closest reference length (shorter on ties).
inline std::vector<double> bleu(std::span<const TokenizedPair> pairs, std::size_t n_max = 4) {
    detail::require_pairs(pairs, "bleu");
    if (n_max < 1 || n_max > 4) throw Error("bleu: n_max must be in 1..4");

    std::array<double, 4> matched{}, total{};
    double cand_len = 0, ref_len = 0;
    for (const auto& p : pairs) {
        const double c = static_cast<double>(p.candidate.size());
        cand_len += c;
        double best = static_cast<double>(p.references.front().size());
        for (const auto& r : p.references) {
            const double len = static_cast<double>(r.size());
            if (std::abs(len - c) < std::abs(best - c) || (std::abs(len - c) == std::abs(best - c) && len < best))
                best = len;
        }
        ref_len += best;

        for (std::size_t n = 1; n <= n_max; ++n) {
            auto cand = detail::count_ngrams(p.candidate, n);
            detail::NgramCounts max_ref;
            for (const auto& r : p.references)
                for (const auto& [g, cnt] : detail::count_ngrams(r, n)) max_ref[g] = std::max(max_ref[g], cnt);
            for (const auto& [g, cnt] : cand) {
                total[n - 1] += cnt;
                auto it = max_ref.find(g);
                if (it != max_ref.end()) matched[n - 1] += std::min(cnt, it->second);
            }
        }
    }

    std::vector<double> out(n_max, 0.0);
    if (cand_len == 0) return out;
    const double bp = cand_len < ref_len ? std::exp(1.0 - ref_len / cand_len) : 1.0;
    double log_sum = 0;
    for (std::size_t n = 1; n <= n_max; ++n) {
        if (matched[n - 1] == 0) {
            // Every higher order inherits the zero.
            break;
        }
        log_sum += std::log(matched[n - 1] / total[n - 1]);
        out[n - 1] = bp * std::exp(log_sum / static_cast<double>(n));
    }
    return out;
}

inline std::size_t lcs_length(const Tokens& a, const Tokens& b) {
    if (a.empty() || b.empty()) return 0;
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j)
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

/// LCS F-measure of one candidate against one reference.
inline double rouge_l_pair(const Tokens& cand, const Tokens& ref, double beta = 1.0) {
    const auto lcs = static_cast<double>(lcs_length(cand, ref));
    if (lcs == 0) return 0.0;
    const double p = lcs / static_cast<double>(cand.size());
    const double r = lcs / static_cast<double>(ref.size());
    const double b2 = beta * beta;
    return (1 + b2) * p * r / (r + b2 * p);
}

/// Mean over pairs of the best-reference ROUGE-L F-measure.
inline double rouge_l(std::span<const TokenizedPair> pairs, double beta = 1.0) {
    detail::require_pairs(pairs, "rouge_l");
    double sum = 0;
    for (const auto& p : pairs) {
        double best = 0;
        for (const auto& r : p.references) best = std::max(best, rouge_l_pair(p.candidate, r, beta));
        sum += best;
    }
    return sum / static_cast<double>(pairs.size());
}

/// CIDEr-D scorer with document frequencies frozen from a reference corpus.
/// Each document is the reference set of one item.
class CiderD {
  public:
    static constexpr std::size_t kMaxN = 4;

    explicit CiderD(std::span<const std::vector<Tokens>> documents, double sigma = 6.0) : sigma_(sigma) {
        if (documents.size() < 2)
            throw Error("cider_d: degenerate IDF, need at least 2 reference documents, got " +
                        std::to_string(documents.size()));
        log_num_docs_ = std::log(static_cast<double>(documents.size()));
        for (const auto& refs : documents) {
            std::set<Tokens> seen;
            for (const auto& r : refs)
                for (std::size_t n = 1; n <= kMaxN; ++n)
                    for (const auto& [g, cnt] : detail::count_ngrams(r, n)) seen.insert(g);
            for (const auto& g : seen) df_[g] += 1.0;
        }
    }

    double sigma() const { return sigma_; }

    double idf(const Tokens& ngram) const {
        auto it = df_.find(ngram);
        const double df = it == df_.end() ? 0.0 : it->second;
        return log_num_docs_ - std::log(std::max(1.0, df));
    }

    /// Score of one candidate against its references, in [0, 10].
    double score(const Tokens& candidate, std::span<const Tokens> references) const {
        if (references.empty()) throw Error("cider_d: candidate without references");
        const auto cand = vectorize(candidate);
        std::array<double, kMaxN> acc{};
        for (const auto& r : references) {
            const auto ref = vectorize(r);
            const double delta = static_cast<double>(candidate.size()) - static_cast<double>(r.size());
            const double penalty = std::exp(-(delta * delta) / (2.0 * sigma_ * sigma_));
            for (std::size_t n = 0; n < kMaxN; ++n) {
                double dot = 0;
                for (const auto& [g, w] : cand.weights[n]) {
                    auto it = ref.weights[n].find(g);
                    if (it != ref.weights[n].end()) dot += std::min(w, it->second) * it->second;
                }
                if (cand.norms[n] != 0 && ref.norms[n] != 0) dot /= cand.norms[n] * ref.norms[n];
                acc[n] += dot * penalty;
            }
        }
        double mean = 0;
        for (double v : acc) mean += v;
        mean /= static_cast<double>(kMaxN);
        return 10.0 * mean / static_cast<double>(references.size());
    }

    double score(const Tokens& candidate, const Tokens& reference) const {
        return score(candidate, std::span<const Tokens>(&reference, 1));
    }

  private:
    struct Vec {
        std::array<detail::NgramCounts, kMaxN> weights;
        std::array<double, kMaxN> norms{};
    };

    Vec vectorize(const Tokens& toks) const {
        Vec v;
        for (std::size_t n = 1; n <= kMaxN; ++n) {
            v.weights[n - 1] = detail::count_ngrams(toks, n);
            double sq = 0;
            for (auto& [g, w] : v.weights[n - 1]) {
                w *= idf(g);
                sq += w * w;
            }
            v.norms[n - 1] = std::sqrt(sq);
        }
        return v;
    }

    double sigma_;
    double log_num_docs_ = 0;
    detail::NgramCounts df_;
};

/// Corpus CIDEr-D with IDF taken from the pairs' own references.
inline double cider_d(std::span<const TokenizedPair> pairs, double sigma = 6.0) {
    detail::require_pairs(pairs, "cider_d");
    std::vector<std::vector<Tokens>> docs;
    docs.reserve(pairs.size());
    for (const auto& p : pairs) docs.push_back(p.references);
    const CiderD scorer(docs, sigma);
    double sum = 0;
    for (const auto& p : pairs) sum += scorer.score(p.candidate, p.references);
    return sum / static_cast<double>(pairs.size());
}

struct MetricOptions {
    double rouge_beta = 1.0;
    double cider_sigma = 6.0;
};

inline MetricReport compute_metrics(std::span<const TokenizedPair> pairs, const MetricOptions& opts = {}) {
    MetricReport m;
    const auto b = bleu(pairs, 4);
    m.bleu1 = b[0];
    m.bleu2 = b[1];
    m.bleu3 = b[2];
    m.bleu4 = b[3];
    m.rouge_l = rouge_l(pairs, opts.rouge_beta);
    m.cider_d = cider_d(pairs, opts.cider_sigma);
    return m;
}

/// Pairs each generated report with the truth report of the same id.
inline std::vector<TokenizedPair> align_reports(const std::vector<ParsedReport>& generated,
                                                const std::vector<ParsedReport>& truth) {
    std::map<std::string, const ParsedReport*> by_id;
    for (const auto& t : truth) by_id[t.id] = &t;
    std::vector<TokenizedPair> pairs;
    pairs.reserve(generated.size());
    for (const auto& g : generated) {
        auto it = by_id.find(g.id);
        if (it == by_id.end()) throw Error("generated report id \"" + g.id + "\" has no truth report");
        pairs.push_back({g.flatten(), {it->second->flatten()}});
    }
    return pairs;
}

inline MetricReport evaluate_nlg(const std::vector<ParsedReport>& generated, const std::vector<ParsedReport>& truth,
                                 const MetricOptions& opts = {}) {
    const auto pairs = align_reports(generated, truth);
    return compute_metrics(pairs, opts);
}

} // namespace radreward
