#pragma once

// Brute-force reference implementations of the text metrics. Written
// independently of include/radreward/metrics.hpp: n-grams are keyed as
// joined strings, IDF is found by scanning every document, CIDEr vectors are
// dense over the full n-gram universe and BLEU multiplies precisions
// directly instead of summing logs.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace oracle {

using Toks = std::vector<std::string>;

struct Pair {
    Toks cand;
    std::vector<Toks> refs;
};

inline std::string gram(const Toks& t, std::size_t i, std::size_t n) {
    std::string s;
    for (std::size_t k = 0; k < n; ++k) s += t[i + k] + "\x1f";
    return s;
}

inline std::map<std::string, int> grams(const Toks& t, std::size_t n) {
    std::map<std::string, int> m;
    for (std::size_t i = 0; i + n <= t.size(); ++i) m[gram(t, i, n)]++;
    return m;
}

inline std::vector<double> bleu(const std::vector<Pair>& pairs, std::size_t nmax) {
    std::vector<long> hit(nmax, 0), tot(nmax, 0);
    long c = 0, r = 0;
    for (const auto& p : pairs) {
        c += static_cast<long>(p.cand.size());
        // closest reference length, shorter wins ties
        long best = -1, bestd = 0;
        for (const auto& ref : p.refs) {
            long len = static_cast<long>(ref.size());
            long d = std::labs(len - static_cast<long>(p.cand.size()));
            if (best < 0 || d < bestd || (d == bestd && len < best)) {
                best = len;
                bestd = d;
            }
        }
        r += best;
        for (std::size_t n = 1; n <= nmax; ++n) {
            for (const auto& [g, cnt] : grams(p.cand, n)) {
                int mx = 0;
                for (const auto& ref : p.refs) {
                    auto rg = grams(ref, n);
                    if (rg.count(g)) mx = std::max(mx, rg[g]);
                }
                hit[n - 1] += std::min(cnt, mx);
                tot[n - 1] += cnt;
            }
        }
    }
    std::vector<double> out;
    for (std::size_t k = 1; k <= nmax; ++k) {
        if (c == 0) {
            out.push_back(0.0);
            continue;
        }
        double prod = 1.0;
        for (std::size_t n = 0; n < k; ++n) prod *= tot[n] ? static_cast<double>(hit[n]) / static_cast<double>(tot[n]) : 0.0;
        double bp = c >= r ? 1.0 : std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c));
        out.push_back(bp * std::pow(prod, 1.0 / static_cast<double>(k)));
    }
    return out;
}

inline std::size_t lcs(const Toks& a, const Toks& b) {
    std::vector<std::vector<long>> memo(a.size() + 1, std::vector<long>(b.size() + 1, -1));
    std::function<long(std::size_t, std::size_t)> go = [&](std::size_t i, std::size_t j) -> long {
        if (i == a.size() || j == b.size()) return 0;
        if (memo[i][j] >= 0) return memo[i][j];
        long v = a[i] == b[j] ? 1 + go(i + 1, j + 1) : std::max(go(i + 1, j), go(i, j + 1));
        return memo[i][j] = v;
    };
    return static_cast<std::size_t>(go(0, 0));
}

inline double rouge_l(const std::vector<Pair>& pairs, double beta = 1.0) {
    double sum = 0;
    for (const auto& p : pairs) {
        double best = 0;
        for (const auto& ref : p.refs) {
            double l = static_cast<double>(lcs(p.cand, ref));
            if (l == 0) continue;
            double prec = l / static_cast<double>(p.cand.size()), rec = l / static_cast<double>(ref.size());
            double f = (1 + beta * beta) * prec * rec / (rec + beta * beta * prec);
            best = std::max(best, f);
        }
        sum += best;
    }
    return sum / static_cast<double>(pairs.size());
}

inline bool contains_gram(const Toks& doc, const std::string& g, std::size_t n) {
    for (std::size_t i = 0; i + n <= doc.size(); ++i)
        if (gram(doc, i, n) == g) return true;
    return false;
}

/// CIDEr-D with IDF from the given documents (each a list of references).
inline double cider_d_with_docs(const std::vector<Pair>& pairs, const std::vector<std::vector<Toks>>& docs,
                                double sigma = 6.0) {
    const double N = static_cast<double>(docs.size());
    double total = 0;
    for (const auto& p : pairs) {
        double pair_sum = 0;
        for (const auto& ref : p.refs) {
            double per_n = 0;
            for (std::size_t n = 1; n <= 4; ++n) {
                // dense universe of the two texts' n-grams
                std::set<std::string> universe;
                for (const auto& [g, c] : grams(p.cand, n)) universe.insert(g);
                for (const auto& [g, c] : grams(ref, n)) universe.insert(g);
                std::vector<double> vc, vr;
                for (const auto& g : universe) {
                    double df = 0;
                    for (const auto& d : docs) {
                        bool in = false;
                        for (const auto& t : d) in = in || contains_gram(t, g, n);
                        df += in ? 1 : 0;
                    }
                    double idf = std::log(N) - std::log(std::max(1.0, df));
                    auto gc = grams(p.cand, n), gr = grams(ref, n);
                    vc.push_back((gc.count(g) ? gc[g] : 0) * idf);
                    vr.push_back((gr.count(g) ? gr[g] : 0) * idf);
                }
                double dot = 0, nc = 0, nr = 0;
                for (std::size_t i = 0; i < vc.size(); ++i) {
                    dot += std::min(vc[i], vr[i]) * vr[i];
                    nc += vc[i] * vc[i];
                    nr += vr[i] * vr[i];
                }
                double cos = (nc > 0 && nr > 0) ? dot / (std::sqrt(nc) * std::sqrt(nr)) : dot;
                double delta = static_cast<double>(p.cand.size()) - static_cast<double>(ref.size());
                per_n += cos * std::exp(-delta * delta / (2 * sigma * sigma));
            }
            pair_sum += per_n / 4.0;
        }
        total += 10.0 * pair_sum / static_cast<double>(p.refs.size());
    }
    return total / static_cast<double>(pairs.size());
}

inline double cider_d(const std::vector<Pair>& pairs, double sigma = 6.0) {
    std::vector<std::vector<Toks>> docs;
    for (const auto& p : pairs) docs.push_back(p.refs);
    return cider_d_with_docs(pairs, docs, sigma);
}

} // namespace oracle
