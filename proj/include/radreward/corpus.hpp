#pragma once

// Report ingestion: section parsing, tokenization, sentence splitting,
// thresholded vocabularies and duplicate-sentence removal.

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace radreward {

class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

enum class ViewPosition { AP, PA, LL, Unknown };

inline std::string_view to_string(ViewPosition v) {
    switch (v) {
    case ViewPosition::AP: return "AP";
    case ViewPosition::PA: return "PA";
    case ViewPosition::LL: return "LL";
    case ViewPosition::Unknown: break;
    }
    return "UNKNOWN";
}

inline ViewPosition parse_view(std::string_view s) {
    if (s == "AP") return ViewPosition::AP;
    if (s == "PA") return ViewPosition::PA;
    if (s == "LL") return ViewPosition::LL;
    return ViewPosition::Unknown;
}

struct RawReport {
    std::string id;
    std::string text;
    std::optional<ViewPosition> view;
};

using Tokens = std::vector<std::string>;

struct Sentence {
    Tokens tokens;

    friend bool operator==(const Sentence&, const Sentence&) = default;
};

struct ParsedReport {
    std::string id;
    std::vector<Sentence> sentences;
    std::optional<ViewPosition> view;

    /// All sentence tokens concatenated in order.
    Tokens flatten() const {
        Tokens out;
        for (const auto& s : sentences) out.insert(out.end(), s.tokens.begin(), s.tokens.end());
        return out;
    }

    friend bool operator==(const ParsedReport&, const ParsedReport&) = default;
};

using SectionMap = std::map<std::string, std::string>;

inline const std::vector<std::string>& default_section_headings() {
    static const std::vector<std::string> headings = {
        "findings", "impression", "history", "examination", "comparison", "indication", "technique"};
    return headings;
}

namespace detail {

inline bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
inline bool is_digit(char c) { return c >= '0' && c <= '9'; }
inline bool is_alpha(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }
inline bool is_upper(char c) { return c >= 'A' && c <= 'Z'; }
inline bool is_lower(char c) { return c >= 'a' && c <= 'z'; }

// Bytes >= 0x80 are treated as word characters so UTF-8 sequences stay intact.
inline bool is_word_char(char c) {
    auto u = static_cast<unsigned char>(c);
    return u >= 0x80 || std::isalnum(u) != 0;
}

inline std::string lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

inline std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && is_space(s[b])) ++b;
    while (e > b && is_space(s[e - 1])) --e;
    return std::string(s.substr(b, e - b));
}

inline bool iequals(std::string_view a, std::string_view b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (std::tolower(static_cast<unsigned char>(a[i])) != std::tolower(static_cast<unsigned char>(b[i])))
            return false;
    return true;
}

struct HeadingHit {
    std::size_t begin;     // first char of the heading word
    std::size_t body;      // first char after the colon
    std::string name;      // lowercase heading
};

// A heading is a lexicon word followed by optional blanks and ':'. It counts
// when it starts a line (any case) or, mid-line, when written in upper case
// after whitespace.
inline std::vector<HeadingHit> find_headings(std::string_view text, const std::vector<std::string>& lexicon) {
    std::vector<HeadingHit> hits;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (i > 0 && !is_space(text[i - 1])) continue;
        if (!is_alpha(text[i])) continue;
        bool line_start = true;
        for (std::size_t k = i; k > 0; --k) {
            char c = text[k - 1];
            if (c == '\n' || c == '\r') break;
            if (!is_space(c)) {
                line_start = false;
                break;
            }
        }
        for (const auto& h : lexicon) {
            if (i + h.size() > text.size()) continue;
            std::string_view word = text.substr(i, h.size());
            if (!iequals(word, h)) continue;
            if (!line_start && !std::all_of(word.begin(), word.end(), [](char c) { return is_upper(c); }))
                continue;
            std::size_t j = i + h.size();
            while (j < text.size() && (text[j] == ' ' || text[j] == '\t')) ++j;
            if (j >= text.size() || text[j] != ':') continue;
            hits.push_back({i, j + 1, lower(h)});
            break;
        }
    }
    return hits;
}

inline std::string xml_unescape(std::string_view s) {
    static const std::pair<std::string_view, char> entities[] = {
        {"&amp;", '&'}, {"&lt;", '<'}, {"&gt;", '>'}, {"&quot;", '"'}, {"&apos;", '\''}};
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size();) {
        bool replaced = false;
        if (s[i] == '&') {
            for (const auto& [ent, ch] : entities) {
                if (s.substr(i, ent.size()) == ent) {
                    out.push_back(ch);
                    i += ent.size();
                    replaced = true;
                    break;
                }
            }
        }
        if (!replaced) out.push_back(s[i++]);
    }
    return out;
}

inline void add_section(SectionMap& out, const std::string& name, const std::string& body) {
    auto [it, inserted] = out.emplace(name, body);
    if (!inserted && !body.empty()) it->second = it->second.empty() ? body : it->second + " " + body;
}

} // namespace detail

/// Parses an Open-I style payload where sections arrive pre-split as
/// `<AbstractText Label="FINDINGS">...</AbstractText>` elements. Elements
/// with an empty body are dropped, as are labels outside the lexicon.
inline SectionMap parse_openi_xml(std::string_view xml,
                                  const std::vector<std::string>& lexicon = default_section_headings()) {
    SectionMap out;
    constexpr std::string_view open_tag = "<AbstractText";
    constexpr std::string_view close_tag = "</AbstractText>";
    std::size_t pos = 0;
    while ((pos = xml.find(open_tag, pos)) != std::string_view::npos) {
        std::size_t tag_end = xml.find('>', pos);
        if (tag_end == std::string_view::npos) break;
        std::string_view tag = xml.substr(pos, tag_end - pos);
        std::size_t close = xml.find(close_tag, tag_end);
        if (close == std::string_view::npos) break;
        std::string body = detail::trim(detail::xml_unescape(xml.substr(tag_end + 1, close - tag_end - 1)));
        pos = close + close_tag.size();

        std::size_t lab = tag.find("Label=\"");
        if (lab == std::string_view::npos) continue;
        lab += 7;
        std::size_t lab_end = tag.find('"', lab);
        if (lab_end == std::string_view::npos) continue;
        std::string name = detail::lower(tag.substr(lab, lab_end - lab));
        if (std::find(lexicon.begin(), lexicon.end(), name) == lexicon.end()) continue;
        if (body.empty()) continue;
        detail::add_section(out, name, body);
    }
    return out;
}

/// Splits free text into lowercase-keyed sections. Text before the first
/// heading is discarded; repeated headings are concatenated. Payloads that
/// carry Open-I `AbstractText` elements are routed to parse_openi_xml.
inline SectionMap parse_sections(std::string_view text,
                                 const std::vector<std::string>& lexicon = default_section_headings()) {
    if (text.find("<AbstractText") != std::string_view::npos) return parse_openi_xml(text, lexicon);
    SectionMap out;
    auto hits = detail::find_headings(text, lexicon);
    for (std::size_t k = 0; k < hits.size(); ++k) {
        std::size_t end = k + 1 < hits.size() ? hits[k + 1].begin : text.size();
        detail::add_section(out, hits[k].name, detail::trim(text.substr(hits[k].body, end - hits[k].body)));
    }
    return out;
}

inline SectionMap parse_sections(const RawReport& raw,
                                 const std::vector<std::string>& lexicon = default_section_headings()) {
    return parse_sections(raw.text, lexicon);
}

struct TokenizerOptions {
    /// Upper-case anonymization placeholders kept verbatim.
    std::set<std::string, std::less<>> placeholders = {"NAME", "DATE"};
};

/// Lowercases, splits on whitespace and punctuation (each punctuation mark
/// is its own token). Kept inside a token: '.' or ',' between digits and
/// '-' or '\'' between word characters. Placeholder words stay upper case.
inline Tokens tokenize(std::string_view text, const TokenizerOptions& opts = {}) {
    using namespace detail;
    Tokens out;
    std::size_t i = 0;
    const std::size_t n = text.size();
    while (i < n) {
        char c = text[i];
        if (is_space(c)) {
            ++i;
            continue;
        }
        if (!is_word_char(c)) {
            out.emplace_back(1, c);
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < n) {
            if (is_word_char(text[j])) {
                ++j;
                continue;
            }
            bool joined = false;
            if (j + 1 < n && j > i) {
                char p = text[j - 1], q = text[j + 1];
                if ((text[j] == '.' || text[j] == ',') && is_digit(p) && is_digit(q)) joined = true;
                if ((text[j] == '-' || text[j] == '\'') && is_word_char(p) && is_word_char(q)) joined = true;
            }
            if (!joined) break;
            j += 2;
        }
        std::string_view word = text.substr(i, j - i);
        if (opts.placeholders.find(word) != opts.placeholders.end())
            out.emplace_back(word);
        else
            out.push_back(lower(word));
        i = j;
    }
    return out;
}

inline bool is_sentence_terminator(std::string_view tok) { return tok == "." || tok == "!" || tok == "?"; }

/// Sentence boundaries fall on '.', '!' and '?' tokens; decimals are already
/// single tokens. Terminators are not kept, and sentences left with no
/// word tokens are dropped.
inline std::vector<Sentence> split_sentences(std::string_view text, const TokenizerOptions& opts = {}) {
    std::vector<Sentence> out;
    Tokens current;
    auto flush = [&] {
        bool has_word = std::any_of(current.begin(), current.end(),
                                    [](const std::string& t) { return detail::is_word_char(t.front()); });
        if (has_word) out.push_back(Sentence{std::move(current)});
        current.clear();
    };
    for (auto& tok : tokenize(text, opts)) {
        if (is_sentence_terminator(tok))
            flush();
        else
            current.push_back(std::move(tok));
    }
    flush();
    return out;
}

/// Findings-section parse of a raw report; nullopt when the report has no
/// findings section.
inline std::optional<ParsedReport> parse_report(const RawReport& raw, const TokenizerOptions& opts = {},
                                                const std::vector<std::string>& lexicon = default_section_headings()) {
    auto sections = parse_sections(raw, lexicon);
    auto it = sections.find("findings");
    if (it == sections.end()) return std::nullopt;
    return ParsedReport{raw.id, split_sentences(it->second, opts), raw.view};
}

class Vocabulary {
  public:
    static constexpr std::string_view kDefaultUnk = "<unk>";

    Vocabulary() : Vocabulary(1) {}
    explicit Vocabulary(std::size_t min_count, std::string unk = std::string(kDefaultUnk))
        : min_count_(min_count), unk_(std::move(unk)) {
        if (min_count_ < 1) throw Error("vocabulary min_count must be >= 1");
        ids_.emplace(unk_, 0);
        tokens_.push_back(unk_);
    }

    /// Builds from (token, count) pairs; tokens get dense ids after unk in
    /// lexicographic order.
    static Vocabulary from_counts(const std::map<std::string, std::size_t>& counts, std::size_t min_count,
                                  std::string unk = std::string(kDefaultUnk)) {
        Vocabulary v(min_count, std::move(unk));
        for (const auto& [tok, count] : counts)
            if (count >= min_count && tok != v.unk_) v.add(tok);
        return v;
    }

    /// Rebuilds a frozen vocabulary from its token list (unk first).
    static Vocabulary from_tokens(const std::vector<std::string>& tokens, std::size_t min_count) {
        if (tokens.empty()) throw Error("vocabulary token list is empty");
        Vocabulary v(min_count, tokens.front());
        for (std::size_t i = 1; i < tokens.size(); ++i) v.add(tokens[i]);
        return v;
    }

    std::size_t size() const { return tokens_.size(); }
    std::size_t min_count() const { return min_count_; }
    const std::string& unk_token() const { return unk_; }
    std::size_t unk_id() const { return 0; }
    const std::vector<std::string>& tokens() const { return tokens_; }

    bool contains(std::string_view tok) const { return ids_.find(std::string(tok)) != ids_.end(); }

    std::size_t id(std::string_view tok) const {
        auto it = ids_.find(std::string(tok));
        return it == ids_.end() ? unk_id() : it->second;
    }

    const std::string& token(std::size_t id) const { return tokens_.at(id); }

    std::vector<std::size_t> encode(const Tokens& toks) const {
        std::vector<std::size_t> out;
        out.reserve(toks.size());
        for (const auto& t : toks) out.push_back(id(t));
        return out;
    }

    /// Replaces out-of-vocabulary tokens with the unk token.
    ParsedReport apply(ParsedReport report) const {
        for (auto& s : report.sentences)
            for (auto& t : s.tokens)
                if (!contains(t)) t = unk_;
        return report;
    }

    friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
        return a.min_count_ == b.min_count_ && a.tokens_ == b.tokens_;
    }

  private:
    void add(const std::string& tok) {
        if (ids_.emplace(tok, tokens_.size()).second) tokens_.push_back(tok);
    }

    std::size_t min_count_;
    std::string unk_;
    std::unordered_map<std::string, std::size_t> ids_;
    std::vector<std::string> tokens_;
};

inline std::map<std::string, std::size_t> count_tokens(const std::vector<ParsedReport>& reports) {
    std::map<std::string, std::size_t> counts;
    for (const auto& r : reports)
        for (const auto& s : r.sentences)
            for (const auto& t : s.tokens) ++counts[t];
    return counts;
}

inline Vocabulary build_vocabulary(const std::vector<ParsedReport>& reports, std::size_t min_count) {
    return Vocabulary::from_counts(count_tokens(reports), min_count);
}

/// Keeps the first occurrence of each exact token sequence.
inline ParsedReport dedupe_sentences(ParsedReport report) {
    std::set<Tokens> seen;
    std::vector<Sentence> kept;
    kept.reserve(report.sentences.size());
    for (auto& s : report.sentences)
        if (seen.insert(s.tokens).second) kept.push_back(std::move(s));
    report.sentences = std::move(kept);
    return report;
}

} // namespace radreward
