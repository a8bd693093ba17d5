#pragma once

// Rule-based mention labeler: phrase patterns per finding category, with
// negation and uncertainty cues scoped by a token window inside a sentence.

#include "radreward/corpus.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace radreward {

enum class FindingCategory : std::size_t {
    NoFinding,
    EnlargedCardiomediastinum,
    Cardiomegaly,
    LungLesion,
    AirspaceOpacity,
    Edema,
    Consolidation,
    Pneumonia,
    Atelectasis,
    Pneumothorax,
    PleuralEffusion,
    PleuralOther,
    Fracture,
    SupportDevices,
};

inline constexpr std::size_t kNumCategories = 14;

inline constexpr std::array<FindingCategory, kNumCategories> kAllCategories = {
    FindingCategory::NoFinding,      FindingCategory::EnlargedCardiomediastinum,
    FindingCategory::Cardiomegaly,   FindingCategory::LungLesion,
    FindingCategory::AirspaceOpacity, FindingCategory::Edema,
    FindingCategory::Consolidation,  FindingCategory::Pneumonia,
    FindingCategory::Atelectasis,    FindingCategory::Pneumothorax,
    FindingCategory::PleuralEffusion, FindingCategory::PleuralOther,
    FindingCategory::Fracture,       FindingCategory::SupportDevices,
};

inline constexpr std::size_t index(FindingCategory c) { return static_cast<std::size_t>(c); }

/// Identifier used in rule files, e.g. "PleuralEffusion".
inline std::string_view category_key(FindingCategory c) {
    static constexpr std::array<std::string_view, kNumCategories> keys = {
        "NoFinding",     "EnlargedCardiomediastinum", "Cardiomegaly", "LungLesion", "AirspaceOpacity",
        "Edema",         "Consolidation",             "Pneumonia",    "Atelectasis", "Pneumothorax",
        "PleuralEffusion", "PleuralOther",            "Fracture",     "SupportDevices"};
    return keys[index(c)];
}

/// Column header in the CheXpert label export, e.g. "Pleural Effusion".
inline std::string_view category_display_name(FindingCategory c) {
    static constexpr std::array<std::string_view, kNumCategories> names = {
        "No Finding",       "Enlarged Cardiomediastinum", "Cardiomegaly", "Lung Lesion", "Airspace Opacity",
        "Edema",            "Consolidation",              "Pneumonia",    "Atelectasis", "Pneumothorax",
        "Pleural Effusion", "Pleural Other",              "Fracture",     "Support Devices"};
    return names[index(c)];
}

inline std::optional<FindingCategory> category_from_key(std::string_view key) {
    for (auto c : kAllCategories)
        if (category_key(c) == key || category_display_name(c) == key) return c;
    return std::nullopt;
}

enum class MentionLabel { Positive, Negative, Uncertain, Absent };

inline std::string_view to_string(MentionLabel l) {
    switch (l) {
    case MentionLabel::Positive: return "Positive";
    case MentionLabel::Negative: return "Negative";
    case MentionLabel::Uncertain: return "Uncertain";
    case MentionLabel::Absent: break;
    }
    return "Absent";
}

/// Aggregation rank: Positive > Uncertain > Negative > Absent.
inline constexpr int precedence(MentionLabel l) {
    switch (l) {
    case MentionLabel::Positive: return 3;
    case MentionLabel::Uncertain: return 2;
    case MentionLabel::Negative: return 1;
    case MentionLabel::Absent: break;
    }
    return 0;
}

/// Total map from category to label; defaults to Absent everywhere.
class LabelVector {
  public:
    LabelVector() { labels_.fill(MentionLabel::Absent); }

    MentionLabel operator[](FindingCategory c) const { return labels_[index(c)]; }
    MentionLabel& operator[](FindingCategory c) { return labels_[index(c)]; }

    const std::array<MentionLabel, kNumCategories>& values() const { return labels_; }

    friend bool operator==(const LabelVector&, const LabelVector&) = default;

  private:
    std::array<MentionLabel, kNumCategories> labels_;
};

/// A token-sequence pattern; "*" matches exactly one token.
using Pattern = std::vector<std::string>;

struct RuleSet {
    std::size_t window = 6;
    std::vector<Pattern> pre_neg;
    std::vector<Pattern> post_neg;
    std::vector<Pattern> uncertain;
    std::array<std::vector<Pattern>, kNumCategories> patterns;

    friend bool operator==(const RuleSet&, const RuleSet&) = default;
};

/// Carries every violation found while validating a rule file.
class ValidationError : public Error {
  public:
    explicit ValidationError(std::vector<std::string> violations)
        : Error(join(violations)), violations_(std::move(violations)) {}

    const std::vector<std::string>& violations() const { return violations_; }

  private:
    static std::string join(const std::vector<std::string>& v) {
        std::string out = "rule set validation failed:";
        for (const auto& s : v) out += "\n  - " + s;
        return out;
    }
    std::vector<std::string> violations_;
};

namespace detail {

inline std::string pattern_text(const Pattern& p) {
    std::string out;
    for (std::size_t i = 0; i < p.size(); ++i) out += (i ? " " : "") + p[i];
    return out;
}

inline Pattern pattern_from_text(std::string_view text) {
    Pattern p;
    std::istringstream in{std::string(text)};
    for (std::string word; in >> word;) {
        if (word == "*") {
            p.push_back(word);
            continue;
        }
        for (auto& t : tokenize(word)) p.push_back(std::move(t));
    }
    return p;
}

} // namespace detail

/// Validates a rule file's JSON. Duplicate patterns within one category are
/// kept and reported through `warnings`.
inline RuleSet ruleset_from_json(const nlohmann::json& j, std::vector<std::string>* warnings = nullptr) {
    std::vector<std::string> violations;
    RuleSet rs;
    if (!j.is_object()) throw ValidationError({"top level must be a JSON object"});

    if (!j.contains("window"))
        violations.push_back("missing \"window\"");
    else if (!j["window"].is_number_integer() || j["window"].get<long long>() < 1)
        violations.push_back("\"window\" must be an integer >= 1");
    else
        rs.window = j["window"].get<std::size_t>();

    auto read_cues = [&](const char* key, std::vector<Pattern>& dst) {
        if (!j.contains(key)) {
            violations.push_back(std::string("missing \"") + key + "\"");
            return;
        }
        const auto& arr = j[key];
        if (!arr.is_array()) {
            violations.push_back(std::string("\"") + key + "\" must be an array of strings");
            return;
        }
        if (arr.empty()) violations.push_back(std::string("\"") + key + "\" must not be empty");
        for (std::size_t i = 0; i < arr.size(); ++i) {
            if (!arr[i].is_string()) {
                violations.push_back(std::string("\"") + key + "\"[" + std::to_string(i) + "] is not a string");
                continue;
            }
            auto p = detail::pattern_from_text(arr[i].get<std::string>());
            if (p.empty())
                violations.push_back(std::string("\"") + key + "\"[" + std::to_string(i) + "] is empty");
            else
                dst.push_back(std::move(p));
        }
    };
    read_cues("pre_neg", rs.pre_neg);
    read_cues("post_neg", rs.post_neg);
    read_cues("uncertain", rs.uncertain);

    if (!j.contains("patterns") || !j["patterns"].is_object()) {
        violations.push_back("missing object \"patterns\"");
    } else {
        for (const auto& [key, arr] : j["patterns"].items()) {
            auto cat = category_from_key(key);
            if (!cat) {
                violations.push_back("unknown category \"" + key + "\"");
                continue;
            }
            if (*cat == FindingCategory::NoFinding) {
                violations.push_back("NoFinding is derived and cannot carry patterns");
                continue;
            }
            if (!arr.is_array()) {
                violations.push_back("patterns for \"" + key + "\" must be an array");
                continue;
            }
            auto& dst = rs.patterns[index(*cat)];
            for (std::size_t i = 0; i < arr.size(); ++i) {
                if (!arr[i].is_string()) {
                    violations.push_back("pattern " + key + "[" + std::to_string(i) + "] is not a string");
                    continue;
                }
                auto p = detail::pattern_from_text(arr[i].get<std::string>());
                if (p.empty()) {
                    violations.push_back("pattern " + key + "[" + std::to_string(i) + "] is empty");
                    continue;
                }
                if (std::find(dst.begin(), dst.end(), p) != dst.end() && warnings)
                    warnings->push_back("duplicate pattern \"" + detail::pattern_text(p) + "\" for " + key);
                dst.push_back(std::move(p));
            }
        }
        for (auto c : kAllCategories)
            if (c != FindingCategory::NoFinding && rs.patterns[index(c)].empty())
                violations.push_back("category " + std::string(category_key(c)) + " has no patterns");
    }

    if (!violations.empty()) throw ValidationError(std::move(violations));
    return rs;
}

inline nlohmann::json ruleset_to_json(const RuleSet& rs) {
    auto texts = [](const std::vector<Pattern>& ps) {
        auto arr = nlohmann::json::array();
        for (const auto& p : ps) arr.push_back(detail::pattern_text(p));
        return arr;
    };
    nlohmann::json j;
    j["window"] = rs.window;
    j["pre_neg"] = texts(rs.pre_neg);
    j["post_neg"] = texts(rs.post_neg);
    j["uncertain"] = texts(rs.uncertain);
    j["patterns"] = nlohmann::json::object();
    for (auto c : kAllCategories)
        if (!rs.patterns[index(c)].empty()) j["patterns"][std::string(category_key(c))] = texts(rs.patterns[index(c)]);
    return j;
}

inline RuleSet load_ruleset(const std::filesystem::path& path, std::vector<std::string>* warnings = nullptr) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open rule file " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError({path.string() + ": " + e.what()});
    }
    return ruleset_from_json(j, warnings);
}

inline void save_ruleset(const RuleSet& rs, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write rule file " + path.string());
    out << ruleset_to_json(rs).dump(2) << '\n';
}

struct Mention {
    FindingCategory category;
    MentionLabel label;
    std::size_t begin; // token span [begin, end)
    std::size_t end;

    friend bool operator==(const Mention&, const Mention&) = default;
};

namespace detail {

inline bool matches_at(const Tokens& toks, std::size_t pos, const Pattern& p) {
    if (pos + p.size() > toks.size()) return false;
    for (std::size_t k = 0; k < p.size(); ++k)
        if (p[k] != "*" && p[k] != toks[pos + k]) return false;
    return true;
}

// Cue occurrence entirely before `begin`, ending no more than `window`
// tokens before it.
inline bool cue_before(const Tokens& toks, std::size_t begin, const std::vector<Pattern>& cues, std::size_t window) {
    for (const auto& cue : cues) {
        if (cue.size() > begin) continue;
        std::size_t last_start = begin - cue.size();
        std::size_t first_start = last_start > window ? last_start - window : 0;
        for (std::size_t s = first_start; s <= last_start; ++s)
            if (matches_at(toks, s, cue)) return true;
    }
    return false;
}

// Cue occurrence entirely after `end`, starting no more than `window`
// tokens after it.
inline bool cue_after(const Tokens& toks, std::size_t end, const std::vector<Pattern>& cues, std::size_t window) {
    for (const auto& cue : cues)
        for (std::size_t s = end; s <= end + window && s < toks.size(); ++s)
            if (matches_at(toks, s, cue)) return true;
    return false;
}

} // namespace detail

/// All category mentions in one sentence, ordered by category then position.
/// Within a category, the longest pattern wins at each start position and
/// scanning resumes after it, so overlapping patterns yield one mention.
inline std::vector<Mention> find_mentions(const Sentence& s, const RuleSet& rs) {
    const Tokens& toks = s.tokens;
    std::vector<Mention> out;
    for (auto c : kAllCategories) {
        const auto& pats = rs.patterns[index(c)];
        for (std::size_t pos = 0; pos < toks.size();) {
            std::size_t best = 0;
            for (const auto& p : pats)
                if (p.size() > best && detail::matches_at(toks, pos, p)) best = p.size();
            if (best == 0) {
                ++pos;
                continue;
            }
            MentionLabel label = MentionLabel::Positive;
            if (detail::cue_before(toks, pos, rs.uncertain, rs.window) ||
                detail::cue_after(toks, pos + best, rs.uncertain, rs.window))
                label = MentionLabel::Uncertain;
            else if (detail::cue_before(toks, pos, rs.pre_neg, rs.window) ||
                     detail::cue_after(toks, pos + best, rs.post_neg, rs.window))
                label = MentionLabel::Negative;
            out.push_back({c, label, pos, pos + best});
            pos += best;
        }
    }
    return out;
}

inline std::vector<std::pair<FindingCategory, MentionLabel>> label_sentence(const Sentence& s, const RuleSet& rs) {
    std::vector<std::pair<FindingCategory, MentionLabel>> out;
    for (const auto& m : find_mentions(s, rs)) out.emplace_back(m.category, m.label);
    return out;
}

inline LabelVector label_report(const ParsedReport& r, const RuleSet& rs) {
    LabelVector v;
    for (const auto& s : r.sentences)
        for (const auto& [cat, label] : label_sentence(s, rs))
            if (precedence(label) > precedence(v[cat])) v[cat] = label;

    bool any_finding = false;
    for (auto c : kAllCategories) {
        if (c == FindingCategory::NoFinding) continue;
        if (v[c] == MentionLabel::Positive || v[c] == MentionLabel::Uncertain) any_finding = true;
    }
    v[FindingCategory::NoFinding] =
        (!any_finding && !r.sentences.empty()) ? MentionLabel::Positive : MentionLabel::Negative;
    return v;
}

} // namespace radreward
