#pragma once

// File formats: JSON-lines corpora, CheXpert-style label CSV, embedding CSV
// and atomic output writes.

#include "radreward/corpus.hpp"
#include "radreward/labeler.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace radreward {

namespace detail {

inline std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    return in;
}

// Calls fn(json, line_number) for each non-blank line.
template <typename Fn>
void for_each_jsonl(const std::filesystem::path& path, Fn&& fn) {
    auto in = open_in(path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw Error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
        try {
            fn(j, lineno);
        } catch (const nlohmann::json::exception& e) {
            throw Error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        } catch (const Error& e) {
            throw Error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

inline std::optional<ViewPosition> view_from_json(const nlohmann::json& j) {
    if (!j.contains("view") || j["view"].is_null()) return std::nullopt;
    return parse_view(j["view"].get<std::string>());
}

inline nlohmann::json view_to_json(const std::optional<ViewPosition>& v) {
    if (!v) return nullptr;
    return std::string(to_string(*v));
}

} // namespace detail

inline std::vector<RawReport> read_raw_corpus(const std::filesystem::path& path) {
    std::vector<RawReport> out;
    detail::for_each_jsonl(path, [&](const nlohmann::json& j, std::size_t) {
        RawReport r{j.at("id").get<std::string>(), j.value("text", std::string()), detail::view_from_json(j)};
        if (r.id.empty()) throw Error("report id must be non-empty");
        out.push_back(std::move(r));
    });
    return out;
}

inline nlohmann::json to_json(const ParsedReport& r) {
    auto sentences = nlohmann::json::array();
    for (const auto& s : r.sentences) sentences.push_back(s.tokens);
    return {{"id", r.id}, {"sentences", sentences}, {"view", detail::view_to_json(r.view)}};
}

inline ParsedReport parsed_report_from_json(const nlohmann::json& j) {
    ParsedReport r;
    r.id = j.at("id").get<std::string>();
    for (const auto& s : j.at("sentences")) {
        Sentence sent{s.get<Tokens>()};
        if (sent.tokens.empty()) throw Error("report \"" + r.id + "\" has an empty sentence");
        r.sentences.push_back(std::move(sent));
    }
    r.view = detail::view_from_json(j);
    return r;
}

inline std::vector<ParsedReport> read_parsed_corpus(const std::filesystem::path& path) {
    std::vector<ParsedReport> out;
    detail::for_each_jsonl(path, [&](const nlohmann::json& j, std::size_t) { out.push_back(parsed_report_from_json(j)); });
    return out;
}

inline std::string parsed_corpus_text(const std::vector<ParsedReport>& reports) {
    std::string out;
    for (const auto& r : reports) out += to_json(r).dump() + "\n";
    return out;
}

/// Sentence bank: one JSON object per line holding either "tokens" or a
/// one-sentence "text".
inline std::vector<Sentence> read_sentence_bank(const std::filesystem::path& path) {
    std::vector<Sentence> bank;
    detail::for_each_jsonl(path, [&](const nlohmann::json& j, std::size_t) {
        if (j.contains("tokens")) {
            bank.push_back(Sentence{j["tokens"].get<Tokens>()});
        } else {
            auto sentences = split_sentences(j.at("text").get<std::string>());
            if (sentences.size() != 1) throw Error("bank entry must hold exactly one sentence");
            bank.push_back(std::move(sentences.front()));
        }
        if (bank.back().tokens.empty()) throw Error("empty template");
    });
    if (bank.empty()) throw Error(path.string() + ": empty sentence bank");
    return bank;
}

/// Writes via a sibling temp file and rename.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp.string());
        out << content;
        if (!out) throw Error("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

namespace detail {

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

template <typename Fn>
void for_each_csv_row(const std::filesystem::path& path, Fn&& fn) {
    auto in = open_in(path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        try {
            fn(split_csv_line(line), lineno);
        } catch (const Error& e) {
            throw Error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

inline std::string label_cell(MentionLabel l) {
    switch (l) {
    case MentionLabel::Positive: return "1.0";
    case MentionLabel::Negative: return "0.0";
    case MentionLabel::Uncertain: return "-1.0";
    case MentionLabel::Absent: break;
    }
    return "";
}

inline MentionLabel label_from_cell(const std::string& raw) {
    const auto cell = trim(raw);
    if (cell.empty()) return MentionLabel::Absent;
    double v = 0;
    try {
        std::size_t used = 0;
        v = std::stod(cell, &used);
        if (used != cell.size()) throw Error("");
    } catch (...) {
        throw Error("bad label value \"" + cell + "\"");
    }
    if (v == 1.0) return MentionLabel::Positive;
    if (v == 0.0) return MentionLabel::Negative;
    if (v == -1.0) return MentionLabel::Uncertain;
    throw Error("bad label value \"" + cell + "\"");
}

} // namespace detail

struct LabeledReport {
    std::string id;
    LabelVector labels;
};

inline std::string labels_csv_text(const std::vector<LabeledReport>& rows) {
    std::string out = "id";
    for (auto c : kAllCategories) out += "," + std::string(category_display_name(c));
    out += "\n";
    for (const auto& r : rows) {
        out += detail::csv_field(r.id);
        for (auto c : kAllCategories) out += "," + detail::label_cell(r.labels[c]);
        out += "\n";
    }
    return out;
}

/// Reads a label CSV. Columns are matched by header name (rule-file keys or
/// CheXpert display names); categories without a column are Absent.
inline std::vector<LabeledReport> read_labels_csv(const std::filesystem::path& path) {
    std::vector<LabeledReport> out;
    std::vector<std::optional<FindingCategory>> columns;
    bool header = true;
    detail::for_each_csv_row(path, [&](const std::vector<std::string>& fields, std::size_t) {
        if (header) {
            header = false;
            for (std::size_t i = 1; i < fields.size(); ++i) columns.push_back(category_from_key(detail::trim(fields[i])));
            return;
        }
        if (fields.size() != columns.size() + 1)
            throw Error("expected " + std::to_string(columns.size() + 1) + " fields, got " +
                        std::to_string(fields.size()));
        LabeledReport r{fields[0], {}};
        for (std::size_t i = 0; i < columns.size(); ++i)
            if (columns[i]) r.labels[*columns[i]] = detail::label_from_cell(fields[i + 1]);
        out.push_back(std::move(r));
    });
    return out;
}

struct EmbeddingRecord {
    std::string id;
    std::vector<double> vector;
};

/// CSV with header `id,v0,...,v{D-1}`.
inline std::vector<EmbeddingRecord> read_embeddings_csv(const std::filesystem::path& path) {
    std::vector<EmbeddingRecord> out;
    std::size_t dim = 0;
    bool header = true;
    detail::for_each_csv_row(path, [&](const std::vector<std::string>& fields, std::size_t) {
        if (header) {
            header = false;
            if (fields.empty() || detail::trim(fields[0]) != "id") throw Error("embedding header must start with id");
            dim = fields.size() - 1;
            return;
        }
        if (fields.size() != dim + 1)
            throw Error("expected " + std::to_string(dim) + " dimensions, got " + std::to_string(fields.size() - 1));
        EmbeddingRecord r{fields[0], {}};
        for (std::size_t i = 1; i < fields.size(); ++i) {
            double v = 0;
            try {
                v = std::stod(fields[i]);
            } catch (...) {
                throw Error("bad embedding value \"" + fields[i] + "\"");
            }
            if (!std::isfinite(v)) throw Error("non-finite embedding value");
            r.vector.push_back(v);
        }
        out.push_back(std::move(r));
    });
    return out;
}

} // namespace radreward
