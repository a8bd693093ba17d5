// Command-line front end: corpus parsing, labeling, scoring, rewards, toy
// policy training and end-to-end evaluation.

#include "radreward/radreward.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

namespace fs = std::filesystem;
using namespace radreward;

namespace {

nlohmann::json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(path.string() + ": " + e.what());
    }
}

RuleSet load_rules_verbose(const fs::path& path) {
    std::vector<std::string> warnings;
    auto rules = load_ruleset(path, &warnings);
    for (const auto& w : warnings) std::cerr << "warning: " << path.string() << ": " << w << "\n";
    return rules;
}

std::string fixed6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

int cmd_corpus_parse(const fs::path& in, const fs::path& out, std::size_t min_count,
                     const std::string& vocab_out) {
    const auto raw = read_raw_corpus(in);
    std::vector<ParsedReport> parsed;
    std::size_t skipped = 0;
    for (const auto& r : raw) {
        if (auto p = parse_report(r))
            parsed.push_back(std::move(*p));
        else
            ++skipped;
    }
    const auto vocab = build_vocabulary(parsed, min_count);
    for (auto& p : parsed) p = vocab.apply(std::move(p));
    write_file_atomic(out, parsed_corpus_text(parsed));
    if (!vocab_out.empty()) {
        nlohmann::json j{{"min_count", vocab.min_count()}, {"unk", vocab.unk_token()}, {"tokens", vocab.tokens()}};
        write_file_atomic(vocab_out, j.dump(2) + "\n");
    }
    std::cerr << "parsed " << parsed.size() << " reports, skipped " << skipped << " without findings, vocabulary "
              << vocab.size() << " tokens\n";
    return 0;
}

int cmd_label(const fs::path& in, const fs::path& rules_path, const fs::path& out) {
    const auto rules = load_rules_verbose(rules_path);
    std::vector<LabeledReport> rows;
    for (const auto& r : read_parsed_corpus(in)) rows.push_back({r.id, label_report(r, rules)});
    write_file_atomic(out, labels_csv_text(rows));
    return 0;
}

int cmd_score(const fs::path& generated, const fs::path& truth, const fs::path& out) {
    const auto m = evaluate_nlg(read_parsed_corpus(generated), read_parsed_corpus(truth));
    write_file_atomic(out, nlg_metrics_json(m));
    return 0;
}

int cmd_reward(const fs::path& generated_path, const fs::path& truth_path, const fs::path& labels_gen_path,
               const fs::path& labels_true_path, const fs::path& config_path, const std::string& greedy_path,
               const std::string& out_path) {
    const auto cfg = load_reward_config(config_path);
    const auto generated = read_parsed_corpus(generated_path);
    const auto truth = read_parsed_corpus(truth_path);

    std::vector<std::vector<Tokens>> docs;
    std::map<std::string, const ParsedReport*> truth_by_id;
    for (const auto& t : truth) {
        docs.push_back({t.flatten()});
        truth_by_id[t.id] = &t;
    }
    const CiderD idf(docs);

    std::map<std::string, LabelVector> gen_labels, true_labels;
    for (auto& r : read_labels_csv(labels_gen_path)) gen_labels[r.id] = r.labels;
    for (auto& r : read_labels_csv(labels_true_path)) true_labels[r.id] = r.labels;

    std::map<std::string, ParsedReport> greedy;
    if (!greedy_path.empty())
        for (auto& r : read_parsed_corpus(greedy_path)) greedy[r.id] = std::move(r);

    auto find = [](const auto& m, const std::string& id, const char* what) -> const auto& {
        auto it = m.find(id);
        if (it == m.end()) throw Error(std::string("no ") + what + " for id \"" + id + "\"");
        return it->second;
    };

    EmaBaselines baselines;
    auto per_report = nlohmann::json::array();
    double sum_nlg = 0, sum_ccr = 0, sum_adv = 0;
    for (const auto& g : generated) {
        const auto& t = *find(truth_by_id, g.id, "truth report");
        const auto ref = t.flatten();
        const double r = idf.score(g.flatten(), ref);
        const double rg = greedy.empty() ? 0.0 : idf.score(find(greedy, g.id, "greedy report").flatten(), ref);
        const auto ccr = ccr_reward(find(gen_labels, g.id, "generated labels"), find(true_labels, g.id, "truth labels"), cfg);
        const auto bundle = combine_rewards(r, rg, ccr, baselines, cfg);
        baselines = baselines.updated(ccr.terms, cfg.gamma);
        auto j = to_json(bundle);
        j["id"] = g.id;
        per_report.push_back(std::move(j));
        sum_nlg += r;
        sum_ccr += ccr.total;
        sum_adv += bundle.combined_advantage;
    }
    const double n = generated.empty() ? 1.0 : static_cast<double>(generated.size());
    nlohmann::json base = nlohmann::json::object();
    for (const auto& [c, v] : baselines.values()) base[std::string(category_key(c))] = v;
    nlohmann::json out{{"config", to_json(cfg)},
                       {"reports", per_report},
                       {"aggregate",
                        {{"num_reports", generated.size()},
                         {"nlg_reward_mean", sum_nlg / n},
                         {"ccr_total_mean", sum_ccr / n},
                         {"combined_advantage_mean", sum_adv / n},
                         {"final_baselines", base}}}};
    if (out_path.empty())
        std::cout << out.dump(2) << "\n";
    else
        write_file_atomic(out_path, out.dump(2) + "\n");
    return 0;
}

nlohmann::json policy_json(const ToyPolicy& p) {
    auto rows = nlohmann::json::array();
    for (std::size_t t = 0; t < p.max_steps(); ++t) {
        auto row = nlohmann::json::array();
        for (std::size_t k = 0; k < p.bank_size(); ++k) row.push_back(p.params().logit(t, k));
        rows.push_back(row);
    }
    return {{"max_steps", p.max_steps()},
            {"bank_size", p.bank_size()},
            {"template_logits", rows},
            {"stop_logits", p.params().stop_logits}};
}

int cmd_train_toy(const fs::path& bank_path, const fs::path& truth_path, const fs::path& config_path,
                  const TrainOptions& opts, const fs::path& out_dir) {
    const auto j = read_json_file(config_path);
    const auto cfg = reward_config_from_json(j);
    const auto bank = read_sentence_bank(bank_path);
    const auto truth_reports = read_parsed_corpus(truth_path);
    if (truth_reports.empty()) throw Error(truth_path.string() + ": no truth reports");

    const ParsedReport* truth = &truth_reports.front();
    if (j.contains("truth_id")) {
        const auto id = j["truth_id"].get<std::string>();
        truth = nullptr;
        for (const auto& r : truth_reports)
            if (r.id == id) truth = &r;
        if (!truth) throw Error("truth_id \"" + id + "\" not found in " + truth_path.string());
    }
    const fs::path rules_path = j.value("rules", std::string(RADREWARD_DEFAULT_RULES));
    const std::size_t max_steps = j.value("max_steps", std::max<std::size_t>(1, truth->sentences.size()));
    const std::string decode = j.value("decode", std::string("greedy"));
    if (decode != "greedy" && decode != "beam") throw Error("config: decode must be \"greedy\" or \"beam\"");

    ToyEnvironment env(*truth, bank, load_rules_verbose(rules_path), CiderD(toy_idf_documents(truth_reports, bank)), cfg);
    const auto result = train(ToyPolicy(max_steps, bank.size()), env, opts);

    fs::create_directories(out_dir);
    write_file_atomic(out_dir / "policy.json", policy_json(result.policy).dump(2) + "\n");

    std::string trace = "step,nlg_mean,ccr_mean,total_mean\n";
    for (const auto& row : result.trace)
        trace += std::to_string(row.step) + "," + fixed6(row.nlg_mean) + "," + fixed6(row.ccr_mean) + "," +
                 fixed6(row.total_mean) + "\n";
    write_file_atomic(out_dir / "reward_trace.csv", trace);

    ParsedReport decoded = decode == "beam" ? beam_decode(result.policy, bank, j.value("beam_width", std::size_t{4}))
                                            : greedy_decode(result.policy, bank);
    decoded.id = truth->id;
    decoded.view = truth->view;
    write_file_atomic(out_dir / "greedy_report.jsonl", parsed_corpus_text({decoded}));

    const auto& outcome = env.evaluate(decode == "beam" ? beam_search_ids(result.policy, j.value("beam_width", std::size_t{4}))
                                                        : greedy_template_ids(result.policy));
    std::cerr << "final " << decode << " report: CIDEr-D " << fixed6(outcome.nlg) << ", CCR " << fixed6(outcome.ccr.total)
              << "\n";
    return 0;
}

int cmd_evaluate(const fs::path& generated, const fs::path& truth, const fs::path& rules_path,
                 const std::string& config_path, const fs::path& out_dir, const std::string& u_as) {
    auto cfg = config_path.empty() ? EvaluationConfig{} : evaluation_config_from_json(read_json_file(config_path));
    if (!u_as.empty()) cfg.uncertain = parse_uncertain_policy(u_as);
    run_evaluation(generated, truth, load_rules_verbose(rules_path), cfg, out_dir);
    return 0;
}

int cmd_nn_baseline(const fs::path& query, const fs::path& train_path, const fs::path& train_reports,
                    const fs::path& out, const std::string& metric) {
    const auto q = read_embeddings_csv(query);
    const auto t = read_embeddings_csv(train_path);
    const auto reports = read_parsed_corpus(train_reports);
    const Distance d = metric == "cosine" ? Distance::Cosine : Distance::Euclidean;
    write_file_atomic(out, parsed_corpus_text(nearest_neighbor_reports(q, t, reports, d)));
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Radiology report evaluation and clinically coherent reward toolkit"};
    app.require_subcommand(1);

    // corpus parse
    auto* corpus = app.add_subcommand("corpus", "Corpus preprocessing");
    corpus->require_subcommand(1);
    auto* parse = corpus->add_subcommand("parse", "Extract, tokenize and threshold findings sections");
    std::string parse_in, parse_out, vocab_out;
    std::size_t min_count = 1;
    parse->add_option("--in", parse_in, "Raw corpus (JSON lines)")->required();
    parse->add_option("--out", parse_out, "Parsed corpus (JSON lines)")->required();
    parse->add_option("--min-count", min_count, "Minimum token count")->required()->check(CLI::PositiveNumber);
    parse->add_option("--vocab-out", vocab_out, "Vocabulary output (JSON)");

    auto* label = app.add_subcommand("label", "Label parsed reports");
    std::string label_in, label_rules, label_out;
    label->add_option("--in", label_in, "Parsed corpus")->required();
    label->add_option("--rules", label_rules, "Rule file")->required();
    label->add_option("--out", label_out, "Label CSV")->required();

    auto* score = app.add_subcommand("score", "Corpus text metrics");
    std::string score_gen, score_truth, score_out;
    score->add_option("--generated", score_gen)->required();
    score->add_option("--truth", score_truth)->required();
    score->add_option("--out", score_out)->required();

    auto* reward = app.add_subcommand("reward", "Per-report reward bundles");
    std::string rw_gen, rw_truth, rw_lgen, rw_ltrue, rw_cfg, rw_greedy, rw_out;
    reward->add_option("--generated", rw_gen)->required();
    reward->add_option("--truth", rw_truth)->required();
    reward->add_option("--labels-gen", rw_lgen)->required();
    reward->add_option("--labels-true", rw_ltrue)->required();
    reward->add_option("--config", rw_cfg)->required();
    reward->add_option("--greedy", rw_greedy, "Greedy-decoded reports for the self-critical baseline");
    reward->add_option("--out", rw_out, "Output JSON (default: stdout)");

    auto* toy = app.add_subcommand("train-toy", "Train the toy template policy");
    std::string toy_bank, toy_truth, toy_cfg, toy_out;
    TrainOptions opts;
    toy->add_option("--bank", toy_bank)->required();
    toy->add_option("--truth", toy_truth)->required();
    toy->add_option("--config", toy_cfg)->required();
    toy->add_option("--steps", opts.steps)->required();
    toy->add_option("--batch", opts.batch)->required();
    toy->add_option("--lr", opts.lr)->required();
    toy->add_option("--seed", opts.seed)->required();
    toy->add_option("--out", toy_out)->required();

    auto* eval = app.add_subcommand("evaluate", "End-to-end evaluation");
    std::string ev_gen, ev_truth, ev_rules, ev_cfg, ev_out, ev_u;
    eval->add_option("--generated", ev_gen)->required();
    eval->add_option("--truth", ev_truth)->required();
    eval->add_option("--rules", ev_rules)->required();
    eval->add_option("--config", ev_cfg)->required();
    eval->add_option("--out-dir", ev_out)->required();
    eval->add_option("--u-as", ev_u, "Binarize uncertain labels as pos or neg")->check(CLI::IsMember({"pos", "neg"}));

    auto* nn = app.add_subcommand("nn-baseline", "1-NN retrieval baseline over embeddings");
    std::string nn_q, nn_t, nn_r, nn_out, nn_metric = "euclidean";
    nn->add_option("--query", nn_q, "Query embeddings CSV")->required();
    nn->add_option("--train", nn_t, "Train embeddings CSV")->required();
    nn->add_option("--train-reports", nn_r, "Parsed train reports")->required();
    nn->add_option("--out", nn_out, "Output reports (JSON lines)")->required();
    nn->add_option("--metric", nn_metric)->check(CLI::IsMember({"euclidean", "cosine"}));

    CLI11_PARSE(app, argc, argv);

    try {
        if (*parse) return cmd_corpus_parse(parse_in, parse_out, min_count, vocab_out);
        if (*label) return cmd_label(label_in, label_rules, label_out);
        if (*score) return cmd_score(score_gen, score_truth, score_out);
        if (*reward) return cmd_reward(rw_gen, rw_truth, rw_lgen, rw_ltrue, rw_cfg, rw_greedy, rw_out);
        if (*toy) return cmd_train_toy(toy_bank, toy_truth, toy_cfg, opts, toy_out);
        if (*eval) return cmd_evaluate(ev_gen, ev_truth, ev_rules, ev_cfg, ev_out, ev_u);
        if (*nn) return cmd_nn_baseline(nn_q, nn_t, nn_r, nn_out, nn_metric);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
