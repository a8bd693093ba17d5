#include "radreward/eval.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

using namespace radreward;
using FC = FindingCategory;
using ML = MentionLabel;
namespace fs = std::filesystem;

namespace {

ML parse_label(const std::string& s) {
    if (s == "Positive") return ML::Positive;
    if (s == "Negative") return ML::Negative;
    if (s == "Uncertain") return ML::Uncertain;
    return ML::Absent;
}

LabelVector random_labels(std::mt19937& rng) {
    static constexpr ML all[] = {ML::Positive, ML::Negative, ML::Uncertain, ML::Absent};
    LabelVector v;
    for (auto c : kAllCategories) v[c] = all[rng() % 4];
    return v;
}

fs::path fresh_dir(const std::string& name) {
    auto d = fs::temp_directory_path() / name;
    fs::remove_all(d);
    return d;
}

} // namespace

TEST(Binarize, Mapping) {
    EXPECT_EQ(binarize(ML::Positive), BinaryOutcome::Pos);
    EXPECT_EQ(binarize(ML::Negative), BinaryOutcome::Neg);
    EXPECT_EQ(binarize(ML::Absent), BinaryOutcome::Neg);
    EXPECT_EQ(binarize(ML::Uncertain), BinaryOutcome::Pos);
    EXPECT_EQ(binarize(ML::Uncertain, UncertainPolicy::AsNegative), BinaryOutcome::Neg);
    EXPECT_EQ(parse_uncertain_policy("neg"), UncertainPolicy::AsNegative);
    EXPECT_THROW(parse_uncertain_policy("maybe"), Error);
}

TEST(ClinicalScores, IdentityIsPerfectWherePositivesExist) {
    std::mt19937 rng(1);
    std::vector<LabelVector> gen;
    for (int i = 0; i < 40; ++i) gen.push_back(random_labels(rng));
    auto s = clinical_scores(gen, gen);
    for (auto c : kAllCategories) {
        const auto& pc = s.per_category[index(c)];
        EXPECT_EQ(pc.accuracy, 1.0);
        if (pc.counts.tp > 0) {
            EXPECT_EQ(pc.precision, 1.0);
            EXPECT_EQ(pc.recall, 1.0);
        } else {
            EXPECT_EQ(pc.precision, 0.0); // zero-prediction convention
        }
    }
}

TEST(ClinicalScores, HandCaseFixture) {
    std::ifstream in(RADREWARD_FIXTURES "/clinical_hand_case.json");
    auto j = nlohmann::json::parse(in);
    std::vector<FC> cats;
    for (const auto& k : j["categories"]) cats.push_back(*category_from_key(k.get<std::string>()));
    std::vector<ConfusionCounts> cols(cats.size());
    for (std::size_t r = 0; r < j["generated"].size(); ++r)
        for (std::size_t c = 0; c < cats.size(); ++c)
            cols[c].add(binarize(parse_label(j["generated"][r][c])), binarize(parse_label(j["truth"][r][c])));
    EXPECT_EQ(cols[0], (ConfusionCounts{1, 1, 1, 1}));
    EXPECT_EQ(cols[1], (ConfusionCounts{0, 0, 4, 0}));
    auto s = aggregate_scores(cols);
    const auto& e = j["expected"];
    EXPECT_DOUBLE_EQ(s.precision_macro, e["precision_macro"].get<double>());
    EXPECT_DOUBLE_EQ(s.precision_micro, e["precision_micro"].get<double>());
    EXPECT_DOUBLE_EQ(s.recall_macro, e["recall_macro"].get<double>());
    EXPECT_DOUBLE_EQ(s.recall_micro, e["recall_micro"].get<double>());
}

TEST(ClinicalScores, MatchesBruteForceCounts) {
    std::mt19937 rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<LabelVector> gen, tru;
        for (int i = 0; i < 25; ++i) {
            gen.push_back(random_labels(rng));
            tru.push_back(random_labels(rng));
        }
        auto s = clinical_scores(gen, tru, UncertainPolicy::AsNegative);
        double tp = 0, fp = 0, fn = 0, macro_acc = 0;
        for (auto c : kAllCategories) {
            double ctp = 0, cfp = 0, cfn = 0, ctn = 0;
            for (std::size_t i = 0; i < gen.size(); ++i) {
                const bool g = gen[i][c] == ML::Positive, t = tru[i][c] == ML::Positive;
                ctp += g && t;
                cfp += g && !t;
                cfn += !g && t;
                ctn += !g && !t;
            }
            tp += ctp;
            fp += cfp;
            fn += cfn;
            macro_acc += (ctp + ctn) / gen.size();
            EXPECT_EQ(s.per_category[index(c)].counts.total(), gen.size());
        }
        EXPECT_NEAR(s.accuracy_macro, macro_acc / kNumCategories, 1e-12);
        EXPECT_NEAR(s.precision_micro, tp / (tp + fp), 1e-12);
        EXPECT_NEAR(s.recall_micro, tp / (tp + fn), 1e-12);
    }
}

TEST(ClinicalScores, MicroInvariantUnderCategoryPermutation) {
    std::mt19937 rng(3);
    std::vector<ConfusionCounts> cols(kNumCategories);
    for (auto& c : cols) c = {rng() % 9, rng() % 9, rng() % 9, rng() % 9};
    auto a = aggregate_scores(cols);
    std::shuffle(cols.begin(), cols.end(), rng);
    auto b = aggregate_scores(cols);
    EXPECT_EQ(a.precision_micro, b.precision_micro);
    EXPECT_EQ(a.recall_micro, b.recall_micro);
    EXPECT_NEAR(a.precision_macro, b.precision_macro, 1e-15);
}

TEST(ClinicalScores, Errors) {
    std::vector<LabelVector> one(1), two(2);
    EXPECT_THROW(clinical_scores(one, two), Error);
    EXPECT_THROW(clinical_scores(std::vector<LabelVector>{}, std::vector<LabelVector>{}), Error);
    std::vector<LabeledReport> g = {{"a", {}}}, t = {{"b", {}}};
    EXPECT_THROW(clinical_scores(g, t), Error);
}

TEST(MajorClass, AllNegativeAndPrevalenceIdentity) {
    std::mt19937 rng(4);
    std::vector<LabelVector> truth;
    for (int i = 0; i < 60; ++i) truth.push_back(random_labels(rng));
    auto pred = major_class(truth);
    ASSERT_EQ(pred.size(), truth.size());
    for (const auto& v : pred)
        for (auto c : kAllCategories) EXPECT_EQ(v[c], ML::Negative);
    auto s = clinical_scores(pred, truth);
    double prevalence = 0;
    for (auto c : kAllCategories) {
        double neg = 0;
        for (const auto& t : truth) neg += binarize(t[c]) == BinaryOutcome::Neg;
        prevalence += neg / truth.size();
        EXPECT_EQ(s.per_category[index(c)].precision, 0.0);
    }
    EXPECT_NEAR(s.accuracy_macro, prevalence / kNumCategories, 1e-12);
    EXPECT_EQ(s.precision_macro, 0.0);
}

TEST(NearestNeighbor, Examples) {
    std::vector<EmbeddingRecord> train = {{"r1", {1, 0}}, {"r2", {3, 4}}};
    EXPECT_EQ(nearest_neighbor({"q", {0, 0}}, train), "r1");
    EXPECT_EQ(nearest_neighbor({"q", {3, 4}}, train), "r2");
    std::vector<EmbeddingRecord> tie = {{"b", {1, 0}}, {"a", {-1, 0}}};
    EXPECT_EQ(nearest_neighbor({"q", {0, 0}}, tie), "a");
    EXPECT_THROW(nearest_neighbor({"q", {0, 0}}, std::vector<EmbeddingRecord>{}), Error);
    EXPECT_THROW(nearest_neighbor({"q", {0, 0, 0}}, train), Error);
}

TEST(NearestNeighbor, MatchesExhaustiveScan) {
    std::mt19937 rng(5);
    std::normal_distribution<> nd;
    std::vector<EmbeddingRecord> train;
    for (int i = 0; i < 100; ++i) {
        EmbeddingRecord r{"t" + std::to_string(i), {}};
        for (int d = 0; d < 8; ++d) r.vector.push_back(nd(rng));
        train.push_back(r);
    }
    for (int q = 0; q < 50; ++q) {
        EmbeddingRecord query{"q", {}};
        for (int d = 0; d < 8; ++d) query.vector.push_back(nd(rng));
        std::string best;
        double bestd = 1e300;
        for (const auto& t : train) {
            double d = 0;
            for (int k = 0; k < 8; ++k) d += (t.vector[k] - query.vector[k]) * (t.vector[k] - query.vector[k]);
            if (std::sqrt(d) < bestd) {
                bestd = std::sqrt(d);
                best = t.id;
            }
        }
        EXPECT_EQ(nearest_neighbor(query, train), best);
    }
}

TEST(NearestNeighbor, InvariantUnderOrthogonalTransforms) {
    std::mt19937 rng(6);
    std::normal_distribution<> nd;
    const int dim = 5;
    auto random_vec = [&] {
        std::vector<double> v(dim);
        for (auto& x : v) x = nd(rng);
        return v;
    };
    for (int trial = 0; trial < 10; ++trial) {
        // random orthogonal matrix by Gram-Schmidt
        std::vector<std::vector<double>> Q;
        while (Q.size() < dim) {
            auto v = random_vec();
            for (const auto& q : Q) {
                double dot = 0;
                for (int k = 0; k < dim; ++k) dot += v[k] * q[k];
                for (int k = 0; k < dim; ++k) v[k] -= dot * q[k];
            }
            double n = 0;
            for (double x : v) n += x * x;
            for (double& x : v) x /= std::sqrt(n);
            Q.push_back(v);
        }
        std::vector<double> shift = random_vec();
        auto transform = [&](const std::vector<double>& v) {
            std::vector<double> out(dim, 0);
            for (int i = 0; i < dim; ++i) {
                for (int k = 0; k < dim; ++k) out[i] += Q[i][k] * v[k];
                out[i] += shift[i];
            }
            return out;
        };
        std::vector<EmbeddingRecord> train, moved;
        for (int i = 0; i < 30; ++i) {
            train.push_back({"t" + std::to_string(i), random_vec()});
            moved.push_back({train.back().id, transform(train.back().vector)});
        }
        for (int q = 0; q < 20; ++q) {
            EmbeddingRecord query{"q", random_vec()};
            EXPECT_EQ(nearest_neighbor(query, train), nearest_neighbor({"q", transform(query.vector)}, moved));
        }
    }
}

TEST(NearestNeighbor, ReportsAndCosine) {
    std::vector<EmbeddingRecord> train = {{"r1", {1, 0}}, {"r2", {10, 10}}};
    std::vector<ParsedReport> reports = {{"r1", {Sentence{{"a"}}}, std::nullopt}, {"r2", {Sentence{{"b"}}}, std::nullopt}};
    std::vector<EmbeddingRecord> queries = {{"q1", {2, 2}}};
    auto out = nearest_neighbor_reports(queries, train, reports);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out[0].id, "q1");
    EXPECT_EQ(out[0].sentences[0].tokens, Tokens{"a"});
    EXPECT_EQ(nearest_neighbor_reports(queries, train, reports, Distance::Cosine)[0].sentences[0].tokens, Tokens{"b"});
}

TEST(RunEvaluation, IdentityIsPerfect) {
    const auto truth = fs::path(RADREWARD_FIXTURES) / "eval" / "truth.jsonl";
    auto rules = load_ruleset(RADREWARD_DEFAULT_RULES);
    auto dir = fresh_dir("radreward_eval_identity");
    auto r = run_evaluation(truth, truth, rules, {}, dir);
    EXPECT_NEAR(r.nlg.bleu4, 1.0, 1e-12);
    EXPECT_NEAR(r.nlg.cider_d, 10.0, 1e-9);
    EXPECT_EQ(r.clinical.accuracy_macro, 1.0);
    for (auto c : kAllCategories) {
        if (r.truth_positives[index(c)] == 0) continue;
        EXPECT_EQ(r.clinical.per_category[index(c)].precision, 1.0);
    }
    EXPECT_TRUE(fs::exists(dir / "nlg_metrics.json"));
    fs::remove_all(dir);
}

TEST(RunEvaluation, MissingTruthIdLeavesNoOutput) {
    auto dir = fresh_dir("radreward_eval_missing");
    fs::create_directories(dir);
    const auto gen = dir / "gen.jsonl";
    { std::ofstream(gen) << R"({"id":"nope","sentences":[["a"]],"view":null})" << "\n"; }
    auto rules = load_ruleset(RADREWARD_DEFAULT_RULES);
    EXPECT_THROW(run_evaluation(gen, fs::path(RADREWARD_FIXTURES) / "eval" / "truth.jsonl", rules, {}, dir / "out"),
                 Error);
    EXPECT_FALSE(fs::exists(dir / "out" / "nlg_metrics.json"));
    EXPECT_FALSE(fs::exists(dir / "out" / "clinical_scores.json"));
    EXPECT_FALSE(fs::exists(dir / "out" / "per_category.csv"));
    fs::remove_all(dir);
}

TEST(RunEvaluation, BadLineReportsFileAndLine) {
    auto dir = fresh_dir("radreward_eval_badline");
    fs::create_directories(dir);
    const auto gen = dir / "gen.jsonl";
    { std::ofstream(gen) << R"({"id":"e1","sentences":[["a"]]})" << "\n{not json\n"; }
    auto rules = load_ruleset(RADREWARD_DEFAULT_RULES);
    try {
        run_evaluation(gen, gen, rules, {}, dir / "out");
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("gen.jsonl:2"), std::string::npos) << e.what();
    }
    fs::remove_all(dir);
}

TEST(EmbeddingsCsv, ReadsAndValidates) {
    auto dir = fresh_dir("radreward_emb");
    fs::create_directories(dir);
    { std::ofstream(dir / "ok.csv") << "id,v0,v1\na,1,2\nb,3.5,-1\n"; }
    auto recs = read_embeddings_csv(dir / "ok.csv");
    ASSERT_EQ(recs.size(), 2u);
    EXPECT_EQ(recs[1].vector, (std::vector<double>{3.5, -1}));
    { std::ofstream(dir / "ragged.csv") << "id,v0,v1\na,1\n"; }
    EXPECT_THROW(read_embeddings_csv(dir / "ragged.csv"), Error);
    { std::ofstream(dir / "nan.csv") << "id,v0\na,nan\n"; }
    EXPECT_THROW(read_embeddings_csv(dir / "nan.csv"), Error);
    fs::remove_all(dir);
}
