#include "perturbrag/errors.hpp"
#include "perturbrag/evaluator.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <random>

using namespace perturbrag;

namespace {

LabeledPair test_pair(std::string p, std::string g, int y) {
    return {std::move(p), std::move(g), y, y == 1 ? std::optional<int>(1) : std::nullopt, Split::test};
}

LabeledPair train_pair(std::string p, std::string g, int y) {
    return {std::move(p), std::move(g), y, y == 1 ? std::optional<int>(1) : std::nullopt, Split::train};
}

/// One-hot token vectors over a tiny vocabulary.
class OneHotScorer final : public EmbeddingScorer {
public:
    std::vector<std::vector<double>> embed(std::string_view text) override {
        std::vector<std::vector<double>> out;
        for (const auto& tok : rouge_tokens(text)) {
            std::vector<double> v(4, 0.0);
            v[static_cast<std::size_t>(tok[0] - 'a') % 4] = 1.0;
            out.push_back(v);
        }
        return out;
    }
};

} // namespace

TEST_SUITE("evaluator") {

TEST_CASE("auroc hand cases") {
    const std::vector<double> s = {0.1, 0.4, 0.35, 0.8};
    const std::vector<int> y = {0, 0, 1, 1};
    CHECK(auroc(s, y) == 0.75);
    const std::vector<double> tied = {0.5, 0.5, 0.5};
    const std::vector<int> ty = {1, 0, 1};
    CHECK(auroc(tied, ty) == 0.5);
    const std::vector<int> one_class = {1, 1, 1};
    CHECK_THROWS_AS(auroc(tied, one_class), UndefinedMetricError);
    const std::vector<int> bad = {0, 2, 1};
    CHECK_THROWS_AS(auroc(tied, bad), ArgumentError);
    const std::vector<int> shorter = {0, 1};
    CHECK_THROWS_AS(auroc(tied, shorter), ArgumentError);
}

TEST_CASE("auroc properties") {
    std::mt19937_64 rng(17);
    for (int t = 0; t < 200; ++t) {
        const std::size_t n = std::uniform_int_distribution<std::size_t>(2, 60)(rng);
        std::vector<double> s(n);
        std::vector<int> y(n);
        std::vector<int> flipped(n);
        std::vector<double> transformed(n);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = std::uniform_int_distribution<int>(0, 5)(rng) / 5.0;
            y[i] = static_cast<int>(i % 2);
            flipped[i] = 1 - y[i];
            transformed[i] = std::exp(3.0 * s[i]) - 7.0;
        }
        std::shuffle(y.begin(), y.end(), rng);
        for (std::size_t i = 0; i < n; ++i) {
            flipped[i] = 1 - y[i];
        }
        const double a = auroc(s, y);
        CHECK(std::abs(a - oracle::auroc_pairwise(s, y)) <= 1e-12);
        CHECK(std::abs(a + auroc(s, flipped) - 1.0) <= 1e-12);
        CHECK(auroc(transformed, y) == a);
    }
}

TEST_CASE("macro auroc groups and skips") {
    const std::vector<LabeledPair> labels = {
        test_pair("P1", "A", 1), test_pair("P2", "A", 0),  // A: 1.0
        test_pair("P1", "B", 1), test_pair("P2", "B", 0),  // B: 0.5 (tie)
        test_pair("P1", "C", 1), test_pair("P2", "C", 1),  // C: skipped
    };
    std::vector<PredictionRecord> preds;
    auto add = [&](std::string p, std::string g, double s) {
        PredictionRecord r;
        r.pert = std::move(p);
        r.gene = std::move(g);
        r.score = s;
        preds.push_back(r);
    };
    add("P1", "A", 0.9);
    add("P2", "A", 0.1);
    add("P1", "B", 0.4);
    add("P2", "B", 0.4);
    add("P1", "C", 0.3);
    add("P2", "C", 0.3);
    auto by_gene = macro_auroc(preds, labels, Task::de);
    CHECK(by_gene.macro == 0.75);
    CHECK(by_gene.n_groups_evaluated == 2);
    CHECK(by_gene.n_groups_skipped == 1);
    CHECK(by_gene.n_pairs == 6);
    CHECK(by_gene.per_group.at("A") == 1.0);

    auto by_pert = macro_auroc(preds, labels, Task::de, GroupBy::perturbation);
    // P1 has only positives; P2 has C as its one positive.
    CHECK(by_pert.n_groups_skipped == 1);
    CHECK(by_pert.per_group.at("P2") == 0.5); // C at 0.3 sits between A and B
    CHECK_THROWS_AS(macro_auroc(preds, {labels[0], labels[1], labels[2], labels[3]}, Task::de, GroupBy::perturbation),
                    UndefinedMetricError);

    preds.pop_back();
    CHECK_THROWS_AS(macro_auroc(preds, labels, Task::de), ArgumentError);

    auto j = to_json(by_gene);
    CHECK(j["macro"] == 0.75);
    CHECK(j["group_by"] == "downstream_gene");
    CHECK(format_report(by_gene).find("0.7500") != std::string::npos);
}

TEST_CASE("group-by parsing") {
    CHECK(parse_group_by("gene") == GroupBy::downstream_gene);
    CHECK(parse_group_by("perturbation") == GroupBy::perturbation);
    CHECK_THROWS_AS(parse_group_by("cell"), ArgumentError);
}

TEST_CASE("rouge examples") {
    CHECK(rouge1_recall("Genes regulating m6A mRNA methylation", "m6A mRNA methylation") == 1.0);
    CHECK(rouge1_recall("Ribosome biogenesis", "translation") == 0.0);
    CHECK(rouge1_recall("a gene set of kinases", "gene set enrichment") == 2.0 / 3.0);
    CHECK(rouge1_recall("x", "the the") == 0.0);
    CHECK(rouge1_recall("the", "the the") == 0.5);
    CHECK_THROWS_AS(rouge1_recall("x", " --- "), ArgumentError);
    CHECK(rouge_tokens("Hello, WORLD-42!") == std::vector<std::string>{"hello", "world", "42"});
}

TEST_CASE("embedding similarity") {
    OneHotScorer scorer;
    auto same = embedding_similarity("alpha beta", "alpha beta", &scorer);
    CHECK(same.precision == 1.0);
    CHECK(same.recall == 1.0);
    CHECK(same.f1 == 1.0);
    auto orth = embedding_similarity("alpha", "beta", &scorer);
    CHECK(orth.f1 == 0.0);
    auto half = embedding_similarity("alpha", "alpha beta", &scorer);
    CHECK(half.recall == 0.5);
    CHECK(half.precision == 1.0);
    CHECK_THROWS_AS(embedding_similarity("a", "b", nullptr), UnsupportedMetricError);
}

TEST_CASE("physical baseline") {
    KnowledgeGraph g;
    g.add_edge({"A", "B", "physical_interaction", "A binds B", "STRING"});
    const std::vector<LabeledPair> pairs = {test_pair("B", "A", 1), test_pair("A", "C", 0)};
    CHECK(baseline_physical(pairs, g) == std::vector<double>{1.0, 0.0});
}

TEST_CASE("physical baseline beats chance when most positives interact") {
    KnowledgeGraph g;
    std::vector<LabeledPair> pairs;
    for (int i = 0; i < 10; ++i) {
        const std::string p = "P" + std::to_string(i);
        pairs.push_back(test_pair(p, "POS", 1));
        pairs.push_back(test_pair(p, "NEG", 0));
        if (i < 6) {
            g.add_edge({p, "POS", "physical_interaction", "x", "s"});
        }
        if (i < 1) {
            g.add_edge({p, "NEG", "physical_interaction", "x", "s"});
        }
    }
    auto scores = baseline_physical(pairs, g);
    std::vector<int> y;
    for (const auto& p : pairs) {
        y.push_back(p.y_de);
    }
    const double a = auroc(scores, y);
    CHECK(a == oracle::auroc_pairwise(scores, y));
    CHECK(a > 0.5);
}

TEST_CASE("gene mean baseline") {
    const std::vector<LabeledPair> corpus = {
        train_pair("P1", "A", 1), train_pair("P2", "A", 0), train_pair("P3", "A", 0), train_pair("P4", "A", 1),
        train_pair("P1", "B", 0), train_pair("P2", "B", 0), train_pair("P3", "B", 0), train_pair("P4", "B", 0),
    };
    auto s = baseline_gene_mean({test_pair("Q", "A", 1), test_pair("Q", "B", 0), test_pair("Q", "Z", 0)}, corpus);
    CHECK(s == std::vector<double>{0.5, 0.0, 0.25});
    CHECK_THROWS_AS(baseline_gene_mean({}, {test_pair("Q", "A", 1)}), ArgumentError);
}

TEST_CASE("retrieval baseline averages bundle labels and falls back") {
    std::map<std::string, std::vector<std::string>> adj = {{"H", {"P1", "P2", "Q"}}, {"P1", {"H"}}, {"P2", {"H"}},
                                                           {"Q", {"H"}}, {"Z", {}}};
    auto index = build_index(adj, 10);
    const std::vector<LabeledPair> corpus = {
        train_pair("P1", "G", 1), train_pair("P2", "G", 0), train_pair("P1", "K", 1),
        train_pair("P2", "K", 1), train_pair("P1", "M", 0), train_pair("X", "W", 0),
    };
    // Q relates to P1 and P2: all five of their pairs are retrieved.
    auto s = baseline_retrieval_mean({test_pair("Q", "NEW", 1)}, index, corpus, 3, 3);
    CHECK(s[0] == doctest::Approx(0.6).epsilon(1e-15));
    // Z relates to nothing and NEW is unseen: global train mean 3/6.
    auto f = baseline_retrieval_mean({test_pair("Z", "NEW", 1)}, index, corpus, 3, 3);
    CHECK(f[0] == 0.5);
    CHECK(baseline_retrieval_mean({test_pair("Q", "G", 1)}, index, corpus, 8) ==
          baseline_retrieval_mean({test_pair("Q", "G", 1)}, index, corpus, 8));
}

TEST_CASE("as_predictions checks lengths") {
    CHECK_THROWS_AS(as_predictions({test_pair("P", "G", 1)}, {}, Task::de), ArgumentError);
    auto r = as_predictions({test_pair("P", "G", 1)}, {0.3}, Task::de);
    CHECK(r[0].score == 0.3);
}

TEST_CASE("abstain table") {
    std::map<std::string, AbstainStats> rows;
    rows["K562"] = {10, 30, 6, 3, 0, 2};
    const auto text = format_abstain_table(rows);
    CHECK(text.find("K562\t10\t30\t6\t3\t2\t0.3000") != std::string::npos);
}

}
