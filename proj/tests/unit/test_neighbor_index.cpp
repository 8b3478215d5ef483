#include "perturbrag/errors.hpp"
#include "perturbrag/neighbor_index.hpp"

#include "oracles.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <random>

using namespace perturbrag;

namespace {

std::map<std::string, std::vector<std::string>> path_graph() {
    // A - B - C - D, plus E hanging off B.
    return {{"A", {"B"}}, {"B", {"A", "C", "E"}}, {"C", {"B", "D"}}, {"D", {"C"}}, {"E", {"B"}}};
}

LabeledPair train(std::string p, std::string g, int y) {
    return {std::move(p), std::move(g), y, y == 1 ? std::optional<int>(1) : std::nullopt, Split::train};
}

} // namespace

TEST_SUITE("neighbor_index") {

TEST_CASE("hand graph") {
    auto index = build_index(path_graph(), 10);
    // A, C and E all share neighbor B.
    CHECK(index.topk("A") == std::vector<RelatedNode>{{"C", 1}, {"E", 1}});
    CHECK(index.topk("B") == std::vector<RelatedNode>{{"D", 1}});
    CHECK(index.topk("D") == std::vector<RelatedNode>{{"B", 1}});
    CHECK(related_set(index, "A", true) == std::set<std::string>{"A", "C", "E"});
    CHECK(related_set(index, "A", false) == std::set<std::string>{"C", "E"});
    CHECK_THROWS_AS(index.topk("Z"), NotFoundError);
}

TEST_CASE("k truncates after tie-break by id") {
    auto index = build_index(path_graph(), 1);
    CHECK(index.topk("A") == std::vector<RelatedNode>{{"C", 1}});
}

TEST_CASE("argument checks") {
    CHECK_THROWS_AS(build_index(path_graph(), 0), ArgumentError);
    CHECK_THROWS_AS(build_index(std::map<std::string, std::vector<std::string>>{}, 3), ArgumentError);
    CHECK_THROWS_AS(build_index(KnowledgeGraph{}, 3), ArgumentError);
}

TEST_CASE("agrees with brute force on random graphs") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 30; ++trial) {
        const int n = std::uniform_int_distribution<int>(1, 60)(rng);
        const double density = std::uniform_real_distribution<double>(0.01, 0.3)(rng);
        oracle::Adjacency adj;
        for (int i = 0; i < n; ++i) {
            adj["n" + std::to_string(i)];
        }
        std::bernoulli_distribution coin(density);
        for (int i = 0; i < n; ++i) {
            for (int j = i + 1; j < n; ++j) {
                if (coin(rng)) {
                    adj["n" + std::to_string(i)].insert("n" + std::to_string(j));
                    adj["n" + std::to_string(j)].insert("n" + std::to_string(i));
                }
            }
        }
        std::map<std::string, std::vector<std::string>> lists;
        for (const auto& [v, ns] : adj) {
            lists[v] = {ns.begin(), ns.end()};
        }
        const std::size_t k = std::uniform_int_distribution<std::size_t>(1, 12)(rng);
        auto index = build_index(lists, k);
        auto expected = oracle::topk(adj, k);
        for (const auto& [v, row] : expected) {
            std::vector<RelatedNode> want;
            for (const auto& [id, c] : row) {
                want.push_back({id, c});
            }
            REQUIRE(index.topk(v) == want);
        }
    }
}

TEST_CASE("index file round trip") {
    testsupport::TempDir dir;
    auto index = build_index(path_graph(), 2);
    write_index(index, dir / "index.jsonl");
    auto back = read_index(dir / "index.jsonl");
    CHECK(back.k() == 2);
    CHECK(back.all_topk() == index.all_topk());
    CHECK(back.neighbors("B") == index.neighbors("B"));
    CHECK_THROWS_AS(read_index(dir / "missing.jsonl"), DependencyError);
}

TEST_CASE("retrieval categories on a hand case") {
    auto index = build_index(path_graph(), 10);
    // Query (A, C): N(A) = {C, E}, N(C) plus C = {A, C, E}.
    const std::vector<LabeledPair> corpus = {
        train("C", "A", 1),  // both
        train("E", "D", 0),  // pert only
        train("B", "C", 1),  // gene only (gene C itself)
        train("B", "D", 0),  // neither
        train("A", "C", 1),  // the query itself
        {"E", "E", 1, 1, Split::test},
    };
    auto bundle = retrieve_examples(index, corpus, "A", "C", 42);
    REQUIRE(bundle.examples.size() == 3);
    CHECK(bundle.examples[0].pert == "C");
    CHECK(bundle.examples[0].category == RetrievalCategory::both_related);
    CHECK(bundle.examples[1].pert == "E");
    CHECK(bundle.examples[1].category == RetrievalCategory::pert_related);
    CHECK(bundle.examples[2].pert == "B");
    CHECK(bundle.examples[2].gene == "C");
    CHECK(bundle.examples[2].category == RetrievalCategory::gene_related);
}

TEST_CASE("retrieval respects caps and is seed deterministic") {
    std::map<std::string, std::vector<std::string>> star;
    star["HUB"] = {};
    for (int i = 0; i < 12; ++i) {
        const std::string id = "L" + std::to_string(i);
        star["HUB"].push_back(id);
        star[id] = {"HUB"};
    }
    std::sort(star["HUB"].begin(), star["HUB"].end());
    auto index = build_index(star, 20);
    std::vector<LabeledPair> corpus;
    for (int i = 0; i < 12; ++i) {
        for (int j = 0; j < 12; ++j) {
            corpus.push_back(train("L" + std::to_string(i), "L" + std::to_string(j), (i + j) % 2));
        }
    }
    auto a = retrieve_examples(index, corpus, "L0", "L1", 9);
    auto b = retrieve_examples(index, corpus, "L0", "L1", 9);
    CHECK(a.examples.size() == 15);
    CHECK(bundle_to_json(a) == bundle_to_json(b));
    bool any_difference = false;
    for (std::uint64_t s = 10; s < 20 && !any_difference; ++s) {
        any_difference = bundle_to_json(retrieve_examples(index, corpus, "L0", "L1", s))["examples"] !=
                         bundle_to_json(a)["examples"];
    }
    CHECK(any_difference);
}

TEST_CASE("direction retrieval skips pairs without a direction label") {
    auto index = build_index(path_graph(), 10);
    const std::vector<LabeledPair> corpus = {train("C", "A", 0), train("E", "A", 1)};
    auto bundle = retrieve_examples(index, corpus, "A", "C", 1, Task::dir);
    REQUIRE(bundle.examples.size() == 1);
    CHECK(bundle.examples[0].pert == "E");
}

TEST_CASE("unindexed ids have no related nodes") {
    auto index = build_index(path_graph(), 10);
    const std::vector<LabeledPair> corpus = {train("C", "Q", 1), train("C", "A", 0)};
    auto bundle = retrieve_examples(index, corpus, "NEW", "Q", 3);
    REQUIRE(bundle.examples.size() == 1);
    CHECK(bundle.examples[0].category == RetrievalCategory::gene_related);
}

}
