#include "perturbrag/errors.hpp"
#include "perturbrag/kg_store.hpp"

#include "test_support.hpp"

#include <doctest.h>

using namespace perturbrag;
using testsupport::TempDir;
using testsupport::write_file;

namespace {

NodeRecord gene(const std::string& id, const std::string& desc = "") {
    NodeRecord n{id, NodeKind::gene, {}, {}};
    if (!desc.empty()) {
        n.entries.push_back({"Description of gene", desc});
    }
    return n;
}

EdgeRecord edge(const std::string& a, const std::string& b, std::string_view rel = relation::physical_interaction) {
    return {a, b, std::string(rel), a + " interacts with " + b, "STRING"};
}

} // namespace

TEST_SUITE("kg_store") {

TEST_CASE("duplicate node ids conflict") {
    KnowledgeGraph g;
    g.add_node(gene("A"));
    CHECK_THROWS_AS(g.add_node(gene("A")), ConflictError);
}

TEST_CASE("identical edges collapse, distinct sources do not") {
    KnowledgeGraph g;
    g.add_edge(edge("A", "B"));
    g.add_edge(edge("A", "B"));
    CHECK(g.edge_count() == 1);
    auto other = edge("A", "B");
    other.source = "BioPlex";
    g.add_edge(other);
    CHECK(g.edge_count() == 2);
}

TEST_CASE("physical interaction is unordered") {
    KnowledgeGraph g;
    g.add_edge(edge("B", "A"));
    g.add_edge(edge("C", "D", relation::annotation));
    CHECK(g.physically_interact("A", "B"));
    CHECK(g.physically_interact("B", "A"));
    CHECK_FALSE(g.physically_interact("C", "D"));
    CHECK_FALSE(g.physically_interact("A", "C"));
}

TEST_CASE("merge appends entries and rejects kind clashes") {
    KnowledgeGraph a;
    a.add_node(gene("X", "first"));
    KnowledgeGraph b;
    b.add_node(gene("X", "second"));
    b.add_node(gene("Y"));
    a.merge(b);
    REQUIRE(a.node("X").entries.size() == 2);
    CHECK(a.node("X").entries[0].text == "first");
    CHECK(a.node("X").entries[1].text == "second");
    a.merge(b);
    CHECK(a.node("X").entries.size() == 2);

    KnowledgeGraph c;
    c.add_node({"X", NodeKind::pathway, {}, {}});
    CHECK_THROWS_AS(a.merge(c), ConflictError);
}

TEST_CASE("adjacency is symmetric and drops self loops") {
    KnowledgeGraph g;
    for (auto id : {"A", "B", "C", "D"}) {
        g.add_node(gene(id));
    }
    g.add_edge(edge("A", "B"));
    g.add_edge(edge("A", "A"));
    g.add_edge(edge("C", "A", relation::annotation));
    auto adj = g.adjacency();
    CHECK(adj["A"] == std::vector<std::string>{"B", "C"});
    CHECK(adj["B"] == std::vector<std::string>{"A"});
    CHECK(adj["C"] == std::vector<std::string>{"A"});
    CHECK(adj["D"].empty());
}

TEST_CASE("relations text covers outgoing and undirected incoming edges") {
    KnowledgeGraph g;
    for (auto id : {"A", "B", "C"}) {
        g.add_node(gene(id));
    }
    g.add_edge({"B", "A", "physical_interaction", "B binds A", "STRING"});
    g.add_edge({"C", "A", "annotation", "C annotates A", "GO"});
    g.add_edge({"A", "C", "annotation", "A is in C", "GO"});
    auto lines = render_relations_text(g, "A");
    CHECK(lines == std::vector<std::string>{"- A is in C", "- B binds A"});
    CHECK_THROWS_AS(render_relations_text(g, "Z"), NotFoundError);
}

TEST_CASE("node text renders field and body per line") {
    NodeRecord n{"A", NodeKind::gene, {{"Description of gene", "a kinase"}, {"Gene products", "AK1"}}, {}};
    CHECK(render_node_text(n) == "Description of gene: a kinase\nGene products: AK1");
}

TEST_CASE("validate reports dangling endpoints and bad members") {
    KnowledgeGraph g;
    g.add_node(gene("A"));
    g.add_node({"S", NodeKind::gene_set, {}, {"A", "Q"}});
    g.add_edge(edge("A", "MISSING"));
    auto problems = g.validate();
    REQUIRE(problems.size() == 2);
    CHECK(problems[0].find("MISSING") != std::string::npos);
    CHECK(problems[1].find("\"Q\"") != std::string::npos);
}

TEST_CASE("gene set members become membership edges") {
    KnowledgeGraph g;
    g.add_node(gene("A"));
    g.add_node(gene("B"));
    g.add_node({"S", NodeKind::gene_set, {}, {"A", "B"}});
    const KnowledgeGraph parts[] = {g};
    auto merged = merge_graphs(parts);
    CHECK(merged.edge_count() == 2);
    auto lines = render_relations_text(merged, "A");
    CHECK(lines == std::vector<std::string>{"- A is a member of gene set S"});
}

TEST_CASE("loading reports line numbers and duplicate ids") {
    TempDir dir;
    write_file(dir / "bad.jsonl", "{\"id\":\"A\",\"kind\":\"gene\"}\n{not json\n");
    try {
        load_nodes(dir / "bad.jsonl");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line == 2);
    }
    write_file(dir / "dup.jsonl", "{\"id\":\"A\",\"kind\":\"gene\"}\n{\"id\":\"A\",\"kind\":\"gene\"}\n");
    CHECK_THROWS_AS(load_nodes(dir / "dup.jsonl"), ConflictError);
    write_file(dir / "kind.jsonl", "{\"id\":\"A\",\"kind\":\"protein\"}\n");
    CHECK_THROWS_AS(load_nodes(dir / "kind.jsonl"), ParseError);
    CHECK_THROWS_AS(load_nodes(dir / "absent.jsonl"), NotFoundError);
}

TEST_CASE("write and read round trip") {
    TempDir dir;
    testsupport::write_toy_fixture(dir.path());
    const KnowledgeGraph parts[] = {load_nodes(dir / "nodes.jsonl"), load_edges(dir / "edges.jsonl")};
    auto g = merge_graphs(parts);
    CHECK(g.node_count() == 30);
    CHECK(g.validate().empty());
    write_graph(g, dir / "graph");
    auto back = read_graph(dir / "graph");
    CHECK(back.node_count() == g.node_count());
    CHECK(back.edges() == g.edges());
    CHECK(back.physical_pairs() == g.physical_pairs());
    CHECK_THROWS_AS(read_graph(dir / "nowhere"), DependencyError);
}

}
